"""Command-line front end.

Subcommands: run (experiment sweeps), bounds (analytic curve tables),
check-hyper / check-anticon (single certificate checks), solve-tls /
solve-slides (one instance, synthetic or from a pairs CSV), gen (write a
synthetic pairs CSV). Every handler prints a one-line summary; artifacts go
wherever --out points. Exit code 0 on success, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings

import numpy as np

from . import certify as C
from . import estimators as E
from . import harness as H
from .errors import ParseError, RotcertError
from .geometry import (
    Measurement,
    RotationSearchInstance,
    generate_instance,
    generate_triplet_set,
    wahba_matrix,
)

PAIR_FIELDS = ("ax", "ay", "az", "bx", "by", "bz")


def load_pairs(path, c_bar_sq=0.0021) -> RotationSearchInstance:
    """Read a pairs CSV (ax..bz columns, optional is_inlier) into an instance."""
    measurements = []
    labels = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(PAIR_FIELDS) <= set(
            reader.fieldnames
        ):
            raise ParseError(f"{path}: header must contain {','.join(PAIR_FIELDS)}")
        for lineno, row in enumerate(reader, 2):
            try:
                a = np.array([float(row[k]) for k in PAIR_FIELDS[:3]])
                b = np.array([float(row[k]) for k in PAIR_FIELDS[3:]])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: bad number", line=lineno) from exc
            measurements.append(Measurement.from_raw(a, b))
            if "is_inlier" in row and row["is_inlier"] not in (None, ""):
                labels.append(0 if row["is_inlier"] in ("1", "True", "true") else -1)
    return RotationSearchInstance(
        measurements,
        c_bar_sq,
        labels=labels if len(labels) == len(measurements) else None,
    )


def write_pairs(path, instance):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAIR_FIELDS + ("is_inlier",))
        for m in instance.measurements:
            writer.writerow(
                [repr(float(v)) for v in (*m.a, *m.b)]
                + [int(bool(m.is_inlier_truth))]
            )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rotcert",
        description="Certifiably robust rotation estimation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment sweep")
    run_p.add_argument(
        "config",
        help="experiment name (tls_sweep, slides_sweep, aposteriori_bounds, "
        "hyper_survey, anticon_survey, multi_rotation) or a key=value file",
    )
    run_p.add_argument("--n", type=int, default=None)
    run_p.add_argument("--beta", type=float, default=None)
    run_p.add_argument("--alpha", type=float, default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument(
        "--mode", default=None, help="random, consistent, or multi:K"
    )
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--tol", type=float, default=None)
    run_p.add_argument("--max-iter", type=int, default=None)
    run_p.add_argument("--dj", type=int, default=None)
    run_p.add_argument("--eta", type=float, default=None)
    run_p.add_argument("--workers", type=int, default=None)

    bounds_p = sub.add_parser("bounds", help="emit the analytic bound curves")
    bounds_p.add_argument("--out", default="bound_curves.csv")

    hyper_p = sub.add_parser("check-hyper", help="one hypercontractivity check")
    hyper_p.add_argument("--n", type=int, default=100)
    hyper_p.add_argument("--seed", type=int, default=0)
    hyper_p.add_argument("--c2", type=float, default=6.0,
                         help="certificate constant C(2)^2")

    anticon_p = sub.add_parser("check-anticon", help="one anti-concentration check")
    anticon_p.add_argument("--mode", choices=("triplet", "wahba"), default="triplet")
    anticon_p.add_argument("--n", type=int, default=50)
    anticon_p.add_argument("--eta", type=float, default=3.75)
    anticon_p.add_argument("--beta", type=float, default=0.1)
    anticon_p.add_argument("--seed", type=int, default=0)

    def add_solve_flags(p, with_alpha):
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", default=None,
                       help="random, consistent, or multi:K")
        p.add_argument("--input", default=None, help="pairs CSV instead of synthetic")
        if with_alpha:
            p.add_argument("--alpha", type=float, required=True,
                           help="selected-weight budget fraction")
        p.add_argument("--c2", type=float, default=0.0021,
                       help="residual budget c_bar^2")
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--out", default=None)

    tls_p = sub.add_parser("solve-tls", help="solve one truncated-cost instance")
    add_solve_flags(tls_p, with_alpha=False)

    slides_p = sub.add_parser("solve-slides", help="solve one list-decoding instance")
    add_solve_flags(slides_p, with_alpha=True)

    gen_p = sub.add_parser("gen", help="write a synthetic pairs CSV")
    gen_p.add_argument("--n", type=int, default=50)
    gen_p.add_argument("--beta", type=float, default=0.3)
    gen_p.add_argument("--mode", default="random",
                       help="random, consistent, or multi:K")
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", default="pairs.csv")

    return parser


def _solve_instance(parser, args):
    """Synthetic/--input resolution shared by the two solve commands."""
    if args.input is not None:
        for name in ("n", "beta", "seed", "mode"):
            if getattr(args, name) is not None:
                parser.error(f"--input conflicts with --{name}")
        return load_pairs(args.input, c_bar_sq=args.c2), False
    inst = generate_instance(
        args.n if args.n is not None else 50,
        args.beta if args.beta is not None else 0.3,
        args.mode if args.mode is not None else "random",
        args.seed if args.seed is not None else 0,
        c_bar_sq=args.c2,
    )
    return inst, True


def _cmd_run(parser, args):
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    if args.beta is not None:
        overrides["beta_list"] = [args.beta]
    if args.alpha is not None:
        overrides["alpha_for_ldr"] = args.alpha
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.mode is not None:
        overrides["outlier_mode"] = args.mode
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.max_iter is not None:
        overrides["max_iter"] = args.max_iter
    if args.dj is not None:
        overrides["d_j"] = args.dj
    if args.eta is not None:
        overrides["eta"] = args.eta
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out"] = args.out

    if os.path.exists(args.config):
        mapping = H.read_config_file(args.config).to_json()
        mapping.update(overrides)
        config = H.ExperimentConfig(**mapping)
    else:
        if args.config not in H.EXPERIMENTS:
            parser.error(
                f"unknown experiment {args.config!r} "
                f"(and no such config file); choose from {', '.join(H.EXPERIMENTS)}"
            )
        config = H.ExperimentConfig(experiment=args.config, **overrides)

    record = H.run(config)
    csv_path = os.path.join(config.out, f"{config.experiment}.csv")
    print(
        f"{config.experiment}: {len(record.rows)} rows over "
        f"{len(config.beta_list)} beta x {len(config.seeds)} seeds -> {csv_path}"
    )
    return 0


def _cmd_bounds(args):
    out = args.out
    if os.path.isdir(out):
        out = os.path.join(out, "bound_curves.csv")
    H.emit_bound_curves(out)
    print(f"bound curves -> {out}")
    return 0


def _cmd_check_hyper(args):
    inst = generate_instance(args.n, 0.0, "random", args.seed)
    mats = [wahba_matrix(m) for m in inst.measurements]
    t0 = time.perf_counter()
    res = C.check_hypercontractivity(mats, C.HyperParams(k=4, C_t_pow_t=args.c2))
    verdict = "Holds" if res else "Fails"
    print(
        f"{verdict}: hypercontractivity n={args.n} C(2)^2={args.c2:g} "
        f"seed={args.seed} ({time.perf_counter() - t0:.1f}s)"
    )
    return 0


def _cmd_check_anticon(args):
    if args.mode == "triplet":
        mats = [t.stack() for t in generate_triplet_set(args.n, seed=args.seed)]
    else:
        inst = generate_instance(args.n, 0.0, "random", args.seed)
        mats = [wahba_matrix(m) for m in inst.measurements]
    params = C.AntiConParams.for_wahba(1.0 - args.beta, args.eta)
    t0 = time.perf_counter()
    res = C.check_anticoncentration(mats, params)
    verdict = "Holds" if res else "Fails"
    tail = "" if res else f" (condition {res.failed_condition})"
    print(
        f"{verdict}: anti-concentration {args.mode} n={args.n} "
        f"eta={args.eta:g} beta={args.beta:g} seed={args.seed}"
        f"{tail} ({time.perf_counter() - t0:.1f}s)"
    )
    return 0


def _cmd_solve_tls(parser, args):
    inst, synthetic = _solve_instance(parser, args)
    kwargs = {"tol": args.tol}
    if args.max_iter is not None:
        kwargs["max_iter"] = args.max_iter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = E.solve_tls_sparse(inst, **kwargs)
    bits = [f"status={out.status}", f"gap={out.gap:.2e}",
            f"selected={len(out.selected)}/{inst.n}"]
    if synthetic and out.estimate is not None:
        bits.insert(0, f"error={out.error_deg(inst.ground_truth):.3f}deg")
    print("solve-tls: " + " ".join(bits))
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "tls_outcome.json")
        with open(path, "w") as fh:
            json.dump(
                out.to_json(inst.ground_truth if synthetic else None), fh, indent=1
            )
        print(f"outcome -> {path}")
    return 0


def _cmd_solve_slides(parser, args):
    inst, synthetic = _solve_instance(parser, args)
    kwargs = {"tol": args.tol}
    if args.max_iter is not None:
        kwargs["max_iter"] = args.max_iter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        hlist, out = E.slides(inst, args.alpha, **kwargs)
    payload = hlist.to_json(inst.ground_truth if synthetic else None)
    print(
        f"solve-slides: status={out.status} gap={out.gap:.2e} "
        f"valid={len(hlist.valid_entries())}/{inst.n} alpha={args.alpha:g}"
    )
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "hypotheses.json")
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
        print(f"hypotheses -> {path}")
    else:
        json.dump(payload, sys.stdout, indent=1)
        print()
    return 0


def _cmd_gen(args):
    inst = generate_instance(args.n, args.beta, args.mode, args.seed)
    write_pairs(args.out, inst)
    print(
        f"gen: wrote {inst.n} pairs (beta={args.beta:g}, mode={args.mode}, "
        f"seed={args.seed}) -> {args.out}"
    )
    return 0


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(parser, args)
        if args.command == "bounds":
            return _cmd_bounds(args)
        if args.command == "check-hyper":
            return _cmd_check_hyper(args)
        if args.command == "check-anticon":
            return _cmd_check_anticon(args)
        if args.command == "solve-tls":
            return _cmd_solve_tls(parser, args)
        if args.command == "solve-slides":
            return _cmd_solve_slides(parser, args)
        return _cmd_gen(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except RotcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
