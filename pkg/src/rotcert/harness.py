"""Monte Carlo experiment runner with CSV/JSON emission.

Each experiment sweeps (beta, seed) cells, runs whole solves or certificate
checks per cell, and appends long-format rows (seed, beta, metric, value).
Aggregation reduces every (beta, metric) group to the 25/50/75/90th
percentiles. Solver failures are recorded as rows and never abort a sweep,
so a partially broken run still yields a plottable file.

Metric values are floats; a missing quantity (rounding failed, bound not
defined) is stored as NaN and skipped by the aggregates.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import certify as C
from . import estimators as E
from .errors import ConfigError, RotcertError
from .geometry import (
    generate_instance,
    generate_triplet_set,
    vec_distance,
    wahba_matrix,
)

EXPERIMENTS = (
    "tls_sweep",
    "slides_sweep",
    "aposteriori_bounds",
    "hyper_survey",
    "anticon_survey",
    "multi_rotation",
)

CSV_HEADER = ("seed", "beta", "metric", "value")
PERCENTILES = (25, 50, 75, 90)
TRIVIAL_BOUND = 2.0 * math.sqrt(3.0)

__all__ = [
    "EXPERIMENTS",
    "CSV_HEADER",
    "PERCENTILES",
    "ExperimentConfig",
    "RunRecord",
    "run",
    "emit_bound_curves",
]


class ExperimentConfig:
    """Parameters of one sweep; invalid combinations fail at construction."""

    __slots__ = (
        "experiment",
        "n",
        "beta_list",
        "seeds",
        "outlier_mode",
        "alpha_for_ldr",
        "c_bar_sq",
        "noise_sigma_sq",
        "tol",
        "max_iter",
        "out",
        "d_j",
        "eta",
        "set_kind",
        "c2_list",
        "time_budget_s",
        "workers",
    )

    def __init__(
        self,
        experiment,
        n=20,
        beta_list=(0.1, 0.2, 0.3, 0.4, 0.5),
        seeds=tuple(range(10)),
        outlier_mode="random",
        alpha_for_ldr=None,
        c_bar_sq=0.0021,
        noise_sigma_sq=1e-4,
        tol=1e-6,
        max_iter=60_000,
        out=".",
        d_j=5,
        eta=3.75,
        set_kind="triplet",
        c2_list=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
        time_budget_s=300.0,
        workers=1,
    ):
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}"
            )
        self.experiment = experiment
        self.n = int(n)
        self.beta_list = tuple(float(b) for b in beta_list)
        if any(not 0.0 <= b < 1.0 for b in self.beta_list):
            raise ConfigError(f"beta_list must lie in [0, 1), got {beta_list}")
        self.seeds = tuple(int(s) for s in seeds)
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        self.outlier_mode = outlier_mode
        self.alpha_for_ldr = None if alpha_for_ldr is None else float(alpha_for_ldr)
        self.c_bar_sq = float(c_bar_sq)
        self.noise_sigma_sq = float(noise_sigma_sq)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.out = str(out)
        self.d_j = int(d_j)
        self.eta = float(eta)
        if set_kind not in ("triplet", "wahba"):
            raise ConfigError(f"set_kind must be triplet or wahba, got {set_kind!r}")
        self.set_kind = set_kind
        self.c2_list = tuple(float(v) for v in c2_list)
        self.time_budget_s = float(time_budget_s)
        self.workers = int(workers)

    def to_json(self):
        data = {name: getattr(self, name) for name in self.__slots__}
        data["beta_list"] = list(self.beta_list)
        data["seeds"] = list(self.seeds)
        data["c2_list"] = list(self.c2_list)
        return data

    @classmethod
    def from_mapping(cls, mapping):
        """Build from flat key=value strings (config files, CLI remainders)."""
        kw = {}
        for key, raw in mapping.items():
            key = key.strip()
            if key not in cls.__slots__:
                raise ConfigError(f"unknown config key {key!r}")
            kw[key] = _parse_value(key, raw)
        if "experiment" not in kw:
            raise ConfigError("config needs an experiment key")
        return cls(**kw)

    def __repr__(self):
        return (
            f"ExperimentConfig({self.experiment}, n={self.n}, "
            f"betas={self.beta_list}, seeds={len(self.seeds)})"
        )


_INT_KEYS = {"n", "max_iter", "d_j", "workers"}
_FLOAT_KEYS = {
    "alpha_for_ldr", "c_bar_sq", "noise_sigma_sq", "tol", "eta", "time_budget_s",
}
_LIST_KEYS = {"beta_list", "seeds", "c2_list"}


def _parse_value(key, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _LIST_KEYS:
        parts = [p for p in raw.replace(",", " ").split() if p]
        return [int(p) if key == "seeds" else float(p) for p in parts]
    return raw


def read_config_file(path) -> ExperimentConfig:
    """Flat key=value file, '#' comments, blank lines ignored."""
    mapping = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return ExperimentConfig.from_mapping(mapping)


class RunRecord:
    """Long-format rows plus per-(beta, metric) percentile aggregates."""

    __slots__ = ("config", "rows", "aggregates")

    def __init__(self, config, rows):
        self.config = config
        self.rows = list(rows)
        self.aggregates = _aggregate(self.rows)

    def metrics(self):
        return sorted({row[2] for row in self.rows})

    def values(self, metric, beta=None):
        return [
            row[3]
            for row in self.rows
            if row[2] == metric and (beta is None or row[1] == beta)
        ]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for seed, beta, metric, value in self.rows:
                writer.writerow([seed, repr(float(beta)), metric, repr(float(value))])

    def to_json(self):
        return {
            "config": self.config.to_json(),
            "aggregates": [
                {
                    "beta": beta,
                    "metric": metric,
                    **{f"p{p}": v for p, v in zip(PERCENTILES, pvals)},
                }
                for (beta, metric), pvals in sorted(self.aggregates.items())
            ],
            "rows": [
                {"seed": s, "beta": b, "metric": m, "value": _json_value(v)}
                for s, b, m, v in self.rows
            ],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    def __repr__(self):
        return (
            f"RunRecord({self.config.experiment}, {len(self.rows)} rows, "
            f"{len(self.aggregates)} aggregates)"
        )


def _json_value(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _aggregate(rows):
    groups = {}
    for _, beta, metric, value in rows:
        groups.setdefault((beta, metric), []).append(float(value))
    out = {}
    for key, vals in groups.items():
        finite = [v for v in vals if math.isfinite(v)]
        if finite:
            out[key] = tuple(float(v) for v in np.percentile(finite, PERCENTILES))
        else:
            out[key] = (math.nan,) * len(PERCENTILES)
    return out


# ---------------------------------------------------------------------------
# per-cell workers; each returns [(metric, value)] for one (beta, seed)


def _instance_for(config, beta, seed):
    return generate_instance(
        config.n,
        beta,
        config.outlier_mode,
        seed,
        noise_sigma_sq=config.noise_sigma_sq,
        c_bar_sq=config.c_bar_sq,
    )


def _cell_tls_sweep(config, beta, seed):
    inst = _instance_for(config, beta, seed)
    t0 = time.perf_counter()
    out = E.solve_tls_sparse(
        inst,
        tol=config.tol,
        max_iter=config.max_iter,
        deadline_s=config.time_budget_s,
    )
    wall = time.perf_counter() - t0
    err = out.error_deg(inst.ground_truth)
    return [
        ("error_deg", math.nan if err is None else err),
        ("gap", out.gap),
        ("optimal", float(out.status == "Optimal")),
        ("iterations", float(out.iterations)),
        ("walltime_s", wall),
    ]


def _cell_slides_sweep(config, beta, seed):
    inst = _instance_for(config, beta, seed)
    alpha = config.alpha_for_ldr if config.alpha_for_ldr else 1.0 - beta
    t0 = time.perf_counter()
    hlist, out = E.slides(
        inst,
        alpha,
        tol=config.tol,
        max_iter=config.max_iter,
        deadline_s=config.time_budget_s,
    )
    wall = time.perf_counter() - t0
    return [
        ("min_list_error_deg", hlist.min_error_deg(inst.ground_truth)),
        ("gap", out.gap),
        ("n_valid", float(len(hlist.valid_entries()))),
        ("optimal", float(out.status == "Optimal")),
        ("walltime_s", wall),
    ]


def _cell_aposteriori(config, beta, seed):
    inst = _instance_for(config, beta, seed)
    t0 = time.perf_counter()
    out = E.solve_tls_sparse(
        inst,
        tol=config.tol,
        max_iter=config.max_iter,
        deadline_s=config.time_budget_s,
    )
    wall = time.perf_counter() - t0
    rows = [
        ("gap", out.gap),
        ("walltime_s", wall),
        ("trivial_bound", TRIVIAL_BOUND),
    ]
    if out.estimate is None or not out.selected:
        rows.append(("error_vec", math.nan))
        return rows
    rows.append(("error_vec", vec_distance(out.estimate, inst.ground_truth)))
    try:
        rep_dj = C.aposteriori_bound(
            inst, out.selected, d_J=config.d_j, mode="TLS", gamma0=out.f_sdp
        )
        rows.append(("bound_dj", rep_dj.bound))
        rows.append(("preconditions_met", float(rep_dj.preconditions_met)))
    except RotcertError:
        rows.append(("bound_dj", math.nan))
    try:
        rep_j = C.aposteriori_bound(
            inst,
            out.selected,
            mode="TLS",
            gamma0=out.f_sdp,
            fixed_subset=out.selected,
        )
        rows.append(("bound_J", rep_j.bound))
    except RotcertError:
        rows.append(("bound_J", math.nan))
    return rows


def _cell_hyper_survey(config, beta, seed):
    inst = generate_instance(
        config.n, beta, "random", seed, noise_sigma_sq=config.noise_sigma_sq
    )
    mats = [wahba_matrix(m) for m in inst.measurements]
    rows = []
    for c2 in config.c2_list:
        t0 = time.perf_counter()
        res = C.check_hypercontractivity(mats, C.HyperParams(k=4, C_t_pow_t=c2))
        rows.append((f"holds_c2_{c2:g}", float(bool(res))))
        rows.append((f"walltime_c2_{c2:g}", time.perf_counter() - t0))
    return rows


def _cell_anticon_survey(config, beta, seed):
    if config.set_kind == "triplet":
        mats = [t.stack() for t in generate_triplet_set(config.n, seed=seed)]
    else:
        inst = generate_instance(
            config.n, 0.0, "random", seed, noise_sigma_sq=config.noise_sigma_sq
        )
        mats = [wahba_matrix(m) for m in inst.measurements]
    params = C.AntiConParams.for_wahba(1.0 - beta, config.eta, config.c_bar_sq)
    t0 = time.perf_counter()
    res = C.check_anticoncentration(mats, params)
    wall = time.perf_counter() - t0
    bound2 = (res.detail or {}).get("condition2_bound")
    return [
        ("holds", float(bool(res))),
        ("condition2_bound", math.nan if bound2 is None else float(bound2)),
        ("walltime_s", wall),
    ]


def _cell_multi_rotation(config, beta, seed):
    inst = _instance_for(config, beta, seed)
    alpha = config.alpha_for_ldr if config.alpha_for_ldr else 1.0 - beta
    t0 = time.perf_counter()
    hlist, out = E.slides(
        inst,
        alpha,
        tol=config.tol,
        max_iter=config.max_iter,
        deadline_s=config.time_budget_s,
    )
    wall = time.perf_counter() - t0
    truths = [inst.ground_truth] + list(inst.secondary_truths or ())
    rows = []
    errs = []
    for j, truth in enumerate(truths):
        e = hlist.min_error_deg(truth)
        errs.append(e)
        rows.append((f"list_error_rot{j}", e))
    rows.append(("all_within_5deg", float(all(e < 5.0 for e in errs))))
    rows.append(("gap", out.gap))
    rows.append(("walltime_s", wall))
    return rows


_CELLS = {
    "tls_sweep": _cell_tls_sweep,
    "slides_sweep": _cell_slides_sweep,
    "aposteriori_bounds": _cell_aposteriori,
    "hyper_survey": _cell_hyper_survey,
    "anticon_survey": _cell_anticon_survey,
    "multi_rotation": _cell_multi_rotation,
}


def _run_cell(config, beta, seed):
    """One (beta, seed) cell; failures become rows instead of aborting."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            metrics = _CELLS[config.experiment](config, beta, seed)
            metrics.append(("failed", 0.0))
        except RotcertError:
            metrics = [("failed", 1.0)]
    return [(seed, beta, name, float(value)) for name, value in metrics]


def run(config: ExperimentConfig) -> RunRecord:
    """Execute a sweep, write <experiment>.csv and .json, return the record.

    Deterministic for fixed seeds and iteration budgets regardless of the
    worker count; cells are dispatched in a fixed order and reassembled by
    index before aggregation.
    """
    cells = [(beta, seed) for beta in config.beta_list for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(
                    _run_cell,
                    [config] * len(cells),
                    [c[0] for c in cells],
                    [c[1] for c in cells],
                )
            )
    else:
        results = [_run_cell(config, beta, seed) for beta, seed in cells]
    rows = [row for cell_rows in results for row in cell_rows]
    record = RunRecord(config, rows)
    os.makedirs(config.out, exist_ok=True)
    record.write_csv(os.path.join(config.out, f"{config.experiment}.csv"))
    record.write_json(os.path.join(config.out, f"{config.experiment}.json"))
    return record


# ---------------------------------------------------------------------------
# bound curves


def emit_bound_curves(path, alpha_steps=201, beta_steps=60):
    """Write the analytic bound curves as one long-format CSV.

    Curves: the a-priori exact-trim/consensus bound over alpha (M_x=1,
    eta=0.01) with its trivial 2*M_x companion, the certificate threshold
    eta*(alpha), and the truncated-cost objective coefficients c1, c2 over
    beta for k in {4,6,8,10} x C in {1,2,4,6}. Each coefficient curve ends
    exactly at its divergence point beta_max.
    """
    rows = [("curve", "x", "value")]
    alphas = np.linspace(0.0, 1.0, alpha_steps)
    for a in alphas:
        try:
            val = C.apriori_bound_lts_mc(float(a), eta=0.01, M_x=1.0)
        except RotcertError:
            val = math.inf
        rows.append(("apriori_lts_mc", float(a), _csv_float(val)))
        rows.append(("trivial", float(a), 2.0))
    for a in alphas:
        if not 0.5 < a <= 1.0:
            continue
        try:
            rows.append(("eta_threshold", float(a), C.eta_threshold(float(a))))
        except RotcertError:
            continue
    for k in (4, 6, 8, 10):
        for c_half in (1.0, 2.0, 4.0, 6.0):
            _, _, beta_max = C.lts_objective_coeffs(k, 0.0, c_half)
            betas = np.linspace(0.0, beta_max, beta_steps + 1)[:-1]
            name = f"lts_k{k}_C{c_half:g}"
            for b in betas:
                c1, c2, _ = C.lts_objective_coeffs(k, float(b), c_half)
                rows.append((name + "_c1", float(b), c1))
                rows.append((name + "_c2", float(b), c2))
            rows.append((name + "_beta_max", beta_max, math.inf))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(row)
    return path


def _csv_float(v):
    v = float(v)
    return v if math.isfinite(v) else math.inf
