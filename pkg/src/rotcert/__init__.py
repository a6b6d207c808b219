"""Certifiably robust rotation estimation under heavy outlier rates.

The package solves rotation search (align paired unit directions) through
moment relaxations of its robust formulations, rounds the SDP output back
to rotations, and reports certificates: relaxation gaps, a-posteriori error
bounds from the selected measurements, a-priori estimation contracts, and
numerical hypercontractivity / anti-concentration checks on the input set.

Layers, bottom up: ``poly`` (sparse multivariate polynomials), ``moment``
(Lasserre-style relaxation builder and SOS checks), ``sdp`` (first-order
multi-block solver), ``geometry`` (quaternions, instances, generators),
``estimators`` (the sparse and dense robust programs), ``certify`` (bounds
and certificate checkers), ``harness`` (Monte Carlo sweeps) and ``cli``.
"""

from . import certify, cli, errors, estimators, geometry, harness, moment, poly, sdp
from .certify import (
    AntiConParams,
    CheckResult,
    ContractReport,
    HyperParams,
    aposteriori_bound,
    apriori_bound_lts_mc,
    apriori_bound_tls,
    check_anticoncentration,
    check_hypercontractivity,
    eta_threshold,
    lts_objective_coeffs,
)
from .errors import RotcertError
from .estimators import (
    HypothesisList,
    SolveOutcome,
    consensus_seed,
    sample_hypotheses,
    slides,
    solve_dense,
    solve_tls_sparse,
)
from .geometry import (
    Measurement,
    RotationSearchInstance,
    UnitQuaternion,
    closed_form_wahba,
    generate_instance,
    geodesic_error_deg,
)
from .harness import ExperimentConfig, RunRecord, emit_bound_curves, run

__version__ = "0.1.0"

__all__ = [
    "AntiConParams",
    "CheckResult",
    "ContractReport",
    "ExperimentConfig",
    "HyperParams",
    "HypothesisList",
    "Measurement",
    "RotationSearchInstance",
    "RotcertError",
    "RunRecord",
    "SolveOutcome",
    "UnitQuaternion",
    "aposteriori_bound",
    "apriori_bound_lts_mc",
    "apriori_bound_tls",
    "certify",
    "check_anticoncentration",
    "check_hypercontractivity",
    "cli",
    "closed_form_wahba",
    "consensus_seed",
    "emit_bound_curves",
    "errors",
    "estimators",
    "eta_threshold",
    "generate_instance",
    "geodesic_error_deg",
    "geometry",
    "harness",
    "lts_objective_coeffs",
    "moment",
    "poly",
    "run",
    "sample_hypotheses",
    "sdp",
    "slides",
    "solve_dense",
    "solve_tls_sparse",
    "__version__",
]
