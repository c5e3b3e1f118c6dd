"""Model predictive control for linear systems whose state matrix depends
affinely on a constant design parameter.

Two approximations of the parameter-dependent MPC problem are provided: a
McCormick-relaxed lifted QP (``m1``) and a first-order Frechet expansion
(``m2-inv`` and ``m2-ni``), together with an exact baseline, an explicit
mpQP solver and a closed-loop simulator.
"""
from ._backend import BACKEND
from .cases import CASES, build_case
from .condense import (CondensedSystem, condense_exact, condense_model, condense_sensitivity,
                       frechet_power)
from .empc import CriticalRegion, PwaLaw, coverage_report, enumerate_regions, point_locate
from .model import ParametricMatrix, ParametricModel, build_hex, build_msd, eval_a
from .qp import DenseQp, QpError, QpSolution, QpStatus, solve
from .sim import (ErrorMetrics, ReferenceProfile, SimulationError, SimulationTrace,
                  compute_metrics, make_controller, run_closed_loop)
from .tracking import TrackingWeights, tracking_weights

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CASES", "build_case", "CondensedSystem", "condense_exact", "condense_model",
    "condense_sensitivity", "frechet_power", "CriticalRegion", "PwaLaw", "coverage_report",
    "enumerate_regions", "point_locate", "ParametricMatrix", "ParametricModel", "build_hex",
    "build_msd", "eval_a", "DenseQp", "QpError", "QpSolution", "QpStatus", "solve",
    "ErrorMetrics", "ReferenceProfile", "SimulationError", "SimulationTrace", "compute_metrics",
    "make_controller", "run_closed_loop", "TrackingWeights", "tracking_weights", "__version__",
]
