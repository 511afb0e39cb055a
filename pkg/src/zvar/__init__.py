"""Termination-function improper integrals.

Evaluate infinite-limit and critical-lower-limit integrals under the
termination-function definitions, build and validate changes of the
integration variable (including the exponential finite<->infinite bridge),
and verify value preservation and existence (a)symmetry numerically.
"""

from .cov import (
    BridgeSpec,
    ChangeOfVariable,
    CovError,
    ValidationReport,
    apply_cov,
    bridge_transform,
    make_bridge_cov,
    make_custom_cov,
    make_exp_cov,
    make_finite_power_cov,
    make_power_cov,
    validate_cov,
)
from .expr import DomainFault, ExprAST, ParseError, differentiate, evaluate, parse, serialize, substitute
from .quad import QuadResult, integrate_proper
from .taper import (
    BoundaryTaper,
    TaperError,
    TerminationFunction,
    boundary_taper_from_z,
    check_moments,
    make_matched_trig,
    make_smooth_taper,
)
from .verify import VerificationOutcome, compare_pair, demo_existence_asymmetry, run_suite
from .zeval import (
    EvalConfig,
    FiniteIntegral,
    InfiniteIntegral,
    ZResult,
    classify_sequence,
    eval_finite,
    eval_infinite,
)

__version__ = "0.1.0"

__all__ = [
    "BridgeSpec", "ChangeOfVariable", "CovError", "ValidationReport",
    "apply_cov", "bridge_transform", "make_bridge_cov", "make_custom_cov",
    "make_exp_cov", "make_finite_power_cov", "make_power_cov", "validate_cov",
    "DomainFault", "ExprAST", "ParseError", "differentiate", "evaluate",
    "parse", "serialize", "substitute",
    "QuadResult", "integrate_proper",
    "BoundaryTaper", "TaperError", "TerminationFunction",
    "boundary_taper_from_z", "check_moments", "make_matched_trig",
    "make_smooth_taper",
    "VerificationOutcome", "compare_pair", "demo_existence_asymmetry", "run_suite",
    "EvalConfig", "FiniteIntegral", "InfiniteIntegral", "ZResult",
    "classify_sequence", "eval_finite", "eval_infinite",
]
