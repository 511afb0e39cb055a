"""Limit evaluators for termination-function improper integrals.

The infinite-limit form samples the bracket
    F(b) = integral_a^b f dx + integral_b^{b+c} f(x) z(x - b) dx
along an arithmetic sequence b_k = b_start + k*step, reusing the running
prefix integral.  The finite-limit form (critical point fixed at 0)
samples
    G(d) = integral_{v0 d}^{d} g(u) w(u/d) du + integral_d^{beta} g du
along a geometric sequence d_k = beta * shrink^k, where v0 is the taper's
support floor.  Either way the sample sequence is classified as
converged / oscillatory / drifting from its last windows, with optional
iterated Aitken acceleration for slowly decaying tails.

Bridge mode rewrites a finite-limit problem through u = e^-x into the
infinite-limit form with integrand g(e^-x) e^-x and lower limit -ln(beta);
because w was derived from z through the same substitution, the two
bracket sequences coincide sample for sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import DomainFault, ExprAST, exp as expr_exp, free_variables, simplify, substitute, var
from .quad import integrate_proper
from .taper import BoundaryTaper, TerminationFunction

__all__ = [
    "InfiniteIntegral", "FiniteIntegral", "ZIntegralSpec", "EvalConfig",
    "ZResult", "BridgeUnavailable", "TooFewSamples",
    "eval_infinite", "eval_finite", "classify_sequence",
]

DELTA_FLOOR = 1e-8   # direct finite-limit sampling never shrinks delta below this


class BridgeUnavailable(ValueError):
    """Bridge mode needs a boundary taper with a termination-function origin."""


class TooFewSamples(ValueError):
    """Classification needs at least the stability window of samples."""


@dataclass(frozen=True)
class InfiniteIntegral:
    """Z-integral of f over [a, infinity) under termination function z."""

    integrand: ExprAST
    lower_limit: float
    taper: TerminationFunction
    variable: str = "x"

    def __post_init__(self):
        if not math.isfinite(self.lower_limit):
            raise ValueError("lower limit must be finite")
        extra = free_variables(self.integrand) - {self.variable}
        if extra:
            raise ValueError(f"integrand has unexpected free variables {sorted(extra)}")


@dataclass(frozen=True)
class FiniteIntegral:
    """Z-integral of g over (0, beta] with critical point 0 under taper w."""

    integrand: ExprAST
    upper_limit: float
    taper: BoundaryTaper
    variable: str = "u"

    def __post_init__(self):
        if not (math.isfinite(self.upper_limit) and self.upper_limit > 0.0):
            raise ValueError("upper limit must be finite and positive")
        extra = free_variables(self.integrand) - {self.variable}
        if extra:
            raise ValueError(f"integrand has unexpected free variables {sorted(extra)}")


ZIntegralSpec = InfiniteIntegral | FiniteIntegral


@dataclass(frozen=True)
class EvalConfig:
    """Sampling plan for the limit sequences.

    b_start=None resolves to lower_limit + 1.  tol gates classification;
    quad_tol is the absolute tolerance handed to every inner quadrature.
    """

    b_start: float | None = None
    b_step: float = 0.7
    b_count: int = 40
    delta_shrink: float = 0.5
    delta_count: int = 40
    stability_window: int = 5
    tol: float = 1e-6
    quad_tol: float = 1e-10
    max_evals_per_point: int = 10_000_000
    accelerate: bool = False

    def __post_init__(self):
        if self.stability_window < 3:
            raise ValueError("stability window must be at least 3")
        if self.b_count < self.stability_window or self.delta_count < self.stability_window:
            raise ValueError("sample counts must be at least the stability window")
        if not self.b_step > 0.0:
            raise ValueError("b_step must be positive")
        if not 0.0 < self.delta_shrink < 1.0:
            raise ValueError("delta_shrink must lie in (0, 1)")
        if not self.tol > self.quad_tol > 0.0:
            raise ValueError("need tol > quad_tol > 0")
        if self.max_evals_per_point <= 0:
            raise ValueError("max_evals_per_point must be positive")


@dataclass(frozen=True)
class ZResult:
    value: float
    error_estimate: float
    status: str                          # converged | oscillatory | drifting | quad_failure
    samples: tuple[tuple[float, float], ...]
    evaluations: int
    accelerated: bool = False


# --------------------------------------------------------------------------
# Sequence classification.
# --------------------------------------------------------------------------

def classify_sequence(samples, m: int, tol: float) -> str:
    """Classify a limit-sample sequence as converged / oscillatory / drifting.

    converged: the last m values agree to within tol.  oscillatory: the
    last window is neither shrinking nor escaping -- its spread matches the
    previous window (ratio in [0.8, 1.25]) or remains a solid fraction of
    the historical spread, while its values stay inside the historical
    envelope.  drifting: anything still on the move (monotone escape,
    steady shrink toward a limit the tolerance has not certified, ...).
    """
    values = [s[1] if isinstance(s, (tuple, list)) else float(s) for s in samples]
    if m < 1 or len(values) < m:
        raise TooFewSamples(f"need at least {m} samples, got {len(values)}")
    last = values[-m:]
    spread_last = max(last) - min(last)
    if spread_last <= tol:
        return "converged"
    if len(values) < 2 * m:
        return "drifting"
    prev = values[-2 * m:-m]
    spread_prev = max(prev) - min(prev)
    ratio = spread_last / spread_prev if spread_prev > 0.0 else math.inf
    hist = values[:-m]
    hist_spread = max(hist) - min(hist)
    margin = 0.05 * hist_spread + tol
    bounded = min(hist) - margin <= min(last) and max(last) <= max(hist) + margin
    steady = 0.8 <= ratio <= 1.25 or spread_last >= 0.3 * hist_spread
    if bounded and steady:
        return "oscillatory"
    return "drifting"


def _aitken_accelerate(values: list[float], min_len: int, noise_floor: float) -> list[float]:
    """Iterated Aitken delta-squared; stops at the noise floor or min length."""
    seq = np.asarray(values, dtype=float)
    while seq.size >= min_len + 2:
        d1 = np.diff(seq)
        d2 = np.diff(d1)
        if np.any(np.abs(d2) <= noise_floor):
            break
        new = seq[2:] - d1[1:] ** 2 / d2
        if not np.all(np.isfinite(new)):
            break
        seq = new
    return seq.tolist()


# Remainder families for model-validated extrapolation.  Aitken cannot
# accelerate 1/log tails (no iterated-difference scheme can, even in exact
# arithmetic), so when it fails to certify a limit we fit the sample tail
# against these canonical decay shapes and accept the extrapolated limit
# only if it predicts the held-out last window to within tolerance.
_GROW_MODELS: tuple[tuple[str, tuple], ...] = (
    ("log", (lambda b: 1.0 / np.log(b), lambda b: np.log(b) ** -2.0)),
    ("sqrt", (lambda b: b ** -0.5, lambda b: 1.0 / b)),
    ("inv", (lambda b: 1.0 / b, lambda b: b ** -2.0)),
    ("inv32", (lambda b: b ** -1.5, lambda b: b ** -2.5)),
)
_SHRINK_MODELS: tuple[tuple[str, tuple], ...] = (
    ("sqrt", (lambda d: d ** 0.5, lambda d: d)),
    ("linear", (lambda d: d, lambda d: d ** 2.0)),
    ("d32", (lambda d: d ** 1.5, lambda d: d ** 2.5)),
)


def _model_extrapolate(params, values, m: int, tol: float, direction: str):
    """Fit the sample tail to a decay model and extrapolate the limit.

    Returns (limit, error_estimate) or None.  Acceptance requires the model
    fitted without the last m samples to predict them within tol, the full
    fit's residual window to sit within tol, and the combined honesty terms
    (held-out error, split-half limit shift, 3-sigma regression error) to
    stay within tol.
    """
    n = len(values)
    if n < 3 * m + 6:
        return None
    x = np.asarray(params, dtype=float)
    y = np.asarray(values, dtype=float)
    candidates = _GROW_MODELS if direction == "grow" else _SHRINK_MODELS
    best = None
    for name, basis in candidates:
        if name == "log" and x.min() <= 1.5:
            continue
        with np.errstate(all="ignore"):
            cols = [np.ones_like(x)] + [phi(x) for phi in basis]
        a = np.column_stack(cols)
        if not np.all(np.isfinite(a)):
            continue
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[-1] <= 1e-13 * sv[0]:
            continue
        coef_train, *_ = np.linalg.lstsq(a[:-m], y[:-m], rcond=None)
        val_err = float(np.max(np.abs(a[-m:] @ coef_train - y[-m:])))
        if val_err > tol:
            continue
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        resid = y - a @ coef
        window = resid[-m:]
        if float(window.max() - window.min()) > tol:
            continue
        half = n // 2
        s1, *_ = np.linalg.lstsq(a[:half], y[:half], rcond=None)
        s2, *_ = np.linalg.lstsq(a[half:], y[half:], rcond=None)
        sigma2 = float(resid @ resid) / max(n - a.shape[1], 1)
        cov00 = float(np.linalg.inv(a.T @ a)[0, 0]) * sigma2
        err = val_err + abs(float(s1[0] - s2[0])) + 3.0 * math.sqrt(max(cov00, 0.0))
        if err <= tol and (best is None or err < best[1]):
            best = (float(coef[0]), err, name)
    return best


# --------------------------------------------------------------------------
# Evaluators.
# --------------------------------------------------------------------------

def eval_infinite(spec: InfiniteIntegral, cfg: EvalConfig) -> ZResult:
    """Sample and classify the infinite-limit bracket sequence."""
    z = spec.taper
    a = spec.lower_limit
    x = spec.variable
    b0 = (a + 1.0) if cfg.b_start is None else float(cfg.b_start)
    if b0 < a:
        raise ValueError(f"b_start {b0!r} lies below the lower limit {a!r}")
    shift = "bwin" if x != "bwin" else "bwin2"
    tail_expr = simplify(spec.integrand * substitute(z.body, "s", var(x) - var(shift)))

    samples: list[tuple[float, float]] = []
    values: list[float] = []
    errors: list[float] = []
    evals = 0
    prefix = 0.0
    prefix_err = 0.0
    prev_b = a
    failed = False
    for k in range(cfg.b_count):
        b = b0 + k * cfg.b_step
        try:
            if b > prev_b:
                inc = integrate_proper(spec.integrand, x, prev_b, b, cfg.quad_tol,
                                       max_evals=cfg.max_evals_per_point)
                evals += inc.evaluations
                if not inc.converged:
                    failed = True
                    break
                prefix += inc.value
                prefix_err += inc.error_estimate
                prev_b = b
            tail = integrate_proper(tail_expr, x, b, b + z.width, cfg.quad_tol,
                                    max_evals=cfg.max_evals_per_point,
                                    params={shift: b})
        except DomainFault:
            failed = True
            break
        evals += tail.evaluations
        if not tail.converged:
            failed = True
            break
        values.append(prefix + tail.value)
        errors.append(prefix_err + tail.error_estimate)
        samples.append((b, values[-1]))
        if len(values) >= cfg.stability_window and _spread(values[-cfg.stability_window:]) <= cfg.tol:
            break
    return _classify_result(samples, values, errors, evals, cfg, failed, "grow")


def eval_finite(spec: FiniteIntegral, cfg: EvalConfig, mode: str = "direct") -> ZResult:
    """Sample and classify the finite-limit sequence, directly or via bridge."""
    if mode == "bridge":
        return eval_infinite(bridged_infinite(spec), cfg)
    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r} (expected 'direct' or 'bridge')")
    w = spec.taper
    beta = spec.upper_limit
    u = spec.variable
    shrinkvar = "dwin" if u != "dwin" else "dwin2"
    head_expr = simplify(spec.integrand * substitute(w.body, "v", var(u) / var(shrinkvar)))

    samples: list[tuple[float, float]] = []
    values: list[float] = []
    errors: list[float] = []
    evals = 0
    tail_sum = 0.0
    tail_err = 0.0
    prev_delta = beta
    failed = False
    for k in range(cfg.delta_count):
        delta = beta * cfg.delta_shrink ** k
        if delta < DELTA_FLOOR:
            break
        try:
            if delta < prev_delta:
                inc = integrate_proper(spec.integrand, u, delta, prev_delta, cfg.quad_tol,
                                       max_evals=cfg.max_evals_per_point)
                evals += inc.evaluations
                if not inc.converged:
                    # cost wall: keep the samples already collected if they
                    # can be classified, otherwise report the failure
                    failed = len(values) < cfg.stability_window
                    break
                tail_sum += inc.value
                tail_err += inc.error_estimate
                prev_delta = delta
            head = integrate_proper(head_expr, u, w.support_floor * delta, delta,
                                    cfg.quad_tol, max_evals=cfg.max_evals_per_point,
                                    params={shrinkvar: delta})
        except DomainFault:
            failed = True
            break
        evals += head.evaluations
        if not head.converged:
            failed = len(values) < cfg.stability_window
            break
        values.append(head.value + tail_sum)
        errors.append(head.error_estimate + tail_err)
        samples.append((delta, values[-1]))
        if len(values) >= cfg.stability_window and _spread(values[-cfg.stability_window:]) <= cfg.tol:
            break
    return _classify_result(samples, values, errors, evals, cfg, failed, "shrink")


def bridged_infinite(spec: FiniteIntegral) -> InfiniteIntegral:
    """The u = e^-x image of a finite-limit spec (unit scale and rate)."""
    if spec.taper.origin is None:
        raise BridgeUnavailable(
            "bridge mode needs a boundary taper built from a termination function"
        )
    x = "x" if spec.variable != "x" else "xb"
    decay = expr_exp(-var(x))
    integrand = simplify(substitute(spec.integrand, spec.variable, decay) * decay)
    return InfiniteIntegral(
        integrand=integrand,
        lower_limit=-math.log(spec.upper_limit),
        taper=spec.taper.origin,
        variable=x,
    )


def _spread(window) -> float:
    return max(window) - min(window)


def _classify_result(samples, values, errors, evals, cfg, failed, direction) -> ZResult:
    m = cfg.stability_window
    if failed or len(values) < m:
        value = values[-1] if values else math.nan
        return ZResult(value=value, error_estimate=math.inf, status="quad_failure",
                       samples=tuple(samples), evaluations=evals)
    status = classify_sequence(values, m, cfg.tol)
    quad_err = errors[-1]
    if status == "converged":
        return ZResult(value=values[-1], error_estimate=_spread(values[-m:]) + quad_err,
                       status="converged", samples=tuple(samples), evaluations=evals)
    if cfg.accelerate and len(values) >= m + 2:
        noise = max(32.0 * np.finfo(float).eps * max(abs(v) for v in values),
                    4.0 * max(errors))
        acc = _aitken_accelerate(values, m, noise)
        if len(acc) >= m and _spread(acc[-m:]) <= cfg.tol:
            return ZResult(value=acc[-1],
                           error_estimate=_spread(acc[-m:]) + quad_err + noise,
                           status="converged", samples=tuple(samples),
                           evaluations=evals, accelerated=True)
        fitted = _model_extrapolate([p for p, _ in samples], values, m, cfg.tol, direction)
        if fitted is not None:
            limit, model_err, _ = fitted
            return ZResult(value=limit, error_estimate=model_err + quad_err,
                           status="converged", samples=tuple(samples),
                           evaluations=evals, accelerated=True)
    value = values[-1]
    return ZResult(value=value, error_estimate=_spread(values[-m:]) + quad_err,
                   status=status, samples=tuple(samples), evaluations=evals)
