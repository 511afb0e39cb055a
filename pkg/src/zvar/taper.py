"""Termination functions z(s) on [0, c] and boundary tapers w(v) on [0, 1].

Admissibility here means bounded, continuous, z(0) = 1, z(c) = 0; every
constructor validates those properties numerically at build time.  The
matched-trig family additionally zeroes the two tone moments
integral_0^c cos(w s) z(s) ds = 0 and integral_0^c sin(w s) z(s) ds = 1/w,
which makes the terminal bracket of a pure tone sin(w x) constant in the
window position (the mechanism this library uses to give oscillatory
integrals a well-defined value).

Boundary tapers are derived from termination functions through u = e^-x,
so finite-limit and infinite-limit evaluations correspond exactly under
the exponential bridge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr
from .expr import ExprAST, compile_expr, const, differentiate, evaluate, substitute, var
from .quad import integrate_proper

__all__ = [
    "TaperError", "TerminationFunction", "BoundaryTaper",
    "make_smooth_taper", "make_matched_trig", "boundary_taper_from_z",
    "check_moments", "parse_taper_spec", "parse_boundary_spec",
]

MOMENT_TOL = 1e-13
_ENDPOINT_TOL = 1e-12
# Boundedness guard.  Matched corrections legitimately overshoot 1 by large
# factors for slow tones: the sine moment 1/omega has to fit inside a short
# window, which forces amplitude (about 310 for omega=0.5, c=1).  The guard
# exists to reject runaway constructions, not to cap that overshoot.
_BOUND_LIMIT = 1000.0
_CONTINUITY_SAMPLES = 10_000


class TaperError(ValueError):
    """Invalid or numerically unusable taper construction."""


@dataclass(frozen=True)
class TerminationFunction:
    """z(s) on [0, c]; body is an expression in the variable s."""

    body: ExprAST
    width: float
    kind: str                  # "smooth_taper" | "matched_trig"
    omega: float | None = None

    def __call__(self, s: float) -> float:
        return evaluate(self.body, {"s": s})

    def sample(self, s: np.ndarray) -> np.ndarray:
        return compile_expr(self.body, ("s",))(s)

    def spec_string(self) -> str:
        if self.kind == "matched_trig":
            return f"matched:omega={self.omega!r},c={self.width!r}"
        return f"taper:c={self.width!r}"


@dataclass(frozen=True)
class BoundaryTaper:
    """w(v) on [0, 1]: w(v) = body(v) above the support floor, 0 below it."""

    body: ExprAST              # expression in the variable v, valid for v > support_floor
    support_floor: float
    kind: str
    origin: TerminationFunction | None = None

    def __call__(self, v: float) -> float:
        if v <= self.support_floor:
            return 0.0
        return evaluate(self.body, {"v": v})

    def spec_string(self) -> str:
        if self.origin is None:  # pragma: no cover - all shipped tapers carry one
            return self.kind
        return f"wfromz:{self.origin.spec_string()}"


def make_smooth_taper(c: float) -> TerminationFunction:
    """Quintic smoothstep from z(0)=1 to z(c)=0 with z'=z''=0 at both ends."""
    if not c > 0.0:
        raise TaperError(f"taper width must be positive, got {c!r}")
    t = var("s") / const(float(c))
    body = const(1.0) - t ** 3 * (const(10.0) - const(15.0) * t + const(6.0) * t * t)
    z = TerminationFunction(body=expr.simplify(body), width=float(c), kind="smooth_taper")
    _validate(z)
    return z


def make_matched_trig(omega: float, c: float) -> TerminationFunction:
    """Smooth taper corrected so the tone moments at frequency omega match.

    z(s) = T(s) * (1 + a1 sin(2 pi s / c) + a2 sin(4 pi s / c)) with T the
    smooth taper; the sine corrections vanish at both endpoints, so the
    endpoint values and admissibility are preserved while (a1, a2) solve
    the 2x2 moment system.
    """
    if not omega > 0.0:
        raise TaperError(f"tone frequency must be positive, got {omega!r}")
    if not c > 0.0:
        raise TaperError(f"taper width must be positive, got {c!r}")
    base = make_smooth_taper(c)
    s = var("s")
    harmonics = [
        expr.sin(const(2.0 * math.pi / c) * s),
        expr.sin(const(4.0 * math.pi / c) * s),
    ]

    def moment(f: ExprAST, trig: str) -> float:
        kernel = expr.sin(const(omega) * s) if trig == "sin" else expr.cos(const(omega) * s)
        r = integrate_proper(kernel * f, "s", 0.0, c, MOMENT_TOL)
        if not r.converged:
            raise TaperError("moment quadrature failed to converge")
        return r.value

    m = np.array([
        [moment(base.body * harmonics[0], "cos"), moment(base.body * harmonics[1], "cos")],
        [moment(base.body * harmonics[0], "sin"), moment(base.body * harmonics[1], "sin")],
    ])
    rhs = np.array([
        -moment(base.body, "cos"),
        1.0 / omega - moment(base.body, "sin"),
    ])
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > 1e8:
        raise TaperError(
            f"moment system is near-singular (condition estimate {cond:.2e}); "
            f"change the taper width c away from {c!r} for omega={omega!r}"
        )
    a1, a2 = (float(v) for v in np.linalg.solve(m, rhs))
    body = base.body * (const(1.0) + const(a1) * harmonics[0] + const(a2) * harmonics[1])
    z = TerminationFunction(body=expr.simplify(body), width=float(c),
                            kind="matched_trig", omega=float(omega))
    _validate(z)
    return z


def boundary_taper_from_z(z: TerminationFunction) -> BoundaryTaper:
    """w(v) = z(-ln v) for v in (e^-c, 1], zero at and below the floor e^-c."""
    body = substitute(z.body, "s", -expr.ln(var("v")))
    floor = math.exp(-z.width)
    w = BoundaryTaper(body=body, support_floor=floor, kind=f"from_{z.kind}", origin=z)
    if abs(w(1.0) - 1.0) > _ENDPOINT_TOL:  # pragma: no cover - z(0)=1 already checked
        raise TaperError("boundary taper failed w(1) = 1")
    return w


def check_moments(z: TerminationFunction, omega: float) -> tuple[float, float]:
    """Residuals of the tone-moment conditions at frequency omega.

    Returns (integral cos(w s) z ds, integral sin(w s) z ds - 1/w); both
    vanish exactly when z makes sin(w x) terminate cleanly.
    """
    if not omega > 0.0:
        raise TaperError(f"tone frequency must be positive, got {omega!r}")
    s = var("s")
    out = []
    for kernel in (expr.cos(const(omega) * s), expr.sin(const(omega) * s)):
        r = integrate_proper(kernel * z.body, "s", 0.0, z.width, MOMENT_TOL)
        if not r.converged:
            raise TaperError("moment quadrature failed to converge")
        out.append(r.value)
    return out[0], out[1] - 1.0 / omega


def _validate(z: TerminationFunction) -> None:
    if abs(z(0.0) - 1.0) > _ENDPOINT_TOL:
        raise TaperError(f"termination function must satisfy z(0)=1, got {z(0.0)!r}")
    if abs(z(z.width)) > _ENDPOINT_TOL:
        raise TaperError(f"termination function must satisfy z(c)=0, got {z(z.width)!r}")
    grid = np.linspace(0.0, z.width, _CONTINUITY_SAMPLES + 1)
    vals = z.sample(grid)
    if not np.isfinite(vals).all():
        raise TaperError("termination function is not finite on [0, c]")
    if np.abs(vals).max() > _BOUND_LIMIT:
        raise TaperError(f"termination function exceeds the bound {_BOUND_LIMIT}")
    # continuity: adjacent samples must be first-order consistent with z'
    dz = compile_expr(differentiate(z.body, "s"), ("s",))(grid)
    h = z.width / _CONTINUITY_SAMPLES
    predicted = 0.5 * (dz[:-1] + dz[1:]) * h
    residual = np.abs(np.diff(vals) - predicted)
    scale = np.maximum(1.0, np.maximum(np.abs(vals[:-1]), np.abs(vals[1:])))
    if (residual > 1e-6 * scale).any():
        raise TaperError("termination function fails the continuity check")


# --------------------------------------------------------------------------
# CLI spec strings: "taper:c=1", "matched:omega=1,c=1", "wfromz:<taper spec>"
# --------------------------------------------------------------------------

def parse_taper_spec(text: str) -> TerminationFunction:
    head, _, payload = text.strip().partition(":")
    if head == "taper":
        fields = _fields(payload, "taper", required=("c",))
        return make_smooth_taper(fields["c"])
    if head == "matched":
        fields = _fields(payload, "matched", required=("omega", "c"))
        return make_matched_trig(fields["omega"], fields["c"])
    raise TaperError(f"unknown taper kind {head!r} (expected 'taper' or 'matched')")


def parse_boundary_spec(text: str) -> BoundaryTaper:
    head, _, payload = text.strip().partition(":")
    if head != "wfromz":
        raise TaperError(f"unknown boundary taper kind {head!r} (expected 'wfromz:<taper>')")
    return boundary_taper_from_z(parse_taper_spec(payload))


def _fields(payload: str, kind: str, required: tuple[str, ...]) -> dict[str, float]:
    out: dict[str, float] = {}
    if payload.strip():
        for item in payload.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise TaperError(f"malformed {kind} field {item!r} (expected key=value)")
            try:
                out[key.strip()] = float(value)
            except ValueError:
                raise TaperError(f"non-numeric {kind} field {item!r}") from None
    missing = [k for k in required if k not in out]
    if missing:
        raise TaperError(f"{kind} spec is missing fields: {', '.join(missing)}")
    extra = [k for k in out if k not in required]
    if extra:
        raise TaperError(f"{kind} spec has unknown fields: {', '.join(extra)}")
    return out
