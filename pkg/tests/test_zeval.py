"""Evaluator tests: bracket sequences, classification, acceleration, bridge."""

import math

import numpy as np
import pytest

from abel_oracle import ORACLE_TOL, abel_limit
from zvar.expr import parse
from zvar.taper import BoundaryTaper, boundary_taper_from_z, make_matched_trig, make_smooth_taper
from zvar.zeval import (
    BridgeUnavailable,
    EvalConfig,
    FiniteIntegral,
    InfiniteIntegral,
    TooFewSamples,
    classify_sequence,
    eval_finite,
    eval_infinite,
)


@pytest.fixture(scope="module")
def smooth():
    return make_smooth_taper(1.0)


@pytest.fixture(scope="module")
def matched():
    return make_matched_trig(1.0, 1.0)


# ---------------------------------------------------------------------------
# classify_sequence
# ---------------------------------------------------------------------------

def test_classify_constant_converged():
    assert classify_sequence([1.0] * 5, 3, 1e-8) == "converged"


def test_classify_sine_samples_oscillatory():
    samples = [math.sin(k) for k in range(1, 21)]
    assert classify_sequence(samples, 5, 1e-3) == "oscillatory"


def test_classify_monotone_drifting():
    assert classify_sequence([float(k) for k in range(1, 11)], 3, 1e-6) == "drifting"
    assert classify_sequence([float(k) for k in range(1, 11)], 5, 1e-6) == "drifting"


def test_classify_accepts_parameter_pairs():
    pairs = [(0.1 * k, 2.0) for k in range(6)]
    assert classify_sequence(pairs, 3, 1e-9) == "converged"


def test_classify_too_few_samples():
    with pytest.raises(TooFewSamples):
        classify_sequence([1.0, 2.0], 3, 1e-6)


# ---------------------------------------------------------------------------
# infinite-limit evaluation
# ---------------------------------------------------------------------------

def test_inverse_square_spec_example(smooth):
    # window spacing 1, 30 samples; a large start makes the 1/b bracket
    # remainder negligible without acceleration
    spec = InfiniteIntegral(parse("x^-2"), 1.0, smooth)
    r = eval_infinite(spec, EvalConfig(b_start=2e6, b_step=1.0, b_count=30))
    assert r.status == "converged"
    assert abs(r.value - 1.0) < 1e-6


def test_sine_matched_taper_converges(matched):
    spec = InfiniteIntegral(parse("sin(x)"), 0.0, matched)
    r = eval_infinite(spec, EvalConfig())
    assert r.status == "converged"
    assert abs(r.value - 1.0) < 1e-6
    for _, bracket in r.samples:
        assert abs(bracket - 1.0) < 1e-8
    assert abs(abel_limit(np.sin, 0.0) - r.value) < ORACLE_TOL


def test_sine_smooth_taper_oscillatory(smooth):
    spec = InfiniteIntegral(parse("sin(x)"), 0.0, smooth)
    r = eval_infinite(spec, EvalConfig())
    assert r.status == "oscillatory"
    values = [v for _, v in r.samples]
    assert max(values[-5:]) - min(values[-5:]) > 0.1


def test_matched_tone_constancy_invariant():
    for omega in (0.5, 1.0, 2.0):
        z = make_matched_trig(omega, 1.0)
        f = parse(f"sin({omega!r}*x)")
        for a in (0.0, 1.0):
            spec = InfiniteIntegral(f, a, z)
            r = eval_infinite(spec, EvalConfig())
            expected = math.cos(omega * a) / omega
            assert r.status == "converged"
            for _, bracket in r.samples:
                assert abs(bracket - expected) < 1e-8


def test_conventional_agreement_both_taper_kinds(smooth, matched):
    # absolutely convergent corpus cases must hit their closed forms to 1e-6
    # under BOTH shipped taper kinds: the value cannot depend on z
    log_cfg = EvalConfig(b_start=1e7, b_step=1e7, b_count=300, tol=1e-8,
                         quad_tol=1e-11, accelerate=True)
    infinite_cases = [
        (parse("x^-2"), 1.0, "x", 1.0, EvalConfig(b_start=2e6, b_step=1.0, b_count=30)),
        (parse("exp(-x)"), 0.0, "x", 1.0, EvalConfig(accelerate=True)),
        (parse("1/(y*ln(y)^2)"), math.e, "y", 1.0, log_cfg),
    ]
    for z in (smooth, matched):
        for integrand, a, variable, closed_form, cfg in infinite_cases:
            r = eval_infinite(InfiniteIntegral(integrand, a, z, variable=variable), cfg)
            assert r.status == "converged", (variable, z.kind)
            assert abs(r.value - closed_form) < 1e-6, (z.kind, r.value)
        spec = FiniteIntegral(parse("u^(-1/2)"), 1.0, boundary_taper_from_z(z))
        r = eval_finite(spec, EvalConfig(accelerate=True))
        assert r.status == "converged"
        assert abs(r.value - 2.0) < 1e-6


def test_acceleration_never_downgrades_converged(matched):
    spec = InfiniteIntegral(parse("sin(x)"), 0.0, matched)
    plain = eval_infinite(spec, EvalConfig())
    accel = eval_infinite(spec, EvalConfig(accelerate=True))
    assert plain.status == accel.status == "converged"
    assert plain.value == accel.value
    assert not accel.accelerated


def test_log_decay_needs_model_acceleration(smooth):
    # bracket remainder ~ -1/ln(b): no window plateau certifies the limit,
    # so accelerate=True must engage the validated remainder fit
    spec = InfiniteIntegral(parse("1/(y*ln(y)^2)"), math.e, smooth, variable="y")
    cfg = EvalConfig(b_start=1e7, b_step=1e7, b_count=300, tol=1e-8,
                     quad_tol=1e-11, accelerate=True)
    r = eval_infinite(spec, cfg)
    assert r.status == "converged" and r.accelerated
    assert abs(r.value - 1.0) < 1e-6
    assert abs(r.value - 1.0) <= 4.0 * r.error_estimate

    plain = eval_infinite(spec, EvalConfig(b_start=1e7, b_step=1e7, b_count=300,
                                           tol=1e-8, quad_tol=1e-11))
    assert plain.status != "converged"


def test_acceleration_cannot_fabricate_convergence(smooth):
    # a genuinely oscillatory bracket must stay oscillatory even with the
    # Aitken + model-fit pipeline switched on
    spec = InfiniteIntegral(parse("sin(x)"), 0.0, smooth)
    r = eval_infinite(spec, EvalConfig(accelerate=True))
    assert r.status == "oscillatory"
    assert not r.accelerated

    divergent = InfiniteIntegral(parse("1/x"), 1.0, smooth)
    r = eval_infinite(divergent, EvalConfig(accelerate=True))
    assert r.status != "converged"


def test_quad_failure_on_domain_fault(smooth):
    spec = InfiniteIntegral(parse("ln(x - 5)"), 1.0, smooth)
    r = eval_infinite(spec, EvalConfig())
    assert r.status == "quad_failure"
    assert math.isinf(r.error_estimate)


def test_b_start_below_lower_limit_rejected(smooth):
    spec = InfiniteIntegral(parse("x^-2"), 1.0, smooth)
    with pytest.raises(ValueError):
        eval_infinite(spec, EvalConfig(b_start=0.5))


def test_determinism(matched):
    spec = InfiniteIntegral(parse("sin(x)"), 1.0, matched)
    r1 = eval_infinite(spec, EvalConfig())
    r2 = eval_infinite(spec, EvalConfig())
    assert r1 == r2


# ---------------------------------------------------------------------------
# finite-limit evaluation
# ---------------------------------------------------------------------------

def test_inverse_sqrt_direct_both_tapers(smooth, matched):
    for z in (smooth, matched):
        spec = FiniteIntegral(parse("u^(-1/2)"), 1.0, boundary_taper_from_z(z))
        r = eval_finite(spec, EvalConfig(accelerate=True))
        assert r.status == "converged"
        assert abs(r.value - 2.0) < 1e-6


def test_oscillatory_singularity_bridge_mode(smooth):
    spec = FiniteIntegral(parse("sin(1/u)/u^2"), 1.0, boundary_taper_from_z(smooth))
    cfg = EvalConfig(b_start=1.0, b_count=14, tol=1e-5, quad_tol=1e-9)
    r = eval_finite(spec, cfg, mode="bridge")
    assert r.status == "converged"
    assert abs(r.value - math.cos(1.0)) < 1e-5
    # independent Abel check after x = 1/u
    assert abs(abel_limit(np.sin, 1.0) - r.value) < ORACLE_TOL


def test_oscillatory_singularity_direct_agrees_with_bridge(smooth):
    spec = FiniteIntegral(parse("sin(1/u)/u^2"), 1.0, boundary_taper_from_z(smooth))
    bridge = eval_finite(spec, EvalConfig(b_start=1.0, b_count=14, tol=1e-5,
                                          quad_tol=1e-9), mode="bridge")
    direct = eval_finite(spec, EvalConfig(delta_count=17, tol=1e-3, quad_tol=1e-8),
                         mode="direct")
    assert direct.status == "converged"
    assert min(d for d, _ in direct.samples) >= 1e-5
    assert abs(direct.value - bridge.value) < 5e-4


def test_boundary_taper_bridge_agreement(smooth):
    # w derived from z through u = e^-x makes direct finite evaluation and
    # the bridged infinite evaluation agree to 1e-6 on convergent cases
    w = boundary_taper_from_z(smooth)
    cases = [
        (parse("u^(-1/2)"), EvalConfig(accelerate=True)),
        (parse("sin(1/u)/u^2"), EvalConfig(delta_count=17, tol=1e-3, quad_tol=1e-8,
                                           b_start=1.0, b_count=14)),
    ]
    for integrand, cfg in cases:
        spec = FiniteIntegral(integrand, 1.0, w)
        direct = eval_finite(spec, cfg, mode="direct")
        bridged = eval_finite(spec, cfg, mode="bridge")
        assert direct.status == bridged.status == "converged"
        assert abs(direct.value - bridged.value) < 1e-6


def test_nonunit_upper_limit_both_routes(smooth):
    # Z integral_0^2 u^(-1/2) du = 2 sqrt(2); beta != 1 exercises the
    # -ln(beta) lower limit on the bridged side
    spec = FiniteIntegral(parse("u^(-1/2)"), 2.0, boundary_taper_from_z(smooth))
    expected = 2.0 * math.sqrt(2.0)
    for mode in ("direct", "bridge"):
        r = eval_finite(spec, EvalConfig(accelerate=True), mode=mode)
        assert r.status == "converged"
        assert abs(r.value - expected) < 1e-8


def test_logarithmic_divergence_direct_and_bridge(smooth):
    spec = FiniteIntegral(parse("1/u"), 1.0, boundary_taper_from_z(smooth))
    direct = eval_finite(spec, EvalConfig(), mode="direct")
    bridge = eval_finite(spec, EvalConfig(), mode="bridge")
    assert direct.status == "drifting"
    assert bridge.status == "drifting"


def test_bridge_requires_taper_origin():
    w = BoundaryTaper(body=parse("1 + 0*v"), support_floor=0.0, kind="adhoc", origin=None)
    spec = FiniteIntegral(parse("u^(-1/2)"), 1.0, w)
    with pytest.raises(BridgeUnavailable):
        eval_finite(spec, EvalConfig(), mode="bridge")


def test_unknown_mode_rejected(smooth):
    spec = FiniteIntegral(parse("1/u"), 1.0, boundary_taper_from_z(smooth))
    with pytest.raises(ValueError):
        eval_finite(spec, EvalConfig(), mode="sideways")


# ---------------------------------------------------------------------------
# configuration validation
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(stability_window=2)
    with pytest.raises(ValueError):
        EvalConfig(b_count=3, stability_window=5)
    with pytest.raises(ValueError):
        EvalConfig(delta_shrink=1.0)
    with pytest.raises(ValueError):
        EvalConfig(tol=1e-12, quad_tol=1e-10)
    with pytest.raises(ValueError):
        EvalConfig(b_step=0.0)


def test_spec_validation(smooth):
    with pytest.raises(ValueError):
        InfiniteIntegral(parse("x + y"), 0.0, smooth)
    with pytest.raises(ValueError):
        FiniteIntegral(parse("1/u"), -1.0, boundary_taper_from_z(smooth))
    with pytest.raises(ValueError):
        InfiniteIntegral(parse("x"), math.inf, smooth)
