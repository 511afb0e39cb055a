"""Verification harness tests: verdicts, corpus schema, suite, demo."""

import json
import math

import pytest

from zvar.cov import apply_cov, make_custom_cov, make_power_cov
from zvar.expr import parse
from zvar.taper import make_matched_trig
from zvar.verify import (
    CorpusError,
    compare_pair,
    demo_existence_asymmetry,
    load_corpus,
    run_suite,
    shipped_corpus_path,
)
from zvar.zeval import EvalConfig, InfiniteIntegral, ZResult


@pytest.fixture(scope="module")
def matched():
    return make_matched_trig(1.0, 1.0)


def test_compare_shift_pair(matched):
    left = InfiniteIntegral(parse("sin(x)"), 0.0, matched)
    shift = make_custom_cov("infinite_cov", "x+5", "y-5", (0.0, 60.0))
    right = apply_cov(left, shift, allow_inconclusive=True)
    out = compare_pair(left, right, EvalConfig(), 1e-5, case_id="shift")
    assert out.verdict == "equal_within_tol"
    assert out.left.value == pytest.approx(1.0, abs=1e-6)
    assert out.right.value == pytest.approx(1.0, abs=1e-6)


def test_compare_linear_rescale_pair(matched):
    left = InfiniteIntegral(parse("sin(x)"), 1.0, matched)
    right = InfiniteIntegral(parse("sin(y/2)/2"), 2.0, make_matched_trig(0.5, 1.0),
                             variable="y")
    out = compare_pair(left, right, EvalConfig(), 1e-5)
    assert out.verdict == "equal_within_tol"
    assert out.left.value == pytest.approx(math.cos(1.0), abs=1e-6)


def test_compare_power_image_asymmetry(matched):
    left = InfiniteIntegral(parse("sin(x)"), 1.0, matched)
    right = apply_cov(left, make_power_cov(1.0, 2.0, 1.0))
    out = compare_pair(left, right, EvalConfig(b_start=1.0, b_count=35), 1e-5)
    assert out.verdict == "existence_asymmetry"
    assert out.left.status == "converged"
    assert out.right.status == "oscillatory"
    # symmetry: swapping the sides keeps the verdict class
    swapped = compare_pair(right, left, EvalConfig(b_start=1.0, b_count=35), 1e-5)
    assert swapped.verdict == "existence_asymmetry"


def test_verdict_table_is_total():
    from zvar.verify import _verdict

    def zr(status, value=1.0):
        return ZResult(value=value, error_estimate=0.0, status=status,
                       samples=((1.0, value),), evaluations=1)

    statuses = ("converged", "oscillatory", "drifting", "quad_failure")
    for a in statuses:
        for b in statuses:
            verdict = _verdict(zr(a), zr(b, 1.0), 1e-6)
            assert verdict in {"equal_within_tol", "mismatch",
                               "existence_asymmetry", "both_nonconverged"}
            flipped = _verdict(zr(b, 1.0), zr(a), 1e-6)
            assert flipped == verdict  # symmetric for equal values

    assert _verdict(zr("converged", 1.0), zr("converged", 2.0), 1e-6) == "mismatch"
    assert _verdict(zr("converged"), zr("oscillatory"), 1e-6) == "existence_asymmetry"
    assert _verdict(zr("drifting"), zr("quad_failure"), 1e-6) == "both_nonconverged"


# ---------------------------------------------------------------------------
# corpus handling
# ---------------------------------------------------------------------------

def test_shipped_corpus_all_expected():
    report = run_suite()
    assert len(report.cases) >= 12
    for case in report.cases:
        assert case.as_expected, f"{case.case_id}: {case.verdict} != {case.expected_verdict}"
    assert report.all_expected


def test_suite_determinism():
    assert run_suite() == run_suite()


def test_corpus_loads_shipped_file():
    cases = load_corpus(shipped_corpus_path())
    assert len({c.case_id for c in cases}) == len(cases)


def test_empty_corpus_rejected(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n")
    with pytest.raises(CorpusError, match="no cases"):
        load_corpus(empty)


def test_unknown_taper_kind_names_field(tmp_path):
    bad = tmp_path / "bad.jsonl"
    case = {
        "id": "x", "left_spec": {"type": "infinite", "integrand": "x^-2", "a": 1.0,
                                 "taper": "mystery:c=1"},
        "right_spec": {"type": "infinite", "integrand": "x^-2", "a": 1.0,
                       "taper": "taper:c=1"},
        "expected_verdict": "equal_within_tol", "tol": 1e-5,
    }
    bad.write_text(json.dumps(case) + "\n")
    with pytest.raises(CorpusError, match=r"left_spec\.taper.*mystery"):
        load_corpus(bad)


def test_unknown_case_field_rejected(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"id": "x", "left_spec": {}, "expected_verdict":
                               "mismatch", "tol": 1e-5, "surprise": 1}) + "\n")
    with pytest.raises(CorpusError, match="surprise"):
        load_corpus(bad)


def test_malformed_json_reports_line(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x",\n')
    with pytest.raises(CorpusError, match=":1:"):
        load_corpus(bad)


def test_right_spec_and_cov_conflict(tmp_path):
    bad = tmp_path / "bad.jsonl"
    case = {
        "id": "x",
        "left_spec": {"type": "infinite", "integrand": "x^-2", "a": 1.0,
                      "taper": "taper:c=1"},
        "right_spec": {"type": "infinite", "integrand": "x^-2", "a": 1.0,
                       "taper": "taper:c=1"},
        "cov": "power:d=1,r=2",
        "expected_verdict": "equal_within_tol", "tol": 1e-5,
    }
    bad.write_text(json.dumps(case) + "\n")
    with pytest.raises(CorpusError, match="exactly one"):
        load_corpus(bad)


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

def test_demo_existence_asymmetry():
    report = demo_existence_asymmetry()
    statuses = [t.result.status for t in report.traces]
    assert statuses.count("converged") == 1
    assert statuses.count("oscillatory") == 2
    converged = [t for t in report.traces if t.result.status == "converged"][0]
    assert abs(converged.result.value - 1.0) < 1e-6
    for trace in report.traces:
        if trace.result.status == "oscillatory":
            assert trace.window_spread > 0.1
    text = report.to_text()
    assert "tone_matched" in text and "tone_power_image" in text
    parsed = json.loads(report.to_json())
    assert len(parsed["traces"]) == 3
