"""Pairwise verification: value preservation, bridge equivalence, existence.

A corpus line pairs a left integral with either an explicit right integral
or a transform that derives one, plus the expected comparison verdict.
"Exists" is operationalized as status == converged under the configured
sample sequence; the verdict table is total over status pairs:

    both converged, |dv| <= tol   -> equal_within_tol
    both converged, |dv| >  tol   -> mismatch
    exactly one converged         -> existence_asymmetry
    neither converged             -> both_nonconverged
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .cov import BridgeSpec, CovError, apply_cov, bridge_transform, parse_cov_spec
from .expr import ExprError, parse
from .taper import TaperError, parse_boundary_spec, parse_taper_spec
from .zeval import (
    EvalConfig,
    FiniteIntegral,
    InfiniteIntegral,
    ZIntegralSpec,
    ZResult,
    eval_finite,
    eval_infinite,
)

__all__ = [
    "CorpusError", "VerificationOutcome", "CaseReport", "SuiteReport",
    "compare_pair", "run_suite", "demo_existence_asymmetry", "load_corpus",
    "shipped_corpus_path",
]


class CorpusError(ValueError):
    """Corpus file cannot be read, parsed, or validated."""


@dataclass(frozen=True)
class VerificationOutcome:
    left: ZResult
    right: ZResult
    verdict: str
    tolerance: float
    case_id: str = ""


def compare_pair(spec_a: ZIntegralSpec, spec_b: ZIntegralSpec, cfg: EvalConfig,
                 tol: float, case_id: str = "", mode_a: str = "direct",
                 mode_b: str = "direct") -> VerificationOutcome:
    """Evaluate both integrals and classify the pair."""
    left = _evaluate(spec_a, cfg, mode_a)
    right = _evaluate(spec_b, cfg, mode_b)
    return VerificationOutcome(left=left, right=right,
                               verdict=_verdict(left, right, tol),
                               tolerance=tol, case_id=case_id)


def _evaluate(spec: ZIntegralSpec, cfg: EvalConfig, mode: str) -> ZResult:
    if isinstance(spec, FiniteIntegral):
        return eval_finite(spec, cfg, mode=mode)
    return eval_infinite(spec, cfg)


def _verdict(left: ZResult, right: ZResult, tol: float) -> str:
    lc = left.status == "converged"
    rc = right.status == "converged"
    if lc and rc:
        return "equal_within_tol" if abs(left.value - right.value) <= tol else "mismatch"
    if lc != rc:
        return "existence_asymmetry"
    return "both_nonconverged"


# --------------------------------------------------------------------------
# Corpus: one JSON object per line.
#
# {"id": ..., "left_spec": {...}, "right_spec": {...}?, "cov": "..."?,
#  "expected_verdict": ..., "tol": ..., "config": {...}?,
#  "allow_inconclusive": bool?}
#
# Integral spec objects:
#   {"type": "infinite", "integrand": str, "a": float, "taper": "taper:...",
#    "var": str?}
#   {"type": "finite", "integrand": str, "beta": float,
#    "taper": "wfromz:...", "mode": "direct"|"bridge"?, "var": str?}
# --------------------------------------------------------------------------

_CASE_KEYS = {"id", "left_spec", "right_spec", "cov", "expected_verdict", "tol",
              "config", "allow_inconclusive"}
_INF_KEYS = {"type", "integrand", "a", "taper", "var"}
_FIN_KEYS = {"type", "integrand", "beta", "taper", "mode", "var"}
_VERDICTS = {"equal_within_tol", "mismatch", "existence_asymmetry", "both_nonconverged"}


@dataclass(frozen=True)
class Case:
    case_id: str
    left: ZIntegralSpec
    left_mode: str
    right: ZIntegralSpec
    right_mode: str
    expected_verdict: str
    tol: float
    config: EvalConfig


@dataclass(frozen=True)
class CaseReport:
    case_id: str
    verdict: str
    expected_verdict: str
    as_expected: bool
    left_value: float
    right_value: float
    left_status: str
    right_status: str
    evaluations: int


@dataclass(frozen=True)
class SuiteReport:
    cases: tuple[CaseReport, ...]
    all_expected: bool

    def to_json(self) -> str:
        return json.dumps({"cases": [asdict(c) for c in self.cases],
                           "all_expected": self.all_expected}, indent=2)

    def to_table(self) -> str:
        rows = [f"{'case':34} {'verdict':22} {'expected':22} {'ok':3} "
                f"{'left':14} {'right':14} evals"]
        for c in self.cases:
            rows.append(
                f"{c.case_id:34} {c.verdict:22} {c.expected_verdict:22} "
                f"{'yes' if c.as_expected else 'NO ':3} "
                f"{c.left_value:14.8g} {c.right_value:14.8g} {c.evaluations}"
            )
        return "\n".join(rows)


def shipped_corpus_path() -> Path:
    return Path(str(resources.files("zvar").joinpath("data/corpus.jsonl")))


def load_corpus(path: str | Path | None = None) -> list[Case]:
    source = Path(path) if path is not None else shipped_corpus_path()
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as err:
        raise CorpusError(f"cannot read corpus {source}: {err}") from None
    cases = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            raise CorpusError(f"{source}:{lineno}: invalid json: {err}") from None
        try:
            cases.append(_build_case(obj))
        except (CorpusError, TaperError, CovError, ExprError, ValueError, TypeError) as err:
            raise CorpusError(f"{source}:{lineno}: {err}") from None
    if not cases:
        raise CorpusError(f"no cases in corpus {source}")
    return cases


def _build_case(obj: dict) -> Case:
    if not isinstance(obj, dict):
        raise CorpusError("case must be a json object")
    unknown = set(obj) - _CASE_KEYS
    if unknown:
        raise CorpusError(f"unknown case fields: {', '.join(sorted(unknown))}")
    for required in ("id", "left_spec", "expected_verdict", "tol"):
        if required not in obj:
            raise CorpusError(f"case is missing field {required!r}")
    if obj["expected_verdict"] not in _VERDICTS:
        raise CorpusError(f"unknown expected_verdict {obj['expected_verdict']!r}")
    tol = float(obj["tol"])
    if not (math.isfinite(tol) and tol > 0.0):
        raise CorpusError(f"tol must be positive and finite, got {obj['tol']!r}")
    cfg = EvalConfig(**obj.get("config", {}))
    left, left_mode = _build_spec(obj["left_spec"], field="left_spec")

    if ("right_spec" in obj) == ("cov" in obj):
        raise CorpusError("exactly one of right_spec or cov is required")
    if "right_spec" in obj:
        right, right_mode = _build_spec(obj["right_spec"], field="right_spec")
    else:
        cov = parse_cov_spec(obj["cov"],
                             a=left.lower_limit if isinstance(left, InfiniteIntegral) else None)
        if isinstance(cov, BridgeSpec):
            right = bridge_transform(left, cov.d, cov.alpha)
        else:
            right = apply_cov(left, cov,
                              allow_inconclusive=bool(obj.get("allow_inconclusive", False)))
        right_mode = "direct"
    return Case(case_id=str(obj["id"]), left=left, left_mode=left_mode,
                right=right, right_mode=right_mode,
                expected_verdict=obj["expected_verdict"], tol=tol, config=cfg)


def _build_spec(obj: dict, field: str) -> tuple[ZIntegralSpec, str]:
    if not isinstance(obj, dict) or "type" not in obj:
        raise CorpusError(f"{field}: integral spec needs a 'type'")
    kind = obj["type"]
    if kind == "infinite":
        unknown = set(obj) - _INF_KEYS
        if unknown:
            raise CorpusError(f"{field}: unknown fields: {', '.join(sorted(unknown))}")
        for required in ("integrand", "a", "taper"):
            if required not in obj:
                raise CorpusError(f"{field}: missing field {required!r}")
        variable = obj.get("var", "x")
        try:
            taper = parse_taper_spec(obj["taper"])
        except TaperError as err:
            raise CorpusError(f"{field}.taper: {err}") from None
        spec = InfiniteIntegral(parse(obj["integrand"], variables=(variable,)),
                                float(obj["a"]), taper, variable=variable)
        return spec, "direct"
    if kind == "finite":
        unknown = set(obj) - _FIN_KEYS
        if unknown:
            raise CorpusError(f"{field}: unknown fields: {', '.join(sorted(unknown))}")
        for required in ("integrand", "beta", "taper"):
            if required not in obj:
                raise CorpusError(f"{field}: missing field {required!r}")
        mode = obj.get("mode", "direct")
        if mode not in ("direct", "bridge"):
            raise CorpusError(f"{field}.mode: unknown mode {mode!r}")
        variable = obj.get("var", "u")
        try:
            taper = parse_boundary_spec(obj["taper"])
        except TaperError as err:
            raise CorpusError(f"{field}.taper: {err}") from None
        spec = FiniteIntegral(parse(obj["integrand"], variables=(variable,)),
                              float(obj["beta"]), taper, variable=variable)
        return spec, mode
    raise CorpusError(f"{field}.type: unknown integral type {kind!r}")


def run_suite(path: str | Path | None = None) -> SuiteReport:
    """Evaluate every corpus case and compare verdicts with expectations.

    The report is ordered by case id, independent of evaluation order.
    """
    reports = []
    for case in load_corpus(path):
        outcome = compare_pair(case.left, case.right, case.config, case.tol,
                               case_id=case.case_id, mode_a=case.left_mode,
                               mode_b=case.right_mode)
        reports.append(CaseReport(
            case_id=case.case_id,
            verdict=outcome.verdict,
            expected_verdict=case.expected_verdict,
            as_expected=outcome.verdict == case.expected_verdict,
            left_value=outcome.left.value,
            right_value=outcome.right.value,
            left_status=outcome.left.status,
            right_status=outcome.right.status,
            evaluations=outcome.left.evaluations + outcome.right.evaluations,
        ))
    reports.sort(key=lambda r: r.case_id)
    return SuiteReport(cases=tuple(reports), all_expected=all(r.as_expected for r in reports))


# --------------------------------------------------------------------------
# Existence-asymmetry demonstration.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DemoTrace:
    name: str
    description: str
    result: ZResult
    window_spread: float


@dataclass(frozen=True)
class DemoReport:
    traces: tuple[DemoTrace, ...]

    def to_json(self) -> str:
        return json.dumps({
            "traces": [{
                "name": t.name,
                "description": t.description,
                "status": t.result.status,
                "value": t.result.value,
                "window_spread": t.window_spread,
                "samples": list(map(list, t.result.samples)),
            } for t in self.traces]
        }, indent=2)

    def to_text(self) -> str:
        lines = []
        for t in self.traces:
            lines.append(f"--- {t.name}: {t.description}")
            lines.append(f"    status={t.result.status}  value={t.result.value:.9g}"
                         f"  last-window spread={t.window_spread:.3g}")
            tail = t.result.samples[-6:]
            lines.append("    tail samples: " +
                         ", ".join(f"({p:.4g}, {v:.6g})" for p, v in tail))
        return "\n".join(lines)


def demo_existence_asymmetry() -> DemoReport:
    """Same tone, three treatments: the value exists only when z matches it.

    The third trace is the image of the second convergent case under the
    admissible map y = x^2; a valid change of variable does not transport
    existence, which is exactly what the verdict vocabulary records.
    """
    from .taper import make_matched_trig, make_smooth_taper

    matched = make_matched_trig(1.0, 1.0)
    smooth = make_smooth_taper(1.0)
    cfg = EvalConfig()
    cfg_image = EvalConfig(b_start=1.0, b_count=35)
    traces = []
    for name, description, spec, config in (
        ("tone_matched", "sin(x) from 0 with a moment-matched taper",
         InfiniteIntegral(parse("sin(x)"), 0.0, matched), cfg),
        ("tone_smooth", "sin(x) from 0 with a plain smooth taper",
         InfiniteIntegral(parse("sin(x)"), 0.0, smooth), cfg),
        ("tone_power_image", "y = x^2 image of sin(x) from 1, matched taper carried over",
         InfiniteIntegral(parse("sin(y^(1/2))/(2*y^(1/2))"), 1.0, matched, variable="y"),
         cfg_image),
    ):
        result = eval_infinite(spec, config)
        values = [v for _, v in result.samples]
        m = config.stability_window
        spread = max(values[-m:]) - min(values[-m:]) if len(values) >= m else math.inf
        traces.append(DemoTrace(name=name, description=description,
                                result=result, window_spread=spread))
    return DemoReport(traces=tuple(traces))
