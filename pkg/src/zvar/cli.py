"""Command-line front end: evaluate, transform, verify, demo.

Exit codes: 0 for converged evaluations and expected/equal verdicts, 2 for
non-convergence or verdict mismatches, 1 for usage or evaluation errors.
JSON mode emits a single object whose spec_echo block reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from .cov import BridgeSpec, CovError, apply_cov, bridge_transform, parse_cov_spec
from .expr import ExprError, parse, serialize
from .taper import TaperError, parse_boundary_spec, parse_taper_spec
from .verify import CorpusError, demo_existence_asymmetry, run_suite
from .zeval import (
    BridgeUnavailable,
    EvalConfig,
    FiniteIntegral,
    InfiniteIntegral,
    ZResult,
    eval_finite,
    eval_infinite,
)

_USAGE_ERRORS = (ExprError, TaperError, CovError, CorpusError, BridgeUnavailable, ValueError)


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve 2
        raise _CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="zvar", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_spec_flags(p):
        p.add_argument("--type", choices=("inf", "fin"), required=True,
                       help="integral form: infinite upper limit or critical lower limit 0")
        p.add_argument("--f", help="integrand for an infinite-limit integral (in x)")
        p.add_argument("--g", help="integrand for a finite-limit integral (in u)")
        p.add_argument("--var", help="integration variable (default x / u)")
        p.add_argument("--a", type=float, help="finite lower limit (infinite form)")
        p.add_argument("--beta", type=float, help="noncritical upper limit (finite form)")
        p.add_argument("--z", help="termination function, e.g. taper:c=1 or matched:omega=1,c=1",
                       required=False)
        p.add_argument("--w", help="boundary taper, e.g. wfromz:taper:c=1", required=False)
        p.add_argument("--mode", choices=("direct", "bridge"), default="direct",
                       help="finite-limit evaluation route")

    def add_config_flags(p):
        p.add_argument("--b-start", type=float, dest="b_start")
        p.add_argument("--b-step", type=float, dest="b_step")
        p.add_argument("--b-count", type=int, dest="b_count")
        p.add_argument("--delta-shrink", type=float, dest="delta_shrink")
        p.add_argument("--delta-count", type=int, dest="delta_count")
        p.add_argument("--window", type=int, dest="stability_window")
        p.add_argument("--tol", type=float, dest="tol")
        p.add_argument("--quad-tol", type=float, dest="quad_tol")
        p.add_argument("--max-evals", type=int, dest="max_evals_per_point")
        p.add_argument("--accelerate", action="store_true", default=None)

    p_eval = sub.add_parser("eval", help="evaluate one integral")
    add_spec_flags(p_eval)
    add_config_flags(p_eval)
    p_eval.add_argument("--json", action="store_true")

    p_tr = sub.add_parser("transform", help="apply a change of variable")
    add_spec_flags(p_tr)
    add_config_flags(p_tr)
    p_tr.add_argument("--cov", required=True,
                      help="power:d=1,r=2 | exp:d=1,alpha=1 | finpower:d=1,r=2 | "
                           "custom:kind=...,forward=...,inverse=...,lo=...,hi=... | "
                           "bridge:d=1,alpha=1")
    p_tr.add_argument("--print-spec", action="store_true",
                      help="print the transformed integral instead of evaluating the pair")
    p_tr.add_argument("--allow-inconclusive", action="store_true",
                      help="apply transforms whose validation is sampled-only")
    p_tr.add_argument("--json", action="store_true")

    p_ver = sub.add_parser("verify", help="run a corpus of comparison cases")
    p_ver.add_argument("--corpus", help="jsonl corpus path (default: shipped corpus)")
    p_ver.add_argument("--json", action="store_true")

    p_demo = sub.add_parser("demo", help="existence-asymmetry demonstration")
    p_demo.add_argument("--json", action="store_true")
    return parser


def _build_config(args) -> EvalConfig:
    fields = {}
    for name in ("b_start", "b_step", "b_count", "delta_shrink", "delta_count",
                 "stability_window", "tol", "quad_tol", "max_evals_per_point",
                 "accelerate"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if "max_evals_per_point" not in fields:
        env = os.environ.get("ZVAR_MAX_EVALS")
        if env is not None:
            fields["max_evals_per_point"] = int(env)
    return EvalConfig(**fields)


def _build_spec(args, default_taper: bool):
    if args.type == "inf":
        text = args.f if args.f is not None else args.g
        if text is None:
            raise _CliError("--f is required for --type inf")
        if args.a is None:
            raise _CliError("--a is required for --type inf")
        variable = args.var or "x"
        taper_text = args.z
        if taper_text is None:
            if not default_taper:
                raise _CliError("--z is required for --type inf")
            taper_text = "taper:c=1"
        taper = parse_taper_spec(taper_text)
        spec = InfiniteIntegral(parse(text, variables=(variable,)), args.a, taper,
                                variable=variable)
        return spec, "direct", taper_text
    text = args.g if args.g is not None else args.f
    if text is None:
        raise _CliError("--g is required for --type fin")
    if args.beta is None:
        raise _CliError("--beta is required for --type fin")
    variable = args.var or "u"
    taper_text = args.w
    if taper_text is None:
        if not default_taper:
            raise _CliError("--w is required for --type fin")
        taper_text = "wfromz:taper:c=1"
    taper = parse_boundary_spec(taper_text)
    spec = FiniteIntegral(parse(text, variables=(variable,)), args.beta, taper,
                          variable=variable)
    return spec, args.mode, taper_text


def _spec_echo(args, spec, mode, taper_text, cfg: EvalConfig) -> dict:
    resolved_b_start = cfg.b_start
    if resolved_b_start is None and isinstance(spec, InfiniteIntegral):
        resolved_b_start = spec.lower_limit + 1.0
    echo = {
        "type": "inf" if isinstance(spec, InfiniteIntegral) else "fin",
        "integrand": serialize(spec.integrand),
        "var": spec.variable,
        "taper": taper_text,
        "config": {
            "b_start": resolved_b_start,
            "b_step": cfg.b_step,
            "b_count": cfg.b_count,
            "delta_shrink": cfg.delta_shrink,
            "delta_count": cfg.delta_count,
            "stability_window": cfg.stability_window,
            "tol": cfg.tol,
            "quad_tol": cfg.quad_tol,
            "max_evals_per_point": cfg.max_evals_per_point,
            "accelerate": cfg.accelerate,
        },
    }
    if isinstance(spec, InfiniteIntegral):
        echo["a"] = spec.lower_limit
    else:
        echo["beta"] = spec.upper_limit
        echo["mode"] = mode
    return echo


def _result_payload(result: ZResult, echo: dict) -> dict:
    return {
        "value": result.value,
        "error_estimate": result.error_estimate,
        "status": result.status,
        "samples": [list(s) for s in result.samples],
        "evaluations": result.evaluations,
        "accelerated": result.accelerated,
        "spec_echo": echo,
    }


def _print_result(result: ZResult, out) -> None:
    print(f"status: {result.status}", file=out)
    print(f"value: {result.value!r}", file=out)
    print(f"error_estimate: {result.error_estimate:.6g}", file=out)
    print(f"evaluations: {result.evaluations}", file=out)
    print(f"samples: {len(result.samples)}", file=out)


def _evaluate(spec, mode, cfg):
    if isinstance(spec, FiniteIntegral):
        return eval_finite(spec, cfg, mode=mode)
    return eval_infinite(spec, cfg)


def _cmd_eval(args, out) -> int:
    spec, mode, taper_text = _build_spec(args, default_taper=False)
    cfg = _build_config(args)
    result = _evaluate(spec, mode, cfg)
    if args.json:
        print(json.dumps(_result_payload(result, _spec_echo(args, spec, mode,
                                                            taper_text, cfg))), file=out)
    else:
        _print_result(result, out)
    return 0 if result.status == "converged" else 2


def _cmd_transform(args, out) -> int:
    spec, mode, taper_text = _build_spec(args, default_taper=True)
    cfg = _build_config(args)
    a_context = spec.lower_limit if isinstance(spec, InfiniteIntegral) else None
    cov = parse_cov_spec(args.cov, a=a_context)
    if isinstance(cov, BridgeSpec):
        transformed = bridge_transform(spec, cov.d, cov.alpha)
        transformed_mode = "direct"
    else:
        transformed = apply_cov(spec, cov, allow_inconclusive=args.allow_inconclusive)
        transformed_mode = mode if isinstance(transformed, FiniteIntegral) else "direct"

    if args.print_spec:
        if isinstance(transformed, InfiniteIntegral):
            limit_name, limit = "lower_limit", transformed.lower_limit
        else:
            limit_name, limit = "upper_limit", transformed.upper_limit
        if args.json:
            print(json.dumps({
                "type": "inf" if isinstance(transformed, InfiniteIntegral) else "fin",
                "integrand": serialize(transformed.integrand),
                "var": transformed.variable,
                limit_name: limit,
            }), file=out)
        else:
            print(f"integrand: {serialize(transformed.integrand)}", file=out)
            print(f"{limit_name}: {limit!r}", file=out)
        return 0

    left = _evaluate(spec, mode, cfg)
    right = _evaluate(transformed, transformed_mode, cfg)
    delta = abs(left.value - right.value)
    both = left.status == right.status == "converged"
    verdict = ("equal_within_tol" if both and delta <= cfg.tol else
               "mismatch" if both else
               "existence_asymmetry" if (left.status == "converged") != (right.status == "converged")
               else "both_nonconverged")
    if args.json:
        print(json.dumps({
            "verdict": verdict,
            "left": {"value": left.value, "status": left.status},
            "right": {"value": right.value, "status": right.status,
                      "integrand": serialize(transformed.integrand)},
        }), file=out)
    else:
        print(f"verdict: {verdict}", file=out)
        print(f"left:  status={left.status} value={left.value!r}", file=out)
        print(f"right: status={right.status} value={right.value!r} "
              f"integrand={serialize(transformed.integrand)}", file=out)
    return 0 if verdict == "equal_within_tol" else 2


def _cmd_verify(args, out) -> int:
    report = run_suite(args.corpus)
    print(report.to_json() if args.json else report.to_table(), file=out)
    return 0 if report.all_expected else 2


def _cmd_demo(args, out) -> int:
    report = demo_existence_asymmetry()
    print(report.to_json() if args.json else report.to_text(), file=out)
    statuses = sorted(t.result.status for t in report.traces)
    return 0 if statuses == ["converged", "oscillatory", "oscillatory"] else 2


def run_cli(argv: list[str], out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand == "eval":
            return _cmd_eval(args, out)
        if args.subcommand == "transform":
            return _cmd_transform(args, out)
        if args.subcommand == "verify":
            return _cmd_verify(args, out)
        return _cmd_demo(args, out)
    except _CliError as e:
        print(f"zvar: error: {e}", file=err)
        return 1
    except _USAGE_ERRORS as e:
        print(f"zvar: error: {e}", file=err)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
