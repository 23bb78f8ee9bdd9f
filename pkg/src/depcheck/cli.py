"""``depcheck`` command line: simulate | build | verify | sweep | convergence | export-prism.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys
import warnings
from typing import List, Optional, Sequence

from . import checker, dependability, oracle, pctl, prism
from . import formula as F
from .errors import ConditioningError, DataError, PctlSyntaxError, SolverError, UnknownNameError
from .estimation import build_from_episodes, load_riskmap, read_episodes, write_episodes
from .model import load_model as _load, to_json_dict, validate
from .simenv import SimConfig, simulate, sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
STABILITY_TOL = 0.05
STABLE_FROM = 300


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("DEPCHECK_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"DEPCHECK_SEED must be an integer, got {env!r}") from None


@contextlib.contextmanager
def _output(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "undefined"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.10g}"


def _parse_grid(text: str) -> List[float]:
    try:
        if ":" not in text:
            return [float(text)]
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--sigma expects 'value' or 'start:stop:step', got {text!r}") from None
    if step <= 0 or b < a:
        raise UsageError("--sigma range needs step > 0 and stop >= start")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 10) for i in range(count)]


def _sim_config(args, **over) -> SimConfig:
    kw = dict(episodes=getattr(args, "episodes", 300), seed=_seed(args))
    if getattr(args, "max_steps", None):
        kw["max_steps"] = args.max_steps
    kw.update(over)
    return SimConfig(**kw)


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    eps = simulate(_sim_config(args, sigma=args.sigma))
    with _output(args.output) as fh:
        write_episodes(eps, fh)
    return EXIT_OK


def cmd_build(args) -> int:
    eps = read_episodes(sys.stdin if args.episodes_file == "-" else args.episodes_file)
    riskmap = load_riskmap(args.riskmap)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = build_from_episodes(eps, riskmap, include_timeouts=not args.exclude_timeouts)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    with _output(args.output) as fh:
        json.dump(to_json_dict(model), fh, indent=1)
        fh.write("\n")
    return EXIT_OK


def load_model(path):
    model = _load(path)
    problems = validate(model)
    if problems:
        shown = "; ".join(f"{v.kind} (state {v.state}, value {v.value})" for v in problems[:5])
        raise DataError(f"invalid model {path}: {shown}")
    return model


def _solver(args) -> checker.SolverConfig:
    return checker.SolverConfig(method=args.solver)


def cmd_verify(args) -> int:
    model = load_model(args.model)
    config = _solver(args)
    if args.prop:
        return _verify_single(args, model, config)
    rep = dependability.report(model, args.semantics, clamp=args.clamp, config=config)
    mc = oracle.mc_properties(model, args.traces, _seed(args), args.semantics) \
        if args.oracle else None
    with _output(args.output) as fh:
        if args.format == "json":
            d = rep.to_dict()
            if mc:
                d["oracle"] = {k: _mc_dict(mc[k], rep.values[k]) for k in dependability.PROPERTIES}
            fh.write(json.dumps(d, indent=2) + "\n")
        elif args.format == "csv":
            w = csv.writer(fh, lineterminator="\n")
            head = ["property", "value", "flags"] + (["mc", "mc_se", "agree"] if mc else [])
            w.writerow(head)
            for k in dependability.PROPERTIES:
                row = [k, _fmt(rep.values[k]), ";".join(rep.flags.get(k, []))]
                if mc:
                    row += _mc_cells(mc[k], rep.values[k])
                w.writerow(row)
        else:
            extra = {k: _mc_cells(mc[k], rep.values[k]) for k in mc} if mc else None
            fh.write(rep.to_table(extra, ("mc", "mc_se", "agree") if mc else ()) + "\n")
    return EXIT_OK


def _agree(est: oracle.McEstimate, exact: float) -> str:
    if math.isnan(exact) and math.isnan(est.estimate):
        return "yes"
    return "yes" if est.agrees(exact) else "NO"


def _mc_cells(est: oracle.McEstimate, exact: float) -> List[str]:
    return [_fmt(est.estimate), _fmt(est.std_error), _agree(est, exact)]


def _mc_dict(est: oracle.McEstimate, exact: float) -> dict:
    return {"estimate": dependability._jsonable(est.estimate),
            "std_error": dependability._jsonable(est.std_error),
            "truncated_fraction": est.truncated_fraction,
            "agree_3se": _agree(est, exact) == "yes"}


def _verify_single(args, model, config) -> int:
    f = pctl.parse(args.prop)
    try:
        value = pctl.evaluate(f, model, semantics=args.semantics, config=config)
    except ConditioningError:
        value = math.nan
    est = None
    if args.oracle:
        if not isinstance(f, (F.ProbQuery, F.RewardQuery)) or not f.bound.is_query:
            raise UsageError("--oracle needs a numerical (=?) query")
        try:
            est = oracle.mc_estimate(model, f, args.traces, _seed(args),
                                     semantics=args.semantics)
        except ConditioningError:
            est = oracle.McEstimate(math.nan, math.nan, 0.0, 0)
    with _output(args.output) as fh:
        shown = value if isinstance(value, bool) else _fmt(float(value))
        if args.format == "json":
            d = {"property": pctl.to_string(f), "value": dependability._jsonable(value),
                 "semantics": args.semantics}
            if est:
                d["oracle"] = _mc_dict(est, value)
            fh.write(json.dumps(d, indent=2) + "\n")
        elif args.format == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["property", "value"] + (["mc", "mc_se", "agree"] if est else []))
            w.writerow([pctl.to_string(f), shown] + (_mc_cells(est, value) if est else []))
        else:
            line = f"{pctl.to_string(f)} = {shown}"
            if est:
                line += (f"   (mc {_fmt(est.estimate)} +- {_fmt(est.std_error)}, "
                         f"agree: {_agree(est, value)})")
            fh.write(line + "\n")
    return EXIT_OK


COLUMNS = ("safety", "resilience", "robustness", "detection", "recovery")


def _row(model, semantics) -> dict:
    rep = dependability.report(model, semantics)
    return {k: rep.values[k] for k in COLUMNS}


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.sigma)
    runs = sweep(grid, _sim_config(args))
    riskmap = load_riskmap(args.riskmap)
    with _output(args.output) as fh, warnings.catch_warnings():
        warnings.simplefilter("ignore")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sigma",) + COLUMNS + ("success_rate",))
        for s, eps in runs.items():
            model = build_from_episodes(eps, riskmap)
            row = _row(model, args.semantics)
            w.writerow([_fmt(s)] + [_fmt(row[k]) for k in COLUMNS]
                       + [_fmt(model.meta["success_rate"])])
    return EXIT_OK


def convergence_rows(episodes, sizes: Sequence[int], semantics: str = "conditional",
                     riskmap=None) -> List[dict]:
    """Properties on nested prefixes of one episode list, with stability flags."""
    riskmap = riskmap or load_riskmap(None)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in sizes:
            row = {"n": n, **_row(build_from_episodes(episodes[:n], riskmap), semantics)}
            prev = rows[-1] if rows else None
            row["stable"] = bool(prev is not None and n >= STABLE_FROM and all(
                abs(row[k] - prev[k]) <= STABILITY_TOL for k in COLUMNS))
            rows.append(row)
    return rows


def cmd_convergence(args) -> int:
    if args.max < 1 or args.step < 1:
        raise UsageError("--max and --step must be positive")
    sizes = list(range(args.step, args.max + 1, args.step))
    if not sizes:
        raise UsageError("--step larger than --max gives no sample sizes")
    eps = simulate(_sim_config(args, sigma=args.sigma, episodes=args.max))
    rows = convergence_rows(eps, sizes, args.semantics, load_riskmap(args.riskmap))
    with _output(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n",) + COLUMNS + ("stable",))
        for r in rows:
            w.writerow([r["n"]] + [_fmt(r[k]) for k in COLUMNS] + [str(r["stable"]).lower()])
    return EXIT_OK


def cmd_export_prism(args) -> int:
    model = load_model(args.model)
    prefix = args.output or os.path.splitext(args.model)[0]
    pm, props = prism.write_prism(model, prefix)
    print(f"wrote {pm} and {props}", file=sys.stderr)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--semantics", choices=dependability.SEMANTICS, default=argparse.SUPPRESS,
                        help="reward-query semantics (default: conditional)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (fallback: $DEPCHECK_SEED, then 0)")

    p = _Parser(prog="depcheck", parents=[common],
                description="Dependability model checking of risk-level DTMCs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="run the toy navigation simulator")
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--episodes", type=int, default=300)
    s.add_argument("--max-steps", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("build", parents=[common], help="estimate the product model from episodes")
    b.add_argument("episodes_file", help="episode JSONL file ('-' for stdin)")
    b.add_argument("--riskmap", default="default", help="'default' or a .toml/.json file")
    b.add_argument("--exclude-timeouts", action="store_true",
                   help="estimate the mission length from goal episodes only")
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify", parents=[common], help="check properties on a model")
    v.add_argument("model")
    g = v.add_mutually_exclusive_group()
    g.add_argument("--props", choices=("all",), default="all")
    g.add_argument("--prop", help="a single PCTL formula")
    v.add_argument("--format", choices=("table", "json", "csv"), default="table")
    v.add_argument("--clamp", action="store_true", help="clamp detection/recovery to [0, 1]")
    v.add_argument("--solver", choices=("auto", "direct", "iterative"), default="auto")
    v.add_argument("--oracle", action="store_true", help="add Monte Carlo cross-check")
    v.add_argument("--traces", type=int, default=100_000)
    v.add_argument("-o", "--output")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", parents=[common], help="properties across disturbance levels")
    w.add_argument("--sigma", default="0.1:2.0:0.1", help="'value' or 'start:stop:step'")
    w.add_argument("--episodes", type=int, default=300)
    w.add_argument("--max-steps", type=int)
    w.add_argument("--riskmap", default="default")
    w.add_argument("-o", "--output")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("convergence", parents=[common], help="properties against sample size")
    c.add_argument("--sigma", type=float, default=0.5)
    c.add_argument("--max", type=int, default=500)
    c.add_argument("--step", type=int, default=50)
    c.add_argument("--max-steps", type=int)
    c.add_argument("--riskmap", default="default")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_convergence)

    e = sub.add_parser("export-prism", parents=[common], help="write PRISM .pm and .props files")
    e.add_argument("model")
    e.add_argument("-o", "--output", help="output prefix (default: model path without suffix)")
    e.set_defaults(func=cmd_export_prism)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.semantics = getattr(args, "semantics", "conditional")
    args.seed = getattr(args, "seed", None)
    try:
        if getattr(args, "traces", 1) < 1 or getattr(args, "episodes", 1) < 0:
            raise UsageError("--traces must be >= 1 and --episodes >= 0")
        return args.func(args)
    except UsageError as exc:
        print(f"depcheck: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PctlSyntaxError, UnknownNameError, OSError, json.JSONDecodeError) as exc:
        print(f"depcheck: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, ConditioningError, ArithmeticError) as exc:
        print(f"depcheck: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
