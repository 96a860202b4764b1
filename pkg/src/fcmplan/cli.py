"""Command-line front end: generate, plan, dispatch, evaluate.

Exit codes: 0 success, 1 internal self-check failure, 2 invalid input,
3 I/O failure, 4 solver time limit hit (best incumbent still written).
"""

from __future__ import annotations

import argparse
import collections
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import FORMAT_VERSION, __version__
from .dispatch import dumps_report, solve_stage2
from .errors import (ConfigError, DisconnectedError, DomainError, FcmplanError, ParseError,
                     ShapeError, ValidationError)
from .instance import builtin_path, load_instance, loads_json, save_instance, validate_instance
from .planner import StageOnePlan, evaluate_plan, solve_plan
from .risk import aggregate_report
from .scenarios import GenConfig, generate_scenarios, load_set, save_set
from .tracking import simulate_tracking

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_TIMEOUT = 4

INPUT_ERRORS = (ValidationError, ConfigError, ParseError, DisconnectedError, DomainError,
                ShapeError)


class PhaseError(Exception):
    def __init__(self, phase: str, code: int, message: str):
        super().__init__(message)
        self.phase = phase
        self.code = code


class _Phase:
    """Context manager mapping exceptions raised inside a phase to exit codes."""

    def __init__(self, name: str, timings: dict | None = None):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, kind, exc, tb):
        if self.timings is not None:
            self.timings[self.name] = round(time.perf_counter() - self.start, 3)
        if exc is None or isinstance(exc, PhaseError):
            return False
        if isinstance(exc, INPUT_ERRORS):
            raise PhaseError(self.name, EXIT_INPUT, str(exc)) from exc
        if isinstance(exc, OSError):
            raise PhaseError(self.name, EXIT_IO, str(exc)) from exc
        if isinstance(exc, FcmplanError):
            raise PhaseError(self.name, EXIT_INTERNAL, f"{type(exc).__name__}: {exc}") from exc
        return False


def _load_instance(args):
    inst = load_instance(args.instance or builtin_path("ieee33.json"))
    changes = {}
    if args.lam is not None:
        changes["lam"] = args.lam
    if args.alpha is not None:
        changes["alpha"] = args.alpha
    return validate_instance(inst.with_risk(**changes)) if changes else inst


def _load_gen_config(args) -> GenConfig:
    path = args.gen_config or builtin_path("ieee33_gen.json")
    cfg = GenConfig.from_dict(loads_json(Path(path).read_text(), str(path)))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed).validate()
    return cfg


def _table(rows: list[tuple], header: tuple) -> str:
    cells = [tuple(str(c) for c in header)] + [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _money(v: float) -> str:
    return f"{v:,.4f}"


def _print_breakdown(plan: StageOnePlan) -> None:
    print(_table([(_money(plan.setup_cost), _money(plan.transport_cost),
                   _money(plan.expected_recourse), _money(plan.cvar), _money(plan.total))],
                 ("setup", "transport", "E[Q]", "CVaR", "total")))
    opened = [d for d, v in plan.z.items() if v]
    print(f"status {plan.status}, hubs opened: {', '.join(opened) or 'none'}, "
          f"units staged: {sum(plan.y.values())}, nodes {plan.nodes}, "
          f"{plan.solve_time:.1f} s")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_generate(args) -> int:
    with _Phase("generate"):
        inst = _load_instance(args)
        cfg = _load_gen_config(args)
        sset = generate_scenarios(inst, cfg)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_set(sset, out)
    hist = collections.Counter(n for sc in sset.scenarios for n in sc.affected)
    print(f"S = {len(sset)}, seed = {sset.seed}")
    print(_table([(n.id, hist.get(n.id, 0)) for n in inst.nodes], ("node", "scenarios")))
    return EXIT_OK


def cmd_plan(args) -> int:
    with _Phase("plan"):
        inst = _load_instance(args)
        sset = load_set(args.scenarios, inst)
        plan = solve_plan(inst, sset, time_limit=args.time_limit_s)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        plan.save(out)
    _print_breakdown(plan)
    if plan.timed_out:
        print("time limit reached: plan is the best incumbent, not proven optimal",
              file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK


def cmd_dispatch(args) -> int:
    with _Phase("dispatch"):
        inst = _load_instance(args)
        sset = load_set(args.scenarios, inst)
        plan = StageOnePlan.load(args.plan)
        if not 0 <= args.scenario_id < len(sset):
            raise PhaseError("dispatch", EXIT_INPUT,
                             f"scenario id {args.scenario_id} outside 0..{len(sset) - 1}")
        sc = sset[args.scenario_id]
        dec = solve_stage2(plan.staged(), sc, inst, time_limit=args.time_limit_s)
        tr = simulate_tracking(dec, sc, inst)
        if tr.violations:
            raise PhaseError("dispatch", EXIT_INTERNAL,
                             f"tracking self-check failed: {tr.violations[:3]}")
        _write(Path(args.out), dumps_report(dec, tr))
    print(f"scenario {sc.id}: Q = {_money(dec.q)} "
          f"(shortfall {_money(dec.shortfall_cost)}, restoration {_money(dec.restoration_cost)})")
    rows = [(n, dec.u[n], sum(dec.delivered(n).values()), f"{tr.nodes[n].residual_kwh:.3f}")
            for n in sc.affected]
    print(_table(rows, ("node", "stabilized", "units", "residual kWh")))
    return EXIT_TIMEOUT if dec.timed_out else EXIT_OK


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    timings: dict[str, float] = {}
    timed_out = False
    with _Phase("load", timings):
        if args.jobs < 1:
            raise PhaseError("load", EXIT_INPUT, "--jobs must be >= 1")
        inst = _load_instance(args)
        out.mkdir(parents=True, exist_ok=True)
        save_instance(inst, out / "instance.json")
    with _Phase("generate", timings):
        if args.scenarios:
            sset = load_set(args.scenarios, inst)
        else:
            sset = generate_scenarios(inst, _load_gen_config(args))
        save_set(sset, out / "scenarios.json")
    with _Phase("plan", timings):
        plan = solve_plan(inst, sset, time_limit=args.time_limit_s)
        plan.save(out / "plan.json")
    timed_out |= plan.timed_out
    _print_breakdown(plan)
    dispatch_files = []
    with _Phase("dispatch", timings):
        decisions = evaluate_plan(inst, plan, sset, jobs=args.jobs,
                                  time_limit=args.time_limit_s)
        trackings = []
        for sc, dec in zip(sset.scenarios, decisions):
            tr = simulate_tracking(dec, sc, inst)
            if tr.violations:
                raise PhaseError("dispatch", EXIT_INTERNAL,
                                 f"tracking self-check failed in scenario {sc.id}: "
                                 f"{tr.violations[:3]}")
            trackings.append(tr)
            rel = Path("dispatch") / f"scenario_{sc.id:03d}.json"
            _write(out / rel, dumps_report(dec, tr))
            dispatch_files.append(str(rel))
            timed_out |= dec.timed_out
    with _Phase("report", timings):
        report = aggregate_report(plan, decisions, trackings, inst, sset,
                                  check_consistency=not timed_out)
        report.save(out / "risk_report.json", out / "risk_report.csv")
    print(f"E[Q] {_money(report.expected_cost)}  VaR {_money(report.var_threshold)}  "
          f"CVaR {_money(report.cvar)}  E[ENS] {report.expected_ens:.3f} kWh  "
          f"E[residual] {report.expected_residual_kwh:.3f} kWh")
    if timed_out:
        print("time limit reached in at least one solve; no manifest written", file=sys.stderr)
        return EXIT_TIMEOUT
    manifest = {
        "tool": "fcmplan",
        "version": __version__,
        "format": FORMAT_VERSION,
        "seed": sset.seed,
        "instance": "instance.json",
        "scenarios": "scenarios.json",
        "plan": "plan.json",
        "dispatch": dispatch_files,
        "risk_report": "risk_report.json",
        "risk_csv": "risk_report.csv",
        "timings_s": timings,
    }
    with _Phase("manifest"):
        _write(out / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    print(f"artifacts in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcmplan",
        description="Risk-averse pre-positioning and dispatch of flexible capacity modules.")
    parser.add_argument("--version", action="version",
                        version=f"fcmplan {__version__} (file format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, gen=False, scenarios=False, plan=False):
        p.add_argument("--instance", help="instance JSON (default: bundled 33-bus feeder)")
        p.add_argument("--lambda", dest="lam", type=float, help="override risk weight lambda")
        p.add_argument("--alpha", type=float, help="override CVaR level alpha")
        p.add_argument("--time-limit-s", type=float, default=300.0,
                       help="per-solve time limit in seconds (default 300)")
        if gen:
            p.add_argument("--gen-config", help="scenario generator config (default: bundled)")
            p.add_argument("--seed", type=int, help="override the generator seed")
        if scenarios:
            p.add_argument("--scenarios", required=scenarios == "required",
                           help="scenario set JSON")
        if plan:
            p.add_argument("--plan", required=True, help="plan JSON written by 'plan'")

    p = sub.add_parser("generate", help="sample a scenario set")
    common(p, gen=True)
    p.add_argument("--out", required=True, help="scenario set JSON to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("plan", help="solve the stage-one extensive form")
    common(p, scenarios="required")
    p.add_argument("--out", required=True, help="plan JSON to write")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("dispatch", help="dispatch and track one scenario against a plan")
    common(p, scenarios="required", plan=True)
    p.add_argument("--scenario-id", type=int, required=True)
    p.add_argument("--out", required=True, help="dispatch report JSON to write")
    p.set_defaults(func=cmd_dispatch)

    p = sub.add_parser("evaluate", help="full pipeline with risk report")
    common(p, gen=True, scenarios="optional")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenario solves")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PhaseError as exc:
        print(f"error [{exc.phase}]: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
