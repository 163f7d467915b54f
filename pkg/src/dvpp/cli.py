"""``dvpp`` command line.

Exit codes: 0 success, 1 runtime or model error, 2 missing input,
3 validation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .engine import SimConfig, metrics, run, snapshot_problem
from .errors import DvppError, NoDisturbance, ValidationError
from .market import DEFAULT_PENALTY, PortfolioSummary, UncertainProfile, certify, solve_robust_offer
from .records import (CONTROLLER_COLUMNS, DISPATCH_COLUMNS, EVENT_COLUMNS, OFFER_COLUMNS, STEP_COLUMNS,
                      STEP_SUMMARY_COLUMNS, write_json, write_metrics_csv, write_rows, write_trace_csv)
from .redispatch import DispatchStatus, solve_redispatch, validate_dispatch
from .scenario import load_events, parse_toml, resolve_scenario
from .wind import TurbineParams, run_step_experiment

EXIT_OK, EXIT_RUNTIME, EXIT_MISSING, EXIT_INVALID = 0, 1, 2, 3

log = logging.getLogger("dvpp")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args):
    sc = resolve_scenario(args.scenario)
    changes = {}
    if getattr(args, "spec_droop", None) is not None:
        changes["droop_d"] = args.spec_droop
    if getattr(args, "spec_inertia", None) is not None:
        changes["inertia_h"] = args.spec_inertia
    return sc.with_spec(**changes) if changes else sc


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    cfg = SimConfig(duration_s=args.duration, seed=args.seed,
                    sample_period_s=args.sample_period)
    events = load_events(args.events, sc, cfg.duration_s) if args.events else []
    out = _out_dir(args.out)
    trace = run(sc, None, events, cfg)
    write_trace_csv(trace, out / "trace.csv")
    try:
        m = metrics(trace)
    except NoDisturbance:
        m = metrics(trace, event_time_s=0.0)
    write_metrics_csv(m, out / "metrics.csv")
    write_rows(out / "dispatch.csv", DISPATCH_COLUMNS, trace.dispatch)
    write_rows(out / "controllers.csv", CONTROLLER_COLUMNS, trace.controllers)
    write_rows(out / "events.csv", EVENT_COLUMNS, trace.events)
    cfg_dict = {k: v for k, v in asdict(cfg).items() if k != "frequency_profile"}
    write_json({"scenario": sc.to_dict(), "config": cfg_dict, "events": [asdict(e) for e in events]},
               out / "effective_config.json")
    print(f"nadir {m.nadir_hz:.4f} Hz, steady state {m.steady_state_dev_hz:.4f} Hz, "
          f"max RoCoF {m.rocof_max_hz_s:.4f} Hz/s -> {out}")
    return EXIT_OK


def cmd_step_experiment(args) -> int:
    out = _out_dir(args.out)
    strategy = args.strategy.upper()
    params = TurbineParams()
    traces = run_step_experiment(params, strategy, duration_s=args.duration)
    rows, summary = [], []
    for (v, dp), tr in traces.items():
        norm = tr.dp_normalized
        rows.extend([t, v, dp, x] for t, x in zip(tr.time_s, norm))
        summary.append([v, dp, tr.final_normalized, tr.settling_time(), int(tr.infeasible), int(tr.speed_limited)])
    name = strategy.lower()
    write_rows(out / f"step_{name}.csv", STEP_COLUMNS, rows)
    write_rows(out / f"step_summary_{name}.csv", STEP_SUMMARY_COLUMNS, summary)
    write_json({"strategy": strategy, "turbine": params, "duration_s": args.duration}, out / "effective_config.json")
    flagged = sum(r[4] for r in summary)
    print(f"{strategy}: {len(summary)} traces, {flagged} flagged infeasible -> {out}")
    return EXIT_OK


def load_market(path: str | Path, gamma=None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    doc = parse_toml(path.read_text(), str(path))
    m = doc.get("market", {})
    periods = doc.get("periods", [])
    if not periods:
        raise ValidationError("market file defines no [[periods]]", str(path))
    try:
        profile = UncertainProfile(
            [p["price_low"] for p in periods], [p["price_high"] for p in periods],
            [p["avail_low_mw"] for p in periods], [p["avail_high_mw"] for p in periods],
            float(m.get("gamma", 0.0) if gamma is None else gamma))
    except KeyError as exc:
        raise ValidationError(f"period entry missing key {exc}", str(path)) from None
    portfolio = PortfolioSummary(float(m.get("firm_mw", 0.0)), float(m.get("storage_power_mw", 0.0)),
                                 float(m.get("storage_energy_mwh", 0.0)))
    return profile, portfolio, float(m.get("penalty_per_mwh", DEFAULT_PENALTY))


def cmd_offer(args) -> int:
    profile, portfolio, penalty = load_market(args.market, args.gamma)
    if args.penalty is not None:
        penalty = args.penalty
    sched = solve_robust_offer(profile, portfolio, penalty)
    ok, lowest = certify(sched, profile, portfolio, args.samples, args.seed)
    out = _out_dir(args.out)
    rows = [[t + 1, x, sched.worst_case_revenue] for t, x in enumerate(sched.offer_mw)]
    write_rows(out / "offer.csv", OFFER_COLUMNS, rows)
    write_json({"market": str(args.market), "gamma": profile.gamma, "penalty_per_mwh": penalty,
                "samples": args.samples, "seed": args.seed}, out / "effective_config.json")
    print(f"worst-case revenue {sched.worst_case_revenue:.2f} EUR")
    print(f"certificate over {args.samples} samples: {'ok' if ok else 'VIOLATED'} (lowest {lowest:.2f} EUR)")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_redispatch(args) -> int:
    sc = _scenario(args)
    problem = snapshot_problem(sc, args.target)
    sol = solve_redispatch(problem)
    if sol.status is DispatchStatus.infeasible:
        print("redispatch infeasible; binding: " + "; ".join(sol.binding), file=sys.stderr)
        return EXIT_RUNTIME
    problems = validate_dispatch(problem, sol)
    out = _out_dir(args.out)
    rows = [{"time_s": 0.0, "unit_id": u, "p_set_mw": p, "reserve_mw": sol.reserve_held[u],
             "status": sol.status.value, "objective": sol.objective} for u, p in sol.p_set.items()]
    write_rows(out / "dispatch.csv", DISPATCH_COLUMNS, rows)
    write_json({"scenario": sc.to_dict(), "target_mw": problem.target_mw,
                "reserve_required_mw": problem.reserve_required_mw}, out / "effective_config.json")
    for u, p in sol.p_set.items():
        print(f"{u}: {p:.3f} MW (reserve {sol.reserve_held[u]:.3f} MW)")
    print(f"status {sol.status.value}, cost {sol.objective:.2f} EUR/h")
    if sol.binding:
        print("relaxed: " + "; ".join(sol.binding))
    if problems:
        print("validator: " + "; ".join(problems), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    n_ev = 0
    if args.events:
        n_ev = len(load_events(args.events, sc, args.duration))
    print(f"{sc.source}: {sc.kind}, {len(sc.network.buses)} buses, {len(sc.network.lines)} lines, "
          f"{len(sc.units)} units ({len(sc.dvpp_units)} in DVPP), {n_ev} events: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvpp", description="Dynamic virtual power plant simulation toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, events=True):
        sp.add_argument("--scenario", required=True, help="builtin kind (TypeI, ...) or path to a TOML file")
        if events:
            sp.add_argument("--events", help="TOML event script")
        sp.add_argument("--spec-droop", type=float, help="override aggregate droop D (pu/pu)")
        sp.add_argument("--spec-inertia", type=float, help="override aggregate inertia H (s)")

    sp = sub.add_parser("simulate", help="run a time-domain simulation")
    scenario_args(sp)
    sp.add_argument("--out", default="out")
    sp.add_argument("--duration", type=float, default=60.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample-period", type=float, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("step-experiment", help="wind turbine power step grid")
    sp.add_argument("--strategy", required=True, choices=["os1", "os2"], type=str.lower)
    sp.add_argument("--out", default="out")
    sp.add_argument("--duration", type=float, default=40.0)
    sp.set_defaults(func=cmd_step_experiment)

    sp = sub.add_parser("offer", help="robust day-ahead offer")
    sp.add_argument("--market", required=True, help="TOML market input")
    sp.add_argument("--out", default="out")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--penalty", type=float)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_offer)

    sp = sub.add_parser("redispatch", help="solve one security-constrained redispatch")
    scenario_args(sp, events=False)
    sp.add_argument("--target", type=float, help="DVPP target in MW (default: load minus other generation)")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_redispatch)

    sp = sub.add_parser("validate", help="parse and check inputs without running")
    scenario_args(sp)
    sp.add_argument("--duration", type=float, default=None)
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DvppError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
