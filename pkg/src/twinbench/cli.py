"""Command line entry points: run, eval, credibility, replay, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation
from .adversary import hazard_csv, hazard_fraction
from .credibility import CredibilityConfig, assess, recommend_mix
from .runlog import RunLogData
from .runner import Simulation, run
from .scenario import parse_scenario, resolve_map


def _cmd_run(args) -> int:
    spec = parse_scenario(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.halt_on_collision is not None:
        spec.halt_on_collision = args.halt_on_collision == "true"
    result = run(spec, seed=spec.seed)
    out = Path(args.out or f"{spec.scenario_id}_{spec.seed}.jsonl")
    out.write_text(result.text, encoding="utf-8")
    print(f"wrote {out} ({len(result.log.ticks)} ticks, "
          f"terminated: {result.log.footer['reason']})")
    return 0


def _cmd_eval(args) -> int:
    log = RunLogData.load(args.log)
    scheme = evaluation.load_scheme(args.scheme) if args.scheme else None
    ctx = {}
    if args.spec:
        spec = parse_scenario(args.spec)
        mapd = resolve_map(spec)
        ctx = {
            "speed_limits": {lid: l.speed_limit for lid, l in mapd.lanes.items()},
            "lane_widths": {lid: l.width for lid, l in mapd.lanes.items()},
            "conflicts": [(*l.polyline.point_at(c.positions[0]), c.radius)
                          for c in mapd.conflict_points.values()
                          for l in [mapd.lanes[c.lanes[0]]]],
        }
    report = evaluation.evaluate(log, scheme, ctx)
    try:
        report.attach_extra("hazard_fraction",
                            hazard_fraction(log.min_ttc_series()))
    except Exception:
        pass  # logs without TTC tracking simply skip the hazard block
    rulebase = (evaluation.load_rulebase(args.rulebase) if args.rulebase
                else evaluation.default_rulebase())
    diag = evaluation.diagnose(report, rulebase)
    out = Path(args.out or "evaluation.json")
    out.write_text(json.dumps({"evaluation": report.to_dict(),
                               "diagnostic": diag.to_dict()},
                              indent=1, sort_keys=True), encoding="utf-8")
    csv_path = out.with_suffix(".hazard.csv")
    csv_path.write_text(hazard_csv(log), encoding="utf-8")
    print(report.render())
    print(diag.render())
    print(f"wrote {out} and {csv_path}")
    return 0


def _cmd_credibility(args) -> int:
    real = RunLogData.load(args.real)
    fusion = RunLogData.load(args.fusion)
    report = assess(real, fusion, CredibilityConfig())
    print(report.render_table())
    if args.mix:
        phys, virt = (int(x) for x in args.mix.split(","))
        new_mix, saturated = recommend_mix(report, {"physical": phys, "virtual": virt})
        print(f"recommended mix: physical={new_mix['physical']} "
              f"virtual={new_mix['virtual']}{' (saturated)' if saturated else ''}")
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True),
                                  encoding="utf-8")
        print(f"wrote {args.out}")
    return 0 if report.verdict == "pass" else 1


def _cmd_replay(args) -> int:
    logged = RunLogData.load(args.log)
    spec = parse_scenario(args.spec) if args.spec else None
    if spec is None:
        print("replay requires --spec pointing at the original scenario", file=sys.stderr)
        return 2
    spec.seed = logged.header["seed"]
    fresh = run(spec, seed=spec.seed)
    a = logged.tick_lines()
    b = fresh.log.tick_lines()
    if a == b:
        print(f"replay ok: {len(a)} tick records identical")
        return 0
    n = min(len(a), len(b))
    first = next((i for i in range(n) if a[i] != b[i]), n)
    print(f"replay MISMATCH at tick record {first} "
          f"(logged {len(a)} vs fresh {len(b)} records)", file=sys.stderr)
    return 1


def _cmd_serve(args) -> int:
    from .server import ConsoleServer

    spec = parse_scenario(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    sim = Simulation(spec, seed=spec.seed)
    server = ConsoleServer(sim, port=args.port, realtime=not args.fast).start()
    print(f"console endpoint: ws://127.0.0.1:{server.port}  "
          f"(scenario {spec.scenario_id}, seed {spec.seed})", flush=True)
    try:
        server.run_session()
    finally:
        server.stop()
    if server.result is not None:
        print(f"session over: {server.result.log.footer['reason']}; "
              f"takeovers armed for deduction: {len(server.result.takeovers)}")
        if args.out:
            Path(args.out).write_text(server.result.text, encoding="utf-8")
            print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="twinbench",
                                 description="virtual-physical fusion test bench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario to a run log")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--halt-on-collision", choices=("true", "false"))
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("eval", help="score a run log on the five dimensions")
    p.add_argument("--log", required=True)
    p.add_argument("--scheme")
    p.add_argument("--rulebase")
    p.add_argument("--spec", help="scenario file for map context")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("credibility", help="compare two run logs")
    p.add_argument("--real", required=True)
    p.add_argument("--fusion", required=True)
    p.add_argument("--mix", help="current physical,virtual counts")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_credibility)

    p = sub.add_parser("replay", help="re-simulate and compare to a log")
    p.add_argument("--log", required=True)
    p.add_argument("--spec", required=True)
    p.set_defaults(fn=_cmd_replay)

    p = sub.add_parser("serve", help="live session for the operator console")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--port", type=int, default=8700)
    p.add_argument("--out")
    p.add_argument("--fast", action="store_true",
                   help="run unpaced instead of wall-clock tick rate")
    p.set_defaults(fn=_cmd_serve)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
