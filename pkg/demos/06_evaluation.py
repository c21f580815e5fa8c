"""Five-dimension intelligence evaluation with diagnosis and comparison."""

from twinbench.evaluation import (compare, default_rulebase, default_scheme,
                                  diagnose, evaluate)
from twinbench.runner import run
from twinbench.scenario import parse_scenario, resolve_map
from twinbench import data_path


def eval_scenario(name, seed):
    spec = parse_scenario(str(data_path("scenarios", f"{name}.json")))
    mapd = resolve_map(spec)
    res = run(spec, seed=seed)
    ctx = {
        "speed_limits": {lid: l.speed_limit for lid, l in mapd.lanes.items()},
        "lane_widths": {lid: l.width for lid, l in mapd.lanes.items()},
        "conflicts": [(*mapd.lanes[c.lanes[0]].polyline.point_at(c.positions[0]),
                       c.radius) for c in mapd.conflict_points.values()],
    }
    return evaluate(res.log, default_scheme(), ctx)


print("== single-run evaluation ==")
rep = eval_scenario("unprotected_left", seed=13)
print(rep.render())

print("\n== diagnostic report ==")
diag = diagnose(rep, default_rulebase())
print(diag.render())

print("\n== vertical comparison (same algorithm across scenarios) ==")
reports = []
for name in ("car_following", "unprotected_left", "unsignalized_intersection"):
    r = eval_scenario(name, seed=3)
    r.algorithm_id = "idm-baseline"
    reports.append(r)
table = compare(reports, axis="vertical")
for row in table["rows"]:
    cells = "  ".join(f"{row[d]:5.1f}" for d in
                      ("safety", "efficiency", "comfort", "compliance",
                       "coordination"))
    print(f"  {row['label']:28s} {cells}  overall {row['overall']:5.1f}")
print(f"  ranking: {' > '.join(table['ranking'])}")
