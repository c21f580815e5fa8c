"""Regenerate the shipped maps and scenario files under src/twinbench/data/."""

import json
import math
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "twinbench" / "data"


def lane(id, points, width=3.5, speed_limit=15.0, left=None, right=None, successors=()):
    return {"id": id, "width": width, "speed_limit": speed_limit,
            "points": [[round(x, 3), round(y, 3)] for x, y in points],
            "left": left, "right": right, "successors": list(successors)}


def arc(cx, cy, r, a0_deg, a1_deg, n=24):
    return [(cx + r * math.cos(math.radians(a)), cy + r * math.sin(math.radians(a)))
            for a in [a0_deg + (a1_deg - a0_deg) * i / (n - 1) for i in range(n)]]


def save_map(name, lanes, conflicts=(), signals=()):
    doc = {"version": 1, "name": name, "lanes": lanes,
           "conflict_points": list(conflicts), "signals": list(signals)}
    (DATA / "maps" / f"{name}.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def arclen(points):
    return sum(math.dist(points[i], points[i + 1]) for i in range(len(points) - 1))


def channels():
    return [
        {"name": "platform", "klass": "platform", "base_latency": 0.02,
         "jitter": 0.01, "drop_prob": 0.0, "range_m": None},
        {"name": "v2x", "klass": "broadcast", "base_latency": 0.05,
         "jitter": 0.15, "drop_prob": 0.0, "range_m": 1000.0},
    ]


def save_scenario(name, doc):
    doc.setdefault("version", 1)
    doc.setdefault("channels", channels())
    (DATA / "scenarios" / f"{name}.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


# -- maps -------------------------------------------------------------------

save_map("straight", [lane("main", [(0, 0), (400, 0)])])

save_map("two_lane", [
    lane("right", [(0, 0), (400, 0)], left="left"),
    lane("left", [(0, 3.5), (400, 3.5)], right="right"),
])

# T junction: eastbound main at y=0, westbound main at y=3.5, minor road from
# the south at x=3.5 turning left (west) across the eastbound lane.
turn = arc(-8.0, -8.0, 11.5, 0, 90, n=20)  # (3.5,-8) -> (-8,3.5)
east_main = [(-120, 0), (120, 0)]
# locate where the turn arc crosses y=0 (the eastbound lane's centerline)
cross_pt = min(turn, key=lambda p: abs(p[1]))
s_turn = 0.0
best = None
acc = 0.0
for i in range(len(turn) - 1):
    if best is None or abs(turn[i][1]) < best:
        best = abs(turn[i][1])
        s_turn = acc
    acc += math.dist(turn[i], turn[i + 1])
save_map("t_junction", [
    lane("east_main", east_main),
    lane("minor_approach", [(3.5, -80), (3.5, -8)], successors=["left_turn"]),
    lane("left_turn", turn, speed_limit=8.0, successors=["west_exit"]),
    lane("west_exit", [(-8.0, 3.5), (-120, 3.5)]),
], conflicts=[
    {"id": "c_turn", "lanes": ["east_main", "left_turn"],
     "positions": [120.0 + cross_pt[0], round(s_turn, 3)], "radius": 4.0,
     "occluded": True},
])

# roundabout: four quarter arcs CCW starting at the south point (0,-20)
ring_pts = {
    "ring_se": arc(0, 0, 20, -90, 0, n=18),
    "ring_en": arc(0, 0, 20, 0, 90, n=18),
    "ring_nw": arc(0, 0, 20, 90, 180, n=18),
    "ring_ws": arc(0, 0, 20, 180, 270, n=18),
}
quarter = arclen(ring_pts["ring_se"])
save_map("roundabout", [
    lane("south_in", [(0, -60), (0, -20)], speed_limit=10.0, successors=["ring_se"]),
    lane("ring_se", ring_pts["ring_se"], speed_limit=9.0, successors=["ring_en"]),
    lane("ring_en", ring_pts["ring_en"], speed_limit=9.0, successors=["ring_nw"]),
    lane("ring_nw", ring_pts["ring_nw"], speed_limit=9.0, successors=["ring_ws"]),
    lane("ring_ws", ring_pts["ring_ws"], speed_limit=9.0, successors=["ring_se"]),
    lane("north_out", [(0, 20), (0, 60)], speed_limit=12.0),
    lane("west_in", [(-60, 0), (-20, 0)], speed_limit=10.0, successors=["ring_nw"]),
], conflicts=[
    {"id": "c_south", "lanes": ["ring_ws", "south_in"],
     "positions": [round(quarter - 0.05, 3), 40.0], "radius": 4.0, "occluded": False},
    {"id": "c_west", "lanes": ["ring_se", "west_in"],
     "positions": [round(quarter - 0.05, 3), 40.0], "radius": 4.0, "occluded": False},
])

save_map("crossing", [
    lane("ew", [(-120, 0), (120, 0)]),
    lane("ns", [(0, -120), (0, 120)], speed_limit=12.0),
], conflicts=[
    {"id": "c_x", "lanes": ["ew", "ns"], "positions": [120.0, 120.0],
     "radius": 4.0, "occluded": False},
], signals=[
    {"id": "sig0", "x": 6.0, "y": -6.0,
     "approaches": {"ew": {"stop_s": 112.0}, "ns": {"stop_s": 112.0}}},
])

save_map("merge", [
    lane("main", [(0, 0), (400, 0)], right="ramp"),
    lane("ramp", [(40, -3.5), (260, -3.5)], speed_limit=13.0, left="main"),
])

# -- scenarios ----------------------------------------------------------------

save_scenario("car_following", {
    "scenario_id": "car_following", "map": "../maps/straight.json",
    "duration": 45.0, "seed": 7, "vut": "vut", "halt_on_collision": True,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "main", "s": 20.0,
         "speed": 10.0, "route": ["main"], "control": "internal-baseline",
         "clock_mode": "gnss"},
        {"id": "lead", "kind": "hdv_twin", "lane": "main", "s": 65.0,
         "speed": 8.0, "route": ["main"], "control": "scripted",
         "profile": [{"tick": 0, "accel": 0.0}, {"tick": 150, "accel": -2.5},
                     {"tick": 180, "accel": 0.0}, {"tick": 250, "accel": 1.0},
                     {"tick": 290, "accel": 0.0}]},
    ],
    "flows": [], "adversary": {"enabled": False}, "events": [],
    "signal_plans": [], "zones": [],
})

save_scenario("lane_change", {
    "scenario_id": "lane_change", "map": "../maps/two_lane.json",
    "duration": 40.0, "seed": 11, "vut": "vut", "halt_on_collision": True,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "right", "s": 10.0,
         "speed": 12.0, "route": ["right"], "control": "scripted",
         "profile": [{"tick": 0, "accel": 0.2}, {"tick": 40, "accel": 0.2,
                     "lane_intent": "left"}, {"tick": 50, "accel": 0.3},
                     {"tick": 120, "accel": 0.0}]},
        {"id": "slow1", "kind": "hdv_twin", "lane": "right", "s": 70.0,
         "speed": 6.0, "route": ["right"], "control": "scripted",
         "profile": [{"tick": 0, "accel": 0.0}]},
        {"id": "trail", "kind": "virtual_cav", "lane": "left", "s": 5.0,
         "speed": 11.0, "route": ["left"], "control": "internal-baseline"},
    ],
    "flows": [], "adversary": {"enabled": False}, "events": [],
    "signal_plans": [], "zones": [],
})

save_scenario("unprotected_left", {
    "scenario_id": "unprotected_left", "map": "../maps/t_junction.json",
    "duration": 40.0, "seed": 13, "vut": "vut", "halt_on_collision": True,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "minor_approach", "s": 25.0,
         "speed": 7.0, "route": ["minor_approach", "left_turn", "west_exit"],
         "control": "internal-baseline", "idm": {"v0": 9.0}},
        {"id": "opp", "kind": "virtual_cav", "lane": "east_main", "s": 45.0,
         "speed": 10.0, "route": ["east_main"], "control": "internal-baseline",
         "idm": {"v0": 11.0}},
        {"id": "walker", "kind": "pedestrian", "x": -20.0, "y": 8.0,
         "heading": -1.5707963, "speed": 0.0, "control": "scripted"},
        {"id": "rsu0", "kind": "rsu", "x": 10.0, "y": 10.0, "control": "scripted"},
    ],
    "flows": [], "adversary": {"enabled": False}, "events": [],
    "signal_plans": [], "zones": [],
})

save_scenario("roundabout", {
    "scenario_id": "roundabout", "map": "../maps/roundabout.json",
    "duration": 50.0, "seed": 17, "vut": "vut", "halt_on_collision": True,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "south_in", "s": 5.0,
         "speed": 8.0, "route": ["south_in", "ring_se", "ring_en", "north_out"],
         "control": "internal-baseline", "idm": {"v0": 9.0}},
    ],
    "flows": [
        {"lane": "west_in", "rate": 350.0, "speed_init": 8.0,
         "params": {"v0": 9.0, "T": 1.5, "a_max": 2.0, "b_comf": 3.0,
                    "s0": 2.0, "delta": 4.0}, "mix": 0.0},
    ],
    "adversary": {"enabled": False}, "events": [], "signal_plans": [],
    "zones": [],
})

save_scenario("unsignalized_intersection", {
    "scenario_id": "unsignalized_intersection", "map": "../maps/crossing.json",
    "duration": 45.0, "seed": 19, "vut": "vut", "halt_on_collision": True,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "ns", "s": 40.0,
         "speed": 10.0, "route": ["ns"], "control": "internal-baseline",
         "idm": {"v0": 12.0}},
    ],
    "flows": [
        {"lane": "ew", "rate": 420.0, "speed_init": 12.0,
         "params": {"v0": 13.0, "T": 1.5, "a_max": 2.0, "b_comf": 3.0,
                    "s0": 2.0, "delta": 4.0}, "mix": 0.0},
    ],
    "adversary": {"enabled": False}, "events": [], "signal_plans": [],
    "zones": [],
})

save_scenario("merge_adversarial", {
    "scenario_id": "merge_adversarial", "map": "../maps/merge.json",
    "duration": 55.0, "seed": 23, "vut": "vut", "halt_on_collision": False,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "main", "s": 5.0,
         "speed": 12.0, "route": ["main"], "control": "internal-baseline",
         "idm": {"v0": 14.0}},
    ],
    "flows": [
        {"lane": "ramp", "rate": 700.0, "speed_init": 11.0,
         "params": {"v0": 13.0, "T": 1.2, "a_max": 2.0, "b_comf": 3.0,
                    "s0": 2.0, "delta": 4.0}, "mix": 1.0},
        {"lane": "main", "rate": 250.0, "speed_init": 12.0,
         "params": {"v0": 14.0, "T": 1.5, "a_max": 2.0, "b_comf": 3.0,
                    "s0": 2.0, "delta": 4.0}, "mix": 0.0},
    ],
    "adversary": {"enabled": True, "intensity": 0.6, "interaction_range": 60.0,
                  "maneuver_duration": 4.0, "window_ticks": 50},
    "events": [], "signal_plans": [], "zones": [],
})

save_scenario("signalized_intersection", {
    "scenario_id": "signalized_intersection", "map": "../maps/crossing.json",
    "duration": 60.0, "seed": 29, "vut": "vut", "halt_on_collision": True,
    "roster": [
        {"id": "vut", "kind": "physical_cav", "lane": "ew", "s": 10.0,
         "speed": 10.0, "route": ["ew"], "control": "internal-baseline",
         "idm": {"v0": 13.0}},
        {"id": "rsu0", "kind": "rsu", "x": 6.0, "y": -6.0, "control": "scripted"},
    ],
    "flows": [],
    "adversary": {"enabled": False},
    "events": [],
    "signal_plans": [
        {"signal": "sig0",
         "approaches": {"ew": ["green", "yellow", "red", "red"],
                        "ns": ["red", "red", "green", "yellow"]},
         "durations": [20.0, 3.0, 20.0, 3.0]},
    ],
    "zones": [{"kind": "construction", "x": 80.0, "y": 0.0,
               "advisory": "lane narrows ahead"}],
})

print("wrote", len(list((DATA / 'maps').glob('*.json'))), "maps,",
      len(list((DATA / 'scenarios').glob('*.json'))), "scenarios")
