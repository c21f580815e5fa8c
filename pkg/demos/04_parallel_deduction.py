"""Parallel deduction: was the takeover necessary?

A scripted takeover interrupts the run; the branch replays the moment with
the algorithm still attached and renders a verdict, once with the original
algorithm and once with stubs bounding both verdict directions.
"""

from twinbench.aut import LocalAdapter
from twinbench.baselines import (AlwaysCollideStub, AlwaysCompleteStub,
                                 IdmBaseline)
from twinbench.deduction import compare_outcomes, run_deduction
from twinbench.runner import run
from twinbench.scenario import parse_scenario_dict
from twinbench import data_path


def spec(takeover=None):
    d = {
        "version": 1, "scenario_id": "deduction_demo",
        "map": "../maps/straight.json", "duration": 45.0, "seed": 9,
        "vut": "vut",
        "roster": [
            {"id": "vut", "kind": "virtual_cav", "lane": "main", "s": 10.0,
             "speed": 10.0, "route": ["main"], "control": "aut-endpoint",
             "adapter": "aut"},
            {"id": "lead", "kind": "background", "lane": "main", "s": 90.0,
             "speed": 9.0, "route": ["main"], "control": "scripted",
             "profile": [{"tick": 0, "accel": 0.0}]},
        ],
    }
    if takeover:
        d["events"] = [{"tick": takeover, "type": "takeover", "vehicle": "vut",
                        "initiator": "scripted", "reason": "operator caution"}]
    return parse_scenario_dict(d, base_dir=data_path("scenarios"))


live = run(spec(takeover=80), adapters={"aut": LocalAdapter(IdmBaseline())})
snap = live.takeovers[0].snapshot
print(f"takeover at tick {snap.tick}; live run continued in manual mode "
      f"({live.log.footer['reason']})")

for label, stub in (("original algorithm", IdmBaseline()),
                    ("always-collide stub", AlwaysCollideStub()),
                    ("always-complete stub", AlwaysCompleteStub())):
    verdict = run_deduction(spec(takeover=80), snap, "vut", LocalAdapter(stub),
                            horizon=40.0)
    ev = verdict.evidence
    print(f"  {label:22s} -> {verdict.outcome:12s} "
          f"(collision={ev['collision']}, completed={ev['task_completed']}, "
          f"min_ttc={ev['min_ttc']}, max_decel={ev['max_decel']:.1f})")

verdict = run_deduction(spec(takeover=80), snap, "vut",
                        LocalAdapter(IdmBaseline()), horizon=40.0)
cmp = compare_outcomes(live.log, verdict.branch_log, "vut")
print("\nmanual continuation vs branch deltas:", cmp["delta"])
print("flags:", cmp["flags"] or "none")
