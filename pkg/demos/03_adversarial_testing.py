"""Adversarial testing: intensity adaptation and the A/B hazard effect.

Runs the merge scenario with the adversary off and on, prints the
hazardous-tick fraction (TTC < 2.5 s) and the intensity trace.
"""

from twinbench.adversary import hazard_fraction
from twinbench.runner import run
from twinbench.scenario import parse_scenario
from twinbench import data_path

spec_path = str(data_path("scenarios", "merge_adversarial.json"))

print("== adversary off ==")
spec = parse_scenario(spec_path)
spec.adversary.enabled = False
res_off = run(spec, seed=1)
hf_off = hazard_fraction(res_off.log.min_ttc_series())
print(f"  hazardous ticks (TTC < 2.5 s): {hf_off:.2%}")

print("\n== adversary on ==")
spec = parse_scenario(spec_path)
res_on = run(spec, seed=1)
hf_on = hazard_fraction(res_on.log.min_ttc_series())
print(f"  hazardous ticks (TTC < 2.5 s): {hf_on:.2%}")

trace = [(t["tick"], t["intensity"]) for t in res_on.log.ticks]
marks = [trace[i] for i in range(0, len(trace), len(trace) // 8)]
print("  intensity trace: " + "  ".join(f"t{k}:{v:.1f}" for k, v in marks))

kinds = {}
for t in res_on.log.ticks:
    for eid, e in t["entities"].items():
        if e["mode"] == "adversarial":
            kinds[eid] = kinds.get(eid, 0) + 1
print(f"  vehicles driven adversarially: {sorted(kinds)}")
print(f"\n  effect: {hf_off:.2%} -> {hf_on:.2%} hazardous ticks")
