"""V2X cooperation: CDA levels, consensus, SPAT, GLOSA, roadside warnings."""

from twinbench.bus import MessageEnvelope
from twinbench.cooperation import (SessionSpec, Spat, Stage, consensus_check,
                                   glosa_advice, mec_warnings, spat_next,
                                   validate_cda_session)
from twinbench.geom import Pose
from twinbench.mapdata import load_map
from twinbench.world import EntityState, WorldState
from twinbench import data_path


def env(sender, ptype, send=0.0, deliver=0.05, seq=1, **payload):
    return MessageEnvelope(channel="v2x", sender=sender, seq=seq, send_ts=send,
                           deliver_ts=deliver, payload={"type": ptype, **payload},
                           sim_send_ts=send)


print("== consensus over intent proposals ==")
for label, props in (
        ("agreeing", [{"precedences": [["cav1", "cav2"]]},
                      {"precedences": [["cav2", "cav3"]]}]),
        ("cyclic", [{"precedences": [["cav1", "cav2"]]},
                    {"precedences": [["cav2", "cav1"]]}])):
    verdict, detail = consensus_check(props)
    print(f"  {label}: {verdict} -> {detail}")

print("\n== CDA session checks ==")
sess = SessionSpec(participants=["cav1", "cav2"], duration=1.0, required_hz=10.0)
trace = [env(p, "state_share", send=k * 0.1, deliver=k * 0.1 + 0.05, seq=k + 1)
         for p in ("cav1", "cav2") for k in range(10)]
ok, _ = validate_cda_session(trace, "state_sharing", sess)
print(f"  state sharing at 10 Hz, lossless: {'pass' if ok else 'fail'}")
lossy = [e for e in trace if e.seq % 3 != 0]
ok2, viol = validate_cda_session(lossy, "state_sharing", sess)
print(f"  same trace with one third lost:  {'pass' if ok2 else 'fail'} "
      f"({viol[0].detail})")

print("\n== SPAT and GLOSA ==")
spat = Spat(signal_id="sig0", stages=[
    Stage(phases={"approach": "red"}, duration=12.0),
    Stage(phases={"approach": "green"}, duration=20.0),
    Stage(phases={"approach": "yellow"}, duration=3.0),
])
print(f"  now: {spat.phase_for('approach')}, {spat.time_to_change:.1f}s to change")
advice = glosa_advice(200.0, spat, v_min=3.0, v_max=15.0, approach="approach")
print(f"  200 m out: advise {advice.speed:.1f} m/s, arriving at "
      f"{advice.arrival:.1f}s (green spans 12-32 s)")
for _ in range(125):
    spat = spat_next(spat, 0.1)
print(f"  12.5 s later: {spat.phase_for('approach')}")

print("\n== roadside perception warnings ==")
mapd = load_map(str(data_path("maps", "t_junction.json")))
world = WorldState()
world.add(EntityState(id="cav", kind="physical_cav", pose=Pose(-15, 0, 0),
                      speed=10.0, lane="east_main", s=105.0))
world.add(EntityState(id="ped", kind="pedestrian", pose=Pose(-12, 1.0, 0),
                      speed=1.0))
world.add(EntityState(id="turner", kind="virtual_cav", pose=Pose(2, -4, 2.4),
                      speed=6.0, lane="left_turn", s=6.0))
for w in mec_warnings(world, mapd, "cav", Pose(0, 10, 0), rsu_range=1000.0):
    print(f"  {w.kind}: {w.payload.get('advisory')}")
