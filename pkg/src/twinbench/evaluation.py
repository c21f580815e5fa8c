"""Five-dimension intelligence scoring over run logs.

Dimensions: safety, efficiency, comfort, compliance, coordination. Each
metric is an extractor over the log plus (worst, best) anchors mapped
linearly to [0, 100]; dimension scores are weight-averaged metric scores
and the overall score is a configurable aggregation (equal-weight mean by
default). Diagnosis applies a data-file rulebase of threshold predicates to
the scored report.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

DIMENSIONS = ("safety", "efficiency", "comfort", "compliance", "coordination")


class EvaluationError(ValueError):
    pass


class SchemeError(EvaluationError):
    pass


class GroupingError(EvaluationError):
    pass


# ---------------------------------------------------------------------------
# surrogate safety measures
# ---------------------------------------------------------------------------

def _crossing_interval(ticks, vid: str, cx: float, cy: float,
                       radius: float) -> tuple[float, float] | None:
    """First [entry, exit] interval of vehicle vid inside the conflict disc."""
    inside_t = []
    for t in ticks:
        e = t["entities"].get(vid)
        if e is None:
            continue
        if math.hypot(e["x"] - cx, e["y"] - cy) <= radius:
            inside_t.append(t["now"])
        elif inside_t:
            break
    if not inside_t:
        return None
    return inside_t[0], inside_t[-1]


def pet(log, conflict: tuple[float, float, float],
        a_id: str | None = None, b_id: str | None = None) -> tuple[float | None, bool]:
    """Post-encroachment time at a conflict disc (cx, cy, radius).

    Returns (seconds, proximity_flag). None when the two vehicles do not
    both traverse the area; 0 with the flag set when occupancy overlaps.
    """
    cx, cy, radius = conflict
    ticks = log.ticks
    if a_id is None or b_id is None:
        seen = []
        ids = sorted({vid for t in ticks for vid in t["entities"]})
        for vid in ids:
            if _crossing_interval(ticks, vid, cx, cy, radius) is not None:
                seen.append(vid)
            if len(seen) == 2:
                break
        if len(seen) < 2:
            return None, False
        a_id, b_id = seen
    ia = _crossing_interval(ticks, a_id, cx, cy, radius)
    ib = _crossing_interval(ticks, b_id, cx, cy, radius)
    if ia is None or ib is None:
        return None, False
    first, second = (ia, ib) if ia[0] <= ib[0] else (ib, ia)
    if second[0] <= first[1]:  # simultaneous occupation
        return 0.0, True
    return second[0] - first[1], False


# ---------------------------------------------------------------------------
# metric extraction
# ---------------------------------------------------------------------------

def _vut_series(log, key: str) -> list[float]:
    vid = log.header.get("vut")
    return [t["entities"][vid][key] for t in log.ticks if vid in t["entities"]]


def _min_ttc(log, ctx) -> float:
    ttcs = [t.get("min_ttc") for t in log.ticks]
    vals = [v for v in ttcs if v is not None]
    return min(vals) if vals else 10.0


def _min_pet(log, ctx) -> float:
    conflicts = ctx.get("conflicts", [])
    best = math.inf
    for c in conflicts:
        val, _flag = pet(log, c)
        if val is not None and val < best:
            best = val
    return 6.0 if math.isinf(best) else best


def _collision(log, ctx) -> float:
    return 1.0 if any(ev.get("type") == "collision"
                      for t in log.ticks for ev in t.get("events", [])) else 0.0


def _task_time(log, ctx) -> float:
    vid = log.header.get("vut")
    for t in log.ticks:
        e = t["entities"].get(vid)
        if e is not None and e.get("completed"):
            return t["now"]
    return log.ticks[-1]["now"] if log.ticks else 0.0


def _avg_speed_ratio(log, ctx) -> float:
    vid = log.header.get("vut")
    ratios = []
    limits = ctx.get("speed_limits", {})
    for t in log.ticks:
        e = t["entities"].get(vid)
        if e is None:
            continue
        limit = limits.get(e.get("lane"), 15.0)
        ratios.append(e["speed"] / limit)
    return sum(ratios) / len(ratios) if ratios else 0.0


def _max_jerk(log, ctx) -> float:
    acc = _vut_series(log, "accel")
    if len(acc) < 2:
        return 0.0
    dt = log.header.get("dt", 0.1)
    return max(abs(a2 - a1) / dt for a1, a2 in zip(acc, acc[1:]))


def _max_decel(log, ctx) -> float:
    acc = _vut_series(log, "accel")
    return max((-a for a in acc if a < 0), default=0.0)


def _speeding_share(log, ctx) -> float:
    vid = log.header.get("vut")
    limits = ctx.get("speed_limits", {})
    over = total = 0
    for t in log.ticks:
        e = t["entities"].get(vid)
        if e is None:
            continue
        total += 1
        if e["speed"] > limits.get(e.get("lane"), 15.0) + 1e-9:
            over += 1
    return over / total if total else 0.0


def _red_light_entries(log, ctx) -> float:
    return float(sum(1 for t in log.ticks for ev in t.get("events", [])
                     if ev.get("type") == "red_light_entry"
                     and ev.get("vehicle") == log.header.get("vut")))


def _lane_violation_share(log, ctx) -> float:
    vid = log.header.get("vut")
    widths = ctx.get("lane_widths", {})
    bad = total = 0
    for t in log.ticks:
        e = t["entities"].get(vid)
        if e is None or e.get("lane") is None:
            continue
        total += 1
        half = 0.5 * widths.get(e.get("lane"), 3.5)
        if not e.get("changing") and abs(e.get("lateral", 0.0)) > half:
            bad += 1
    return bad / total if total else 0.0


def _induced_decel(log, ctx) -> float:
    """Max braking the VUT forced on its direct followers."""
    vid = log.header.get("vut")
    worst = 0.0
    for t in log.ticks:
        vut = t["entities"].get(vid)
        if vut is None or vut.get("lane") is None:
            continue
        followers = [e for e in t["entities"].values()
                     if e.get("lane") == vut.get("lane") and e["s"] < vut["s"]
                     and vut["s"] - e["s"] < 40.0 and e["id"] != vid]
        for f in followers:
            if f["accel"] < -worst:
                worst = -f["accel"]
    return worst


def _yield_events(log, ctx) -> float:
    return float(sum(1 for t in log.ticks for ev in t.get("events", [])
                     if ev.get("type") == "yield"))


EXTRACTORS: dict[str, Callable] = {
    "min_ttc": _min_ttc,
    "min_pet": _min_pet,
    "collision": _collision,
    "task_time": _task_time,
    "avg_speed_ratio": _avg_speed_ratio,
    "max_jerk": _max_jerk,
    "max_decel": _max_decel,
    "speeding_share": _speeding_share,
    "red_light_entries": _red_light_entries,
    "lane_violation_share": _lane_violation_share,
    "induced_decel": _induced_decel,
    "yield_events": _yield_events,
}


def register_extractor(name: str, fn: Callable) -> None:
    EXTRACTORS[name] = fn


# ---------------------------------------------------------------------------
# scheme / scoring
# ---------------------------------------------------------------------------

@dataclass
class MetricSpec:
    name: str
    dimension: str
    extractor: str
    worst: float
    best: float
    weight: float = 1.0

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise SchemeError(f"unknown dimension {self.dimension!r}")
        if self.worst == self.best:
            raise SchemeError(f"metric {self.name}: worst == best")
        if not (0.0 <= self.weight <= 1.0):
            raise SchemeError(f"metric {self.name}: weight outside [0, 1]")
        if self.extractor not in EXTRACTORS:
            raise SchemeError(f"metric {self.name}: unknown extractor {self.extractor!r}")


def score_metric(raw: float, spec: MetricSpec) -> float:
    """Linear map raw in [worst, best] onto [0, 100], clamped."""
    frac = (raw - spec.worst) / (spec.best - spec.worst)
    return 100.0 * min(1.0, max(0.0, frac))


def default_scheme() -> list[MetricSpec]:
    return load_scheme_dict(json.loads(_DEFAULT_SCHEME_JSON))


def load_scheme_dict(d: dict) -> list[MetricSpec]:
    if d.get("version") != 1:
        raise SchemeError(f"unsupported scheme version {d.get('version')!r}")
    specs = [MetricSpec(**m) for m in d["metrics"]]
    present = {dim for dim in DIMENSIONS}
    have = {s.dimension for s in specs}
    missing = present - have
    if missing:
        raise SchemeError(f"scheme missing dimensions: {sorted(missing)}")
    for dim in DIMENSIONS:
        tot = sum(s.weight for s in specs if s.dimension == dim)
        if abs(tot - 1.0) > 1e-9:
            raise SchemeError(f"weights in {dim} sum to {tot}, expected 1")
    return specs


def load_scheme(path: str | Path) -> list[MetricSpec]:
    with open(path, "r", encoding="utf-8") as f:
        return load_scheme_dict(json.load(f))


@dataclass
class EvaluationReport:
    scenario_id: str
    algorithm_id: str
    dimension_scores: dict[str, float]
    metric_scores: dict[str, float]
    raw_values: dict[str, float]
    overall: float
    extras: dict = field(default_factory=dict)  # hazard stats, CDA session results

    def __post_init__(self):
        for v in list(self.dimension_scores.values()) + [self.overall]:
            if not (0.0 - 1e-9 <= v <= 100.0 + 1e-9):
                raise EvaluationError("scores must be within [0, 100]")

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id, "algorithm_id": self.algorithm_id,
            "dimension_scores": dict(self.dimension_scores),
            "metric_scores": dict(self.metric_scores),
            "raw_values": dict(self.raw_values), "overall": self.overall,
            "extras": dict(self.extras),
        }

    def attach_extra(self, key: str, value) -> None:
        self.extras[key] = value

    def render(self) -> str:
        lines = [f"algorithm {self.algorithm_id} on scenario {self.scenario_id}"]
        for dim in DIMENSIONS:
            lines.append(f"  {dim:<13}{self.dimension_scores[dim]:7.1f}")
        lines.append(f"  {'overall':<13}{self.overall:7.1f}")
        return "\n".join(lines)


def evaluate(log, scheme: list[MetricSpec] | None = None, ctx: dict | None = None,
             dimension_weights: dict[str, float] | None = None) -> EvaluationReport:
    scheme = scheme if scheme is not None else default_scheme()
    ctx = ctx or {}
    have = {s.dimension for s in scheme}
    if have != set(DIMENSIONS):
        raise SchemeError(f"scheme missing dimensions: {sorted(set(DIMENSIONS) - have)}")
    raw: dict[str, float] = {}
    mscores: dict[str, float] = {}
    dscores: dict[str, float] = {}
    for spec in scheme:
        raw[spec.name] = float(EXTRACTORS[spec.extractor](log, ctx))
        mscores[spec.name] = score_metric(raw[spec.name], spec)
    for dim in DIMENSIONS:
        members = [s for s in scheme if s.dimension == dim]
        wsum = sum(s.weight for s in members)
        dscores[dim] = sum(s.weight * mscores[s.name] for s in members) / wsum
    if dimension_weights:
        tot = sum(dimension_weights.get(d, 0.0) for d in DIMENSIONS)
        overall = sum(dimension_weights.get(d, 0.0) * dscores[d] for d in DIMENSIONS) / tot
    else:
        overall = sum(dscores.values()) / len(DIMENSIONS)
    return EvaluationReport(
        scenario_id=log.header.get("scenario_id", "unknown"),
        algorithm_id=log.header.get("algorithm_id", "unknown"),
        dimension_scores=dscores, metric_scores=mscores, raw_values=raw,
        overall=overall)


# ---------------------------------------------------------------------------
# comparison / diagnosis
# ---------------------------------------------------------------------------

def compare(reports: list[EvaluationReport], axis: str) -> dict:
    """Rank reports horizontally (same scenario) or vertically (same algorithm)."""
    if axis not in ("horizontal", "vertical"):
        raise GroupingError(f"unknown axis {axis!r}")
    if len(reports) < 2:
        raise GroupingError("need >= 2 reports")
    key = "scenario_id" if axis == "horizontal" else "algorithm_id"
    label = "algorithm_id" if axis == "horizontal" else "scenario_id"
    fixed = {getattr(r, key) for r in reports}
    if len(fixed) != 1:
        raise GroupingError(f"{axis} comparison requires identical {key}")
    rows = []
    for r in reports:
        rows.append({"label": getattr(r, label), "overall": r.overall,
                     **{d: r.dimension_scores[d] for d in DIMENSIONS}})
    ranking = sorted((r["label"] for r in rows),
                     key=lambda lb: -next(x["overall"] for x in rows if x["label"] == lb))
    best_overall = max(r["overall"] for r in rows)
    for r in rows:
        r["delta_overall"] = r["overall"] - best_overall
    flags = {}
    for d in DIMENSIONS:
        vals = [r[d] for r in rows]
        flags[d] = {"min": min(vals), "max": max(vals)}
    return {"axis": axis, "fixed": next(iter(fixed)), "rows": rows,
            "ranking": ranking, "dimension_extremes": flags}


@dataclass
class Finding:
    dimension: str
    metric: str
    severity: str
    rule_id: str
    suggestion: str

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "metric": self.metric,
                "severity": self.severity, "rule_id": self.rule_id,
                "suggestion": self.suggestion}


@dataclass
class DiagnosticReport:
    findings: list[Finding] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings]}

    def render(self) -> str:
        if not self.findings:
            return "no findings"
        return "\n".join(f"[{f.severity}] {f.dimension}/{f.metric} ({f.rule_id}): "
                         f"{f.suggestion}" for f in self.findings)


_OPS = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
        ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
        "==": lambda a, b: a == b}


def _clause_holds(clause: dict, report: EvaluationReport) -> bool:
    op = _OPS[clause["op"]]
    if "score" in clause:
        val = report.dimension_scores.get(clause["score"])
        if val is None:
            val = report.metric_scores.get(clause["score"])
    else:
        val = report.raw_values.get(clause["metric"])
    if val is None:
        return False
    return op(val, clause["value"])


def diagnose(report: EvaluationReport, rulebase: dict) -> DiagnosticReport:
    """Fire every rule whose clauses all hold; each finding cites its rule."""
    if not rulebase.get("rules"):
        raise EvaluationError("empty rulebase")
    findings = []
    for rule in rulebase["rules"]:
        if all(_clause_holds(c, report) for c in rule["when"]):
            findings.append(Finding(
                dimension=rule["dimension"], metric=rule.get("metric", ""),
                severity=rule.get("severity", "warning"), rule_id=rule["id"],
                suggestion=rule["suggestion"]))
    return DiagnosticReport(findings=findings)


def load_rulebase(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        rb = json.load(f)
    if rb.get("version") != 1:
        raise EvaluationError(f"unsupported rulebase version {rb.get('version')!r}")
    return rb


_DEFAULT_SCHEME_JSON = """
{
  "version": 1,
  "metrics": [
    {"name": "min_ttc", "dimension": "safety", "extractor": "min_ttc",
     "worst": 0.0, "best": 6.5, "weight": 0.5},
    {"name": "min_pet", "dimension": "safety", "extractor": "min_pet",
     "worst": 0.0, "best": 4.0, "weight": 0.3},
    {"name": "collision", "dimension": "safety", "extractor": "collision",
     "worst": 1.0, "best": 0.0, "weight": 0.2},
    {"name": "task_time", "dimension": "efficiency", "extractor": "task_time",
     "worst": 120.0, "best": 10.0, "weight": 0.5},
    {"name": "avg_speed_ratio", "dimension": "efficiency", "extractor": "avg_speed_ratio",
     "worst": 0.0, "best": 0.9, "weight": 0.5},
    {"name": "max_jerk", "dimension": "comfort", "extractor": "max_jerk",
     "worst": 12.0, "best": 0.5, "weight": 0.5},
    {"name": "max_decel", "dimension": "comfort", "extractor": "max_decel",
     "worst": 8.0, "best": 1.0, "weight": 0.5},
    {"name": "speeding_share", "dimension": "compliance", "extractor": "speeding_share",
     "worst": 0.5, "best": 0.0, "weight": 0.4},
    {"name": "red_light_entries", "dimension": "compliance", "extractor": "red_light_entries",
     "worst": 1.0, "best": 0.0, "weight": 0.3},
    {"name": "lane_violation_share", "dimension": "compliance", "extractor": "lane_violation_share",
     "worst": 0.3, "best": 0.0, "weight": 0.3},
    {"name": "induced_decel", "dimension": "coordination", "extractor": "induced_decel",
     "worst": 8.0, "best": 0.5, "weight": 0.7},
    {"name": "yield_events", "dimension": "coordination", "extractor": "yield_events",
     "worst": 0.0, "best": 2.0, "weight": 0.3}
  ]
}
"""

_DEFAULT_RULEBASE: dict = {
    "version": 1,
    "rules": [
        {"id": "gap-acceptance-review", "dimension": "safety", "metric": "min_ttc",
         "when": [{"score": "safety", "op": "<", "value": 60.0},
                  {"metric": "min_ttc", "op": "<", "value": 2.5}],
         "severity": "critical",
         "suggestion": "review gap acceptance: minimum TTC fell into the hazardous band"},
        {"id": "harsh-braking", "dimension": "comfort", "metric": "max_decel",
         "when": [{"metric": "max_decel", "op": ">", "value": 4.5}],
         "severity": "warning",
         "suggestion": "braking exceeds comfortable deceleration; smooth the speed planner"},
        {"id": "sluggish-progress", "dimension": "efficiency", "metric": "avg_speed_ratio",
         "when": [{"score": "efficiency", "op": "<", "value": 50.0},
                  {"metric": "avg_speed_ratio", "op": "<", "value": 0.5}],
         "severity": "warning",
         "suggestion": "vehicle crawls well below the posted limit; revisit speed targets"},
        {"id": "pushy-interactions", "dimension": "coordination", "metric": "induced_decel",
         "when": [{"score": "coordination", "op": "<", "value": 60.0},
                  {"metric": "induced_decel", "op": ">", "value": 3.0}],
         "severity": "warning",
         "suggestion": "surrounding vehicles brake hard in reaction; add courtesy margins"},
        {"id": "red-light-entry", "dimension": "compliance", "metric": "red_light_entries",
         "when": [{"metric": "red_light_entries", "op": ">=", "value": 1.0}],
         "severity": "critical",
         "suggestion": "stop-line crossed on red; check signal perception and stopping curve"}
    ],
}


def default_rulebase() -> dict:
    return json.loads(json.dumps(_DEFAULT_RULEBASE))
