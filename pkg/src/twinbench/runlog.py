"""Append-only JSONL run logs: header, one record per tick, footer.

Records are canonical JSON (sorted keys, fixed separators) so a run is
byte-reproducible from (scenario, seed). Replay compares logs line by line.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

LOG_VERSION = 1


class LogError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def spec_hash(spec_dict: dict) -> str:
    return hashlib.sha256(canonical_json(spec_dict).encode("utf-8")).hexdigest()


class RunLogWriter:
    def __init__(self, sink: io.TextIOBase | None = None):
        self._sink = sink if sink is not None else io.StringIO()
        self._ticks = 0
        self._closed = False

    def header(self, *, scenario_id: str, seed: int, spec_digest: str,
               vut: str | None, algorithm_id: str = "baseline", dt: float = 0.1,
               branch_of: int | None = None) -> None:
        rec = {"type": "header", "version": LOG_VERSION, "scenario_id": scenario_id,
               "seed": seed, "spec_hash": spec_digest, "vut": vut,
               "algorithm_id": algorithm_id, "dt": dt}
        if branch_of is not None:
            rec["branch_of"] = branch_of
        self._write(rec)

    def tick(self, rec: dict) -> None:
        if self._ticks and rec["tick"] <= self._last_tick:
            raise LogError("tick records must be strictly increasing")
        self._last_tick = rec["tick"]
        self._ticks += 1
        self._write({"type": "tick", **rec})

    def footer(self, reason: str) -> None:
        self._write({"type": "footer", "reason": reason, "ticks": self._ticks})
        self._closed = True

    def _write(self, rec: dict) -> None:
        if self._closed:
            raise LogError("log already closed")
        self._sink.write(canonical_json(rec) + "\n")

    def getvalue(self) -> str:
        if isinstance(self._sink, io.StringIO):
            return self._sink.getvalue()
        raise LogError("writer is not buffering in memory")


@dataclass
class RunLogData:
    header: dict
    ticks: list[dict]
    footer: dict | None = None
    raw_lines: list[str] = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "RunLogData":
        header, footer, ticks = None, None, []
        lines = text.splitlines()
        for ln in lines:
            if not ln.strip():
                continue
            rec = json.loads(ln)
            t = rec.get("type")
            if t == "header":
                if header is not None:
                    raise LogError("duplicate header")
                header = rec
            elif t == "tick":
                ticks.append(rec)
            elif t == "footer":
                footer = rec
        if header is None:
            raise LogError("missing header record")
        last = -1
        for t in ticks:
            if t["tick"] <= last:
                raise LogError("tick records not strictly increasing")
            last = t["tick"]
        return cls(header=header, ticks=ticks, footer=footer, raw_lines=lines)

    @classmethod
    def load(cls, path: str | Path) -> "RunLogData":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def min_ttc_series(self) -> list[float | None]:
        return [t.get("min_ttc") for t in self.ticks]

    def tick_lines(self, after: int | None = None) -> list[str]:
        out = []
        for ln in self.raw_lines:
            if '"type":"tick"' not in ln:
                continue
            if after is not None and json.loads(ln)["tick"] <= after:
                continue
            out.append(ln)
        return out
