"""Deterministic random streams.

Every stochastic subsystem (bus jitter, flow spawning, adversary sampling,
twin noise, clock skew) draws from its own named stream derived from the run
seed, so adding draws in one subsystem never shifts another subsystem's
sequence. Stream state is JSON-serializable for snapshot/restore across
processes.
"""

from __future__ import annotations

import zlib

import numpy as np


def _derive(seed: int, tag: str) -> np.random.Generator:
    # crc32 of the tag, not hash(): hash() is salted per process.
    key = zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFF, key])))


class RngBank:
    """A set of named, independently seeded generators."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, tag: str) -> np.random.Generator:
        gen = self._streams.get(tag)
        if gen is None:
            gen = _derive(self.seed, tag)
            self._streams[tag] = gen
        return gen

    def state(self) -> dict:
        """Serializable cursor of every stream touched so far."""
        out = {"seed": self.seed, "streams": {}}
        for tag, gen in self._streams.items():
            st = gen.bit_generator.state
            out["streams"][tag] = {
                "state": str(st["state"]["state"]),
                "inc": str(st["state"]["inc"]),
                "has_uint32": st["has_uint32"],
                "uinteger": st["uinteger"],
            }
        return out

    @classmethod
    def restore(cls, state: dict) -> "RngBank":
        bank = cls(int(state["seed"]))
        for tag, st in state["streams"].items():
            gen = _derive(bank.seed, tag)
            gen.bit_generator.state = {
                "bit_generator": "PCG64",
                "state": {"state": int(st["state"]), "inc": int(st["inc"])},
                "has_uint32": int(st["has_uint32"]),
                "uinteger": int(st["uinteger"]),
            }
            bank._streams[tag] = gen
        return bank
