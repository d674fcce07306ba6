"""Deterministic, spawnable random streams built on numpy's SeedSequence.

A stream is identified by a root seed plus a derivation path of child
indices.  Distinct (seed, path) pairs give statistically independent
generators; the same pair always reproduces the same sequence, regardless
of process or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_path(stream_id) -> tuple[int, ...]:
    if isinstance(stream_id, tuple):
        return stream_id
    return (int(stream_id),)


@dataclass(frozen=True)
class RngStream:
    """Handle for a reproducible random stream.

    ``stream_id`` may be a single integer or a tuple of integers (a
    derivation path); ``child`` extends the path.
    """

    seed: int
    stream_id: tuple[int, ...] = field(default=())

    def path(self) -> tuple[int, ...]:
        return _as_path(self.stream_id) if self.stream_id != () else ()

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.seed, self.path() + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.path())
        return np.random.Generator(np.random.PCG64(seq))

    def describe(self) -> dict:
        return {"seed": int(self.seed), "stream_id": list(self.path())}
