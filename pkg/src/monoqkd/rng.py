"""Named, independent random sub-streams derived from one master seed."""

from __future__ import annotations

import numpy as np

STREAM_NAMES = (
    "alice_bases",
    "bob_bases",
    "quantum",
    "round_selection",
    "role_selection",
    "random_bits",
    "adversary",
    "eve_guess",
)


class RngStreams:
    """One ``numpy.random.Generator`` per named purpose.

    Each stream is seeded from ``SeedSequence(seed, spawn_key=(repetition, i))``
    where ``i`` is the stream's fixed position in ``STREAM_NAMES``, so a stream
    is reproducible on its own and unaffected by draws on any other stream.
    """

    def __init__(self, seed: int, repetition: int = 0):
        self.seed = int(seed)
        self.repetition = int(repetition)
        self._streams: dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            try:
                index = STREAM_NAMES.index(name)
            except ValueError:
                raise KeyError(f"unknown random stream {name!r}") from None
            ss = np.random.SeedSequence(self.seed, spawn_key=(self.repetition, index))
            self._streams[name] = np.random.Generator(np.random.PCG64(ss))
        return self._streams[name]

    def __getattr__(self, name: str) -> np.random.Generator:
        if name.startswith("_"):
            raise AttributeError(name)
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None
