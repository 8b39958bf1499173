"""Counter-based random streams.

A root seed plus a path of integers (e.g. iteration, replicate) fixes a
Philox key. Each draw request is addressed by ``(stream, t)``, which is
written into the Philox counter, so the draws for particle ``j`` at time
``t`` never depend on how many draws were requested elsewhere.
"""

import numpy as np

# stream identifiers
INIT = 0
OMEGA = 1
NU = 2
RESAMPLE = 3
PERTURB = 4
OBS = 5


class CounterRNG:
    """Addressable family of independent Philox streams."""

    def __init__(self, seed, *path):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._key = ss.generate_state(2, np.uint64)
        # one bit generator re-keyed per request; cheaper than constructing
        self._bitgen = np.random.Philox(key=self._key)
        self._gen = np.random.Generator(self._bitgen)

    def child(self, *path):
        return CounterRNG(self.seed, *self.path, *path)

    def generator(self, stream, t=0):
        """Fresh Generator positioned at the start of stream ``(stream, t)``."""
        counter = np.array([0, 0, stream, t], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    def _seek(self, stream, t):
        # not thread-safe: callers draw from the main thread only
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, 0, stream, t], dtype=np.uint64), "key": self._key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen

    def normal(self, stream, t, size):
        return self._seek(stream, t).standard_normal(size)

    def uniform(self, stream, t, size=None):
        return self._seek(stream, t).random(size)

    def __getstate__(self):
        return {"seed": self.seed, "path": self.path}

    def __setstate__(self, state):
        self.__init__(state["seed"], *state["path"])

    def __repr__(self):
        return f"CounterRNG(seed={self.seed}, path={self.path})"


def as_rng(rng):
    """Accept a CounterRNG, an integer seed, or None (seed 0)."""
    if isinstance(rng, CounterRNG):
        return rng
    return CounterRNG(0 if rng is None else rng)
