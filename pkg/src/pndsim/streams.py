"""Deterministic random streams.

All randomness in the package flows through :class:`RandomStream`, a buffered
uniform stream backed by the Philox counter-based bit generator.  The stream
delivers the exact same sequence of doubles regardless of internal buffer
size, which is what lets the compiled and pure-Python gate kernels (and the
single-gate reference path) consume randomness interchangeably: equality of
outputs is asserted bit-for-bit in the test suite.

Substreams for distinct purposes (gate sampling, trace noise, readout noise,
...) are derived from one user seed via ``numpy.random.SeedSequence`` spawn
keys, so a run is fully reproducible from a single integer.
"""

from __future__ import annotations

import math

import numpy as np

# Purpose indices for substream derivation. Keep stable: they are part of the
# reproducibility contract (a seed + purpose pins the stream).
GATES = 0
TRACE_NOISE = 1
READOUT_NOISE = 2
COMPANION_GATES = 3
ORACLE = 4

_CHUNK = 1 << 16


class RandomStream:
    """Buffered stream of uniform doubles in [0, 1) from a Philox generator.

    The scalar interface is :meth:`next_uniform`; kernels grab the current
    buffer via :meth:`buffer`/:attr:`pos`, call :meth:`refill` when it is
    exhausted and hand the final cursor back with :meth:`sync_pos`.
    """

    def __init__(self, bit_generator=None, chunk: int = _CHUNK):
        if bit_generator is None:
            bit_generator = np.random.Philox()
        self._gen = np.random.Generator(bit_generator)
        self._chunk = int(chunk)
        self._buf = np.empty(0, dtype=np.float64)
        self._pos = 0

    @classmethod
    def from_seed(cls, seed: int, *key: int, chunk: int = _CHUNK) -> "RandomStream":
        """Stream for ``seed`` and a purpose key, e.g. ``from_seed(s, GATES)``.

        Extra key parts (sweep point index, chunk id, ...) extend the spawn
        key, giving independent substreams.
        """
        if seed is None:
            raise ValueError("an explicit seed is required")
        spawn_key = tuple(int(k) for k in key) or (GATES,)
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
        return cls(np.random.Philox(ss), chunk=chunk)

    @property
    def generator(self) -> np.random.Generator:
        """Underlying generator, for vectorised draws (noise synthesis).

        Do not mix vectorised draws with the scalar interface on the same
        stream; use separate purposes instead.
        """
        return self._gen

    # -- scalar interface ---------------------------------------------------

    def next_uniform(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self.refill()
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def normal(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        """One Gaussian variate via Box-Muller on two stream uniforms."""
        u1 = self.next_uniform()
        u2 = self.next_uniform()
        r = math.sqrt(-2.0 * math.log1p(-u1))
        return mean + sigma * (r * math.cos(2.0 * math.pi * u2))

    # -- kernel interface ---------------------------------------------------

    def buffer(self) -> np.ndarray:
        return self._buf

    @property
    def pos(self) -> int:
        return self._pos

    def refill(self) -> np.ndarray:
        """Replace the buffer with a fresh chunk and reset the cursor."""
        self._buf = self._gen.random(self._chunk)
        self._pos = 0
        return self._buf

    def sync_pos(self, pos: int) -> None:
        if not 0 <= pos <= self._buf.shape[0]:
            raise ValueError(f"cursor {pos} outside buffer of size {self._buf.shape[0]}")
        self._pos = int(pos)
