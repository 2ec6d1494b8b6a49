"""Portable deterministic random numbers (SplitMix64).

Masks and input sequences must reproduce bit-identically across platforms
and languages, which rules out library generators whose streams are an
implementation detail. SplitMix64 is small enough to re-implement anywhere:

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z <- state
    z <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2^64
    z <- (z XOR (z >> 27)) * 0x94D049BB133111EB   mod 2^64
    output: z XOR (z >> 31)

Doubles are derived from the top 53 bits, ``(z >> 11) * 2**-53``, giving
uniform values on [0, 1). Golden vectors for the seeds used by the test
suite live in ``tests/golden/prng_vectors.txt``.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_DOUBLE_SCALE = 2.0**-53


class SplitMix64:
    """Stateful SplitMix64 stream seeded with a 64-bit integer."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_double(self) -> float:
        """Uniform double on [0, 1)."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE


def uniform(seed: int, n: int, high: float = 0.5) -> np.ndarray:
    """n i.i.d. uniform draws on [0, high) from the stream of ``seed``."""
    if n < 1:
        raise ValueError(f"need at least one draw, got n={n}")
    gen = SplitMix64(seed)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = gen.next_double() * high
    return out


def write_golden(path, seeds, n: int = 5) -> None:
    """Dump the first ``n`` uniform [0, 0.5) values per seed, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for seed in seeds:
            fh.write(f"# seed={seed}\n")
            for value in uniform(seed, n):
                fh.write(f"{value!r}\n")


def read_golden(path) -> dict[int, list[float]]:
    """Parse a golden file written by :func:`write_golden`."""
    vectors: dict[int, list[float]] = {}
    current: list[float] | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# seed="):
                current = vectors.setdefault(int(line[len("# seed="):]), [])
            elif current is not None:
                current.append(float(line))
    return vectors
