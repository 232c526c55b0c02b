"""Deterministic, splittable random-number seeding.

All randomness in the package flows through ``RngSeed``, a (seed, stream)
pair mapped onto numpy's counter-based Philox generator.  Two properties
matter:

* identical (seed, stream) -> bit-identical sample sequences, and
* distinct streams derived from one seed are independent, so per-trial
  work can be farmed out to threads in any order without changing any
  stream's output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_UINT64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    # Finalizer from the splitmix64 generator; good avalanche, cheap.
    z = (z + 0x9E3779B97F4A7C15) & _UINT64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _UINT64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _UINT64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngSeed:
    """Root seed plus a stream index; both unsigned 64-bit."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _UINT64:
                raise ValueError(f"{name} must be an integer in [0, 2^64)")
            object.__setattr__(self, name, int(v))

    def derive(self, *indices: int) -> "RngSeed":
        """Child seed for a sub-task (trial number, phase, ...).

        Mixing is injective enough in practice that distinct index
        tuples never collide across the stream space we use.
        """
        s = self.stream
        for ix in indices:
            if ix < 0:
                raise ValueError("derive indices must be non-negative")
            s = _splitmix64(s ^ _splitmix64(int(ix) + 1))
        return RngSeed(self.seed, s)

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator; repeated calls restart the stream."""
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream]))
