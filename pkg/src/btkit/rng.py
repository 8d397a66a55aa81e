"""Deterministic shuffling used for corpus splits and training-set mixes.

The random stream is pinned so that shuffles are reproducible across
machines, processes, and reimplementations in other languages:

* generator: splitmix64 seeded with the user's 64-bit seed, i.e. the state
  update ``s += 0x9E3779B97F4A7C15`` followed by the two xor-multiply mixing
  steps with constants ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB`` and
  a final ``z ^ (z >> 31)``, all modulo 2**64;
* shuffle: Fisher-Yates from the last index down, drawing
  ``j = next_u64() % (i + 1)`` for each position ``i``.

The modulo draw has negligible bias at corpus scale and keeps the stream
trivially portable. Changing any of this changes every split and mix, so
treat it as frozen.
"""

MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64 stream over 64-bit unsigned integers."""

    def __init__(self, seed: int):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self._state = seed

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def fisher_yates(items, seed: int) -> list:
    """Return a new list holding ``items`` shuffled with the pinned stream."""
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out
