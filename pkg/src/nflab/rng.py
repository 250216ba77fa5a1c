"""Counter-based random number generation with splittable child streams.

Every stochastic routine in the package draws from an explicit RngState so
that results are bitwise reproducible across platforms and independent of
call order between sibling streams.  The generator is SplitMix64: the i-th
raw draw is mix64(key + (counter + i) * GOLDEN), a pure function of
(key, counter), so a stream can be replayed or split without hidden state.
"""

from __future__ import annotations

import numpy as np

# SplitMix64 constants (Steele, Lea & Flood's weyl increment and the
# Stafford "variant 13" finalizer multipliers).
GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB
MASK64 = 0xFFFFFFFFFFFFFFFF

# FNV-1a 64-bit parameters, used to hash derivation labels into the key.
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

TWO53 = float(1 << 53)


def mix64(z: int) -> int:
    """Scalar SplitMix64 finalizer on a Python int, mod 2**64."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * MIX_B) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # Vectorized finalizer; uint64 array arithmetic wraps mod 2**64.
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(MIX_A)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(MIX_B)
    return z ^ (z >> np.uint64(31))


def _hash_label(label) -> int:
    data = str(label).encode("utf-8")
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


class RngState:
    """A (key, counter) pair addressing one deterministic draw stream."""

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.key = int(seed) & MASK64
        self.counter = int(counter)

    def __repr__(self):
        return f"RngState(key={self.key:#018x}, counter={self.counter})"

    def derive(self, label) -> "RngState":
        """Child stream keyed by (key, label); independent of the counter.

        Distinct labels give streams that are disjoint for all practical
        purposes, so sibling jobs can be seeded without coordination.
        """
        child_key = mix64(mix64(self.key) ^ _hash_label(label))
        return RngState(child_key)

    def _raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words; advances the counter by n."""
        start = self.counter
        self.counter = start + n
        with np.errstate(over="ignore"):
            idx = np.arange(start, start + n, dtype=np.uint64)
            z = (np.uint64(self.key) + idx * np.uint64(GOLDEN)) & np.uint64(MASK64)
            return _mix64_array(z)

    def random(self, shape=None) -> np.ndarray:
        """Uniform float64 on the half-open interval (0, 1].

        The top 53 bits of each word are used, shifted into (0, 1] so that
        log(u) is always finite (Box-Muller needs this).
        """
        n = 1 if shape is None else int(np.prod(shape))
        u = ((self._raw(n) >> np.uint64(11)).astype(np.float64) + 1.0) / TWO53
        return float(u[0]) if shape is None else u.reshape(shape)

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        """Standard Box-Muller normals scaled by std."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = self.random(m)
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return (std * z).reshape(shape)

    def uniform(self, shape, low: float, high: float) -> np.ndarray:
        """Uniform float64 on (low, high]."""
        return low + (high - low) * self.random(shape)

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n integers in [0, bound) by rejection-free modular reduction.

        The modulo bias is < bound / 2**64, negligible for the desk-scale
        bounds used here (image sizes, index shuffles).
        """
        return (self._raw(n) % np.uint64(bound)).astype(np.int64)

    def shuffle_index(self, n: int) -> np.ndarray:
        """A deterministic permutation of range(n) (Fisher-Yates)."""
        perm = np.arange(n, dtype=np.int64)
        if n <= 1:
            return perm
        draws = self._raw(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(draws[n - 1 - i] % np.uint64(i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
