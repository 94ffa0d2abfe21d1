"""Deterministic pseudorandom streams for problem generation and batch sampling.

Every random quantity in this package comes from the generator below, which is
fully specified here so that runs are bit-reproducible across machines and
independent implementations.

Generator
---------
State: four 64-bit words, seeded from a single 64-bit seed via SplitMix64.

SplitMix64 (used only for seeding and stream derivation): the state advances by
adding 0x9E3779B97F4A7C15 modulo 2^64; each output mixes the new state z as

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

all modulo 2^64. The xoshiro256** state is the first four SplitMix64 outputs.

xoshiro256** (one step, state s0..s3, all mod 2^64):

    out = rotl64(s1 * 5, 7) * 9
    t = s1 << 17
    s2 ^= s0;  s3 ^= s1;  s1 ^= s2;  s0 ^= s3
    s2 ^= t;   s3 = rotl64(s3, 45)

Derived quantities
------------------
* uniform double in [0, 1):   (out >> 11) * 2**-53
* integer in [0, n):          ((out >> 11) * n) >> 53   (exact integer arithmetic)
* standard normals: Box-Muller pairs. For m draws, take ceil(m/2) pairs of
  uniforms (u1, u2); with r = sqrt(-2*ln(1 - u1)) and a = 2*pi*u2 the pair
  yields r*cos(a), r*sin(a); the final sine value is discarded when m is odd.
  A scalar draw is an array draw of length 1 (consumes two uniforms).
* stream derivation: derive_seed(master, index) is the (index+1)-th output of a
  SplitMix64 sequence whose state starts at master.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_TWO53_INV = 2.0 ** -53


def _splitmix_stream(seed, count):
    """First `count` outputs of SplitMix64 starting from `seed`."""
    state = seed & _MASK
    out = []
    for _ in range(count):
        state = (state + _SPLITMIX_GAMMA) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z ^= z >> 31
        out.append(z)
    return out


def derive_seed(master_seed, index):
    """Seed for the run at position `index` in a sweep keyed by `master_seed`."""
    if index < 0:
        raise ValueError("index must be nonnegative")
    return _splitmix_stream(master_seed, index + 1)[-1]


class Xoshiro256:
    """xoshiro256** stream seeded via SplitMix64 (see module docstring)."""

    def __init__(self, seed):
        s = _splitmix_stream(seed, 4)
        # all-zero state is unreachable from SplitMix64 seeding, but guard anyway
        if not any(s):
            s[0] = _SPLITMIX_GAMMA
        self._s = tuple(s)

    def _raw_block(self, count):
        # Tight scalar loop; everything downstream is vectorized numpy.
        s0, s1, s2, s3 = self._s
        out = []
        append = out.append
        for _ in range(count):
            r = (s1 * 5) & _MASK
            r = ((r << 7) | (r >> 57)) & _MASK
            append((r * 9) & _MASK)
            t = (s1 << 17) & _MASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s = (s0, s1, s2, s3)
        return out

    def next_uint64(self):
        return self._raw_block(1)[0]

    def uniforms(self, count):
        """Array of `count` doubles in [0, 1)."""
        words = self._raw_block(count)
        high = np.array([w >> 11 for w in words], dtype=np.float64)
        return high * _TWO53_INV

    def random(self):
        return (self.next_uint64() >> 11) * _TWO53_INV

    def normals(self, count):
        """Array of `count` standard normal draws (paired Box-Muller)."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = (2.0 * math.pi) * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(angle)
        z[1::2] = r * np.sin(angle)
        return z[:count]

    def normal(self):
        return float(self.normals(1)[0])

    def integer_below(self, n):
        """Uniform integer in [0, n) via exact multiply-shift."""
        if n <= 0:
            raise ValueError("n must be positive")
        return ((self.next_uint64() >> 11) * n) >> 53

    def integers_below(self, n, count):
        if n <= 0:
            raise ValueError("n must be positive")
        words = self._raw_block(count)
        return np.array([((w >> 11) * n) >> 53 for w in words], dtype=np.int64)
