"""Portable seeded PRNG used by every sampling operation.

The generator is xorshift64* (Vigna, 2014): shifts 12/25/27 and output
multiplier ``0x2545F4914F6CDD1D``. The 64-bit seed is expanded into the
initial state by one round of splitmix64 so that seed 0 is valid. Only plain
integer arithmetic is used, so sequences are bit-identical on every platform
and easy to reproduce in other languages.

Derived draws:

* ``random()`` -- top 53 bits of the output scaled to ``[0, 1)``.
* ``below(n)`` -- unbiased integer in ``[0, n)`` by rejection: draws ``r``
  until ``r >= 2**64 mod n``, then returns ``r % n``.
* ``shuffle(x)`` -- Fisher-Yates from the last index down: for
  ``i = len-1 .. 1`` swap ``x[i]`` with ``x[below(i + 1)]``.
"""

MASK64 = (1 << 64) - 1
MULTIPLIER = 0x2545F4914F6CDD1D
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


class Xorshift64Star:
    def __init__(self, seed: int):
        self.seed = check_seed(seed)
        state = splitmix64(seed)
        self._state = state or _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self._state = x
        return (x * MULTIPLIER) & MASK64

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        floor = (1 << 64) % n
        while True:
            r = self.next_u64()
            if r >= floor:
                return r % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
