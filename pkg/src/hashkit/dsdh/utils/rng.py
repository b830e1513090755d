import numpy as np

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """
    SplitMix64 seed stream.

    Every random draw in a run derives from one configuration seed. The stream
    hands out 64-bit child seeds, each of which seeds an independent numpy
    ``Generator`` (PCG64), so weight initialisation, splitting and minibatch
    shuffling never share state and are reproducible on every platform.
    """

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def generator(self) -> np.random.Generator:
        """
        Return a fresh numpy Generator seeded from the next stream value.

        Returns:
            np.random.Generator: A PCG64-backed generator.
        """
        return np.random.Generator(np.random.PCG64(self.next_u64()))
