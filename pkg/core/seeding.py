"""Named random substreams derived from one master seed.

Every stochastic component draws from its own stream so that, for example, the
mask permutation of round 7 does not change when the batch size changes.
"""
from typing import Dict

import numpy as np


class SeedStreams:
    """Fans a master seed out to named, optionally keyed, numpy generators.

    Example:
        streams = SeedStreams(42)
        init_rng = streams.rng("init")
        mask_rng = streams.rng("masks", 3)        # round 3
        batch_rng = streams.rng("batching", 3, 1)  # round 3, participant 1
    """

    STREAM_IDS: Dict[str, int] = {
        "data": 1,
        "init": 2,
        "batching": 3,
        "masks": 4,
        "he": 5,
        "split": 6,
    }

    def __init__(self, master_seed: int):
        """Initialize the fan-out.

        Args:
            master_seed: Non-negative experiment seed
        """
        if master_seed < 0:
            raise ValueError(f"master seed must be non-negative, got {master_seed}")
        self.master_seed = int(master_seed)

    def sequence(self, name: str, *keys: int) -> np.random.SeedSequence:
        """Get the seed sequence for a stream.

        Args:
            name: One of STREAM_IDS
            *keys: Extra integer keys (round index, participant id, ...)

        Returns:
            SeedSequence unique to (master seed, name, keys)
        """
        if name not in self.STREAM_IDS:
            raise KeyError(f"unknown seed stream '{name}'")
        spawn_key = (self.STREAM_IDS[name],) + tuple(int(k) for k in keys)
        return np.random.SeedSequence(entropy=self.master_seed, spawn_key=spawn_key)

    def rng(self, name: str, *keys: int) -> np.random.Generator:
        """Get a fresh generator for a stream."""
        return np.random.default_rng(self.sequence(name, *keys))

    def seed(self, name: str, *keys: int) -> int:
        """Get a plain 63-bit integer seed for a stream (for APIs taking an int)."""
        return int(self.sequence(name, *keys).generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))
