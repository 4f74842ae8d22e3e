"""Retention masks and reward gradients."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .reputation import FairnessError, MaskStrategy

# Added before flooring q*l so 0.9999999 artifacts still count
FLOOR_NUDGE = 1e-12


@dataclass(frozen=True)
class Mask:
    """Binary retention vector over the flat parameter space."""
    bits: np.ndarray  # uint8, length l
    retained_count: int

    def as_float(self) -> np.ndarray:
        return self.bits.astype(np.float64)

    def complement(self) -> np.ndarray:
        """1 - bits as floats."""
        return 1.0 - self.as_float()


def retained_count(q: float, length: int) -> int:
    if not 0.0 <= q <= 1.0:
        raise FairnessError(f"q must lie in [0, 1], got {q}")
    return min(length, int(math.floor(q * length + FLOOR_NUDGE)))


def round_permutation(rng: np.random.Generator, length: int) -> np.ndarray:
    """Retention order shared by every participant in one round."""
    return rng.permutation(length)


def build_mask(
    q: float,
    length: int,
    strategy: MaskStrategy,
    context: Optional[np.ndarray] = None,
) -> Mask:
    """Keep floor(q * length) entries.

    Args:
        q: Relative reputation
        length: l
        strategy: TOPK or RANDOMIZED
        context: FL gradient (TOPK) or the round permutation (RANDOMIZED)

    Returns:
        Mask with exactly floor(q * l) ones
    """
    count = retained_count(q, length)
    bits = np.zeros(length, dtype=np.uint8)
    if count == 0:
        return Mask(bits, 0)
    if context is None or np.shape(context) != (length,):
        raise FairnessError(f"{strategy.value} masks need a context vector of length {length}")
    if strategy is MaskStrategy.TOPK:
        # stable sort: lower index wins ties at the boundary
        order = np.argsort(-np.abs(np.asarray(context, dtype=np.float64)), kind="stable")
    else:
        order = np.asarray(context, dtype=np.int64)
    bits[order[:count]] = 1
    return Mask(bits, count)


def reward_gradient(mask: Mask, g_fl: np.ndarray, g_i: np.ndarray) -> np.ndarray:
    """FL-gradient entries where the mask is set, own entries elsewhere."""
    if not (mask.bits.shape == np.shape(g_fl) == np.shape(g_i)):
        raise FairnessError(
            f"mask {mask.bits.shape}, FL gradient {np.shape(g_fl)} and local {np.shape(g_i)} differ"
        )
    return mask.as_float() * g_fl + mask.complement() * g_i
