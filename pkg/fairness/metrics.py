"""Collaborative-fairness metric."""
import math

import numpy as np

from .reputation import FairnessError


def pearson(x, y) -> float:
    """Pearson correlation of two equally long, non-constant vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise FairnessError(f"need two vectors of equal length >= 2, got {x.shape} and {y.shape}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0.0 or syy == 0.0:
        raise FairnessError("Pearson correlation is undefined for a constant vector")
    rho = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))
