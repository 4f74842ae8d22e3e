"""Reputation, contribution and relative-reputation arithmetic.

One round on the server side:
    g_fl    = sum_i r_i * g_i                    (normalized local gradients)
    phi_i   = cos(g_i, g_fl)
    r~_i    = alpha * r_i + (1 - alpha) * phi_i
    r_i     = r~_i / sum_k r~_k
    q_i     = relative reputation in [0, 1], 1 for the best participant
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from core.network import inner

# Allowed drift of the reputation simplex before aggregate() refuses
SIMPLEX_TOLERANCE = 1e-9


class FairnessError(ValueError):
    """Raised for zero gradients, corrupted scalars, degenerate reputations or bad params."""


class QVariant(Enum):
    """How reputations map to the retained fraction q."""
    TANH_BETA = "tanh_beta"
    PARAMETER_FREE = "parameter_free"
    GAMMA_POWER = "gamma_power"


class InitialReputation(Enum):
    UNIFORM = "uniform"
    DATASET_SIZE = "dataset_size"


class MaskStrategy(Enum):
    """Which FL-gradient entries a participant is granted."""
    TOPK = "topk"                # largest |g_fl| entries (needs plaintext g_fl)
    RANDOMIZED = "randomized"    # prefix of a per-round permutation shared by everyone


@dataclass(frozen=True)
class FairnessParams:
    """Fairness hyperparameters.

    beta is required by (and only by) tanh_beta, gamma by gamma_power.
    gamma may be math.inf, which makes every q equal to 1.
    """
    alpha: float = 0.95
    beta: Optional[float] = None
    gamma: Optional[float] = None
    delta: float = 0.5
    q_variant: QVariant = QVariant.PARAMETER_FREE
    mask_strategy: MaskStrategy = MaskStrategy.TOPK
    clamp_negative_phi: bool = True
    initial_reputation: InitialReputation = InitialReputation.UNIFORM

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise FairnessError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.delta > 0:
            raise FairnessError(f"delta must be positive, got {self.delta}")
        needs_beta = self.q_variant is QVariant.TANH_BETA
        needs_gamma = self.q_variant is QVariant.GAMMA_POWER
        if needs_beta != (self.beta is not None):
            raise FairnessError(f"beta is required iff q_variant is tanh_beta (got {self.q_variant.value}, beta={self.beta})")
        if needs_gamma != (self.gamma is not None):
            raise FairnessError(f"gamma is required iff q_variant is gamma_power (got {self.q_variant.value}, gamma={self.gamma})")
        if self.beta is not None and not self.beta > 0:
            raise FairnessError(f"beta must be positive, got {self.beta}")
        if self.gamma is not None and not self.gamma > 0:
            raise FairnessError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class ReputationState:
    """Per-round reputation vectors; round counts completed updates."""
    r: np.ndarray
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    round: int = 0

    @classmethod
    def start(cls, r0: np.ndarray) -> "ReputationState":
        r0 = np.asarray(r0, dtype=np.float64)
        return cls(r=r0, phi=np.full(r0.size, np.nan), q=np.ones(r0.size), round=0)

    @property
    def participants(self) -> int:
        return int(self.r.size)


def initial_reputations(
    participants: int,
    mode: InitialReputation = InitialReputation.UNIFORM,
    dataset_sizes: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """r^0: 1/N each, or proportional to local dataset sizes."""
    if participants < 1:
        raise FairnessError("need at least one participant")
    if mode is InitialReputation.UNIFORM:
        return np.full(participants, 1.0 / participants)
    if dataset_sizes is None or len(dataset_sizes) != participants:
        raise FairnessError("dataset_size initialization needs one size per participant")
    sizes = np.asarray(dataset_sizes, dtype=np.float64)
    if sizes.min() <= 0:
        raise FairnessError("dataset sizes must be positive")
    return sizes / sizes.sum()


def normalize_gradient(g: np.ndarray, delta: float) -> np.ndarray:
    """Rescale g to L2 norm delta."""
    g = np.asarray(g, dtype=np.float64)
    norm = math.sqrt(inner(g, g))
    if norm == 0.0:
        raise FairnessError("cannot normalize a zero gradient")
    return delta * g / norm


def aggregate(normed: Sequence[np.ndarray], r_prev: np.ndarray) -> np.ndarray:
    """Reputation-weighted sum, accumulated in participant order.

    Args:
        normed: N gradient vectors of equal length
        r_prev: Weights summing to 1

    Returns:
        r_0 g_0 + r_1 g_1 + ... (left to right)
    """
    r_prev = np.asarray(r_prev, dtype=np.float64)
    if len(normed) == 0 or len(normed) != r_prev.size:
        raise FairnessError(f"{len(normed)} gradients for {r_prev.size} weights")
    if abs(math.fsum(r_prev) - 1.0) > SIMPLEX_TOLERANCE:
        raise FairnessError(f"weights must sum to 1, got {math.fsum(r_prev)}")
    length = np.shape(normed[0])
    if any(np.shape(g) != length for g in normed):
        raise FairnessError("gradients differ in length")
    acc = r_prev[0] * normed[0]
    for weight, g in zip(r_prev[1:], normed[1:]):
        acc = acc + weight * g
    return acc


def contribution_from_scalars(s_i0: float, s_ii: float, s_00: float) -> float:
    """phi = s_i0 / sqrt(s_ii * s_00) from the three scalar products."""
    if not (s_ii > 0 and s_00 > 0):
        raise FairnessError(f"self products must be positive (s_ii={s_ii}, s_00={s_00}); scalars corrupted?")
    return s_i0 / math.sqrt(s_ii * s_00)


def contribution(g_i: np.ndarray, g_fl: np.ndarray) -> float:
    """Cosine similarity between a local gradient and the FL gradient."""
    if np.shape(g_i) != np.shape(g_fl):
        raise FairnessError(f"shapes differ: {np.shape(g_i)} vs {np.shape(g_fl)}")
    s_ii = inner(g_i, g_i)
    s_00 = inner(g_fl, g_fl)
    if s_ii == 0.0 or s_00 == 0.0:
        raise FairnessError("contribution of or towards a zero vector is undefined")
    return contribution_from_scalars(inner(g_i, g_fl), s_ii, s_00)


def update_reputations(
    state: ReputationState,
    phi: np.ndarray,
    alpha: float,
    clamp_negative: bool = True,
) -> ReputationState:
    """Smooth reputations with the new contributions and renormalize.

    Args:
        state: Previous reputations
        phi: Accepted contributions, one per participant
        alpha: Weight of the history
        clamp_negative: Clip phi to [0, 1] before smoothing

    Returns:
        State for the next round; q is carried over until relative_reputation() runs
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != state.r.shape:
        raise FairnessError(f"{phi.size} contributions for {state.r.size} participants")
    used = np.clip(phi, 0.0, 1.0) if clamp_negative else phi
    r_tilde = alpha * state.r + (1.0 - alpha) * used
    total = math.fsum(r_tilde)
    if total <= 0:
        raise FairnessError(f"smoothed reputations sum to {total}; contributions too negative")
    return ReputationState(r=r_tilde / total, phi=phi, q=state.q, round=state.round + 1)


def relative_reputation(r: np.ndarray, params: FairnessParams) -> np.ndarray:
    """Map reputations to q in [0, 1]; the maximal participants get exactly 1."""
    r = np.asarray(r, dtype=np.float64)
    if r.size == 0 or r.min() < 0 or r.max() <= 0:
        raise FairnessError("reputations must be non-negative and not all zero")
    variant = params.q_variant
    if variant is QVariant.TANH_BETA:
        if params.beta is None:
            raise FairnessError("tanh_beta needs beta")
        q = np.tanh(params.beta * r) / np.tanh(params.beta * r.max())
    else:
        q = r / r.max()
        if variant is QVariant.GAMMA_POWER:
            if params.gamma is None:
                raise FairnessError("gamma_power needs gamma")
            q = np.power(q, 1.0 / params.gamma)
    return np.clip(q, 0.0, 1.0)


def advance(state: ReputationState, phi: np.ndarray, params: FairnessParams) -> ReputationState:
    """update_reputations() followed by relative_reputation()."""
    updated = update_reputations(state, phi, params.alpha, params.clamp_negative_phi)
    return replace(updated, q=relative_reputation(updated.r, params))
