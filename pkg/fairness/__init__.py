"""Reputation, contribution, masking and fairness-metric math."""
from .reputation import (
    FairnessError,
    FairnessParams,
    InitialReputation,
    MaskStrategy,
    QVariant,
    ReputationState,
    advance,
    aggregate,
    contribution,
    contribution_from_scalars,
    initial_reputations,
    normalize_gradient,
    relative_reputation,
    update_reputations,
)
from .masks import Mask, build_mask, retained_count, reward_gradient, round_permutation
from .metrics import pearson

__all__ = [
    'FairnessError', 'FairnessParams', 'InitialReputation', 'MaskStrategy', 'QVariant',
    'ReputationState', 'advance', 'aggregate', 'contribution', 'contribution_from_scalars',
    'initial_reputations', 'normalize_gradient', 'relative_reputation', 'update_reputations',
    'Mask', 'build_mask', 'retained_count', 'reward_gradient', 'round_permutation', 'pearson',
]
