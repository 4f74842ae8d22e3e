"""Participants and the aggregation server.

The server is blind by construction: its key slot only accepts public
material, and everything it is shown passes through observe(), which refuses
plaintext vectors.
"""
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from core.network import Dataset, ModelParams, local_gradient
from core.seeding import SeedStreams
from crypto.he_base import CiphertextVector, KeyMaterial, PublicMaterial, SecretKey
from fairness.reputation import ReputationState


class ProtocolError(RuntimeError):
    """Base class for round-orchestration failures."""


class BlindnessViolation(ProtocolError):
    """Raised when the server is handed a secret key or plaintext gradient."""


@dataclass(frozen=True)
class ParticipantState:
    """One data owner. Only GBPPFFL participants hold a secret key."""
    id: int
    model: ModelParams
    dataset: Dataset
    secret_key: Optional[SecretKey] = field(default=None, repr=False)

    def draw_batch(self, streams: SeedStreams, round_index: int, batch_size: int) -> np.ndarray:
        """Minibatch indices for one round (without replacement).

        batch_size 0, or one covering the dataset, selects every sample.
        """
        if batch_size == 0 or batch_size >= len(self.dataset):
            return np.arange(len(self.dataset))
        rng = streams.rng("batching", round_index, self.id)
        return np.sort(rng.choice(len(self.dataset), size=batch_size, replace=False))

    def gradient(self, streams: SeedStreams, round_index: int, batch_size: int) -> np.ndarray:
        return local_gradient(self.model, self.dataset, self.draw_batch(streams, round_index, batch_size))


@dataclass
class ServerState:
    """Aggregation server: reputations plus, in GBPPFFL, the public key material.

    observed records the kind of every message the server receives.
    """
    reputation: ReputationState
    public: Optional[PublicMaterial] = field(default=None, repr=False)
    observed: List[str] = field(default_factory=list, repr=False)
    rounds_completed: int = 0

    ALLOWED_KINDS = ("ciphertext", "phi_report", "reputation", "gradient")

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, (SecretKey, KeyMaterial)):
            raise BlindnessViolation(f"server attribute '{name}' cannot hold secret key material")
        if name == "public" and value is not None and not isinstance(value, PublicMaterial):
            raise BlindnessViolation(f"server key slot only takes PublicMaterial, got {type(value).__name__}")
        super().__setattr__(name, value)

    def observe(self, kind: str, payload: Any, encrypted_only: bool = False) -> None:
        """Record an incoming message.

        Args:
            kind: Message kind, one of ALLOWED_KINDS
            payload: The message
            encrypted_only: Refuse plaintext vectors (GBPPFFL rounds)
        """
        if kind not in self.ALLOWED_KINDS:
            raise ProtocolError(f"unknown message kind '{kind}'")
        if encrypted_only:
            if kind == "gradient" or (isinstance(payload, np.ndarray) and payload.size > 1):
                raise BlindnessViolation(f"server received a plaintext {kind} in an encrypted round")
            if kind == "ciphertext" and not isinstance(payload, CiphertextVector):
                raise BlindnessViolation(f"expected a ciphertext, got {type(payload).__name__}")
        self.observed.append(kind)


def ring_neighbors(index: int, participants: int, redundancy: int = 1) -> Tuple[int, ...]:
    """Reporters for participant `index`: `redundancy` neighbors on each side of the ring.

    With one participant the ring degenerates and the participant is its own
    neighbor on both sides.
    """
    if redundancy < 1:
        raise ProtocolError(f"report redundancy must be >= 1, got {redundancy}")
    reporters: List[int] = []
    for offset in range(1, redundancy + 1):
        reporters.append((index - offset) % participants)
        reporters.append((index + offset) % participants)
    return tuple(reporters)


def distribute_keys(
    participants: Sequence[ParticipantState],
    server: ServerState,
    keys: KeyMaterial,
) -> List[ParticipantState]:
    """Hand sk to every participant and only the public material to the server."""
    server.public = keys.public_material()
    return [
        ParticipantState(p.id, p.model, p.dataset, secret_key=keys.secret_key) for p in participants
    ]
