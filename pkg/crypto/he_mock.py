"""Mock backend: exact float arithmetic behind the HE interface.

Ciphertexts are plain float64 slot arrays with the same chunking and level
accounting as CKKS. With noise_std = 0 every operation reproduces the
plaintext computation bit for bit; noise_std > 0 perturbs each fresh
encryption with Gaussian noise to emulate approximate arithmetic.
"""
from typing import Any

import numpy as np

from core.network import inner

from .he_base import (
    CiphertextVector,
    HeBackend,
    KeyMaterial,
    Plaintext,
    PublicKey,
    SecretKey,
)
from .he_params import HeParams, UnsupportedParametersError


class MockBackend(HeBackend):
    """Exact stand-in for the CKKS backend."""

    NAME = "mock"

    def __init__(self, params: HeParams, workers: int = 1, noise_std: float = 0.0):
        super().__init__(params, workers)
        if noise_std < 0:
            raise UnsupportedParametersError(f"noise_std must be non-negative, got {noise_std}")
        self.noise_std = noise_std

    def _generate_keys(self, rng: np.random.Generator) -> KeyMaterial:
        token = int(rng.integers(0, 2 ** 62))
        return KeyMaterial(
            public_key=PublicKey(self.NAME, token),
            secret_key=SecretKey(self.NAME, token),
            relinearization_key=None,
            rotation_keys={},
        )

    def _fresh_scale(self) -> float:
        return 1.0

    def _encrypt_chunk(self, values: np.ndarray, key: PublicKey, seq: np.random.SeedSequence) -> Any:
        if self.noise_std == 0.0:
            return values.copy()
        rng = np.random.default_rng(seq)
        return values + rng.normal(0.0, self.noise_std, size=values.size)

    def _decrypt_chunk(self, chunk: Any, key: SecretKey, level: int, scale: float) -> np.ndarray:
        return chunk.copy()

    def _add_chunk(self, a: Any, b: Any, level: int) -> Any:
        return a + b

    def _sub_chunk(self, a: Any, b: Any, level: int) -> Any:
        return a - b

    def _pmult_chunk(self, plain: Plaintext, chunk: Any, level: int) -> Any:
        return plain * chunk

    def _cmult_chunk(self, a: Any, b: Any, level: int) -> Any:
        return a * b

    def _dot(self, a: CiphertextVector, b: CiphertextVector) -> Any:
        left = np.concatenate(a.chunks)[:a.logical_length]
        right = np.concatenate(b.chunks)[:b.logical_length]
        out = np.zeros(self.params.slot_count, dtype=np.float64)
        out[0] = inner(left, right)
        return out

    def _drop_chunk(self, chunk: Any, level: int, target: int) -> Any:
        return chunk
