"""Homomorphic-encryption backends: exact mock and leveled RNS-CKKS."""
from .he_params import PRESET_NAMES, PRESETS, HeError, HeParams, UnsupportedParametersError, modulus_chain, preset
from .he_base import (
    CiphertextVector,
    HeBackend,
    KeyMaterial,
    LevelExhaustedError,
    OperandMismatchError,
    PublicKey,
    PublicMaterial,
    SecretKey,
)
from .he_mock import MockBackend
from .he_ckks import CkksBackend

BACKENDS = {MockBackend.NAME: MockBackend, CkksBackend.NAME: CkksBackend}


def make_backend(name: str, params: HeParams, workers: int = 1, noise_std: float = 0.0) -> HeBackend:
    """Instantiate a backend by name ("mock" or "ckks")."""
    if name == MockBackend.NAME:
        return MockBackend(params, workers=workers, noise_std=noise_std)
    if name == CkksBackend.NAME:
        return CkksBackend(params, workers=workers)
    raise UnsupportedParametersError(f"unknown HE backend '{name}', choose one of {sorted(BACKENDS)}")


__all__ = [
    'PRESET_NAMES', 'PRESETS', 'HeError', 'HeParams', 'UnsupportedParametersError', 'modulus_chain', 'preset',
    'CiphertextVector', 'HeBackend', 'KeyMaterial', 'LevelExhaustedError', 'OperandMismatchError',
    'PublicKey', 'PublicMaterial', 'SecretKey', 'MockBackend', 'CkksBackend', 'BACKENDS',
    'make_backend',
]
