"""Shared fixtures: small datasets, seed streams and HE backends."""
from dataclasses import replace

import numpy as np
import pytest

from core.datasets import SplitRegime, SplitSpec, generate_dataset, partition
from core.network import init_params
from core.seeding import SeedStreams
from crypto import CkksBackend, HeParams, MockBackend, preset
from harness.config import ExperimentConfig, Scheme

# Small ring for fast CKKS tests: 32 slots per chunk
SMALL_RING = HeParams(ring_dimension=64, scaling_bits=40, first_modulus_bits=60, max_chunks=128)


@pytest.fixture
def streams():
    return SeedStreams(7)


@pytest.fixture
def pool():
    return generate_dataset(num_classes=4, num_samples=400, num_features=6, seed=3, separation=1.0)


@pytest.fixture
def small_model(streams):
    return init_params((6, 5, 4), streams.rng("init"))


@pytest.fixture
def small_partition(pool):
    spec = SplitSpec(SplitRegime.IID_UNIFORM, participants=3, total_samples=240, num_classes=4,
                     test_samples=80, seed=11)
    return partition(pool, spec)


@pytest.fixture
def mock_backend():
    backend = MockBackend(SMALL_RING)
    backend.keygen(1)
    return backend


@pytest.fixture
def mock_sk(mock_backend):
    return mock_backend.keygen(1).secret_key


@pytest.fixture(scope="session")
def ckks_small():
    """CKKS backend on the small ring with its key material."""
    backend = CkksBackend(SMALL_RING)
    keys = backend.keygen(2024)
    return backend, keys


@pytest.fixture(scope="session")
def ckks_test_preset():
    backend = CkksBackend(preset("test"))
    keys = backend.keygen(99)
    return backend, keys


@pytest.fixture
def tiny_config():
    """Seconds-scale experiment: 3 participants, 4 rounds, a 8-6-3 network."""
    config = ExperimentConfig(
        scheme=Scheme.GBPPFFL,
        rounds=4,
        num_features=8,
        hidden_units=6,
        separation=1.0,
        local_batch_size=16,
        he_preset="test",
    )
    return _with_split(config, participants=3, total_samples=300, num_classes=3, test_samples=90)


def _with_split(config, **split_fields):
    return replace(config, split=replace(config.split, **split_fields))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
