import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.datasets import SplitRegime, SplitSpec, generate_dataset, partition
from core.network import apply_update, init_params
from core.seeding import SeedStreams
from crypto import MockBackend, SecretKey
from fairness import (
    FairnessParams,
    MaskStrategy,
    QVariant,
    ReputationState,
    aggregate,
    build_mask,
    contribution,
    initial_reputations,
    normalize_gradient,
    relative_reputation,
    reward_gradient,
    round_permutation,
)
from protocol import (
    BlindnessViolation,
    ParticipantState,
    PhiReportMismatchError,
    ProtocolError,
    RoundPlan,
    ServerState,
    TranscriptWriter,
    distribute_keys,
    read_transcript,
    ring_neighbors,
    run_round_fedsgd,
    run_round_fflx,
    run_round_gbppffl,
    run_round_standalone,
    verify_phi_reports,
    verify_reports,
)

from .conftest import SMALL_RING

RANDOMIZED = FairnessParams(mask_strategy=MaskStrategy.RANDOMIZED)

INVARIANT = settings(max_examples=200, deadline=None)

ENCRYPTED_PARAMS = st.sampled_from([
    RANDOMIZED,
    FairnessParams(mask_strategy=MaskStrategy.RANDOMIZED, q_variant=QVariant.TANH_BETA, beta=1.0),
    FairnessParams(mask_strategy=MaskStrategy.RANDOMIZED, q_variant=QVariant.GAMMA_POWER, gamma=0.2),
])

# (features, hidden units, classes); l ranges from 12 to 82
LAYERS = st.tuples(st.integers(2, 8), st.integers(2, 6), st.integers(2, 4))


def _cohort(n, seed, layers=(6, 5, 4), per_participant=40):
    """n participants on an IID split, a fresh server and the seed streams."""
    streams = SeedStreams(seed)
    classes = layers[-1]
    spec = SplitSpec(SplitRegime.IID_UNIFORM, participants=n, total_samples=per_participant * n,
                     num_classes=classes, test_samples=4 * classes, seed=streams.seed("split"))
    pool = generate_dataset(classes, spec.pool_size(), layers[0], streams.seed("data"), separation=1.0)
    parts = partition(pool, spec)
    model = init_params(layers, streams.rng("init"))
    participants = tuple(ParticipantState(i, model, d) for i, d in enumerate(parts.local))
    return participants, _server(n), streams


def _server(n):
    return ServerState(ReputationState.start(initial_reputations(n)))


def _encrypted(participants, server, backend_seed=3):
    backend = MockBackend(SMALL_RING)
    keys = backend.keygen(backend_seed)
    return tuple(distribute_keys(participants, server, keys)), backend


def _normed(participants, plan, round_index, delta):
    return [normalize_gradient(p.gradient(plan.streams, round_index, plan.batch_size), delta)
            for p in participants]


def _flat(participants):
    return [p.model.flatten() for p in participants]


# -- report verification -----------------------------------------------------

def test_verify_phi_reports_examples():
    verdict = verify_phi_reports(0.7, 0.7, 0.0)
    assert verdict.accepted and verdict.value == 0.7
    assert not verify_phi_reports(0.7, 0.9, 1e-6).accepted
    assert verify_phi_reports(0.7, 0.7 + 1e-7, 1e-6).value == pytest.approx(0.7 + 5e-8)
    assert not verify_phi_reports(math.nan, 0.7, 1.0).accepted


def test_verify_reports_needs_two():
    with pytest.raises(ProtocolError):
        verify_reports([0.5], 0.0)


def test_ring_neighbors():
    assert ring_neighbors(0, 5) == (4, 1)
    assert ring_neighbors(2, 5, redundancy=2) == (1, 3, 0, 4)
    assert ring_neighbors(0, 1) == (0, 0)


@INVARIANT
@given(st.integers(1, 50), st.integers(1, 3), st.data())
def test_ring_neighbors_wrap_around(n, redundancy, data):
    index = data.draw(st.integers(0, n - 1))
    reporters = ring_neighbors(index, n, redundancy)
    assert len(reporters) == 2 * redundancy
    assert all(0 <= who < n for who in reporters)
    assert reporters[:2] == ((index - 1) % n, (index + 1) % n)
    if n > 2 * redundancy:
        assert index not in reporters


# -- plaintext schemes -------------------------------------------------------

def test_fedsgd_single_participant_is_plain_sgd():
    participants, server, streams = _cohort(1, 0)
    plan = RoundPlan(streams=streams, batch_size=8)
    g = participants[0].gradient(streams, 0, 8)
    outcome = run_round_fedsgd(participants, server, plan)
    np.testing.assert_array_equal(outcome.participants[0].model.flatten(),
                                  apply_update(participants[0].model, g, 1.0).flatten())


def test_fedsgd_aggregate_is_the_mean():
    participants, server, streams = _cohort(3, 1)
    plan = RoundPlan(streams=streams, batch_size=8)
    grads = [p.gradient(streams, 0, 8) for p in participants]
    outcome = run_round_fedsgd(participants, server, plan)
    np.testing.assert_allclose(outcome.transcript.fl_gradient, np.mean(grads, axis=0), rtol=1e-12, atol=1e-15)
    models = _flat(outcome.participants)
    assert all(np.array_equal(models[0], m) for m in models)
    assert outcome.server.observed == ["gradient"] * 3


def test_fedsgd_with_identical_participants_equals_standalone():
    participants, _, streams = _cohort(3, 2)
    same = tuple(ParticipantState(i, participants[0].model, participants[0].dataset) for i in range(3))
    plan = RoundPlan(streams=streams, batch_size=len(same[0].dataset))
    fed = run_round_fedsgd(same, _server(3), plan, delta=0.5)
    alone = run_round_standalone(same, _server(3), plan, delta=0.5)
    for a, b in zip(_flat(fed.participants), _flat(alone.participants)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_fflx_identical_participants_get_the_fl_gradient():
    participants, _, streams = _cohort(3, 3)
    same = tuple(ParticipantState(i, participants[0].model, participants[0].dataset) for i in range(3))
    plan = RoundPlan(streams=streams, batch_size=len(same[0].dataset))
    outcome = run_round_fflx(same, _server(3), FairnessParams(), plan)
    t = outcome.transcript
    np.testing.assert_allclose(t.phi, np.ones(3))
    np.testing.assert_array_equal(t.q, np.ones(3))
    for reward in t.rewards:
        np.testing.assert_array_equal(reward, t.fl_gradient)


@pytest.mark.parametrize("strategy", list(MaskStrategy))
def test_fflx_matches_manual_replay(strategy):
    participants, server, streams = _cohort(3, 4)
    params = FairnessParams(alpha=0.9, q_variant=QVariant.TANH_BETA, beta=2.0, mask_strategy=strategy)
    plan = RoundPlan(streams=streams, batch_size=8)
    r = initial_reputations(3)
    models = [p.model for p in participants]

    for round_index in range(2):
        normed = [normalize_gradient(p.gradient(streams, round_index, 8), params.delta) for p in participants]
        g_fl = sum(r[i] * normed[i] for i in range(3))
        phi = np.array([float(g @ g_fl) / (np.linalg.norm(g) * np.linalg.norm(g_fl)) for g in normed])
        r_tilde = params.alpha * r + (1 - params.alpha) * np.clip(phi, 0, 1)
        r = r_tilde / r_tilde.sum()
        q = np.tanh(params.beta * r) / np.tanh(params.beta * r.max())
        l = g_fl.size
        if strategy is MaskStrategy.TOPK:
            order = np.argsort(-np.abs(g_fl), kind="stable")
        else:
            order = streams.rng("masks", round_index).permutation(l)
        rewards = []
        for q_i, g in zip(q, normed):
            keep = np.zeros(l, dtype=bool)
            keep[order[:int(math.floor(q_i * l + 1e-12))]] = True
            rewards.append(np.where(keep, g_fl, g))

        outcome = run_round_fflx(participants, server, params, plan)
        t = outcome.transcript
        np.testing.assert_allclose(t.phi, phi, rtol=1e-10)
        np.testing.assert_allclose(t.r, r, rtol=1e-10)
        np.testing.assert_allclose(t.q, q, rtol=1e-10)
        for got, want in zip(t.rewards, rewards):
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-14)
        models = [apply_update(m, g, 1.0) for m, g in zip(models, rewards)]
        participants = outcome.participants
        for got, want in zip(participants, models):
            np.testing.assert_allclose(got.model.flatten(), want.flatten(), rtol=1e-10, atol=1e-14)


def test_batch_size_zero_uses_the_whole_local_dataset():
    participants, _, streams = _cohort(2, 16)
    p = participants[0]
    everything = np.arange(len(p.dataset))
    np.testing.assert_array_equal(p.draw_batch(streams, 0, 0), everything)
    np.testing.assert_array_equal(p.draw_batch(streams, 5, len(p.dataset) + 3), everything)
    np.testing.assert_array_equal(p.gradient(streams, 3, 0), p.gradient(streams, 0, 0))
    batch = p.draw_batch(streams, 0, 8)
    assert batch.size == 8 and np.unique(batch).size == 8

def test_participant_ids_must_be_ordered():
    participants, server, streams = _cohort(2, 5)
    with pytest.raises(ProtocolError):
        run_round_fedsgd(participants[::-1], server, RoundPlan(streams=streams))


# -- encrypted scheme on the mock backend ------------------------------------

# up to 20 rounds of two schemes per example
@settings(max_examples=24, deadline=None)
@given(st.sampled_from([3, 5, 10]), st.sampled_from([5, 20]), st.integers(0, 2 ** 16),
       st.sampled_from([
           FairnessParams(mask_strategy=MaskStrategy.RANDOMIZED),
           FairnessParams(mask_strategy=MaskStrategy.RANDOMIZED, q_variant=QVariant.TANH_BETA, beta=1.0),
           FairnessParams(mask_strategy=MaskStrategy.RANDOMIZED, q_variant=QVariant.GAMMA_POWER, gamma=0.2),
       ]))
def test_mock_gbppffl_is_bit_identical_to_plaintext_replay(n, rounds, seed, params):
    plain, plain_server, streams = _cohort(n, seed, per_participant=20)
    enc_server = _server(n)
    encrypted, backend = _encrypted(plain, enc_server)
    plan = RoundPlan(streams=streams, batch_size=8)

    for _ in range(rounds):
        a = run_round_fflx(plain, plain_server, params, plan)
        b = run_round_gbppffl(encrypted, enc_server, params, plan, backend)
        for name in ("phi", "r", "q"):
            assert np.array_equal(getattr(a.transcript, name), getattr(b.transcript, name)), name
        for x, y in zip(a.transcript.rewards, b.transcript.rewards):
            assert np.array_equal(x, y)
        plain, encrypted = a.participants, b.participants
    for x, y in zip(_flat(plain), _flat(encrypted)):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("params", [
    FairnessParams(q_variant=QVariant.TANH_BETA, beta=1e6),
    FairnessParams(q_variant=QVariant.GAMMA_POWER, gamma=math.inf),
])
def test_gbppffl_degenerates_to_reputation_weighted_fedsgd(params):
    plain, fed_server, streams = _cohort(4, 6)
    enc_server = _server(4)
    encrypted, backend = _encrypted(plain, enc_server)
    plan = RoundPlan(streams=streams, batch_size=8)

    for _ in range(5):
        b = run_round_gbppffl(encrypted, enc_server, params, plan, backend)
        a = run_round_fedsgd(plain, fed_server, plan, weights=b.transcript.r_prev, delta=params.delta)
        np.testing.assert_array_equal(b.transcript.q, np.ones(4))
        for reward in b.transcript.rewards:
            assert np.array_equal(reward, a.transcript.fl_gradient)
        plain, encrypted = a.participants, b.participants
    for x, y in zip(_flat(plain), _flat(encrypted)):
        assert np.array_equal(x, y)


def test_single_participant_ring():
    participants, server, streams = _cohort(1, 7)
    encrypted, backend = _encrypted(participants, server)
    plan = RoundPlan(streams=streams, batch_size=8)
    own = _normed(encrypted, plan, 0, RANDOMIZED.delta)[0]
    outcome = run_round_gbppffl(encrypted, server, RANDOMIZED, plan, backend)
    t = outcome.transcript
    assert t.phi[0] == pytest.approx(1.0, abs=1e-12)
    assert [who for who, _ in t.phi_reports[0]] == [0, 0]
    np.testing.assert_array_equal(t.r, [1.0])
    np.testing.assert_allclose(t.rewards[0], own, rtol=1e-15)


@INVARIANT
@given(st.integers(1, 6), LAYERS, st.integers(0, 2 ** 16), ENCRYPTED_PARAMS, st.integers(1, 2))
def test_encrypted_round_invariants(n, layers, seed, params, redundancy):
    participants, server, streams = _cohort(n, seed, layers=layers, per_participant=12)
    encrypted, backend = _encrypted(participants, server)
    plan = RoundPlan(streams=streams, batch_size=8, report_redundancy=redundancy)
    t = run_round_gbppffl(encrypted, server, params, plan, backend).transcript
    length = participants[0].model.size

    # depth budget: uploads at 2, FL gradient at 1, scalars and rewards at 0
    assert {c.level for c in t.ciphertexts()} <= {0, 1, 2}
    assert all(c.level == 2 and c.logical_length == length for c in t.uploads)
    assert t.encrypted["fl_gradient"].level == 1
    assert t.encrypted["s_00"].level == 0
    assert all(c.level == 0 for c in t.encrypted["s_ii"] + t.encrypted["s_i0"])
    assert all(c.level == 0 for c in t.encrypted["rewards"])
    assert t.to_record()["lowest_level"] == 0

    # the server saw ciphertexts and scalar reports only
    assert set(server.observed) == {"ciphertext", "phi_report"}
    assert server.observed.count("ciphertext") == n
    assert server.observed.count("phi_report") == 2 * redundancy * n
    assert not any(isinstance(v, SecretKey) for v in vars(server.public).values())

    # every ring neighbor reports the same exact value on the mock backend
    for subject in range(n):
        reports = t.phi_reports[subject]
        assert [who for who, _ in reports] == list(ring_neighbors(subject, n, redundancy))
        assert {value for _, value in reports} == {t.phi[subject]}
    if n == 1:
        assert t.phi[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(t.r, [1.0])

def test_disagreeing_reports_abort_the_round():
    participants, server, streams = _cohort(3, 8)
    encrypted, backend = _encrypted(participants, server)

    def tamper(round_index, reporter, subject, value):
        return value + 0.1 if (reporter, subject) == (1, 0) else value

    plan = RoundPlan(streams=streams, batch_size=8, tamper=tamper)
    with pytest.raises(PhiReportMismatchError) as caught:
        run_round_gbppffl(encrypted, server, RANDOMIZED, plan, backend)
    assert caught.value.round_index == 0
    assert caught.value.participant == 0
    assert sorted(who for who, _ in caught.value.reports) == [1, 2]


def test_server_stays_blind():
    participants, server, streams = _cohort(3, 10)
    backend = MockBackend(SMALL_RING)
    keys = backend.keygen(1)
    with pytest.raises(BlindnessViolation):
        server.public = keys
    with pytest.raises(BlindnessViolation):
        server.reputation = keys.secret_key
    with pytest.raises(BlindnessViolation):
        server.observe("gradient", np.ones(3), encrypted_only=True)
    with pytest.raises(BlindnessViolation):
        server.observe("phi_report", np.ones(3), encrypted_only=True)

    encrypted = tuple(distribute_keys(participants, server, keys))
    plan = RoundPlan(streams=streams, batch_size=8)
    run_round_gbppffl(encrypted, server, RANDOMIZED, plan, backend)
    assert set(server.observed) == {"ciphertext", "phi_report"}
    assert server.observed.count("ciphertext") == 3
    assert server.observed.count("phi_report") == 6


def test_gbppffl_needs_keys():
    participants, server, streams = _cohort(2, 11)
    with pytest.raises(ProtocolError):
        run_round_gbppffl(participants, server, RANDOMIZED, RoundPlan(streams=streams), MockBackend(SMALL_RING))


def test_masks_use_the_shared_round_permutation():
    participants, server, streams = _cohort(3, 13)
    encrypted, backend = _encrypted(participants, server)
    params = FairnessParams(q_variant=QVariant.GAMMA_POWER, gamma=0.3)
    t = run_round_gbppffl(encrypted, server, params, RoundPlan(streams=streams, batch_size=8), backend).transcript
    perm = round_permutation(streams.rng("masks", 0), participants[0].model.size)
    for mask, q_i in zip(t.masks, t.q):
        expected = build_mask(float(q_i), perm.size, MaskStrategy.RANDOMIZED, perm)
        assert np.array_equal(mask.bits, expected.bits)


# -- encrypted scheme on CKKS ------------------------------------------------

def test_ckks_round_tracks_the_plaintext_computation(ckks_test_preset):
    participants, server, streams = _cohort(3, 14, layers=(128, 20, 10), per_participant=30)
    backend, keys = ckks_test_preset
    encrypted = tuple(distribute_keys(participants, server, keys))
    plan = RoundPlan(streams=streams, batch_size=8, tol_phi=1e-4)
    normed = _normed(encrypted, plan, 0, RANDOMIZED.delta)
    g_fl = aggregate(normed, server.reputation.r)

    t = run_round_gbppffl(encrypted, server, RANDOMIZED, plan, backend).transcript
    assert g_fl.size == 2790
    decrypted = backend.decrypt(t.encrypted["fl_gradient"], keys.secret_key)
    assert np.linalg.norm(decrypted - g_fl) <= 1e-5 * np.linalg.norm(g_fl)
    for phi_i, g in zip(t.phi, normed):
        assert phi_i == pytest.approx(contribution(g, g_fl), abs=1e-4)
    q = relative_reputation(t.r, RANDOMIZED)
    for mask, reward, g in zip(t.masks, t.rewards, normed):
        np.testing.assert_allclose(reward, reward_gradient(mask, g_fl, g), atol=1e-6)
    np.testing.assert_allclose(t.q, q)


# -- transcripts -------------------------------------------------------------

def test_transcript_jsonl_roundtrip(tmp_path):
    participants, server, streams = _cohort(3, 15)
    encrypted, backend = _encrypted(participants, server)
    plan = RoundPlan(streams=streams, batch_size=8)
    path = tmp_path / "runs" / "transcript.jsonl"
    with TranscriptWriter(path) as writer:
        alone = run_round_standalone(participants, _server(3), plan, delta=0.5)
        writer.write(alone.transcript)
        writer.write(run_round_gbppffl(encrypted, server, RANDOMIZED, plan, backend).transcript)
    assert writer.rounds_written == 2

    records = read_transcript(path)
    assert [r["scheme"] for r in records] == ["standalone", "gbppffl"]
    assert records[0]["phi"] == [None, None, None]
    assert "ciphertexts" not in records[0]
    assert records[1]["phi_reports"]["0"][0][0] == 2
    assert records[1]["lowest_level"] == 0
    assert sum(records[1]["r"]) == pytest.approx(1.0)
