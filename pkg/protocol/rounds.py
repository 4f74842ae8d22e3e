"""Round orchestration for the standalone, FedSGD, FFLX and GBPPFFL schemes.

A round is a fixed sequence of phases. Local gradients may be computed in
parallel; everything that consumes randomness or talks to the HE backend runs
in participant order, so results never depend on thread scheduling.

Participants are immutable and returned as new objects; the server is
updated in place.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from core.network import apply_update
from core.seeding import SeedStreams
from crypto.he_base import CiphertextVector, HeBackend
from fairness.masks import Mask, build_mask, reward_gradient, round_permutation
from fairness.reputation import (
    FairnessParams,
    MaskStrategy,
    advance,
    aggregate,
    contribution,
    contribution_from_scalars,
    normalize_gradient,
)

from .roles import ParticipantState, ProtocolError, ServerState, ring_neighbors
from .transcript import RoundTranscript

# (round, reporter, subject, honest phi) -> reported phi
TamperHook = Callable[[int, int, int, float], float]


class PhiReportMismatchError(ProtocolError):
    """Raised when the neighbor reports of one contribution disagree."""

    def __init__(self, round_index: int, participant: int, reports: Sequence[Tuple[int, float]]):
        self.round_index = round_index
        self.participant = participant
        self.reports = tuple(reports)
        listed = ", ".join(f"#{who}: {value:.6g}" for who, value in self.reports)
        super().__init__(
            f"round {round_index}: reports for participant {participant} disagree ({listed})"
        )


@dataclass(frozen=True)
class RoundPlan:
    """Settings shared by every round of an experiment."""
    streams: SeedStreams
    learning_rate: float = 1.0
    batch_size: int = 32  # 0: the whole local dataset
    tol_phi: float = 0.0
    report_redundancy: int = 1
    workers: int = 1
    tamper: Optional[TamperHook] = None


@dataclass(frozen=True)
class PhiVerdict:
    accepted: bool
    value: Optional[float]
    reports: Tuple[float, ...]


@dataclass(frozen=True)
class RoundOutcome:
    participants: Tuple[ParticipantState, ...]
    server: ServerState
    transcript: RoundTranscript


def verify_reports(reports: Sequence[float], tol: float) -> PhiVerdict:
    """Accept iff all reports lie within tol of each other; the value is their mean."""
    values = tuple(float(v) for v in reports)
    if len(values) < 2:
        raise ProtocolError(f"need at least two reports, got {len(values)}")
    if any(math.isnan(v) for v in values) or max(values) - min(values) > tol:
        return PhiVerdict(False, None, values)
    if max(values) == min(values):
        return PhiVerdict(True, values[0], values)
    return PhiVerdict(True, math.fsum(values) / len(values), values)


def verify_phi_reports(report_a: float, report_b: float, tol: float) -> PhiVerdict:
    """Two-report form of verify_reports."""
    return verify_reports((report_a, report_b), tol)


# -- shared phases ---------------------------------------------------------

def _local_gradients(
    participants: Sequence[ParticipantState], plan: RoundPlan, round_index: int
) -> List[np.ndarray]:
    def work(p: ParticipantState) -> np.ndarray:
        return p.gradient(plan.streams, round_index, plan.batch_size)

    if plan.workers > 1 and len(participants) > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            return list(pool.map(work, participants))
    return [work(p) for p in participants]


def _apply(
    participants: Sequence[ParticipantState], updates: Sequence[np.ndarray], learning_rate: float
) -> Tuple[ParticipantState, ...]:
    return tuple(
        replace(p, model=apply_update(p.model, update, learning_rate))
        for p, update in zip(participants, updates)
    )


def _check(participants: Sequence[ParticipantState]) -> None:
    if not participants:
        raise ProtocolError("a round needs at least one participant")
    ids = [p.id for p in participants]
    if ids != list(range(len(ids))):
        raise ProtocolError(f"participant ids must be 0..N-1 in order, got {ids}")


def _masks(
    q: np.ndarray, length: int, strategy: MaskStrategy, g_fl: Optional[np.ndarray],
    plan: RoundPlan, round_index: int,
) -> Tuple[Mask, ...]:
    if strategy is MaskStrategy.TOPK:
        context = g_fl
    else:
        context = round_permutation(plan.streams.rng("masks", round_index), length)
    return tuple(build_mask(float(q_i), length, strategy, context) for q_i in q)


# -- schemes ---------------------------------------------------------------

def run_round_standalone(
    participants: Sequence[ParticipantState], server: ServerState, plan: RoundPlan, delta: float,
) -> RoundOutcome:
    """Every participant steps along its own normalized gradient; nothing is shared."""
    _check(participants)
    round_index = server.rounds_completed
    normed = [normalize_gradient(g, delta) for g in _local_gradients(participants, plan, round_index)]
    reputation = server.reputation
    transcript = RoundTranscript(
        round=round_index, scheme="standalone", r_prev=reputation.r, r=reputation.r,
        phi=np.full(len(participants), np.nan), q=np.zeros(len(participants)),
        rewards=tuple(normed),
    )
    server.rounds_completed += 1
    return RoundOutcome(_apply(participants, normed, plan.learning_rate), server, transcript)


def run_round_fedsgd(
    participants: Sequence[ParticipantState],
    server: ServerState,
    plan: RoundPlan,
    weights: Optional[np.ndarray] = None,
    delta: Optional[float] = None,
) -> RoundOutcome:
    """Everyone applies the same aggregated gradient.

    Args:
        participants: N >= 1 participants
        server: Aggregation server
        plan: Round settings
        weights: Aggregation weights summing to 1 (default 1/N each)
        delta: Normalize local gradients to this norm first (r-weighted variant)

    Returns:
        Updated participants, the server and the transcript
    """
    _check(participants)
    round_index = server.rounds_completed
    count = len(participants)
    grads = _local_gradients(participants, plan, round_index)
    if delta is not None:
        grads = [normalize_gradient(g, delta) for g in grads]
    for g in grads:
        server.observe("gradient", g)
    w = np.full(count, 1.0 / count) if weights is None else np.asarray(weights, dtype=np.float64)
    update = aggregate(grads, w)
    transcript = RoundTranscript(
        round=round_index, scheme="fedsgd", r_prev=w, r=w, phi=np.full(count, np.nan),
        q=np.ones(count), rewards=(update,) * count, fl_gradient=update,
    )
    server.rounds_completed += 1
    return RoundOutcome(_apply(participants, [update] * count, plan.learning_rate), server, transcript)


def run_round_fflx(
    participants: Sequence[ParticipantState],
    server: ServerState,
    params: FairnessParams,
    plan: RoundPlan,
) -> RoundOutcome:
    """Plaintext fair round: aggregate, contributions, reputations, masks, rewards."""
    _check(participants)
    params.validate()
    round_index = server.rounds_completed
    normed = [normalize_gradient(g, params.delta) for g in _local_gradients(participants, plan, round_index)]
    for g in normed:
        server.observe("gradient", g)

    r_prev = server.reputation.r
    g_fl = aggregate(normed, r_prev)
    phi = np.array([contribution(g, g_fl) for g in normed])
    state = advance(server.reputation, phi, params)
    masks = _masks(state.q, g_fl.size, params.mask_strategy, g_fl, plan, round_index)
    rewards = tuple(reward_gradient(m, g_fl, g) for m, g in zip(masks, normed))

    server.reputation = state
    server.rounds_completed += 1
    logger.debug("[ROUND {}] fflx phi={} q={}", round_index, np.round(phi, 4), np.round(state.q, 4))
    transcript = RoundTranscript(
        round=round_index, scheme="fflx", r_prev=r_prev, r=state.r, phi=phi, q=state.q,
        masks=masks, rewards=rewards, fl_gradient=g_fl,
    )
    return RoundOutcome(_apply(participants, rewards, plan.learning_rate), server, transcript)


def run_round_gbppffl(
    participants: Sequence[ParticipantState],
    server: ServerState,
    params: FairnessParams,
    plan: RoundPlan,
    backend: HeBackend,
) -> RoundOutcome:
    """Encrypted fair round.

    The server only ever sees ciphertexts and phi reports. Masks always use
    the shared per-round permutation since the server cannot rank the
    entries of an encrypted FL gradient.
    """
    _check(participants)
    params.validate()
    if server.public is None:
        raise ProtocolError("server has no public key material; distribute keys first")
    if any(p.secret_key is None for p in participants):
        raise ProtocolError("every participant needs the secret key")
    round_index = server.rounds_completed
    count = len(participants)

    # (a) encrypted uploads
    normed = [normalize_gradient(g, params.delta) for g in _local_gradients(participants, plan, round_index)]
    uploads = [backend.encrypt(g, server.public.public_key) for g in normed]
    for c in uploads:
        server.observe("ciphertext", c, encrypted_only=True)

    # (b) FL gradient with plaintext reputation weights
    r_prev = server.reputation.r
    fl = backend.he_pmult(float(r_prev[0]), uploads[0])
    for weight, c in zip(r_prev[1:], uploads[1:]):
        fl = backend.he_add(fl, backend.he_pmult(float(weight), c))

    # (c) the 2N + 1 scalar products
    aligned = [backend.mod_drop(c, fl.level) for c in uploads]
    s_00 = backend.he_dot(fl, fl)
    s_ii = [backend.he_dot(c, c) for c in uploads]
    s_i0 = [backend.he_dot(a, fl) for a in aligned]

    # (d) neighbors decrypt and report, (e) server cross-checks
    phi_reports: Dict[int, Tuple[Tuple[int, float], ...]] = {}
    accepted = []
    for subject in range(count):
        reports = []
        for reporter in ring_neighbors(subject, count, plan.report_redundancy):
            value = _report_phi(participants[reporter], backend, s_i0[subject], s_ii[subject], s_00)
            if plan.tamper is not None:
                value = plan.tamper(round_index, reporter, subject, value)
            server.observe("phi_report", value, encrypted_only=True)
            reports.append((reporter, value))
        phi_reports[subject] = tuple(reports)
        verdict = verify_reports([v for _, v in reports], plan.tol_phi)
        if not verdict.accepted:
            raise PhiReportMismatchError(round_index, subject, reports)
        accepted.append(verdict.value)
    phi = np.array(accepted, dtype=np.float64)
    state = advance(server.reputation, phi, params)

    # (f) masks and encrypted rewards
    masks = _masks(state.q, fl.logical_length, MaskStrategy.RANDOMIZED, None, plan, round_index)
    encrypted_rewards = [
        backend.he_add(backend.he_pmult(m.as_float(), fl), backend.he_pmult(m.complement(), a))
        for m, a in zip(masks, aligned)
    ]

    # (g) participants decrypt their own reward
    rewards = tuple(backend.decrypt(c, p.secret_key) for c, p in zip(encrypted_rewards, participants))

    server.reputation = state
    server.rounds_completed += 1
    logger.debug("[ROUND {}] gbppffl phi={} q={}", round_index, np.round(phi, 4), np.round(state.q, 4))
    transcript = RoundTranscript(
        round=round_index, scheme="gbppffl", r_prev=r_prev, r=state.r, phi=phi, q=state.q,
        masks=masks, rewards=rewards, phi_reports=phi_reports, uploads=tuple(uploads),
        encrypted={
            "fl_gradient": fl, "s_00": s_00, "s_ii": s_ii, "s_i0": s_i0,
            "rewards": encrypted_rewards,
        },
    )
    return RoundOutcome(_apply(participants, rewards, plan.learning_rate), server, transcript)


def _report_phi(
    reporter: ParticipantState,
    backend: HeBackend,
    s_i0: CiphertextVector,
    s_ii: CiphertextVector,
    s_00: CiphertextVector,
) -> float:
    """A neighbor decrypts the three scalars and recomputes the contribution."""
    values = [float(backend.decrypt(c, reporter.secret_key)[0]) for c in (s_i0, s_ii, s_00)]
    return contribution_from_scalars(*values)
