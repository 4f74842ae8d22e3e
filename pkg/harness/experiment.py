"""Experiment runner: data, training loops for every scheme, result tables, sweeps."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from loguru import logger
from tqdm import tqdm

from core.datasets import DataError, Partition, generate_dataset, load_columnar, partition
from core.network import ModelError, ModelParams, evaluate_accuracy, init_params
from core.seeding import SeedStreams
from crypto import HeBackend, HeError, make_backend
from fairness.reputation import (
    FairnessError,
    QVariant,
    ReputationState,
    initial_reputations,
)
from protocol import (
    ParticipantState,
    ProtocolError,
    RoundOutcome,
    RoundPlan,
    RoundTranscript,
    ServerState,
    TranscriptWriter,
    distribute_keys,
    run_round_fedsgd,
    run_round_fflx,
    run_round_gbppffl,
    run_round_standalone,
)

from .config import ConfigError, ExperimentConfig, Scheme, apply_overrides
from .results import ExperimentError, ResultRow, ResultTable

SWEEP_VARIANTS = {"beta": QVariant.TANH_BETA, "gamma": QVariant.GAMMA_POWER}


@dataclass(frozen=True)
class ExperimentSetup:
    """Data and initial model shared by every scheme of one experiment."""
    partition: Partition
    initial_model: ModelParams
    streams: SeedStreams


@dataclass
class TrainingRun:
    scheme: Scheme
    participants: Tuple[ParticipantState, ...]
    server: ServerState
    transcripts: List[RoundTranscript] = field(default_factory=list)

    def accuracies(self, setup: ExperimentSetup) -> List[float]:
        return [evaluate_accuracy(p.model, setup.partition.test) for p in self.participants]


def prepare(config: ExperimentConfig) -> ExperimentSetup:
    """Generate or load the pool, split it and draw the common initial model."""
    streams = SeedStreams(config.seed)
    split = replace(config.split, seed=streams.seed("split"))
    try:
        if config.data_path:
            pool = load_columnar(config.data_path, num_classes=split.num_classes)
        else:
            pool = generate_dataset(
                split.num_classes,
                split.pool_size(),
                config.num_features,
                streams.seed("data"),
                separation=config.separation,
            )
        parts = partition(pool, split)
        model = init_params((pool.num_features, config.hidden_units, split.num_classes), streams.rng("init"))
    except (DataError, ModelError) as exc:
        raise ExperimentError(f"cannot prepare data: {exc}") from exc
    return ExperimentSetup(parts, model, streams)


def start(
    config: ExperimentConfig,
    scheme: Scheme,
    setup: ExperimentSetup,
    backend: Optional[HeBackend] = None,
) -> Tuple[TrainingRun, RoundPlan, Optional[HeBackend]]:
    """Fresh participants and server for one scheme, with keys distributed for GBPPFFL."""
    streams = setup.streams
    local = setup.partition.local
    participants = tuple(ParticipantState(i, setup.initial_model, data) for i, data in enumerate(local))
    r0 = initial_reputations(len(local), config.fairness.initial_reputation, [len(d) for d in local])
    server = ServerState(ReputationState.start(r0))
    plan = RoundPlan(
        streams=streams,
        learning_rate=config.learning_rate,
        batch_size=config.local_batch_size,
        tol_phi=config.phi_tolerance,
        report_redundancy=config.report_redundancy,
        workers=config.workers,
    )

    if scheme is Scheme.GBPPFFL:
        if backend is None:
            backend = make_backend(config.backend, config.he_params(), config.workers, config.mock_noise)
        keys = backend.keygen(streams.seed("he"))
        participants = tuple(distribute_keys(participants, server, keys))
        logger.info("[HE] {} backend ready ({} slots per chunk)", backend.NAME, backend.params.slot_count)
    return TrainingRun(scheme, participants, server), plan, backend


def train(
    config: ExperimentConfig,
    scheme: Scheme,
    setup: ExperimentSetup,
    writer: Optional[TranscriptWriter] = None,
    progress: bool = False,
    keep_transcripts: bool = False,
    backend: Optional[HeBackend] = None,
) -> TrainingRun:
    """Run `config.rounds` rounds of one scheme from the shared setup.

    Args:
        config: Experiment settings
        scheme: Which round function to use
        setup: Shared data and initial model
        writer: Optional JSON-lines transcript sink
        progress: Show a tqdm bar over rounds
        keep_transcripts: Keep every RoundTranscript on the returned run
        backend: HE backend for GBPPFFL (built from the config when omitted)

    Returns:
        Final participants and server state
    """
    run, plan, backend = start(config, scheme, setup, backend)
    rounds = tqdm(range(config.rounds), desc=scheme.value, disable=not progress, leave=False)
    for round_index in rounds:
        try:
            outcome = step(run, config, plan, backend)
        except (ProtocolError, FairnessError, HeError, ModelError) as exc:
            raise ExperimentError(f"{scheme.value} round {round_index}: {exc}") from exc
        run.participants = outcome.participants
        if writer is not None:
            writer.write(outcome.transcript)
        if keep_transcripts:
            run.transcripts.append(outcome.transcript)
    return run


def step(
    run: TrainingRun,
    config: ExperimentConfig,
    plan: RoundPlan,
    backend: Optional[HeBackend] = None,
) -> RoundOutcome:
    """One round of run.scheme; the server is updated in place."""
    scheme = run.scheme
    if scheme is Scheme.STANDALONE:
        return run_round_standalone(run.participants, run.server, plan, config.fairness.delta)
    if scheme is Scheme.FEDSGD:
        return run_round_fedsgd(run.participants, run.server, plan)
    if scheme is Scheme.FFLX:
        return run_round_fflx(run.participants, run.server, config.fairness, plan)
    return run_round_gbppffl(run.participants, run.server, config.fairness, plan, backend)


def run_experiment(
    config: ExperimentConfig,
    progress: bool = False,
    label: str = "",
    setup: Optional[ExperimentSetup] = None,
) -> ResultTable:
    """Train the standalone baseline and the configured scheme, then tabulate.

    Args:
        config: Validated experiment settings
        progress: Show tqdm bars
        label: Name for the table (sweeps use "gamma=0.1" etc.)
        setup: Reuse prepared data (must come from the same seed and split)

    Returns:
        One row per participant
    """
    try:
        config.validate()
    except ConfigError as exc:
        raise ExperimentError(f"invalid config: {exc}") from exc
    setup = setup or prepare(config)
    logger.info(
        "[DATA] {} participants, local sizes {}",
        len(setup.partition.local), [len(d) for d in setup.partition.local],
    )

    baseline = train(config, Scheme.STANDALONE, setup, progress=progress)
    standalone_acc = baseline.accuracies(setup)
    if config.scheme is Scheme.STANDALONE:
        run = baseline
    elif config.transcript:
        with TranscriptWriter(config.transcript) as writer:
            run = train(config, config.scheme, setup, writer=writer, progress=progress)
    else:
        run = train(config, config.scheme, setup, progress=progress)
    scheme_acc = standalone_acc if run is baseline else run.accuracies(setup)

    reputation = run.server.reputation
    rows = tuple(
        ResultRow(
            participant_id=i,
            standalone_acc=standalone_acc[i],
            scheme_acc=scheme_acc[i],
            final_r=float(reputation.r[i]),
            final_q=float(reputation.q[i]),
        )
        for i in range(len(scheme_acc))
    )
    table = ResultTable(rows, config.scheme.value, label)
    logger.info(
        "[RESULT] {} mean={:.4f} max={:.4f}", label or config.scheme.value, table.mean_acc, table.max_acc
    )
    return table


def sweep_config(template: ExperimentConfig, parameter: str, value: Any) -> ExperimentConfig:
    """Template with `parameter` set to value and the matching q variant selected."""
    if parameter not in SWEEP_VARIANTS:
        raise ExperimentError(f"can only sweep {sorted(SWEEP_VARIANTS)}, got '{parameter}'")
    variant = SWEEP_VARIANTS[parameter]
    current = template.fairness.q_variant
    if current not in (variant, QVariant.PARAMETER_FREE):
        raise ExperimentError(f"cannot sweep {parameter} with q_variant {current.value}")
    other = "gamma" if parameter == "beta" else "beta"
    overrides: Dict[str, Any] = {
        f"fairness.{parameter}": value,
        f"fairness.{other}": None,
        "fairness.q_variant": variant.value,
        "transcript": None,
    }
    return apply_overrides(template, overrides)


def sweep(
    template: ExperimentConfig,
    parameter: str,
    values: Sequence[float],
    workers: int = 1,
    progress: bool = False,
) -> List[ResultTable]:
    """One result table per value, all sharing the template's data and seed.

    Args:
        template: Base config
        parameter: "beta" or "gamma"
        values: Values to try, in output order
        workers: Experiments run concurrently
        progress: Show tqdm bars

    Returns:
        Tables labelled "<parameter>=<value>"
    """
    if not values:
        raise ExperimentError("sweep needs at least one value")
    configs = [sweep_config(template, parameter, v) for v in values]
    setup = prepare(template)
    labels = [f"{parameter}={v:g}" for v in values]
    logger.info("[SWEEP] {} over {}", parameter, list(values))

    def work(item: Tuple[ExperimentConfig, str]) -> ResultTable:
        config, label = item
        return run_experiment(config, progress=progress and workers == 1, label=label, setup=setup)

    if workers > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, zip(configs, labels)))
    return [work(item) for item in zip(configs, labels)]
