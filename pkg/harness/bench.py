"""Wall-clock timings of the HE primitives and of one encrypted round.

Reports only; nothing here asserts a time budget.
"""
import statistics
import time
from dataclasses import dataclass, replace
from typing import Callable, List, Sequence

import numpy as np
from loguru import logger

from crypto import make_backend, preset

from .config import ExperimentConfig, Scheme
from .experiment import prepare, start, step

OPERATIONS = ("keygen", "encrypt", "add", "pmult", "cmult", "dot", "decrypt", "round")


@dataclass(frozen=True)
class BenchResult:
    backend: str
    preset: str
    operation: str
    seconds: float
    repeats: int


def _timed(action: Callable[[], object], repeats: int) -> float:
    """Median wall-clock seconds over `repeats` calls."""
    samples = []
    for _ in range(repeats):
        began = time.perf_counter()
        action()
        samples.append(time.perf_counter() - began)
    return statistics.median(samples)


def bench_backend(
    config: ExperimentConfig, backend_name: str, preset_name: str, repeats: int = 3
) -> List[BenchResult]:
    """Time every primitive on model-sized vectors plus one full GBPPFFL round.

    Args:
        config: Supplies model shape, seed, participants and workers
        backend_name: "mock" or "ckks"
        preset_name: HE parameter preset
        repeats: Calls per primitive (the round runs once)

    Returns:
        One BenchResult per entry of OPERATIONS
    """
    config = replace(config, scheme=Scheme.GBPPFFL, backend=backend_name, he_preset=preset_name)
    config.validate()
    backend = make_backend(backend_name, preset(preset_name), config.workers, config.mock_noise)
    length = sum(a * b + b for a, b in zip(config.layer_sizes[:-1], config.layer_sizes[1:]))
    rng = np.random.default_rng(config.seed)
    x = rng.uniform(-1.0, 1.0, length)
    y = rng.uniform(-1.0, 1.0, length)

    timings = {"keygen": _timed(lambda: backend.keygen(config.seed), repeats)}
    keys = backend.keygen(config.seed)
    cx = backend.encrypt(x)
    cy = backend.encrypt(y)
    timings["encrypt"] = _timed(lambda: backend.encrypt(x), repeats)
    timings["add"] = _timed(lambda: backend.he_add(cx, cy), repeats)
    timings["pmult"] = _timed(lambda: backend.he_pmult(0.5, cx), repeats)
    timings["cmult"] = _timed(lambda: backend.he_cmult(cx, cy), repeats)
    timings["dot"] = _timed(lambda: backend.he_dot(cx, cy), repeats)
    timings["decrypt"] = _timed(lambda: backend.decrypt(cx, keys.secret_key), repeats)

    run, plan, backend = start(config, Scheme.GBPPFFL, prepare(config), backend)
    timings["round"] = _timed(lambda: step(run, config, plan, backend), 1)

    results = [
        BenchResult(backend_name, preset_name, op, timings[op], 1 if op == "round" else repeats)
        for op in OPERATIONS
    ]
    logger.info(
        "[BENCH] {}/{} l={} round={:.3f}s", backend_name, preset_name, length, timings["round"]
    )
    return results


def run_bench(
    config: ExperimentConfig,
    backends: Sequence[str] = ("mock", "ckks"),
    presets: Sequence[str] = ("test", "paper"),
    repeats: int = 3,
) -> List[BenchResult]:
    results: List[BenchResult] = []
    for backend_name in backends:
        for preset_name in presets:
            results.extend(bench_backend(config, backend_name, preset_name, repeats))
    return results


def format_bench(results: Sequence[BenchResult]) -> str:
    """One `[OK]` line per timing."""
    return "\n".join(
        f"[OK] {r.backend}/{r.preset:<6} {r.operation:<8} {r.seconds * 1000:10.2f} ms"
        for r in results
    ) + "\n"
