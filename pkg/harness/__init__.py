"""Experiment harness: configuration, runs, sweeps, result files and timings."""
from .config import (
    BACKEND_NAMES,
    ConfigError,
    ExperimentConfig,
    Scheme,
    apply_overrides,
    load_config,
    log_level,
    parse,
    save_config,
    serialize,
)
from .results import (
    CSV_COLUMNS,
    ExperimentError,
    ResultFormat,
    ResultRow,
    ResultTable,
    emit_results,
    render_csv,
    render_text,
)
from .experiment import (
    ExperimentSetup,
    TrainingRun,
    prepare,
    run_experiment,
    start,
    step,
    sweep,
    sweep_config,
    train,
)
from .bench import BenchResult, bench_backend, format_bench, run_bench

__all__ = [
    'BACKEND_NAMES', 'ConfigError', 'ExperimentConfig', 'Scheme', 'apply_overrides', 'load_config',
    'log_level', 'parse', 'save_config', 'serialize', 'CSV_COLUMNS', 'ExperimentError',
    'ResultFormat', 'ResultRow', 'ResultTable', 'emit_results', 'render_csv', 'render_text',
    'ExperimentSetup', 'TrainingRun', 'prepare', 'run_experiment', 'start', 'step', 'sweep',
    'sweep_config', 'train', 'BenchResult', 'bench_backend', 'format_bench', 'run_bench',
]
