"""Fair federated learning simulator - command-line entry point.

Subcommands:
- run:   train the standalone baseline and one scheme, write the result table
- sweep: repeat a run over several beta or gamma values on shared data
- bench: time the HE primitives and one encrypted round per backend and preset

Examples:
    python main.py run --scheme gbppffl --backend mock --gamma 0.5 --output results.csv
    python main.py sweep --parameter beta --values 0.5 1.0 1.5 2.0 --format text
    python main.py bench --backends ckks --presets test
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from loguru import logger

from core.datasets import DataError, SplitRegime
from core.network import ModelError
from crypto import PRESET_NAMES, PRESETS, HeError
from fairness.reputation import FairnessError, MaskStrategy, QVariant
from harness import (
    BACKEND_NAMES,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    ResultFormat,
    ResultTable,
    Scheme,
    emit_results,
    format_bench,
    load_config,
    log_level,
    render_csv,
    render_text,
    run_bench,
    run_experiment,
    sweep,
)
from protocol import ProtocolError

# Failures reported as "[FAIL] ..." with exit code 1
FAILURES = (ConfigError, ExperimentError, HeError, FairnessError, ProtocolError, DataError, ModelError)

# flag dest -> dotted config key
FLAG_KEYS = {
    "alpha": "fairness.alpha",
    "beta": "fairness.beta",
    "gamma": "fairness.gamma",
    "delta": "fairness.delta",
    "q_variant": "fairness.q_variant",
    "mask_strategy": "fairness.mask_strategy",
    "rounds": "training.rounds",
    "learning_rate": "training.learning_rate",
    "workers": "training.workers",
    "participants": "split.participants",
    "split": "split.regime",
    "seed": "seed",
    "scheme": "scheme",
    "backend": "he.backend",
    "he_preset": "he.preset",
    "output": "output",
    "transcript": "transcript",
    "data": "data_path",
}


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML experiment file (default: $FAIRFL_CONFIG)")
    parser.add_argument("--scheme", choices=[s.value for s in Scheme])
    parser.add_argument("--backend", choices=BACKEND_NAMES)
    parser.add_argument("--he-preset", dest="he_preset", choices=PRESET_NAMES)
    parser.add_argument("--split", choices=[r.value for r in SplitRegime])
    parser.add_argument("--participants", type=int)
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha", type=float, help="reputation moving-average weight")
    parser.add_argument("--beta", type=float, help="tanh_beta sharpness (implies --q-variant tanh_beta)")
    parser.add_argument("--gamma", type=float, help="gamma_power exponent (implies --q-variant gamma_power)")
    parser.add_argument("--delta", type=float, help="norm of every normalized local gradient")
    parser.add_argument("--q-variant", dest="q_variant", choices=[v.value for v in QVariant])
    parser.add_argument("--mask-strategy", dest="mask_strategy", choices=[m.value for m in MaskStrategy])
    parser.add_argument("--lr", dest="learning_rate", type=float)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--data", help="columnar dataset file instead of synthetic data")
    parser.add_argument("--output", help="result file (default: $FAIRFL_OUTPUT, else stdout)")
    parser.add_argument("--transcript", help="JSON-lines round transcript (default: $FAIRFL_TRANSCRIPT)")
    parser.add_argument("--format", choices=[f.value for f in ResultFormat], default=ResultFormat.CSV.value)
    parser.add_argument("--progress", action="store_true", help="show a progress bar over rounds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairfl", description="Simulate fair, privacy-preserving federated learning."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="train one scheme against the standalone baseline")
    _add_experiment_flags(run)

    sweep_cmd = commands.add_parser("sweep", help="repeat a run over beta or gamma values")
    _add_experiment_flags(sweep_cmd)
    sweep_cmd.add_argument("--parameter", choices=("beta", "gamma"), required=True)
    sweep_cmd.add_argument("--values", type=float, nargs="+", required=True)
    sweep_cmd.add_argument("--sweep-workers", dest="sweep_workers", type=int, default=1,
                           help="experiments run concurrently")

    bench = commands.add_parser("bench", help="time HE operations and one encrypted round")
    _add_experiment_flags(bench)
    bench.add_argument("--backends", nargs="+", choices=BACKEND_NAMES, default=list(BACKEND_NAMES))
    bench.add_argument("--presets", nargs="+", choices=PRESET_NAMES, default=sorted(PRESETS, reverse=True))
    bench.add_argument("--repeats", type=int, default=3)
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted-key overrides for every flag that was given.

    --beta or --gamma without --q-variant selects the matching variant and
    clears the other parameter.
    """
    overrides = {
        key: getattr(args, dest)
        for dest, key in FLAG_KEYS.items()
        if getattr(args, dest, None) is not None
    }
    if args.q_variant is None:
        if args.beta is not None and args.gamma is None:
            overrides.update({"fairness.q_variant": QVariant.TANH_BETA.value, "fairness.gamma": None})
        elif args.gamma is not None and args.beta is None:
            overrides.update({"fairness.q_variant": QVariant.GAMMA_POWER.value, "fairness.beta": None})
    return overrides


def _emit(tables: Sequence[ResultTable], output: Optional[str], fmt: ResultFormat) -> List[str]:
    """Write tables; CSV holds one table per file, so sweeps get a file per value."""
    if output is None:
        text = render_csv(tables[0]) if fmt is ResultFormat.CSV and len(tables) == 1 else render_text(tables)
        sys.stdout.write(text)
        return ["stdout"]
    if fmt is ResultFormat.TEXT:
        return [str(emit_results(list(tables), output, fmt))]
    if len(tables) == 1:
        return [str(emit_results(tables[0], output, fmt))]
    target = Path(output)
    return [
        str(emit_results(table, target.with_name(f"{target.stem}_{table.label}{target.suffix}"), fmt))
        for table in tables
    ]


def run_command(args: argparse.Namespace) -> int:
    config: ExperimentConfig = load_config(args.config, flag_overrides(args))
    fmt = ResultFormat(args.format)

    if args.command == "bench":
        results = run_bench(config, args.backends, args.presets, args.repeats)
        sys.stdout.write(format_bench(results))
        return 0

    if args.command == "sweep":
        tables = sweep(config, args.parameter, args.values, workers=args.sweep_workers, progress=args.progress)
    else:
        tables = [run_experiment(config, progress=args.progress)]

    for written in _emit(tables, config.output, fmt):
        print(f"[OK] Results written to {written}", file=sys.stderr)
    for table in tables:
        print(
            f"[OK] {table.label or table.scheme}: mean {table.mean_acc:.4f}, "
            f"max {table.max_acc:.4f}, rho {table.pearson_rho:.4f}",
            file=sys.stderr,
        )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.remove()
    logger.add(sys.stderr, level=log_level())
    try:
        return run_command(args)
    except FAILURES as exc:
        print(f"[FAIL] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
