"""Result tables and their CSV / text-table renderings."""
import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from loguru import logger

from fairness.metrics import pearson
from fairness.reputation import FairnessError

CSV_COLUMNS = ("participant_id", "standalone_acc", "scheme_acc", "final_r", "final_q")
FOOTER_KEYS = ("mean_acc", "max_acc", "pearson_rho")


class ExperimentError(RuntimeError):
    """Raised for failed experiments (with the round index) and unwritable results."""


class ResultFormat(Enum):
    CSV = "csv"
    TEXT = "text"


@dataclass(frozen=True)
class ResultRow:
    participant_id: int
    standalone_acc: float
    scheme_acc: float
    final_r: float
    final_q: float

    def __post_init__(self):
        for name in ("standalone_acc", "scheme_acc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ExperimentError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ResultTable:
    """Per-participant outcome of one experiment."""
    rows: tuple
    scheme: str
    label: str = ""

    @property
    def scheme_accuracies(self) -> np.ndarray:
        return np.array([row.scheme_acc for row in self.rows])

    @property
    def standalone_accuracies(self) -> np.ndarray:
        return np.array([row.standalone_acc for row in self.rows])

    @property
    def mean_acc(self) -> float:
        return float(np.mean(self.scheme_accuracies))

    @property
    def max_acc(self) -> float:
        return float(np.max(self.scheme_accuracies))

    @property
    def pearson_rho(self) -> float:
        """Correlation of standalone and scheme accuracies; NaN when undefined."""
        try:
            return pearson(self.standalone_accuracies, self.scheme_accuracies)
        except FairnessError as exc:
            logger.warning("[RESULTS] pearson_rho undefined for {}: {}", self.scheme, exc)
            return math.nan


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.6f}"


def render_csv(table: ResultTable) -> str:
    """Data rows then one `key,value` footer line per summary statistic."""
    if not table.rows:
        raise ExperimentError("cannot emit an empty result table")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table.rows:
        writer.writerow([
            row.participant_id, _fmt(row.standalone_acc), _fmt(row.scheme_acc),
            _fmt(row.final_r), _fmt(row.final_q),
        ])
    for key, value in zip(FOOTER_KEYS, (table.mean_acc, table.max_acc, table.pearson_rho)):
        writer.writerow([key, _fmt(value)])
    return buffer.getvalue()


def render_text(tables: Union[ResultTable, Sequence[ResultTable]]) -> str:
    """Accuracy percentages as "mean (max)" per table, with rho."""
    if isinstance(tables, ResultTable):
        tables = [tables]
    if not tables or any(not t.rows for t in tables):
        raise ExperimentError("cannot emit an empty result table")
    header = f"{'run':<22}{'standalone':<18}{'scheme':<18}{'rho':>8}"
    lines = [header, "-" * len(header)]
    for table in tables:
        name = table.label or table.scheme
        standalone = table.standalone_accuracies * 100
        scheme = table.scheme_accuracies * 100
        rho = table.pearson_rho
        lines.append(
            f"{name:<22}"
            f"{f'{standalone.mean():.2f} ({standalone.max():.2f})':<18}"
            f"{f'{scheme.mean():.2f} ({scheme.max():.2f})':<18}"
            f"{'n/a' if math.isnan(rho) else f'{rho:.4f}':>8}"
        )
    return "\n".join(lines) + "\n"


def emit_results(
    table: Union[ResultTable, Sequence[ResultTable]],
    path: Union[str, Path],
    fmt: ResultFormat = ResultFormat.CSV,
) -> Path:
    """Write a table (CSV) or tables (text) to a file.

    Returns:
        The written path
    """
    if fmt is ResultFormat.CSV:
        if not isinstance(table, ResultTable):
            raise ExperimentError("CSV output takes exactly one table")
        text = render_csv(table)
    else:
        text = render_text(table)
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ExperimentError(f"cannot write results to {target}: {exc}") from exc
    return target
