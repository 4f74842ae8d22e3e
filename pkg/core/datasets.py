"""Synthetic classification data and the three partitioning regimes.

Local datasets are carved out of one labelled pool:
- iid_uniform: every participant gets the same number of samples
- iid_powerlaw: sizes follow i^(-exponent), so data quality differs by volume
- niid_classes: every participant only sees a scheduled subset of the classes

An independent test set containing every class is held out first.
"""
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .network import Dataset, ModelError


# Calibrated so that N=10 reproduces a 71:1120 smallest-to-largest size ratio
DEFAULT_POWERLAW_EXPONENT = math.log(1120 / 71) / math.log(10)


class DataError(ValueError):
    """Raised for invalid generator sizes, infeasible splits and bad files."""


class SplitRegime(Enum):
    """How local datasets are drawn from the pool."""
    IID_UNIFORM = "iid_uniform"
    IID_POWERLAW = "iid_powerlaw"
    NIID_CLASSES = "niid_classes"


@dataclass(frozen=True)
class SplitSpec:
    """Partitioning recipe."""
    regime: SplitRegime = SplitRegime.IID_POWERLAW
    participants: int = 5
    total_samples: int = 3000  # across all local datasets
    num_classes: int = 10
    test_samples: int = 2000
    powerlaw_exponent: float = DEFAULT_POWERLAW_EXPONENT
    classes_per_participant: Optional[Tuple[int, ...]] = None  # niid; None = ramp 1..C
    seed: int = 0

    def validate(self) -> None:
        if self.participants < 1:
            raise DataError("need at least one participant")
        if self.total_samples < self.participants:
            raise DataError(
                f"{self.total_samples} samples cannot give {self.participants} participants one each"
            )
        if self.num_classes < 2:
            raise DataError("need at least two classes")
        if self.test_samples < self.num_classes:
            raise DataError("the test set must be able to contain every class")
        if self.powerlaw_exponent < 0:
            raise DataError("power-law exponent must be non-negative")
        schedule = self.class_schedule()
        if len(schedule) != self.participants:
            raise DataError(
                f"class schedule has {len(schedule)} entries for {self.participants} participants"
            )
        if min(schedule) < 1 or max(schedule) > self.num_classes:
            raise DataError(f"classes per participant must lie in [1, {self.num_classes}]")
        if self.regime is SplitRegime.IID_POWERLAW and self.powerlaw_exponent > 0:
            sizes = self.local_sizes()
            if any(a <= b for a, b in zip(sizes, sizes[1:])):
                raise DataError(
                    f"{self.total_samples} samples are too few for a strictly decreasing "
                    f"power law over {self.participants} participants (sizes {sizes})"
                )

    def class_schedule(self) -> Tuple[int, ...]:
        """Classes available to each participant (NIID); linear ramp from 1 to C by default."""
        if self.classes_per_participant is not None:
            return tuple(int(k) for k in self.classes_per_participant)
        if self.participants == 1:
            return (self.num_classes,)
        step = (self.num_classes - 1) / (self.participants - 1)
        return tuple(int(round(1 + i * step)) for i in range(self.participants))

    def local_sizes(self) -> List[int]:
        """Planned local dataset sizes; they sum to at most total_samples."""
        n = self.participants
        if self.regime is SplitRegime.IID_POWERLAW:
            weights = np.arange(1, n + 1, dtype=np.float64) ** (-self.powerlaw_exponent)
            weights /= weights.sum()
            sizes = np.maximum(np.floor(weights * self.total_samples).astype(int), 1)
            # flooring can only shrink, but the max(…, 1) can overshoot for huge exponents
            while sizes.sum() > self.total_samples:
                sizes[int(np.argmax(sizes))] -= 1
            return [int(s) for s in sizes]
        return [self.total_samples // n] * n

    def pool_size(self) -> int:
        """Samples a generated pool needs so that the split is always feasible.

        NIID participants may all draw from the same class, so every class
        keeps total_samples in reserve after the test set is taken.
        """
        if self.regime is SplitRegime.NIID_CLASSES:
            return self.test_samples + self.num_classes * (self.total_samples + 1)
        return self.total_samples + self.test_samples


@dataclass(frozen=True)
class Partition:
    """Local datasets plus the held-out test set."""
    local: Tuple[Dataset, ...]
    test: Dataset
    local_indices: Tuple[np.ndarray, ...]  # indices into the source pool
    test_indices: np.ndarray


def generate_dataset(
    num_classes: int,
    num_samples: int,
    num_features: int,
    seed: int,
    separation: float = 0.15,
) -> Dataset:
    """Gaussian class clusters.

    Centroids are drawn from N(0, separation^2 I) and every sample adds unit
    Gaussian noise, so separation=0 makes classes indistinguishable and large
    separations make them linearly separable.

    Args:
        num_classes: C >= 2
        num_samples: n >= C; labels are balanced within +-1
        num_features: d >= 1
        seed: Generator seed
        separation: Centroid spread relative to the unit noise

    Returns:
        Dataset with shuffled sample order
    """
    if num_classes < 2:
        raise DataError("need at least two classes")
    if num_samples < num_classes:
        raise DataError(f"{num_samples} samples cannot cover {num_classes} classes")
    if num_features < 1:
        raise DataError("need at least one feature")
    if separation < 0:
        raise DataError("separation must be non-negative")

    rng = np.random.default_rng(seed)
    centroids = rng.normal(0.0, separation, size=(num_classes, num_features))
    labels = rng.permutation(np.arange(num_samples) % num_classes)
    features = centroids[labels] + rng.normal(0.0, 1.0, size=(num_samples, num_features))
    return Dataset(features, labels, num_classes)


def partition(data: Dataset, spec: SplitSpec) -> Partition:
    """Split a pool into local datasets and a test set.

    Args:
        data: Source pool
        spec: Partitioning recipe

    Returns:
        Partition whose local and test index sets are pairwise disjoint
    """
    spec.validate()
    if data.num_classes != spec.num_classes:
        raise DataError(f"pool has {data.num_classes} classes, split expects {spec.num_classes}")
    if spec.total_samples + spec.test_samples > len(data):
        raise DataError(
            f"split needs {spec.total_samples + spec.test_samples} samples, pool has {len(data)}"
        )

    rng = np.random.default_rng(spec.seed)
    pools = [list(rng.permutation(np.flatnonzero(data.labels == c))) for c in range(spec.num_classes)]
    if any(not pool for pool in pools):
        raise DataError("every class must be present in the pool")

    # Round-robin over classes keeps the test set class-complete
    test_indices: List[int] = []
    cursor = 0
    while len(test_indices) < spec.test_samples:
        pool = pools[cursor % spec.num_classes]
        if pool:
            test_indices.append(int(pool.pop()))
        elif not any(pools):
            raise DataError("pool exhausted while drawing the test set")
        cursor += 1

    sizes = spec.local_sizes()
    if spec.regime is SplitRegime.NIID_CLASSES:
        local_indices = _draw_niid(pools, sizes, spec, rng)
    else:
        remaining = rng.permutation(np.array([i for pool in pools for i in pool], dtype=np.int64))
        local_indices = []
        start = 0
        for size in sizes:
            local_indices.append(remaining[start:start + size])
            start += size

    local = tuple(data.subset(idx) for idx in local_indices)
    test = data.subset(test_indices)
    logger.debug(
        "[DATA] {} split: sizes={} test={}", spec.regime.value, [len(d) for d in local], len(test)
    )
    return Partition(
        local=local,
        test=test,
        local_indices=tuple(np.asarray(idx, dtype=np.int64) for idx in local_indices),
        test_indices=np.asarray(test_indices, dtype=np.int64),
    )


def _draw_niid(
    pools: List[List[int]],
    sizes: Sequence[int],
    spec: SplitSpec,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Give participant i samples from its scheduled class subset only."""
    local_indices = []
    for size, count in zip(sizes, spec.class_schedule()):
        classes = sorted(int(c) for c in rng.choice(spec.num_classes, size=count, replace=False))
        drawn: List[int] = []
        cursor = 0
        while len(drawn) < size:
            live = [c for c in classes if pools[c]]
            if not live:
                raise DataError(
                    f"classes {classes} ran out of samples; lower total_samples or enlarge the pool"
                )
            drawn.append(int(pools[live[cursor % len(live)]].pop()))
            cursor += 1
        local_indices.append(np.array(drawn, dtype=np.int64))
    return local_indices


def load_columnar(path: Union[str, Path], num_classes: Optional[int] = None) -> Dataset:
    """Read a dataset with one sample per line: label, then features.

    Fields may be separated by commas or whitespace; blank lines and lines
    starting with '#' are skipped.

    Args:
        path: Text file
        num_classes: Class count; inferred as max(label) + 1 when omitted

    Returns:
        Dataset
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.replace(",", " ").split()
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
        if len(rows[-1]) < 2:
            raise DataError(f"{path}:{line_no}: need a label and at least one feature")
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"{path}:{line_no}: expected {len(rows[0])} fields")
    if not rows:
        raise DataError(f"{path}: no samples")

    table = np.asarray(rows, dtype=np.float64)
    labels = table[:, 0]
    if not np.all(labels == np.round(labels)) or labels.min() < 0:
        raise DataError(f"{path}: labels must be non-negative integers")
    labels = labels.astype(np.int64)
    classes = num_classes if num_classes is not None else int(labels.max()) + 1
    try:
        return Dataset(table[:, 1:], labels, max(classes, 2))
    except ModelError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_columnar(data: Dataset, path: Union[str, Path]) -> None:
    """Write a dataset in the format read by load_columnar."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# label then {data.num_features} features\n")
        for label, row in zip(data.labels, data.features):
            handle.write(" ".join([str(int(label))] + [repr(float(x)) for x in row]) + "\n")
