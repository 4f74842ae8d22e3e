"""Minimal feedforward classifier with hand-written backpropagation.

The network is a stack of dense layers with tanh hidden activations and a
softmax output trained on mean cross-entropy. All parameters live in one flat
index space [0, l) so that gradients can be normalized, encrypted, masked and
applied as plain vectors.
"""
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np


class ModelError(ValueError):
    """Raised for invalid batches, shapes or update lengths."""


@dataclass(frozen=True)
class Dataset:
    """Labelled samples for classification."""
    features: np.ndarray  # (n_samples, n_features)
    labels: np.ndarray    # (n_samples,) integer class ids
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ModelError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ModelError(
                f"{features.shape[0]} feature rows but labels have shape {labels.shape}"
            )
        if self.num_classes < 2:
            raise ModelError("a classifier needs at least 2 classes")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ModelError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Get the samples at the given indices (order preserved)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def class_set(self) -> frozenset:
        return frozenset(int(c) for c in np.unique(self.labels))


@dataclass(frozen=True)
class ParamSlot:
    """Where one weight matrix or bias vector sits in the flat vector."""
    layer: int
    kind: str  # "weight" or "bias"
    shape: Tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ModelParams:
    """Dense layer parameters; weight matrices are (fan_in, fan_out)."""
    layers: Tuple[Tuple[np.ndarray, np.ndarray], ...]

    @property
    def layout(self) -> Tuple[ParamSlot, ...]:
        slots: List[ParamSlot] = []
        offset = 0
        for index, (weight, bias) in enumerate(self.layers):
            slots.append(ParamSlot(index, "weight", weight.shape, offset))
            offset += weight.size
            slots.append(ParamSlot(index, "bias", bias.shape, offset))
            offset += bias.size
        return tuple(slots)

    @property
    def size(self) -> int:
        """The flat length l."""
        return int(sum(w.size + b.size for w, b in self.layers))

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        sizes = [self.layers[0][0].shape[0]]
        sizes.extend(w.shape[1] for w, _ in self.layers)
        return tuple(sizes)

    def flatten(self) -> np.ndarray:
        parts: List[np.ndarray] = []
        for weight, bias in self.layers:
            parts.append(weight.ravel())
            parts.append(bias.ravel())
        return np.concatenate(parts)

    def unflatten(self, vector: np.ndarray) -> "ModelParams":
        """Build params with this layout from a flat vector.

        Args:
            vector: Real vector of length l

        Returns:
            New ModelParams; flatten() of it equals vector
        """
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ModelError(f"expected a flat vector of length {self.size}, got {vector.shape}")
        layers = []
        for weight_slot, bias_slot in zip(self.layout[0::2], self.layout[1::2]):
            weight = vector[weight_slot.offset:weight_slot.offset + weight_slot.size]
            bias = vector[bias_slot.offset:bias_slot.offset + bias_slot.size]
            layers.append((weight.reshape(weight_slot.shape).copy(), bias.copy()))
        return ModelParams(tuple(layers))

    def locate(self, index: int) -> Tuple[Union[int, str], ...]:
        """Map a flat index to (layer, "weight", row, col) or (layer, "bias", i)."""
        if not 0 <= index < self.size:
            raise ModelError(f"flat index {index} outside [0, {self.size})")
        for slot in self.layout:
            if slot.offset <= index < slot.offset + slot.size:
                local = index - slot.offset
                if slot.kind == "weight":
                    row, col = divmod(local, slot.shape[1])
                    return (slot.layer, "weight", row, col)
                return (slot.layer, "bias", local)
        raise ModelError(f"flat index {index} not covered by layout")  # unreachable


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Correctly rounded dot product; the result never depends on memory layout."""
    return math.fsum(np.multiply(a, b))


def init_params(layer_sizes: Sequence[int], rng: np.random.Generator) -> ModelParams:
    """Initialize uniformly in [-s, s] with s = 1/sqrt(fan_in).

    Args:
        layer_sizes: (n_features, hidden_1, ..., n_classes)
        rng: Generator from the "init" seed stream

    Returns:
        Fresh ModelParams
    """
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise ModelError(f"invalid layer sizes {tuple(layer_sizes)}")
    layers = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        bias = rng.uniform(-bound, bound, size=fan_out)
        layers.append((weight, bias))
    return ModelParams(tuple(layers))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _forward(params: ModelParams, features: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Run the network, keeping every layer input for backprop."""
    if features.shape[1] != params.layer_sizes[0]:
        raise ModelError(
            f"model expects {params.layer_sizes[0]} features, data has {features.shape[1]}"
        )
    activations = [features]
    hidden = features
    last = len(params.layers) - 1
    for index, (weight, bias) in enumerate(params.layers):
        z = hidden @ weight + bias
        hidden = z if index == last else np.tanh(z)
        if index != last:
            activations.append(hidden)
    return activations, hidden


def class_scores(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Softmax class probabilities, one row per sample."""
    _, logits = _forward(params, np.asarray(features, dtype=np.float64))
    return _softmax(logits)


def local_gradient(params: ModelParams, data: Dataset, batch: Iterable[int]) -> np.ndarray:
    """Flattened mean cross-entropy gradient over a batch.

    Args:
        params: Current model
        data: Local dataset
        batch: Sample indices (duplicates allowed)

    Returns:
        Gradient vector of length l
    """
    idx = np.asarray(list(batch), dtype=np.int64)
    if idx.size == 0:
        raise ModelError("cannot compute a gradient over an empty batch")
    if idx.min() < 0 or idx.max() >= len(data):
        raise ModelError(f"batch indices must lie in [0, {len(data)})")
    if params.layer_sizes[-1] != data.num_classes:
        raise ModelError(
            f"model has {params.layer_sizes[-1]} outputs, data has {data.num_classes} classes"
        )

    features = data.features[idx]
    labels = data.labels[idx]
    activations, logits = _forward(params, features)

    # dL/dlogits for mean cross-entropy
    delta = _softmax(logits)
    delta[np.arange(idx.size), labels] -= 1.0
    delta /= idx.size

    grads: List[Tuple[np.ndarray, np.ndarray]] = []
    for index in range(len(params.layers) - 1, -1, -1):
        weight, _ = params.layers[index]
        layer_input = activations[index]
        grads.append((layer_input.T @ delta, delta.sum(axis=0)))
        if index > 0:
            delta = (delta @ weight.T) * (1.0 - layer_input ** 2)
    grads.reverse()
    return ModelParams(tuple(grads)).flatten()


def apply_update(params: ModelParams, update: np.ndarray, learning_rate: float) -> ModelParams:
    """Gradient-descent step: params - learning_rate * update."""
    update = np.asarray(update, dtype=np.float64)
    if update.shape != (params.size,):
        raise ModelError(f"update has shape {update.shape}, model has {params.size} parameters")
    if learning_rate < 0:
        raise ModelError(f"learning rate must be non-negative, got {learning_rate}")
    return params.unflatten(params.flatten() - learning_rate * update)


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest class index."""
    _, logits = _forward(params, np.asarray(features, dtype=np.float64))
    # np.argmax returns the first maximal index
    return np.argmax(logits, axis=1)


def evaluate_accuracy(params: ModelParams, test: Dataset) -> float:
    """Fraction of test samples classified correctly."""
    if len(test) == 0:
        raise ModelError("cannot evaluate on an empty test set")
    return float(np.mean(predict(params, test.features) == test.labels))


def gradient_check(
    params: ModelParams,
    data: Dataset,
    batch: Sequence[int],
    step: float = 1e-5,
    coordinates: Optional[Sequence[int]] = None,
) -> float:
    """Max relative error between local_gradient and central differences.

    Args:
        params: Model to probe
        data: Dataset the batch indexes into
        batch: Sample indices
        step: Finite-difference step
        coordinates: Flat indices to probe (all by default)

    Returns:
        Largest |analytic - numeric| / max(|analytic| + |numeric|, 1e-6)
    """
    analytic = local_gradient(params, data, batch)
    flat = params.flatten()
    idx = np.asarray(list(batch), dtype=np.int64)
    probe = range(params.size) if coordinates is None else coordinates

    def loss(vector: np.ndarray) -> float:
        probs = class_scores(params.unflatten(vector), data.features[idx])
        return float(-np.mean(np.log(probs[np.arange(idx.size), data.labels[idx]])))

    worst = 0.0
    for k in probe:
        bumped = flat.copy()
        bumped[k] = flat[k] + step
        upper = loss(bumped)
        bumped[k] = flat[k] - step
        lower = loss(bumped)
        numeric = (upper - lower) / (2 * step)
        denom = max(abs(analytic[k]) + abs(numeric), 1e-6)
        worst = max(worst, abs(analytic[k] - numeric) / denom)
    return worst
