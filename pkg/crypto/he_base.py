"""Backend-independent homomorphic-encryption interface.

Every backend packs a real vector into ceil(length / slot_count) chunks and
applies the operations chunk by chunk. Level, length and scale checks happen
here, before any chunk is touched, so an operation that would exceed the
multiplicative depth is rejected instead of silently corrupting the result.
"""
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .he_params import HeError, HeParams, UnsupportedParametersError

Plaintext = Union[float, np.ndarray]

# Relative scale difference tolerated when adding ciphertexts
SCALE_TOLERANCE = 1e-9


class LevelExhaustedError(HeError):
    """Raised when an operation needs more levels than the ciphertext has left."""


class OperandMismatchError(HeError):
    """Raised for length, level, scale or backend mismatches between operands."""


@dataclass(frozen=True)
class CiphertextVector:
    """A chunked encryption of a real vector.

    chunks are opaque per backend; level is the number of multiplications
    still available; scale is the CKKS scaling factor (1.0 for the mock).
    """
    chunks: Tuple[Any, ...]
    logical_length: int
    level: int
    scale: float
    backend: str
    slot_count: int

    def __post_init__(self):
        expected = max(1, -(-self.logical_length // self.slot_count))
        if len(self.chunks) != expected:
            raise OperandMismatchError(
                f"{len(self.chunks)} chunks cannot hold {self.logical_length} values "
                f"at {self.slot_count} slots per chunk"
            )

    def describe(self) -> Dict[str, Any]:
        """Summary safe to log or record in a transcript."""
        return {
            "chunks": len(self.chunks),
            "length": self.logical_length,
            "level": self.level,
            "backend": self.backend,
        }


@dataclass(frozen=True)
class SecretKey:
    backend: str
    data: Any = field(repr=False)


@dataclass(frozen=True)
class PublicKey:
    backend: str
    data: Any = field(repr=False)


@dataclass(frozen=True)
class PublicMaterial:
    """Everything a party without the secret key needs to evaluate circuits."""
    public_key: PublicKey
    relinearization_key: Any = field(repr=False)
    rotation_keys: Dict[int, Any] = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class KeyMaterial:
    """Full key set produced by one trusted keygen."""
    public_key: PublicKey
    secret_key: SecretKey
    relinearization_key: Any = field(repr=False)
    rotation_keys: Dict[int, Any] = field(repr=False, default_factory=dict)

    def public_material(self) -> PublicMaterial:
        """Drop the secret key (what the aggregation server receives)."""
        return PublicMaterial(self.public_key, self.relinearization_key, self.rotation_keys)


class HeBackend(ABC):
    """Base class for the mock and CKKS backends.

    A backend is bound to public material (set by keygen or bind()); the
    evaluation operations use it for relinearization and rotations. Decrypt
    always takes the secret key explicitly.
    """

    NAME = ""

    def __init__(self, params: HeParams, workers: int = 1):
        params.validate()
        if workers < 1:
            raise UnsupportedParametersError(f"workers must be >= 1, got {workers}")
        self.params = params
        self.workers = workers
        self._public: Optional[PublicMaterial] = None
        self._entropy: Optional[np.random.SeedSequence] = None
        self._entropy_lock = threading.Lock()

    # -- keys ------------------------------------------------------------

    def keygen(self, seed: int) -> KeyMaterial:
        """Generate keys, bind their public part and seed encryption randomness.

        Args:
            seed: Seed for key and encryption randomness

        Returns:
            KeyMaterial holding pk, sk, relinearization and rotation keys
        """
        sequence = np.random.SeedSequence(seed)
        key_seq, encrypt_seq = sequence.spawn(2)
        keys = self._generate_keys(np.random.default_rng(key_seq))
        self._entropy = encrypt_seq
        self.bind(keys.public_material())
        return keys

    def bind(self, public: PublicMaterial) -> None:
        self._check_backend(public.public_key.backend)
        self._public = public
        if self._entropy is None:
            self._entropy = np.random.SeedSequence()

    @property
    def public(self) -> PublicMaterial:
        if self._public is None:
            raise HeError(f"{self.NAME} backend has no keys; call keygen() or bind() first")
        return self._public

    # -- operations ------------------------------------------------------

    def encrypt(self, values: np.ndarray, public_key: Optional[PublicKey] = None) -> CiphertextVector:
        """Encrypt a real vector at the top level, zero-padding the last chunk."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise OperandMismatchError(f"can only encrypt non-empty 1-D vectors, got {values.shape}")
        if values.size > self.params.max_length:
            raise OperandMismatchError(
                f"vector of length {values.size} exceeds {self.params.max_length} "
                f"({self.params.max_chunks} chunks of {self.params.slot_count})"
            )
        key = public_key if public_key is not None else self.public.public_key
        self._check_backend(key.backend)
        pieces = self._split(values)
        seeds = self._spawn(len(pieces))
        chunks = self._map(lambda piece, seq: self._encrypt_chunk(piece, key, seq), pieces, seeds)
        return self._wrap(chunks, values.size, self.params.multiplicative_depth, self._fresh_scale())

    def decrypt(self, ciphertext: CiphertextVector, secret_key: SecretKey) -> np.ndarray:
        """Decrypt to a real vector of the ciphertext's logical length.

        A wrong key is not detected; it yields garbage.
        """
        self._check_backend(ciphertext.backend)
        self._check_backend(secret_key.backend)
        parts = self._map(
            lambda chunk: self._decrypt_chunk(chunk, secret_key, ciphertext.level, ciphertext.scale),
            ciphertext.chunks,
        )
        return np.concatenate(parts)[:ciphertext.logical_length]

    def he_add(self, a: CiphertextVector, b: CiphertextVector) -> CiphertextVector:
        self._check_pair(a, b, same_scale=True)
        chunks = self._map(lambda x, y: self._add_chunk(x, y, a.level), a.chunks, b.chunks)
        return self._wrap(chunks, a.logical_length, a.level, a.scale)

    def he_sub(self, a: CiphertextVector, b: CiphertextVector) -> CiphertextVector:
        self._check_pair(a, b, same_scale=True)
        chunks = self._map(lambda x, y: self._sub_chunk(x, y, a.level), a.chunks, b.chunks)
        return self._wrap(chunks, a.logical_length, a.level, a.scale)

    def he_pmult(self, plain: Plaintext, c: CiphertextVector) -> CiphertextVector:
        """Multiply by a plaintext scalar or vector; consumes one level, keeps the scale."""
        self._check_backend(c.backend)
        self._require_level(c, "he_pmult")
        if np.ndim(plain) == 0:
            pieces: List[Any] = [float(plain)] * len(c.chunks)
        else:
            vector = np.asarray(plain, dtype=np.float64)
            if vector.shape != (c.logical_length,):
                raise OperandMismatchError(
                    f"plaintext of shape {vector.shape} vs ciphertext length {c.logical_length}"
                )
            pieces = self._split(vector)
        chunks = self._map(lambda p, x: self._pmult_chunk(p, x, c.level), pieces, c.chunks)
        return self._wrap(chunks, c.logical_length, c.level - 1, c.scale)

    def he_cmult(self, a: CiphertextVector, b: CiphertextVector) -> CiphertextVector:
        """Elementwise ciphertext product, relinearized and rescaled."""
        self._check_pair(a, b, same_scale=False)
        self._require_level(a, "he_cmult")
        chunks = self._map(lambda x, y: self._cmult_chunk(x, y, a.level), a.chunks, b.chunks)
        return self._wrap(chunks, a.logical_length, a.level - 1, self._product_scale(a, b))

    def he_dot(self, a: CiphertextVector, b: CiphertextVector) -> CiphertextVector:
        """Scalar product in slot 0, summed over all chunks (logical length 1)."""
        self._check_pair(a, b, same_scale=False)
        self._require_level(a, "he_dot")
        chunk = self._dot(a, b)
        return self._wrap([chunk], 1, a.level - 1, self._product_scale(a, b))

    def mod_drop(self, c: CiphertextVector, level: int) -> CiphertextVector:
        """Lower a ciphertext to `level` without changing its scale."""
        self._check_backend(c.backend)
        if not 0 <= level <= c.level:
            raise LevelExhaustedError(f"cannot move a level-{c.level} ciphertext to level {level}")
        if level == c.level:
            return c
        chunks = [self._drop_chunk(chunk, c.level, level) for chunk in c.chunks]
        return self._wrap(chunks, c.logical_length, level, c.scale)

    # -- backend primitives ----------------------------------------------

    @abstractmethod
    def _generate_keys(self, rng: np.random.Generator) -> KeyMaterial:
        pass

    @abstractmethod
    def _fresh_scale(self) -> float:
        pass

    @abstractmethod
    def _encrypt_chunk(self, values: np.ndarray, key: PublicKey, seq: np.random.SeedSequence) -> Any:
        pass

    @abstractmethod
    def _decrypt_chunk(self, chunk: Any, key: SecretKey, level: int, scale: float) -> np.ndarray:
        pass

    @abstractmethod
    def _add_chunk(self, a: Any, b: Any, level: int) -> Any:
        pass

    @abstractmethod
    def _sub_chunk(self, a: Any, b: Any, level: int) -> Any:
        pass

    @abstractmethod
    def _pmult_chunk(self, plain: Plaintext, chunk: Any, level: int) -> Any:
        pass

    @abstractmethod
    def _cmult_chunk(self, a: Any, b: Any, level: int) -> Any:
        pass

    @abstractmethod
    def _dot(self, a: CiphertextVector, b: CiphertextVector) -> Any:
        pass

    @abstractmethod
    def _drop_chunk(self, chunk: Any, level: int, target: int) -> Any:
        pass

    def _product_scale(self, a: CiphertextVector, b: CiphertextVector) -> float:
        return a.scale * b.scale

    # -- helpers ---------------------------------------------------------

    def _split(self, values: np.ndarray) -> List[np.ndarray]:
        slots = self.params.slot_count
        count = self.params.chunk_count(values.size)
        pieces = []
        for index in range(count):
            piece = np.zeros(slots, dtype=np.float64)
            part = values[index * slots:(index + 1) * slots]
            piece[:part.size] = part
            pieces.append(piece)
        return pieces

    def _spawn(self, count: int) -> List[np.random.SeedSequence]:
        with self._entropy_lock:
            if self._entropy is None:
                self._entropy = np.random.SeedSequence()
            return self._entropy.spawn(count)

    def _map(self, fn: Callable[..., Any], *iterables: Sequence[Any]) -> List[Any]:
        """Apply fn chunk-wise; output order never depends on scheduling."""
        if self.workers == 1 or len(iterables[0]) < 2:
            return list(map(fn, *iterables))
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, *iterables))

    def _wrap(self, chunks: Sequence[Any], length: int, level: int, scale: float) -> CiphertextVector:
        return CiphertextVector(
            chunks=tuple(chunks),
            logical_length=length,
            level=level,
            scale=scale,
            backend=self.NAME,
            slot_count=self.params.slot_count,
        )

    def _check_backend(self, name: str) -> None:
        if name != self.NAME:
            raise OperandMismatchError(f"{name} object handed to the {self.NAME} backend")

    def _require_level(self, c: CiphertextVector, operation: str) -> None:
        if c.level < 1:
            raise LevelExhaustedError(f"{operation} needs level >= 1, ciphertext is at level {c.level}")

    def _check_pair(self, a: CiphertextVector, b: CiphertextVector, same_scale: bool) -> None:
        self._check_backend(a.backend)
        self._check_backend(b.backend)
        if a.logical_length != b.logical_length:
            raise OperandMismatchError(f"lengths differ: {a.logical_length} vs {b.logical_length}")
        if a.level != b.level:
            raise OperandMismatchError(f"levels differ: {a.level} vs {b.level}; use mod_drop()")
        if same_scale and abs(a.scale - b.scale) > SCALE_TOLERANCE * max(a.scale, b.scale):
            raise OperandMismatchError(f"scales differ: {a.scale} vs {b.scale}")
