"""Residue-number-system polynomial arithmetic in Z_Q[X]/(X^N + 1).

A polynomial at level l is an int64 array of shape (k_l, N): one row of
residues per prime of the first l+1 modulus groups. Every residue is kept in
[0, q); primes are below 2^31 so products of two residues fit in int64.
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .he_params import HeParams, modulus_chain


def _primitive_root_2n(n: int, q: int) -> int:
    """Find psi with psi^N = -1 mod q (a primitive 2N-th root of unity)."""
    exponent = (q - 1) // (2 * n)
    for base in range(2, q):
        psi = pow(base, exponent, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError(f"no primitive {2 * n}-th root of unity mod {q}")


def _bit_reverse(n: int) -> np.ndarray:
    width = n.bit_length() - 1
    indices = np.arange(n)
    reversed_ = np.zeros(n, dtype=np.int64)
    for bit in range(width):
        reversed_ |= ((indices >> bit) & 1) << (width - 1 - bit)
    return reversed_


def _powers(root: int, count: int, q: int) -> np.ndarray:
    out = np.empty(count, dtype=np.int64)
    value = 1
    for i in range(count):
        out[i] = value
        value = value * root % q
    return out


class NttTables:
    """Negacyclic NTT for one prime.

    Forward: twist by psi^i, then an iterative Cooley-Tukey pass over
    bit-reversed input; each stage is vectorized over all butterflies.
    """

    def __init__(self, n: int, q: int):
        self.n = n
        self.q = q
        psi = _primitive_root_2n(n, q)
        psi_inv = pow(psi, -1, q)
        omega = psi * psi % q
        omega_inv = pow(omega, -1, q)
        self.psi_pows = _powers(psi, n, q)
        self.psi_inv_pows = _powers(psi_inv, n, q)
        self.n_inv = pow(n, -1, q)
        self.bitrev = _bit_reverse(n)
        self.stages: List[Tuple[int, np.ndarray]] = []
        self.inv_stages: List[Tuple[int, np.ndarray]] = []
        half = 1
        while half < n:
            root = pow(omega, n // (2 * half), q)
            root_inv = pow(omega_inv, n // (2 * half), q)
            self.stages.append((half, _powers(root, half, q)))
            self.inv_stages.append((half, _powers(root_inv, half, q)))
            half *= 2

    def _transform(self, a: np.ndarray, stages: Sequence[Tuple[int, np.ndarray]]) -> np.ndarray:
        q, n = self.q, self.n
        a = a[..., self.bitrev]
        lead = a.shape[:-1]
        for half, twiddles in stages:
            blocks = a.reshape(lead + (n // (2 * half), 2, half))
            upper = blocks[..., 0, :]
            lower = blocks[..., 1, :] * twiddles % q
            a = np.stack(((upper + lower) % q, (upper - lower) % q), axis=-2).reshape(lead + (n,))
        return a

    def forward(self, a: np.ndarray) -> np.ndarray:
        return self._transform(a * self.psi_pows % self.q, self.stages)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        out = self._transform(a, self.inv_stages) * self.n_inv % self.q
        return out * self.psi_inv_pows % self.q


class RnsContext:
    """Modulus chain, NTT tables and level bookkeeping for one parameter set."""

    def __init__(self, params: HeParams):
        self.params = params
        self.n = params.ring_dimension
        self.groups = modulus_chain(params)
        self.primes: Tuple[int, ...] = tuple(p for group in self.groups for p in group)
        self.tables = [NttTables(self.n, q) for q in self.primes]
        self._moduli = np.array(self.primes, dtype=np.int64)[:, None]
        self._galois_cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def top_level(self) -> int:
        return len(self.groups) - 1

    def prime_count(self, level: int) -> int:
        return sum(len(group) for group in self.groups[:level + 1])

    def moduli(self, level: int) -> np.ndarray:
        """Column vector (k_l, 1) of the primes active at a level."""
        return self._moduli[:self.prime_count(level)]

    def modulus(self, level: int) -> int:
        """Product Q_l of the active primes."""
        product = 1
        for q in self.primes[:self.prime_count(level)]:
            product *= q
        return product

    def group_product(self, level: int) -> int:
        """Product of the primes dropped by the rescale from this level."""
        product = 1
        for q in self.groups[level]:
            product *= q
        return product

    # -- conversions -----------------------------------------------------

    def from_signed(self, coeffs: np.ndarray, level: int) -> np.ndarray:
        """Reduce small signed int64 coefficients (shape (N,)) into every active prime."""
        return np.asarray(coeffs, dtype=np.int64)[None, :] % self.moduli(level)

    def to_centered_ints(self, poly: np.ndarray, level: int) -> np.ndarray:
        """CRT-reconstruct coefficients as Python ints centered in (-Q/2, Q/2]."""
        count = self.prime_count(level)
        modulus = self.modulus(level)
        total = np.zeros(self.n, dtype=object)
        for row, q in enumerate(self.primes[:count]):
            partial = modulus // q
            basis = partial * pow(partial, -1, q) % modulus
            total = total + poly[row].astype(object) * basis
        total = total % modulus
        return np.where(total > modulus // 2, total - modulus, total)

    # -- ring arithmetic -------------------------------------------------

    def ntt(self, poly: np.ndarray) -> np.ndarray:
        return np.stack([self.tables[row].forward(poly[row]) for row in range(poly.shape[0])])

    def intt(self, poly: np.ndarray) -> np.ndarray:
        return np.stack([self.tables[row].inverse(poly[row]) for row in range(poly.shape[0])])

    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (a + b) % self._moduli[:a.shape[0]]

    def sub(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (a - b) % self._moduli[:a.shape[0]]

    def pointwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * b % self._moduli[:a.shape[0]]

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.intt(self.pointwise(self.ntt(a), self.ntt(b)))

    def mul_scalar(self, a: np.ndarray, value: int) -> np.ndarray:
        """Multiply by a (possibly huge or negative) integer constant."""
        residues = np.array([value % q for q in self.primes[:a.shape[0]]], dtype=np.int64)[:, None]
        return a * residues % self._moduli[:a.shape[0]]

    def drop_to(self, poly: np.ndarray, level: int) -> np.ndarray:
        """Forget the primes above a level (no division)."""
        return poly[:self.prime_count(level)].copy()

    def rescale(self, poly: np.ndarray, level: int) -> np.ndarray:
        """Divide by the group product of `level` with rounding, one prime at a time."""
        out = poly
        for _ in self.groups[level]:
            last_row = out.shape[0] - 1
            q_last = self.primes[last_row]
            last = out[last_row]
            centered = np.where(last > q_last // 2, last - q_last, last)
            rest = out[:last_row]
            moduli = self._moduli[:last_row]
            inverses = np.array(
                [pow(q_last, -1, q) for q in self.primes[:last_row]], dtype=np.int64
            )[:, None]
            out = (rest - centered[None, :] % moduli) % moduli * inverses % moduli
        return out

    def automorphism(self, poly: np.ndarray, galois: int) -> np.ndarray:
        """Apply X -> X^galois (galois odd) in coefficient form."""
        if galois not in self._galois_cache:
            indices = np.arange(self.n) * galois % (2 * self.n)
            self._galois_cache[galois] = (indices % self.n, indices >= self.n)
        target, negate = self._galois_cache[galois]
        moduli = self._moduli[:poly.shape[0]]
        values = np.where(negate[None, :], (moduli - poly) % moduli, poly)
        out = np.empty_like(poly)
        out[:, target] = values
        return out

    def decompose(self, poly: np.ndarray) -> List[np.ndarray]:
        """RNS gadget digits: centered residue row i lifted into every active prime."""
        moduli = self._moduli[:poly.shape[0]]
        digits = []
        for row in range(poly.shape[0]):
            q = self.primes[row]
            centered = np.where(poly[row] > q // 2, poly[row] - q, poly[row])
            digits.append(centered[None, :] % moduli)
        return digits

    # -- sampling --------------------------------------------------------

    def uniform(self, level: int, rng: np.random.Generator) -> np.ndarray:
        return np.stack([rng.integers(0, q, size=self.n, dtype=np.int64)
                         for q in self.primes[:self.prime_count(level)]])

    def ternary(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(-1, 2, size=self.n, dtype=np.int64)

    def gaussian(self, rng: np.random.Generator) -> np.ndarray:
        return np.rint(rng.normal(0.0, self.params.noise_sigma, size=self.n)).astype(np.int64)
