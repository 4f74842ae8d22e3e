"""Canonical-embedding encoder for real slot vectors.

Slot j of a polynomial m(X) in R[X]/(X^N + 1) is m(zeta^(5^j)) with
zeta = exp(i*pi/N). Rotating slots left by r is the automorphism X -> X^(5^r).
"""
import numpy as np

from .he_params import HeError

# Largest coefficient magnitude accepted before rounding to int64
COEFF_LIMIT = float(2 ** 62)


class CkksEncoder:
    """Encode/decode real vectors of up to N/2 values via one length-N FFT."""

    def __init__(self, ring_dimension: int):
        self.n = ring_dimension
        self.slots = ring_dimension // 2
        two_n = 2 * ring_dimension
        galois = np.empty(self.slots, dtype=np.int64)
        value = 1
        for j in range(self.slots):
            galois[j] = value
            value = value * 5 % two_n
        self.galois = galois
        self.slot_index = (galois - 1) // 2
        self.conj_index = (two_n - galois - 1) // 2
        self.twist = np.exp(1j * np.pi * np.arange(self.n) / self.n)

    def rotation_galois(self, steps: int) -> int:
        """Galois element 5^steps mod 2N (left rotation by steps)."""
        return pow(5, steps, 2 * self.n)

    def encode(self, values: np.ndarray, scale: float) -> np.ndarray:
        """Scaled, rounded coefficients (signed int64, length N).

        Args:
            values: Real vector of length <= N/2; missing slots are zero
            scale: Scaling factor applied before rounding

        Returns:
            Coefficient vector whose slots decode to values * scale
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size > self.slots:
            raise HeError(f"cannot encode {values.shape} into {self.slots} slots")
        evaluations = np.zeros(self.n, dtype=np.complex128)
        evaluations[self.slot_index[:values.size]] = values
        evaluations[self.conj_index[:values.size]] = values
        coeffs = np.real(np.conj(self.twist) * np.fft.fft(evaluations) / self.n) * float(scale)
        if coeffs.size and np.max(np.abs(coeffs)) >= COEFF_LIMIT:
            raise HeError("encoded coefficients overflow int64; lower the scale or the values")
        return np.rint(coeffs).astype(np.int64)

    def decode(self, coeffs: np.ndarray, length: int) -> np.ndarray:
        """Read the first `length` slots of an unscaled real coefficient vector."""
        evaluations = np.fft.ifft(np.asarray(coeffs, dtype=np.float64) * self.twist) * self.n
        return np.real(evaluations[self.slot_index[:length]])
