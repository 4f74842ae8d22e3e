"""Parameter sets and the RNS modulus chain for the HE backends."""
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

from sympy import isprime


class HeError(ValueError):
    """Base class for homomorphic-encryption failures."""


class UnsupportedParametersError(HeError):
    """Raised for parameter sets the backends cannot realise."""


@dataclass(frozen=True)
class HeParams:
    """Leveled CKKS parameters.

    The first modulus and every scaling factor are realised as products of
    NTT-friendly primes of at most max_prime_bits bits, so residue products
    stay below 2^62 and fit int64 arithmetic.
    """
    ring_dimension: int = 2 ** 12
    scaling_bits: int = 40          # log2 of the scaling factor
    first_modulus_bits: int = 60
    multiplicative_depth: int = 2
    max_chunks: int = 64            # chunk budget per CiphertextVector
    max_prime_bits: int = 30
    noise_sigma: float = 3.2

    MIN_RING = 2 ** 4
    MAX_RING = 2 ** 16

    @property
    def slot_count(self) -> int:
        return self.ring_dimension // 2

    @property
    def scaling_factor(self) -> float:
        return float(2 ** self.scaling_bits)

    @property
    def max_length(self) -> int:
        return self.slot_count * self.max_chunks

    def chunk_count(self, length: int) -> int:
        return max(1, math.ceil(length / self.slot_count))

    def validate(self) -> None:
        n = self.ring_dimension
        if n & (n - 1) or not self.MIN_RING <= n <= self.MAX_RING:
            raise UnsupportedParametersError(
                f"ring dimension must be a power of two in [{self.MIN_RING}, {self.MAX_RING}], got {n}"
            )
        if self.multiplicative_depth < 2:
            raise UnsupportedParametersError("the round circuit needs multiplicative depth >= 2")
        if not 2 <= self.max_prime_bits <= 30:
            raise UnsupportedParametersError("RNS primes must have at most 30 bits")
        min_bits = int(math.log2(2 * n)) + 1
        for label, bits in (("scaling", self.scaling_bits), ("first modulus", self.first_modulus_bits)):
            parts = math.ceil(bits / self.max_prime_bits)
            if bits // parts < min_bits:
                raise UnsupportedParametersError(
                    f"{label} bits {bits} too small for primes = 1 mod {2 * n}"
                )
        if self.first_modulus_bits <= self.scaling_bits:
            raise UnsupportedParametersError("first modulus must exceed the scaling factor")
        if self.max_chunks < 1:
            raise UnsupportedParametersError("chunk budget must be positive")


PRESETS: Dict[str, HeParams] = {
    "test": HeParams(ring_dimension=2 ** 12, scaling_bits=40, first_modulus_bits=60),
    "paper": HeParams(ring_dimension=2 ** 14, scaling_bits=50, first_modulus_bits=60),
}

PRESET_ALIASES: Dict[str, str] = {"full": "paper"}

# Every name preset() accepts
PRESET_NAMES: Tuple[str, ...] = tuple(sorted(PRESETS)) + tuple(sorted(PRESET_ALIASES))


def preset(name: str) -> HeParams:
    """Look up a named parameter preset ("test" or "paper"; "full" aliases "paper")."""
    try:
        return PRESETS[PRESET_ALIASES.get(name, name)]
    except KeyError:
        raise UnsupportedParametersError(
            f"unknown HE preset '{name}', choose one of {list(PRESET_NAMES)}"
        ) from None


def _split_bits(bits: int, max_prime_bits: int) -> List[int]:
    parts = math.ceil(bits / max_prime_bits)
    base, extra = divmod(bits, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _find_prime(bits: int, step: int, above: bool, taken: set) -> int:
    """Nearest unused prime = 1 mod step on one side of 2^bits."""
    candidate = (1 << bits) + 1
    direction = 1 if above else -1
    if not above:
        candidate -= step
    while candidate > step:
        if candidate not in taken and isprime(candidate):
            return candidate
        candidate += direction * step
    raise UnsupportedParametersError(f"no {bits}-bit prime = 1 mod {step}")


def modulus_chain(params: HeParams) -> Tuple[Tuple[int, ...], ...]:
    """Prime groups of the modulus chain.

    Group 0 realises the first modulus; group k (1..depth) is dropped by the
    rescale that takes a ciphertext from level k to level k-1. Within a group
    primes alternate below/above the target power of two so their product
    stays close to it.

    Returns:
        Tuple of prime groups, index = level
    """
    params.validate()
    step = 2 * params.ring_dimension
    taken: set = set()
    groups = []
    targets = [params.first_modulus_bits] + [params.scaling_bits] * params.multiplicative_depth
    for target in targets:
        group = []
        for position, bits in enumerate(_split_bits(target, params.max_prime_bits)):
            above = position % 2 == 1
            prime = _find_prime(bits, step, above, taken)
            taken.add(prime)
            group.append(prime)
        groups.append(tuple(group))
    return tuple(groups)
