"""Leveled RNS-CKKS backend.

Ciphertexts are pairs (c0, c1) of coefficient-form RNS polynomials with
c0 + c1*s = m + e. Keys live in NTT form at the top level; key switching uses
one digit per RNS prime, so a key generated at the top level serves every
lower level by dropping rows.
"""
import math
from typing import Any, Dict, List, Tuple

import numpy as np
from loguru import logger

from .ckks_encoder import CkksEncoder
from .ckks_ring import RnsContext
from .he_base import (
    CiphertextVector,
    HeBackend,
    KeyMaterial,
    Plaintext,
    PublicKey,
    SecretKey,
)
from .he_params import HeParams

Poly = np.ndarray
Chunk = Tuple[Poly, Poly]
SwitchingKey = List[Tuple[Poly, Poly]]


class CkksBackend(HeBackend):
    """Approximate arithmetic over Z_Q[X]/(X^N + 1) with rescaling."""

    NAME = "ckks"

    def __init__(self, params: HeParams, workers: int = 1):
        super().__init__(params, workers)
        self.ring = RnsContext(params)
        self.encoder = CkksEncoder(params.ring_dimension)
        self.rotation_steps = tuple(2 ** i for i in range(int(math.log2(params.slot_count))))
        logger.debug(
            "[HE] ckks N={} primes={} levels={}",
            params.ring_dimension, [p.bit_length() for p in self.ring.primes], self.ring.top_level,
        )

    # -- keys ------------------------------------------------------------

    def _generate_keys(self, rng: np.random.Generator) -> KeyMaterial:
        ring = self.ring
        top = ring.top_level
        secret = ring.ternary(rng)
        s_poly = ring.from_signed(secret, top)
        s_ntt = ring.ntt(s_poly)

        # a is sampled directly in the NTT domain
        a = ring.uniform(top, rng)
        e = ring.ntt(ring.from_signed(ring.gaussian(rng), top))
        b = ring.sub(e, ring.pointwise(a, s_ntt))

        relin = self._switching_key(ring.pointwise(s_ntt, s_ntt), s_ntt, rng)
        rotations: Dict[int, SwitchingKey] = {}
        for step in self.rotation_steps:
            galois = self.encoder.rotation_galois(step)
            rotated = ring.ntt(ring.automorphism(s_poly, galois))
            rotations[step] = self._switching_key(rotated, s_ntt, rng)

        return KeyMaterial(
            public_key=PublicKey(self.NAME, (b, a)),
            secret_key=SecretKey(self.NAME, s_ntt),
            relinearization_key=relin,
            rotation_keys=rotations,
        )

    def _switching_key(self, target: Poly, s_ntt: Poly, rng: np.random.Generator) -> SwitchingKey:
        """Encryptions of g_i * target under s; g_i is 1 at prime i and 0 elsewhere."""
        ring = self.ring
        top = ring.top_level
        key = []
        for row, q in enumerate(ring.primes):
            a = ring.uniform(top, rng)
            e = ring.ntt(ring.from_signed(ring.gaussian(rng), top))
            b = ring.sub(e, ring.pointwise(a, s_ntt))
            b[row] = (b[row] + target[row]) % q
            key.append((b, a))
        return key

    def _key_switch(self, d: Poly, key: SwitchingKey) -> Chunk:
        ring = self.ring
        rows = d.shape[0]
        acc0 = np.zeros_like(d)
        acc1 = np.zeros_like(d)
        for index, digit in enumerate(ring.decompose(d)):
            digit_ntt = ring.ntt(digit)
            b, a = key[index]
            acc0 = ring.add(acc0, ring.pointwise(digit_ntt, b[:rows]))
            acc1 = ring.add(acc1, ring.pointwise(digit_ntt, a[:rows]))
        return ring.intt(acc0), ring.intt(acc1)

    # -- primitives ------------------------------------------------------

    def _fresh_scale(self) -> float:
        return self.params.scaling_factor

    def _encrypt_chunk(self, values: np.ndarray, key: PublicKey, seq: np.random.SeedSequence) -> Chunk:
        ring = self.ring
        rng = np.random.default_rng(seq)
        top = ring.top_level
        b, a = key.data
        message = self.encoder.encode(values, self.params.scaling_factor)
        u = ring.ntt(ring.from_signed(ring.ternary(rng), top))
        c0 = ring.add(ring.intt(ring.pointwise(b, u)), ring.from_signed(ring.gaussian(rng) + message, top))
        c1 = ring.add(ring.intt(ring.pointwise(a, u)), ring.from_signed(ring.gaussian(rng), top))
        return c0, c1

    def _decrypt_chunk(self, chunk: Chunk, key: SecretKey, level: int, scale: float) -> np.ndarray:
        ring = self.ring
        c0, c1 = chunk
        s_ntt = key.data[:c0.shape[0]]
        message = ring.add(c0, ring.intt(ring.pointwise(ring.ntt(c1), s_ntt)))
        coeffs = ring.to_centered_ints(message, level).astype(np.float64) / scale
        return self.encoder.decode(coeffs, self.params.slot_count)

    def _add_chunk(self, a: Chunk, b: Chunk, level: int) -> Chunk:
        return self.ring.add(a[0], b[0]), self.ring.add(a[1], b[1])

    def _sub_chunk(self, a: Chunk, b: Chunk, level: int) -> Chunk:
        return self.ring.sub(a[0], b[0]), self.ring.sub(a[1], b[1])

    def _pmult_chunk(self, plain: Plaintext, chunk: Chunk, level: int) -> Chunk:
        # Encoding at the dropped-prime product keeps the ciphertext scale unchanged
        ring = self.ring
        factor = ring.group_product(level)
        c0, c1 = chunk
        if np.ndim(plain) == 0:
            constant = int(round(float(plain) * factor))
            c0, c1 = ring.mul_scalar(c0, constant), ring.mul_scalar(c1, constant)
        else:
            plain_ntt = ring.ntt(ring.from_signed(self.encoder.encode(plain, factor), level))
            c0 = ring.intt(ring.pointwise(ring.ntt(c0), plain_ntt))
            c1 = ring.intt(ring.pointwise(ring.ntt(c1), plain_ntt))
        return ring.rescale(c0, level), ring.rescale(c1, level)

    def _tensor(self, a: Chunk, b: Chunk) -> Tuple[Poly, Poly, Poly]:
        ring = self.ring
        a0, a1 = ring.ntt(a[0]), ring.ntt(a[1])
        b0, b1 = ring.ntt(b[0]), ring.ntt(b[1])
        d0 = ring.intt(ring.pointwise(a0, b0))
        d1 = ring.intt(ring.add(ring.pointwise(a0, b1), ring.pointwise(a1, b0)))
        d2 = ring.intt(ring.pointwise(a1, b1))
        return d0, d1, d2

    def _relinearize(self, d0: Poly, d1: Poly, d2: Poly) -> Chunk:
        ks0, ks1 = self._key_switch(d2, self.public.relinearization_key)
        return self.ring.add(d0, ks0), self.ring.add(d1, ks1)

    def _rotate(self, chunk: Chunk, step: int) -> Chunk:
        """Rotate slots left by step (a power of two with a rotation key)."""
        ring = self.ring
        galois = self.encoder.rotation_galois(step)
        c0 = ring.automorphism(chunk[0], galois)
        c1 = ring.automorphism(chunk[1], galois)
        ks0, ks1 = self._key_switch(c1, self.public.rotation_keys[step])
        return ring.add(c0, ks0), ks1

    def _rotate_and_sum(self, chunk: Chunk) -> Chunk:
        for step in self.rotation_steps:
            chunk = self._add_chunk(chunk, self._rotate(chunk, step), 0)
        return chunk

    def _cmult_chunk(self, a: Chunk, b: Chunk, level: int) -> Chunk:
        c0, c1 = self._relinearize(*self._tensor(a, b))
        return self.ring.rescale(c0, level), self.ring.rescale(c1, level)

    def _dot(self, a: CiphertextVector, b: CiphertextVector) -> Chunk:
        summed = self._map(
            lambda x, y: self._rotate_and_sum(self._relinearize(*self._tensor(x, y))),
            a.chunks, b.chunks,
        )
        total = summed[0]
        for part in summed[1:]:
            total = self._add_chunk(total, part, a.level)
        return self.ring.rescale(total[0], a.level), self.ring.rescale(total[1], a.level)

    def _product_scale(self, a: CiphertextVector, b: CiphertextVector) -> float:
        return a.scale * b.scale / float(self.ring.group_product(a.level))

    def _drop_chunk(self, chunk: Chunk, level: int, target: int) -> Chunk:
        return self.ring.drop_to(chunk[0], target), self.ring.drop_to(chunk[1], target)
