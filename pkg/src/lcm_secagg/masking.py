"""Pairwise additive masks and masked gradients.

Key agreement is replaced by a trusted seed: ``derive_pair_seed`` turns one
global seed into a seed per client pair, and ``expand_mask`` stretches a seed
into a field vector with SHAKE-256. Each output symbol consumes 8 bytes of
the stream (``(q.bit_length()+7)//8 + 8`` bytes for q >= 2**31), read as a
little-endian integer and reduced mod q; the reduction bias is below 2**-32.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadPairOrder, DimensionError
from .ffield import PrimeField

_U64 = (1 << 64) - 1


def _mix(tag: bytes, *words: int) -> int:
    data = tag + b"".join(struct.pack("<Q", w & _U64) for w in words)
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


def derive_pair_seed(global_seed: int, i: int, j: int) -> int:
    if i >= j:
        raise BadPairOrder(f"pair seeds need i < j, got ({i}, {j})")
    return _mix(b"lcm/pair", global_seed, i, j)


def derive_noise_seed(global_seed: int, i: int) -> int:
    return _mix(b"lcm/noise", global_seed, i)


def expand_mask(field: PrimeField, seed: int, n: int) -> np.ndarray:
    """Deterministic length-``n`` field vector from ``seed``."""
    if n < 0:
        raise ValueError("negative length")
    key = struct.pack("<Q", seed & _U64)
    if field.dtype is not object:
        raw = hashlib.shake_256(b"lcm/expand" + key).digest(8 * n)
        words = np.frombuffer(raw, dtype="<u8")
        return (words % np.uint64(field.q)).astype(np.int64)
    width = (field.q.bit_length() + 7) // 8 + 8
    raw = hashlib.shake_256(b"lcm/expand" + key).digest(width * n)
    out = np.empty(n, dtype=object)
    out[:] = [int.from_bytes(raw[t * width:(t + 1) * width], "little") % field.q
              for t in range(n)]
    return out


@dataclass(frozen=True)
class MaskSet:
    """``pair_masks[(i, j)]`` for every pair i < j; arrays of shape ``(..., p)``."""

    E: int
    pair_masks: dict

    @classmethod
    def from_seed(cls, field: PrimeField, global_seed: int, E: int, p: int, batch=()):
        batch = tuple(batch)
        n = p * int(np.prod(batch, dtype=np.int64))
        masks = {
            (i, j): expand_mask(field, derive_pair_seed(global_seed, i, j), n).reshape(batch + (p,))
            for i in range(E) for j in range(i + 1, E)
        }
        return cls(E, masks)

    @classmethod
    def zeros(cls, field: PrimeField, E: int, p: int, batch=()):
        shape = tuple(batch) + (p,)
        return cls(E, {(i, j): field.zeros(shape) for i in range(E) for j in range(i + 1, E)})

    def involving(self, i: int) -> dict:
        return {pair: m for pair, m in self.pair_masks.items() if i in pair}


def mask_gradient(field: PrimeField, i: int, gradient, masks: MaskSet) -> np.ndarray:
    """y_i = g_i + sum_{j>i} s_ij - sum_{j<i} s_ji."""
    y = gradient
    for (a, b), m in masks.pair_masks.items():
        if np.shape(m) != np.shape(gradient):
            raise DimensionError(f"mask {a, b} has shape {np.shape(m)}, gradient {np.shape(gradient)}")
        if a == i:
            y = y + m
        elif b == i:
            y = y - m
    return y % field.q


@dataclass
class ClientSecret:
    client_id: int
    gradient: np.ndarray
    masked: np.ndarray
    noise: list  # T_h arrays, each (..., p/k)


def make_noise(field: PrimeField, global_seed: int, i: int, T_h: int, chunk_len: int, batch=()):
    batch = tuple(batch)
    size = T_h * chunk_len * int(np.prod(batch, dtype=np.int64))
    flat = expand_mask(field, derive_noise_seed(global_seed, i), size)
    arr = flat.reshape((T_h,) + batch + (chunk_len,))
    return [arr[t] for t in range(T_h)]
