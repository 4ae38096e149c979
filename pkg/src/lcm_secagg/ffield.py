"""Prime field arithmetic on scalars and numpy vectors.

Vectors are numpy arrays whose entries are canonical residues in ``[0, q)``.
The symbol axis is always the last one, so any leading axes act as a batch.
For ``q < 2**31`` arrays use ``int64`` (a single product fits); larger primes
fall back to ``object`` arrays of Python ints.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DimensionError

DEFAULT_PRIME = 2147483647  # 2**31 - 1

# Deterministic Miller-Rabin witnesses, valid for n < 3.317e24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_LIMIT = 3317044064679887385961981
# Extra fixed witnesses above that limit: false-positive rate below 4**-40.
_MR_EXTRA = tuple(int.from_bytes(hashlib.sha256(b"mr%d" % t).digest()[:16], "big")
                  for t in range(40))


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for b in _MR_BASES:
        if n % b == 0:
            return n == b
    bases = _MR_BASES if n < _MR_LIMIT else _MR_BASES + tuple(
        2 + b % (n - 3) for b in _MR_EXTRA)
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in bases:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class PrimeField:
    """The field F_q for a prime q."""

    def __init__(self, q: int = DEFAULT_PRIME):
        q = int(q)
        if not is_prime(q):
            raise ValueError(f"field modulus {q} is not prime")
        self.q = q
        self.dtype = np.int64 if q < 2**31 else object

    def __repr__(self):
        return f"PrimeField({self.q})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.q == self.q

    def __hash__(self):
        return hash(("PrimeField", self.q))

    # scalars

    def elem(self, a: int) -> int:
        return int(a) % self.q

    def add(self, a, b):
        return (a + b) % self.q

    def sub(self, a, b):
        return (a - b) % self.q

    def mul(self, a, b):
        return (a * b) % self.q

    def neg(self, a):
        return (-a) % self.q

    def inv(self, a):
        a = int(a) % self.q
        if a == 0:
            raise ZeroDivisionError("zero has no inverse in a field")
        return pow(a, self.q - 2, self.q)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    # vectors

    def array(self, values) -> np.ndarray:
        """Canonicalise ``values`` (ints, possibly negative) into a field array."""
        arr = np.asarray(values)
        if self.dtype is not object and arr.dtype.kind == "i":
            return np.mod(arr.astype(np.int64), self.q)
        # exact path through Python ints (negative or huge inputs)
        arr = np.array(values, dtype=object) % self.q
        return arr if self.dtype is object else arr.astype(np.int64)

    def zeros(self, shape) -> np.ndarray:
        if self.dtype is object:
            out = np.empty(shape, dtype=object)
            out.fill(0)
            return out
        return np.zeros(shape, dtype=np.int64)

    def _check_same_shape(self, u, v):
        if np.shape(u) != np.shape(v):
            raise DimensionError(f"shape mismatch: {np.shape(u)} vs {np.shape(v)}")

    def vec_add(self, u, v):
        self._check_same_shape(u, v)
        return (u + v) % self.q

    def vec_sub(self, u, v):
        self._check_same_shape(u, v)
        return (u - v) % self.q

    def vec_neg(self, u):
        return (-u) % self.q

    def vec_scale(self, c, u):
        return (self.elem(c) * u) % self.q

    def lincomb(self, coeffs, vectors):
        """Return sum_r coeffs[r] * vectors[r]; ``vectors`` is a sequence of equal-shape arrays."""
        if len(coeffs) != len(vectors):
            raise DimensionError(f"{len(coeffs)} coefficients for {len(vectors)} vectors")
        if not vectors:
            raise DimensionError("empty linear combination")
        shape = np.shape(vectors[0])
        for vec in vectors:
            self._check_same_shape(vectors[0], vec)
        coeffs = [int(c) % self.q for c in coeffs]
        if self.dtype is not object and len(coeffs) * (self.q - 1) ** 2 < 2**63:
            # the whole sum fits in int64: reduce once
            acc = np.zeros(shape, dtype=np.int64)
            for c, vec in zip(coeffs, vectors):
                if c:
                    acc += c * vec
            return acc % self.q
        acc = self.zeros(shape)
        for c, vec in zip(coeffs, vectors):
            if c:
                acc = (acc + c * vec) % self.q
        return acc

    def uniform(self, shape, rng: np.random.Generator) -> np.ndarray:
        """Uniform field array of ``shape`` drawn from ``rng``."""
        if self.q < 2**63:
            out = rng.integers(0, self.q, size=shape, dtype=np.int64)
            return out if self.dtype is not object else out.astype(object)
        n = int(np.prod(shape, dtype=np.int64)) if np.ndim(shape) else int(shape)
        nbytes = (self.q.bit_length() + 7) // 8
        vals = []
        while len(vals) < n:
            x = int.from_bytes(rng.bytes(nbytes), "little") & ((1 << self.q.bit_length()) - 1)
            if x < self.q:
                vals.append(x)
        out = np.empty(n, dtype=object)
        out[:] = vals
        return out.reshape(shape)
