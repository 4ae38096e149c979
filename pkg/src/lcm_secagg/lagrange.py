"""Lagrange encoding and decoding of chunked vectors over a prime field.

A client's polynomial takes its k data chunks at the first k nodes ``betas``
and its T_h noise vectors at the remaining T_h nodes; shares are the values
of that polynomial at the group points ``alphas``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadGroupIndex, DegenerateNodes, DimensionError
from .ffield import PrimeField


@dataclass(frozen=True)
class EvalPoints:
    betas: tuple[int, ...]
    alphas: tuple[int, ...]

    @classmethod
    def canonical(cls, field: PrimeField, n_nodes: int, n_groups: int) -> "EvalPoints":
        """betas = 1..n_nodes, alphas = n_nodes+1..n_nodes+n_groups (reduced mod q)."""
        if n_nodes + n_groups > field.q:
            raise DegenerateNodes(
                f"field of size {field.q} has no {n_nodes + n_groups} distinct points"
            )
        betas = tuple(field.elem(r) for r in range(1, n_nodes + 1))
        alphas = tuple(field.elem(n_nodes + j) for j in range(1, n_groups + 1))
        return cls(betas, alphas)

    def __post_init__(self):
        pts = self.betas + self.alphas
        if len(set(pts)) != len(pts):
            raise DegenerateNodes("evaluation points must be pairwise distinct")


def _check_distinct(xs):
    if len(set(xs)) != len(xs):
        raise DegenerateNodes(f"duplicate interpolation nodes in {xs}")


def coeff_row(field: PrimeField, alpha: int, betas) -> list[int]:
    """Lagrange basis values at ``alpha``: entry r is prod_{l!=r} (alpha-b_l)/(b_r-b_l)."""
    betas = [field.elem(b) for b in betas]
    _check_distinct(betas)
    alpha = field.elem(alpha)
    row = []
    for r, br in enumerate(betas):
        num, den = 1, 1
        for l, bl in enumerate(betas):
            if l != r:
                num = num * (alpha - bl) % field.q
                den = den * (br - bl) % field.q
        row.append(num * field.inv(den) % field.q)
    return row


def coeff_matrix(field: PrimeField, points: EvalPoints) -> list[list[int]]:
    """Rows are ``coeff_row(alpha_j)`` for every group point."""
    return [coeff_row(field, a, points.betas) for a in points.alphas]


def encode_client(field: PrimeField, chunks, noise, points: EvalPoints, matrix=None):
    """Evaluate the client polynomial at every alpha.

    ``chunks`` (k vectors) and ``noise`` (T_h vectors) must share a shape; the
    result is a list with one share per group point.
    """
    values = list(chunks) + list(noise)
    if len(values) != len(points.betas):
        raise DimensionError(
            f"expected {len(points.betas)} chunk+noise vectors, got {len(values)}"
        )
    shapes = {np.shape(v) for v in values}
    if len(shapes) != 1:
        raise DimensionError(f"chunk/noise shapes differ: {sorted(shapes)}")
    if matrix is None:
        matrix = coeff_matrix(field, points)
    return [field.lincomb(row, values) for row in matrix]


def barycentric_weights(field: PrimeField, xs) -> list[int]:
    return [
        field.inv(_prod(field, (xi - xj for j, xj in enumerate(xs) if j != i)))
        for i, xi in enumerate(xs)
    ]


def _prod(field, factors):
    out = 1
    for f in factors:
        out = out * f % field.q
    return out


def interpolate_to_targets(field: PrimeField, samples, targets, n_nodes=None):
    """Values at ``targets`` of the unique polynomial through ``samples``.

    ``samples`` is a sequence of ``(x, y)`` pairs with vector ``y``; the degree
    is ``len(samples) - 1``. Pass ``n_nodes`` to insist on an exact count.
    """
    xs = [field.elem(x) for x, _ in samples]
    ys = [y for _, y in samples]
    if n_nodes is not None and len(xs) != n_nodes:
        raise DimensionError(f"need exactly {n_nodes} samples, got {len(xs)}")
    if not xs:
        raise DimensionError("no samples")
    _check_distinct(xs)
    w = barycentric_weights(field, xs)
    out = []
    for t in targets:
        t = field.elem(t)
        if t in xs:
            out.append(ys[xs.index(t)].copy())
            continue
        ell = _prod(field, (t - x for x in xs))
        basis = [ell * wi % field.q * field.inv(t - xi) % field.q for wi, xi in zip(w, xs)]
        out.append(field.lincomb(basis, ys))
    return out


def ub_submatrix(field: PrimeField, group_indices, points: EvalPoints, k: int) -> list[list[int]]:
    """Noise-column block (columns k..k+T_h-1) of the rows for the given groups."""
    rows = []
    for j in group_indices:
        if not 0 <= j < len(points.alphas):
            raise BadGroupIndex(f"group {j} outside 0..{len(points.alphas) - 1}")
        rows.append(coeff_row(field, points.alphas[j], points.betas)[k:])
    return rows


def matrix_rank(field: PrimeField, matrix) -> int:
    m = [[field.elem(x) for x in row] for row in matrix]
    rank, ncols = 0, len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(m)) if m[r][col]), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        inv = field.inv(m[rank][col])
        m[rank] = [x * inv % field.q for x in m[rank]]
        for r in range(len(m)):
            if r != rank and m[r][col]:
                f = m[r][col]
                m[r] = [(a - f * b) % field.q for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def is_invertible(field: PrimeField, matrix) -> bool:
    n = len(matrix)
    if any(len(row) != n for row in matrix):
        raise DimensionError("is_invertible needs a square matrix")
    if n == 0:
        return True
    return matrix_rank(field, matrix) == n
