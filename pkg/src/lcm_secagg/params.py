"""Protocol constants and their feasibility checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .errors import InfeasibleParams, InfeasibleResiliency
from .ffield import DEFAULT_PRIME, PrimeField, is_prime


def recovery_dim(H: int, s: int, T_h: int, v: int) -> int:
    """k = floor(H/v) - floor(2s/v) - T_h."""
    return H // v - (2 * s) // v - T_h


def validate_params(E, H, s, T_h, T_c, v, q=DEFAULT_PRIME, p=1):
    """Return a list of ``(constraint, message)`` violations; empty means feasible."""
    out = []
    for name, val, lo in (("E", E, 2), ("H", H, 1), ("s", s, 0), ("T_h", T_h, 0),
                          ("T_c", T_c, 0), ("p", p, 1)):
        if val < lo:
            out.append(("range", f"{name}={val} must be >= {lo}"))
    if out:
        return out
    if not 1 <= v <= H:
        out.append(("group-size", f"group size v={v} must lie in [1, H={H}]"))
    if 2 * s >= H:
        out.append(("resiliency", f"straggler bound needs s < H/2 (s={s}, H={H})"))
    if T_h > H - 2 * s - 1:
        out.append(("server-collusion",
                    f"server collusion needs T_h <= H - 2s - 1 = {H - 2 * s - 1} (T_h={T_h})"))
    if T_c > E - 2:
        out.append(("client-collusion",
                    f"client collusion needs T_c <= E - 2 = {E - 2} (T_c={T_c})"))
    if out:
        return out
    k = recovery_dim(H, s, T_h, v)
    if k < 1:
        out.append(("recovery-dimension",
                    f"group size v={v} leaves k = floor(H/v) - floor(2s/v) - T_h = {k} < 1"))
        return out
    need = k + T_h + H // v
    if not is_prime(q):
        out.append(("field-size", f"q={q} is not prime"))
    elif q < need:
        out.append(("field-size", f"q={q} too small: need q >= k + T_h + floor(H/v) = {need}"))
    return out


@dataclass(frozen=True)
class Params:
    """All protocol constants. Construction fails on any infeasible combination."""

    E: int
    H: int
    s: int
    T_h: int
    T_c: int
    v: int = 1
    p: int | None = None
    q: int = DEFAULT_PRIME
    pad: bool = True
    field: PrimeField = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        problems = validate_params(self.E, self.H, self.s, self.T_h, self.T_c, self.v,
                                   self.q, 1 if self.p is None else self.p)
        if problems:
            constraint, msg = problems[0]
            cls = InfeasibleResiliency if constraint == "resiliency" else InfeasibleParams
            raise cls(msg, constraint)
        object.__setattr__(self, "field", PrimeField(self.q))
        if self.p is None:
            # one symbol per chunk
            object.__setattr__(self, "p", self.k)
        if self.p % self.k and self.pad:
            warnings.warn(
                f"gradient length {self.p} not divisible by k={self.k}; "
                f"zero-padding to {self.padded_p}", stacklevel=2)

    @property
    def n_groups(self) -> int:
        return self.H // self.v

    @property
    def k(self) -> int:
        return recovery_dim(self.H, self.s, self.T_h, self.v)

    @property
    def n_nodes(self) -> int:
        """k + T_h: evaluations needed to pin down one client polynomial."""
        return self.k + self.T_h

    @property
    def padded_p(self) -> int:
        return -(-self.p // self.k) * self.k

    @property
    def chunk_len(self) -> int:
        return self.padded_p // self.k

    def replace(self, **changes) -> "Params":
        kw = dict(E=self.E, H=self.H, s=self.s, T_h=self.T_h, T_c=self.T_c, v=self.v,
                  p=self.p, q=self.q, pad=self.pad)
        kw.update(changes)
        return Params(**kw)
