"""Closed-form communication-load bounds, as exact fractions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import InfeasibleParams
from .params import Params, validate_params

__all__ = ["BoundSet", "achievable_loads", "bins_count", "bound_set", "lower_bounds",
           "min_aggregated", "uplink_v1", "downlink_v1", "uplink_v2s1", "downlink_v2s1",
           "validate_params"]


@dataclass(frozen=True)
class BoundSet:
    c_up_lower: Fraction
    c_down_lower: Fraction
    c_up_lcm: Fraction
    c_down_lcm: Fraction


def lower_bounds(H: int, s: int, T_h: int) -> tuple[Fraction, Fraction]:
    """H/(H-2s-T_h) for uplink and (H-2s)/(H-2s-T_h) for downlink."""
    den = H - 2 * s - T_h
    if den < 1:
        raise InfeasibleParams(f"H - 2s - T_h = {den} < 1", "server-collusion")
    return Fraction(H, den), Fraction(H - 2 * s, den)


def bins_count(params: Params) -> int:
    """Number of candidate group sets in the pigeonhole argument for |M|."""
    G, v, s = params.n_groups, params.v, params.s
    dead = max(s - G * (v - 1), 0)
    return math.comb(G - dead, G - (2 * s) // v)


def min_aggregated(params: Params) -> int:
    """Guaranteed size of the best aggregated set: ceil((E-1)/bins)."""
    bins = bins_count(params)
    if bins == 0:
        raise InfeasibleParams("no candidate group set survives the straggler bound",
                               "recovery-dimension")
    return -(-(params.E - 1) // bins)


def achievable_loads(params: Params) -> tuple[Fraction, Fraction]:
    G, v, k = params.n_groups, params.v, params.k
    n = G - (2 * params.s) // v
    c_up = Fraction(G * v, k)
    c_down = Fraction(n, k) * (params.E - 1 - min_aggregated(params) + v)
    return c_up, c_down


def bound_set(params: Params) -> BoundSet:
    up_lo, down_lo = lower_bounds(params.H, params.s, params.T_h)
    up, down = achievable_loads(params)
    return BoundSet(up_lo, down_lo, up, down)


# Closed forms for the two extreme group sizes.

def uplink_v1(H, s, T_h) -> Fraction:
    return Fraction(H, H - 2 * s - T_h)


def downlink_v1(E, H, s, T_h) -> Fraction:
    return Fraction(H - 2 * s, H - 2 * s - T_h) * (E - -(-(E - 1) // math.comb(H - s, s)))


def uplink_v2s1(H, s, T_h) -> Fraction:
    G = H // (2 * s + 1)
    return Fraction(G, G - T_h) * (2 * s + 1)


def downlink_v2s1(H, s, T_h) -> Fraction:
    G = H // (2 * s + 1)
    return Fraction(G, G - T_h) * (2 * s + 1)
