import itertools
import math
import warnings
from fractions import Fraction

import pytest

from lcm_secagg.bounds import (BoundSet, bins_count, bound_set, downlink_v1, downlink_v2s1,
                               lower_bounds, min_aggregated, uplink_v1, uplink_v2s1)
from lcm_secagg.errors import InfeasibleParams, InfeasibleResiliency
from lcm_secagg.network import make_groups, pattern_space, usable_groups
from lcm_secagg.params import Params, recovery_dim, validate_params

from conftest import EX1, EX2


def valid_grid(v_rule):
    out = []
    for E, H, s, T_h in itertools.product((3, 5, 9), range(3, 13), range(0, 4), range(0, 4)):
        v = v_rule(s)
        if validate_params(E, H, s, T_h, 0, v):
            continue
        out.append(Params(E=E, H=H, s=s, T_h=T_h, T_c=0, v=v))
    return out


def test_examples():
    assert bound_set(Params(**EX1)) == BoundSet(Fraction(3), Fraction(2), Fraction(3), Fraction(6))
    assert bound_set(Params(**EX2)) == BoundSet(Fraction(2), Fraction(4, 3), Fraction(6),
                                                Fraction(6))


def test_recovery_dim():
    assert recovery_dim(6, 1, 2, 1) == 2
    assert recovery_dim(6, 1, 1, 3) == 1
    assert recovery_dim(10, 1, 1, 3) == 2


@pytest.mark.parametrize("kw,constraint", [
    (dict(E=4, H=6, s=1, T_h=4, T_c=2), "server-collusion"),
    (dict(E=4, H=6, s=1, T_h=2, T_c=3), "client-collusion"),
    (dict(E=4, H=6, s=3, T_h=0, T_c=0), "resiliency"),
    (dict(E=4, H=6, s=1, T_h=1, T_c=0, v=5), "recovery-dimension"),
    (dict(E=4, H=6, s=1, T_h=1, T_c=0, v=7), "group-size"),
    (dict(E=4, H=6, s=1, T_h=1, T_c=0, q=15), "field-size"),
    (dict(E=4, H=6, s=1, T_h=2, T_c=0, q=7), "field-size"),
    (dict(E=1, H=6, s=1, T_h=1, T_c=0), "range"),
])
def test_params_rejections(kw, constraint):
    with pytest.raises(InfeasibleParams) as exc:
        Params(**kw)
    assert exc.value.constraint == constraint


def test_resiliency_has_own_type():
    with pytest.raises(InfeasibleResiliency):
        Params(E=3, H=4, s=2, T_h=0, T_c=0)


def test_default_gradient_length_and_padding():
    p = Params(**EX1)
    assert p.p == p.k == 2
    with pytest.warns(UserWarning):
        padded = Params(**EX1, p=5)
    assert padded.padded_p == 6 and padded.chunk_len == 3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        Params(**EX1, p=5, pad=False)


def test_lower_bound_guard():
    with pytest.raises(InfeasibleParams):
        lower_bounds(6, 2, 2)


def test_v1_closed_forms():
    grid = valid_grid(lambda s: 1)
    assert len(grid) > 100
    for p in grid:
        b = bound_set(p)
        assert b.c_up_lcm == uplink_v1(p.H, p.s, p.T_h) == b.c_up_lower, p
        assert b.c_down_lcm == downlink_v1(p.E, p.H, p.s, p.T_h), p


def test_v2s1_closed_forms():
    grid = [p for p in valid_grid(lambda s: 2 * s + 1) if p.s > 0]
    assert len(grid) > 20
    for p in grid:
        b = bound_set(p)
        assert b.c_up_lcm == uplink_v2s1(p.H, p.s, p.T_h), p
        assert b.c_down_lcm == downlink_v2s1(p.H, p.s, p.T_h), p


def test_lower_bounds_monotone_in_th_and_free_of_tc():
    for H, s in [(8, 1), (12, 2), (15, 3)]:
        seq = [lower_bounds(H, s, t) for t in range(H - 2 * s)]
        assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(seq, seq[1:]))
    assert bound_set(Params(E=6, H=8, s=1, T_h=1, T_c=0)) == bound_set(
        Params(E=6, H=8, s=1, T_h=1, T_c=4))


def test_lower_never_exceeds_achievable():
    for p in valid_grid(lambda s: 1) + valid_grid(lambda s: 2) + valid_grid(lambda s: 3):
        b = bound_set(p)
        assert b.c_up_lower <= b.c_up_lcm and b.c_down_lower <= b.c_down_lcm, p


def test_bins_count():
    assert bins_count(Params(**EX1)) == math.comb(5, 4)
    assert bins_count(Params(**EX2)) == 1


@pytest.mark.parametrize("kw", [
    dict(E=4, H=5, s=1, T_h=0, T_c=0, v=1),
    dict(E=4, H=6, s=1, T_h=1, T_c=0, v=2),
    dict(E=4, H=6, s=1, T_h=1, T_c=0, v=3),
    dict(E=3, H=6, s=2, T_h=0, T_c=0, v=2),
])
def test_pigeonhole_guarantee_by_brute_force(kw):
    """Some k+T_h groups jointly serve at least min_aggregated other clients."""
    p = Params(**kw)
    grouping = make_groups(p.H, p.v)
    need = min_aggregated(p)
    for t in pattern_space(p.E, p.H, p.s):
        for r in range(p.E):
            usable = {l: usable_groups(t, grouping, l, r) for l in range(p.E) if l != r}
            best = max(sum(set(S) <= u for u in usable.values())
                       for S in itertools.combinations(range(p.n_groups), p.n_nodes))
            assert best >= need
