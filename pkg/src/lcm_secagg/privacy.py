"""Empirical privacy checks.

Two kinds of evidence:

* algebraic: the noise block of the coefficient matrix restricted to any T_h
  groups must be invertible;
* information-theoretic: at toy sizes, enumerate every gradient, mask and
  noise assignment and compare the exact distribution of an adversary's view
  across gradient values. Mutual information is zero exactly when those
  distributions (integer counts) coincide, so no logarithms are taken.

Masks are enumerated as genuinely uniform variables here, not expanded from
seeds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ThresholdExceeded, TooLargeToEnumerate
from .lagrange import coeff_matrix, encode_client, is_invertible, ub_submatrix
from .masking import MaskSet, mask_gradient
from .network import FailureTable, make_groups
from .params import Params
from .protocol import Transcript, chunk, eval_points

DEFAULT_BUDGET = 10**8


# ---------------------------------------------------------------------------
# views
# ---------------------------------------------------------------------------

@dataclass
class AdversaryView:
    kind: str                  # "servers" or "clients"
    members: frozenset
    inboxes: dict              # server -> {client: payload}
    secrets: dict = field(default_factory=dict)  # client -> (gradient, pair masks, noise)

    def is_empty(self) -> bool:
        return not self.inboxes and not self.secrets


def collusion_view(transcript: Transcript, *, servers=None, clients=None,
                   enforce_threshold=True) -> AdversaryView:
    """What a colluding set of servers, or of clients, gets to see in a round."""
    params, table = transcript.params, transcript.table
    if (servers is None) == (clients is None):
        raise ValueError("pass exactly one of servers= or clients=")
    if servers is not None:
        members = frozenset(servers)
        if enforce_threshold and len(members) > params.T_h:
            raise ThresholdExceeded(f"{len(members)} colluding servers > T_h={params.T_h}")
        inboxes = {h: dict(transcript.inboxes.get(h, {})) for h in sorted(members)}
        return AdversaryView("servers", members, inboxes)
    members = frozenset(clients)
    if enforce_threshold and len(members) > params.T_c:
        raise ThresholdExceeded(f"{len(members)} colluding clients > T_c={params.T_c}")
    reach = sorted({h for h in range(table.H) for i in members if table.works(i, h)})
    inboxes = {h: dict(transcript.inboxes.get(h, {})) for h in reach}
    secrets = {}
    for i in sorted(members):
        s = transcript.secrets[i]
        secrets[i] = (s.gradient, transcript.masks.involving(i), s.noise)
    return AdversaryView("clients", members, inboxes, secrets)


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    independent: bool
    worlds: int
    witness: tuple | None = None   # two gradient tuples with different view distributions
    method: str = "enumeration"

    def __bool__(self):
        return self.independent


@dataclass(frozen=True)
class _Spec:
    kind: str
    members: tuple
    table: FailureTable


def world_count(params: Params, *, disable_masks=False, disable_noise=False) -> int:
    q, E, p = params.q, params.E, params.p
    n = E * p
    if not disable_masks:
        n += p * E * (E - 1) // 2
    if not disable_noise:
        n += E * params.T_h * params.chunk_len
    return q ** n


def _randomness_grid(params: Params, disable_masks, disable_noise):
    """All mask/noise assignments, one row per world, as column arrays."""
    q, E, p, L, T_h = params.q, params.E, params.p, params.chunk_len, params.T_h
    pairs = [(i, j) for i in range(E) for j in range(i + 1, E)]
    n_mask = 0 if disable_masks else len(pairs) * p
    n_noise = 0 if disable_noise else E * T_h * L
    nvars = n_mask + n_noise
    n_r = q ** nvars
    idx = np.arange(n_r, dtype=np.int64)
    cols = []
    for _ in range(nvars):
        idx, d = np.divmod(idx, q)
        cols.append(d)
    cols.reverse()
    n_r = max(n_r, 1)
    zero = np.zeros(n_r, dtype=np.int64)
    cols = iter(cols)

    def take(width, disabled):
        # contiguous (n_r, width) block: strided column views slow every later op
        return np.stack([zero if disabled else next(cols) for _ in range(width)], axis=1)

    masks = {pair: take(p, disable_masks) for pair in pairs}
    noise = [[take(L, disable_noise) for _ in range(T_h)] for _ in range(E)]
    return n_r, MaskSet(E, masks), noise


def _layout(spec: _Spec, params, grouping):
    """Which (server group, client) shares and which secrets make up the view.

    Two specs with the same layout have the same view, so the oracle only
    enumerates each layout once.
    """
    table = spec.table
    if spec.kind == "servers":
        servers = spec.members
    else:
        servers = sorted({h for h in range(table.H) for i in spec.members if table.works(i, h)})
    entries = []
    for h in servers:
        g = grouping.group_of.get(h)
        if g is None:
            continue
        entries.extend((g, l) for l in range(params.E) if table.works(l, h))
    # colluding servers of one group hold the same shares
    entries = tuple(sorted(set(entries)))
    own = spec.members if spec.kind == "clients" else ()
    return entries, own


def _view_columns(layout, params, shares, masks, noise, grads, n_r):
    entries, own = layout
    cols = [shares[l][g] for g, l in entries]
    for i in own:
        cols.append(np.broadcast_to(grads[i], (n_r, params.p)))
        cols.extend(masks.involving(i).values())
        cols.extend(noise[i])
    return cols


def _signature(cols, q, n_r) -> np.ndarray:
    """Sorted multiset of view rows, encoded so equal arrays mean equal distributions."""
    if not cols:
        return np.zeros(1, dtype=np.int64)
    flat = [c[:, t] for c in (np.asarray(c).reshape(n_r, -1) for c in cols)
            for t in range(c.shape[1])]
    space = q ** len(flat)
    if space < 2**62:
        code = np.zeros(n_r, dtype=np.int64)
        for col in flat:
            code *= q
            code += col
        # small code space: the histogram itself is the distribution
        return np.bincount(code, minlength=space) if space <= 4 * n_r else np.sort(code)
    mat = np.stack(flat, axis=1).astype(np.int64)
    return mat[np.lexsort(mat.T[::-1])]


def _class_key(kind, members, grads, q):
    if kind == "servers":
        return ()
    total = sum(grads) % q
    return tuple(tuple(grads[i]) for i in members) + (tuple(total),)


def _run_oracle(params: Params, specs, *, disable_masks=False, disable_noise=False,
                budget=DEFAULT_BUDGET) -> list[Verdict]:
    worlds = world_count(params, disable_masks=disable_masks, disable_noise=disable_noise)
    if worlds > budget:
        n = round(math.log(worlds, params.q))
        raise TooLargeToEnumerate(f"{params.q}^{n} worlds exceed budget {budget}")
    F, q = params.field, params.q
    grouping = make_groups(params.H, params.v)
    points = eval_points(params)
    matrix = coeff_matrix(F, points)
    n_r, masks, noise = _randomness_grid(params, disable_masks, disable_noise)

    layouts = {}
    for spec in specs:
        layout = _layout(spec, params, grouping)
        layouts.setdefault((spec.kind, layout), layout)
    keys = list(layouts)
    first = {key: {} for key in keys}     # class key -> (grads, signature)
    result = {}
    for flat in itertools.product(range(q), repeat=params.E * params.p):
        if len(result) == len(keys):
            break
        grads = [np.array(flat[i * params.p:(i + 1) * params.p], dtype=np.int64)
                 for i in range(params.E)]
        shares = []
        for i in range(params.E):
            g = np.broadcast_to(grads[i], (n_r, params.p))
            y = mask_gradient(F, i, g, masks)
            shares.append(encode_client(F, chunk(params, y), noise[i], points, matrix))
        for key in keys:
            if key in result:
                continue
            kind, layout = key
            sig = _signature(_view_columns(layout, params, shares, masks, noise, grads, n_r),
                             q, n_r)
            ck = _class_key(kind, layout[1], grads, q)
            seen = first[key].get(ck)
            if seen is None:
                first[key][ck] = (flat, sig)
            elif seen[1].shape != sig.shape or not np.array_equal(seen[1], sig):
                result[key] = Verdict(False, worlds, (_split(seen[0], params), _split(flat, params)))
    out = []
    for spec in specs:
        key = (spec.kind, _layout(spec, params, grouping))
        out.append(result[key] if key in result else Verdict(True, worlds))
    return out


def _split(flat, params):
    return tuple(tuple(flat[i * params.p:(i + 1) * params.p]) for i in range(params.E))


def _check_members(params, kind, members, enforce_threshold):
    limit = params.T_h if kind == "servers" else params.T_c
    if enforce_threshold and len(members) > limit:
        raise ThresholdExceeded(f"{len(members)} colluding {kind} exceed threshold {limit}")


def mi_server_oracle(params: Params, colluders, table: FailureTable | None = None, *,
                     disable_masks=False, disable_noise=False, enforce_threshold=True,
                     budget=DEFAULT_BUDGET) -> Verdict:
    """Is the colluding servers' view independent of all gradients?"""
    members = tuple(sorted(colluders))
    _check_members(params, "servers", members, enforce_threshold)
    table = table or FailureTable.ones(params.E, params.H)
    return _run_oracle(params, [_Spec("servers", members, table)], disable_masks=disable_masks,
                       disable_noise=disable_noise, budget=budget)[0]


def mi_client_oracle(params: Params, colluders, table: FailureTable | None = None, *,
                     disable_masks=False, disable_noise=False, enforce_threshold=True,
                     budget=DEFAULT_BUDGET) -> Verdict:
    """Given the colluders' gradients and the total, is their view independent of the rest?"""
    members = tuple(sorted(colluders))
    _check_members(params, "clients", members, enforce_threshold)
    table = table or FailureTable.ones(params.E, params.H)
    return _run_oracle(params, [_Spec("clients", members, table)], disable_masks=disable_masks,
                       disable_noise=disable_noise, budget=budget)[0]


def default_direct(n_patterns: int, count: int = 4) -> set[int]:
    """Evenly spaced pattern indices (always the first and last) to enumerate outright."""
    if n_patterns <= count:
        return set(range(n_patterns))
    return {round(t * (n_patterns - 1) / (count - 1)) for t in range(count)}


@dataclass
class SweepRecord:
    pattern_id: int
    colluders: tuple
    verdict: Verdict


def privacy_sweep(params: Params, kind: str, colluder_sets, patterns, *, direct=None,
                  disable_masks=False, disable_noise=False, enforce_threshold=True,
                  budget=DEFAULT_BUDGET) -> list[SweepRecord]:
    """Oracle verdicts for every (pattern, colluder set) combination.

    Patterns whose index is in ``direct`` (default: all) are enumerated
    outright. The rest are certified from the full-connectivity view: a
    straggling pattern only hides entries of that view, so a view independent
    of the gradients stays independent after hiding. If the full view is
    dependent, every pattern is enumerated directly.
    """
    if kind not in ("servers", "clients"):
        raise ValueError(kind)
    patterns = list(patterns)
    sets = [tuple(sorted(c)) for c in colluder_sets]
    for c in sets:
        _check_members(params, kind, c, enforce_threshold)
    ones = FailureTable.ones(params.E, params.H)
    kw = dict(disable_masks=disable_masks, disable_noise=disable_noise, budget=budget)

    def is_direct(pid, table):
        return table == ones or direct is None or pid in direct

    # one pass for the full-connectivity views and the directly checked patterns
    first = [(None, c, ones) for c in sets]
    first += [(pid, c, t) for pid, t in enumerate(patterns) for c in sets if is_direct(pid, t)]
    verdicts = _run_oracle(params, [_Spec(kind, c, t) for _, c, t in first], **kw)
    full_ok = dict(zip(sets, verdicts))
    records = {(pid, c): v for (pid, c, _), v in zip(first, verdicts) if pid is not None}

    # a dependent full view certifies nothing: check those patterns outright
    todo = [(pid, c, t) for pid, t in enumerate(patterns) for c in sets
            if (pid, c) not in records and not full_ok[c].independent]
    if todo:
        for (pid, c, _), v in zip(todo, _run_oracle(
                params, [_Spec(kind, c, t) for _, c, t in todo], **kw)):
            records[(pid, c)] = v
    for pid, _ in enumerate(patterns):
        for c in sets:
            if (pid, c) not in records:
                records[(pid, c)] = Verdict(True, full_ok[c].worlds, method="refinement")
    return [SweepRecord(pid, c, records[(pid, c)])
            for pid in range(len(patterns)) for c in sets]


def ub_invertibility_sweep(params: Params):
    """Return None if every T_h-subset of groups has an invertible noise block, else the subset."""
    if params.T_h == 0:
        return None
    F = params.field
    points = eval_points(params)
    for subset in itertools.combinations(range(params.n_groups), params.T_h):
        if not is_invertible(F, ub_submatrix(F, subset, points, params.k)):
            return subset
    return None
