"""One round of Lagrange Coding with Mask over a straggling network.

Flow per round: mask and chunk each gradient, encode one share per server
group, deliver shares over working links, let every receiver plan its
downlink from the columns it can see, have servers sum or forward shares,
then interpolate and unmask at the receiver.

All payload arrays keep the symbol axis last; extra leading axes are carried
through untouched, so one call can process a whole batch of independent draws
that share the same failure table.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (ChunkingError, DecodeUnderdetermined, DimensionError,
                     InconsistentShares, PlanInfeasible, PlanViolation)
from .lagrange import EvalPoints, coeff_matrix, encode_client, interpolate_to_targets
from .masking import ClientSecret, MaskSet, make_noise, mask_gradient
from .network import FailureTable, Grouping, VisibleTable, make_groups, visible_columns
from .params import Params

EXACT_SEARCH_BUDGET = 10**6

AGGREGATE = "aggregate"
FORWARD = "forward"


@dataclass(frozen=True)
class UplinkShare:
    client: int
    group: int
    payload: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class AggregationPlan:
    """Downlink plan for one receiver.

    ``agg_parts[g]`` lists ``(server, clients)`` pairs inside group ``g``; the
    client sets are disjoint and their union is ``agg_set``. ``forwards[l]``
    lists the ``(group, server)`` pairs relaying client ``l``'s share.
    """

    receiver: int
    agg_groups: tuple[int, ...]
    agg_set: frozenset
    agg_parts: dict
    forwards: dict

    @property
    def agg_servers(self) -> dict:
        return {g: tuple(h for h, _ in parts) for g, parts in self.agg_parts.items()}

    def n_messages(self) -> int:
        return sum(len(parts) for parts in self.agg_parts.values()) + sum(
            len(f) for f in self.forwards.values())


@dataclass(frozen=True)
class DownlinkMsg:
    server: int
    receiver: int
    kind: str  # AGGREGATE or FORWARD
    group: int
    clients: frozenset
    payload: np.ndarray = field(repr=False)


@dataclass
class LoadReport:
    uplink: dict          # client -> symbols sent
    uplink_per_server: dict  # (client, server) -> symbols sent
    downlink: dict        # client -> symbols delivered
    p: int                # normalising length (padded gradient length)
    pattern_id: object = None

    @property
    def c_up(self) -> Fraction:
        return max((Fraction(q, self.p) for q in self.uplink.values()), default=Fraction(0))

    @property
    def c_down(self) -> Fraction:
        return max((Fraction(d, self.p) for d in self.downlink.values()), default=Fraction(0))

    def client_c_up(self, i) -> Fraction:
        return Fraction(self.uplink.get(i, 0), self.p)

    def client_c_down(self, i) -> Fraction:
        return Fraction(self.downlink.get(i, 0), self.p)


# ---------------------------------------------------------------------------
# client side
# ---------------------------------------------------------------------------

def eval_points(params: Params) -> EvalPoints:
    return EvalPoints.canonical(params.field, params.n_nodes, params.n_groups)


def chunk(params: Params, vec) -> list:
    """Split the last axis into k chunks, zero-padding if allowed."""
    p = np.shape(vec)[-1]
    if p != params.p:
        raise DimensionError(f"expected gradient length {params.p}, got {p}")
    if p % params.k:
        if not params.pad:
            raise ChunkingError(f"p={p} not divisible by k={params.k} and padding disabled")
        pad = params.field.zeros(np.shape(vec)[:-1] + (params.padded_p - p,))
        vec = np.concatenate([vec, pad], axis=-1)
    L = params.chunk_len
    return [vec[..., r * L:(r + 1) * L] for r in range(params.k)]


def make_secrets(params: Params, gradients, global_seed: int, *, disable_masks=False,
                 masks: MaskSet | None = None, noise=None) -> tuple[list[ClientSecret], MaskSet]:
    """Mask every gradient; ``gradients`` has shape ``(E, ..., p)``."""
    F = params.field
    grads = [F.array(g) for g in gradients]
    if len(grads) != params.E:
        raise DimensionError(f"expected {params.E} gradients, got {len(grads)}")
    batch = np.shape(grads[0])[:-1]
    if masks is None:
        if disable_masks:
            masks = MaskSet.zeros(F, params.E, params.p, batch)
        else:
            masks = MaskSet.from_seed(F, global_seed, params.E, params.p, batch)
    secrets = []
    for i, g in enumerate(grads):
        z = noise[i] if noise is not None else make_noise(
            F, global_seed, i, params.T_h, params.chunk_len, batch)
        secrets.append(ClientSecret(i, g, mask_gradient(F, i, g, masks), list(z)))
    return secrets, masks


def client_encode(params: Params, secret: ClientSecret, points: EvalPoints,
                  matrix=None) -> list[UplinkShare]:
    """One share per group: the client polynomial evaluated at that group's point."""
    shares = encode_client(params.field, chunk(params, secret.masked), secret.noise, points,
                           matrix)
    return [UplinkShare(secret.client_id, g, s) for g, s in enumerate(shares)]


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------

def _popcount(x: int) -> int:
    return bin(x).count("1")


def _bits(x: int):
    i = 0
    while x:
        if x & 1:
            yield i
        x >>= 1
        i += 1


def _min_cover(target: int, servers, masks) -> list[tuple[int, int]]:
    """Fewest servers (lowest ids on ties) whose client masks cover ``target``.

    Returns ``(server, assigned clients mask)`` with every client assigned to
    the first chosen server holding it.
    """
    for size in range(1, len(servers) + 1):
        for combo in itertools.combinations(servers, size):
            covered = 0
            for h in combo:
                covered |= masks[h]
            if covered & target == target:
                parts, left = [], target
                for h in combo:
                    take = masks[h] & left
                    if take:
                        parts.append((h, take))
                        left &= ~take
                return parts
    raise PlanInfeasible("group cannot cover the aggregated client set")


def plan_downlink(params: Params, visible: VisibleTable, grouping: Grouping,
                  receiver: int | None = None, *, budget: int = EXACT_SEARCH_BUDGET
                  ) -> AggregationPlan:
    """Choose the group set and aggregated client set M for one receiver.

    Uses only the columns visible to the receiver. Among all sets of k+T_h
    groups reachable by the receiver, picks one maximising |M|, the clients
    whose shares every chosen group can deliver; ties go to the fewest
    downlink messages, then the lexicographically smallest group set. Within
    a group, M may be covered by several servers holding disjoint parts.
    Every other client is relayed through k+T_h distinct groups.
    """
    r = visible.client if receiver is None else receiver
    if r != visible.client:
        raise ValueError("visible table belongs to a different client")
    n = params.n_nodes
    smasks = visible.server_masks
    rbit = 1 << r
    reach = {}
    link = {}
    for g, members in enumerate(grouping.groups):
        hs = [h for h in members if h in smasks]
        if hs:
            reach[g] = hs
            m = 0
            for h in hs:
                m |= smasks[h]
            link[g] = m & ~rbit
    cand = sorted(reach)
    others = ((1 << visible.E) - 1) & ~rbit

    best_groups, best_m = (), 0
    if len(cand) >= n:
        if math.comb(len(cand), n) <= budget:
            best_size, tied = -1, []
            for S in itertools.combinations(cand, n):
                m = others
                for g in S:
                    m &= link[g]
                size = _popcount(m)
                if size > best_size:
                    best_size, tied = size, [(S, m)]
                elif size == best_size:
                    tied.append((S, m))
            if best_size >= 2:
                best_groups, best_m = min(
                    tied, key=lambda t: (_agg_cost(t[0], t[1], reach, smasks), t[0]))
        else:
            chosen, m = [], others
            for _ in range(n):
                g = max((g for g in cand if g not in chosen),
                        key=lambda g: (_popcount(m & link[g]), -g))
                chosen.append(g)
                m &= link[g]
            if _popcount(m) >= 2:
                best_groups, best_m = tuple(sorted(chosen)), m

    agg_parts = {}
    for g in best_groups:
        parts = _min_cover(best_m, reach[g], smasks)
        agg_parts[g] = tuple((h, frozenset(_bits(cm))) for h, cm in parts)

    forwards = {}
    for l in _bits(others & ~best_m):
        pairs = []
        for g in cand:
            h = next((h for h in reach[g] if smasks[h] >> l & 1), None)
            if h is not None:
                pairs.append((g, h))
                if len(pairs) == n:
                    break
        if len(pairs) < n:
            raise PlanInfeasible(
                f"client {l} shares only {len(pairs)} usable groups with receiver {r}; need {n}")
        forwards[l] = tuple(pairs)

    return AggregationPlan(r, tuple(best_groups), frozenset(_bits(best_m)), agg_parts, forwards)


def _agg_cost(S, m, reach, smasks) -> int:
    return sum(len(_min_cover(m, reach[g], smasks)) for g in S)


# ---------------------------------------------------------------------------
# server side
# ---------------------------------------------------------------------------

def deliver_uplink(table: FailureTable, grouping: Grouping, shares) -> dict:
    """Server inboxes: ``inbox[h][client] = payload`` for every working link."""
    by_client = {}
    for sh in shares:
        by_client.setdefault(sh.client, {})[sh.group] = sh.payload
    inboxes = {}
    for h in range(table.H):
        g = grouping.group_of.get(h)
        if g is None:
            continue
        inboxes[h] = {i: by_client[i][g] for i in sorted(by_client) if table.bits[i, h]}
    return inboxes


def server_execute(field_, plan: AggregationPlan, inboxes: dict) -> list[DownlinkMsg]:
    """Emit the partial aggregates and forwards the plan asks for, nothing else."""
    msgs = []

    def share(h, l):
        try:
            return inboxes[h][l]
        except KeyError:
            raise PlanViolation(f"server {h} holds no share from client {l}") from None

    for g in sorted(plan.agg_parts):
        for h, clients in plan.agg_parts[g]:
            acc = None
            for l in sorted(clients):
                x = share(h, l)
                acc = x.copy() if acc is None else (acc + x) % field_.q
            msgs.append(DownlinkMsg(h, plan.receiver, AGGREGATE, g, frozenset(clients), acc))
    for l in sorted(plan.forwards):
        for g, h in plan.forwards[l]:
            msgs.append(DownlinkMsg(h, plan.receiver, FORWARD, g, frozenset((l,)), share(h, l)))
    return msgs


# ---------------------------------------------------------------------------
# receiver side
# ---------------------------------------------------------------------------

def client_decode(params: Params, msgs, own: ClientSecret, points: EvalPoints) -> np.ndarray:
    """Recover the sum of all gradients from the downlink messages and own masked gradient."""
    F = params.field
    n = params.n_nodes
    agg_vals, agg_sets = {}, {}
    fwd = {}
    for m in msgs:
        if m.kind == AGGREGATE:
            if m.group in agg_vals:
                if agg_sets[m.group] & m.clients:
                    raise InconsistentShares(f"overlapping partial aggregates in group {m.group}")
                agg_vals[m.group] = (agg_vals[m.group] + m.payload) % F.q
                agg_sets[m.group] = agg_sets[m.group] | m.clients
            else:
                agg_vals[m.group] = m.payload
                agg_sets[m.group] = m.clients
        else:
            (l,) = m.clients
            seen = fwd.setdefault(l, {})
            if m.group in seen and not np.array_equal(seen[m.group], m.payload):
                raise InconsistentShares(f"two different values for client {l}, group {m.group}")
            seen[m.group] = m.payload

    polys = []
    covered = set()
    if agg_vals:
        sets = set(agg_sets.values())
        if len(sets) != 1:
            raise DecodeUnderdetermined("partial aggregates cover different client sets")
        (M,) = sets
        if len(agg_vals) < n:
            raise DecodeUnderdetermined(f"aggregate over {sorted(M)} has {len(agg_vals)} < {n} evaluations")
        polys.append(agg_vals)
        covered |= M
    for l, vals in fwd.items():
        if l in covered:
            raise InconsistentShares(f"client {l} both aggregated and forwarded")
        if len(vals) < n:
            raise DecodeUnderdetermined(f"client {l} has {len(vals)} < {n} evaluations")
        polys.append(vals)
        covered.add(l)
    missing = set(range(params.E)) - covered - {own.client_id}
    if missing:
        raise DecodeUnderdetermined(f"nothing received for clients {sorted(missing)}")

    total = chunk(params, own.masked)
    targets = points.betas[:params.k]
    for vals in polys:
        groups = sorted(vals)[:n]
        samples = [(points.alphas[g], vals[g]) for g in groups]
        rec = interpolate_to_targets(F, samples, targets, n_nodes=n)
        total = [(a + b) % F.q for a, b in zip(total, rec)]
    return np.concatenate(total, axis=-1)[..., :params.p]


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class Transcript:
    params: Params
    table: FailureTable
    grouping: Grouping
    uplinks: list          # (client, server, group, payload, delivered)
    inboxes: dict          # server -> {client: payload}
    plans: dict            # receiver -> AggregationPlan
    downlinks: list        # (DownlinkMsg, delivered)
    secrets: list
    masks: MaskSet

    def to_log(self) -> str:
        """One message per line: direction, source, destination, kind, group, status, payload hex."""
        w = (self.params.q.bit_length() + 3) // 4
        lines = []
        for i, h, g, payload, ok in self.uplinks:
            lines.append("\t".join(["UP", f"c{i}", f"s{h}", "share", f"g{g}",
                                    "ok" if ok else "lost", _hex(payload, w)]))
        for m, ok in self.downlinks:
            kind = ("agg:" + ",".join(map(str, sorted(m.clients))) if m.kind == AGGREGATE
                    else f"fwd:{next(iter(m.clients))}")
            lines.append("\t".join(["DOWN", f"s{m.server}", f"c{m.receiver}", kind, f"g{m.group}",
                                    "ok" if ok else "lost", _hex(m.payload, w)]))
        return "\n".join(lines) + "\n"


def _hex(payload, width) -> str:
    return "".join(format(int(x), f"0{width}x") for x in np.ravel(payload))


def parse_log(text: str, q: int) -> list[dict]:
    """Inverse of :meth:`Transcript.to_log` (payloads come back flattened)."""
    w = (q.bit_length() + 3) // 4
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        direction, src, dst, kind, group, status, hx = line.split("\t")
        payload = [int(hx[t:t + w], 16) for t in range(0, len(hx), w)]
        out.append(dict(direction=direction, src=src, dst=dst, kind=kind,
                        group=int(group[1:]), delivered=status == "ok", payload=payload))
    return out


def measure_loads(transcript: Transcript, pattern_id=None) -> LoadReport:
    params = transcript.params
    L = params.chunk_len
    up, up_js = {i: 0 for i in range(params.E)}, {}
    for i, h, _g, _payload, _ok in transcript.uplinks:
        up[i] += L
        up_js[(i, h)] = up_js.get((i, h), 0) + L
    down = {i: 0 for i in range(params.E)}
    for m, ok in transcript.downlinks:
        if ok:
            down[m.receiver] += L
    return LoadReport(up, up_js, down, params.padded_p, pattern_id)


def plan_loads(params: Params, table: FailureTable, grouping: Grouping | None = None,
               pattern_id=None) -> LoadReport:
    """Loads implied by the plans alone, without moving any payloads."""
    grouping = grouping or make_groups(params.H, params.v)
    L = params.chunk_len
    sent = len(grouping) * params.v * L
    up = {i: sent for i in range(params.E)}
    up_js = {(i, h): L for i in range(params.E) for h in grouping.group_of}
    down = {r: plan_downlink(params, visible_columns(table, r), grouping).n_messages() * L
            for r in range(params.E)}
    return LoadReport(up, up_js, down, params.padded_p, pattern_id)


@dataclass
class EncodedRound:
    """Everything a round needs that does not depend on the failure table."""

    params: Params
    grouping: Grouping
    points: EvalPoints
    secrets: list
    masks: MaskSet
    shares: list  # UplinkShare, all clients

    @property
    def expected_sum(self):
        F = self.params.field
        acc = F.zeros(np.shape(self.secrets[0].gradient))
        for s in self.secrets:
            acc = (acc + s.gradient) % F.q
        return acc


@dataclass
class RoundResult:
    decoded: dict
    loads: LoadReport
    transcript: Transcript


def encode_round(params: Params, gradients, global_seed: int = 0, *, disable_masks=False,
                 **secret_kw) -> EncodedRound:
    grouping = make_groups(params.H, params.v)
    points = eval_points(params)
    secrets, masks = make_secrets(params, gradients, global_seed, disable_masks=disable_masks,
                                  **secret_kw)
    matrix = coeff_matrix(params.field, points)
    shares = [sh for s in secrets for sh in client_encode(params, s, points, matrix)]
    return EncodedRound(params, grouping, points, secrets, masks, shares)


def execute_round(enc: EncodedRound, table: FailureTable, pattern_id=None) -> RoundResult:
    params, grouping = enc.params, enc.grouping
    if (table.E, table.H) != (params.E, params.H):
        raise DimensionError(f"table is {table.E}x{table.H}, params need {params.E}x{params.H}")
    uplinks = []
    for sh in enc.shares:
        for h in grouping.groups[sh.group]:
            uplinks.append((sh.client, h, sh.group, sh.payload, table.works(sh.client, h)))
    inboxes = deliver_uplink(table, grouping, enc.shares)

    plans, downlinks, decoded = {}, [], {}
    for r in range(params.E):
        plan = plan_downlink(params, visible_columns(table, r), grouping)
        plans[r] = plan
        msgs = server_execute(params.field, plan, inboxes)
        for m in msgs:
            if not table.works(r, m.server):
                raise PlanViolation(f"plan for client {r} uses dead link to server {m.server}")
            downlinks.append((m, True))
        decoded[r] = client_decode(params, msgs, enc.secrets[r], enc.points)

    transcript = Transcript(params, table, grouping, uplinks, inboxes, plans, downlinks,
                            enc.secrets, enc.masks)
    return RoundResult(decoded, measure_loads(transcript, pattern_id), transcript)


def run_round(params: Params, gradients, table: FailureTable, global_seed: int = 0, *,
              disable_masks=False) -> RoundResult:
    """Mask, encode, deliver, plan, aggregate and decode one round."""
    enc = encode_round(params, gradients, global_seed, disable_masks=disable_masks)
    return execute_round(enc, table)
