"""Command-line experiment runner.

Subcommands: ``bounds``, ``simulate``, ``sweep``, ``verify``. Parameters come
from flags, optionally layered over a flat ``key=value`` config file
(``--config``); flags win.

Exit codes: 0 pass, 1 a check failed, 2 invalid configuration, 3 I/O error,
4 skipped because an enumeration exceeded its budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bounds import (bound_set, downlink_v1, downlink_v2s1, lower_bounds, uplink_v1,
                     uplink_v2s1)
from .errors import InfeasibleParams, TooLargeToEnumerate
from .network import FailureTable, count_patterns, make_groups, pattern_space
from .params import Params
from .privacy import (DEFAULT_BUDGET, default_direct, mi_client_oracle, mi_server_oracle,
                      privacy_sweep, ub_invertibility_sweep)
from .protocol import encode_round, execute_round, plan_loads

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_SKIPPED = 0, 1, 2, 3, 4
PATTERN_BUDGET = 10**6

# flag name -> (Params field, default)
PARAM_FLAGS = {
    "clients": ("E", None),
    "servers": ("H", None),
    "stragglers": ("s", 0),
    "th": ("T_h", 0),
    "tc": ("T_c", 0),
    "group-size": ("v", 1),
    "grad-len": ("p", None),
    "prime": ("q", None),
}

LOADS_HEADER = ["pattern_id", "client", "c_up", "c_up_decimal", "c_down", "c_down_decimal"]
BOUNDS_FIELDS = ["c_up_lower", "c_up_lcm", "c_down_lower", "c_down_lcm", "measured_c_up",
                 "measured_worst_c_down"]


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    params: Params
    seed: int
    patterns: str
    out: Path | None
    disable_masks: bool = False


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key=value", EXIT_CONFIG)
        key, val = (part.strip() for part in line.split("=", 1))
        out[key.replace("_", "-")] = val
    return out


def _setting(args, cfg, flag, default=None):
    val = getattr(args, flag.replace("-", "_"), None)
    if val is None:
        val = cfg.get(flag, default)
    return val


def _as_int(flag, val):
    try:
        return int(val)
    except (TypeError, ValueError) as exc:
        raise CliError(f"--{flag} needs an integer, got {val!r}", EXIT_CONFIG) from exc


def build_params(args, cfg, **overrides) -> Params:
    kw = {}
    for flag, (name, default) in PARAM_FLAGS.items():
        val = _setting(args, cfg, flag, default)
        if val is None:
            if name in ("E", "H"):
                raise CliError(f"--{flag} is required", EXIT_CONFIG)
            continue
        kw[name] = _as_int(flag, val)
    kw.update(overrides)
    try:
        return Params(**kw)
    except InfeasibleParams as exc:
        raise CliError(f"invalid parameters [{exc.constraint}]: {exc}", EXIT_CONFIG) from exc


def build_config(args) -> ExperimentConfig:
    cfg = read_config_file(args.config) if args.config else {}
    params = build_params(args, cfg)
    seed = _as_int("seed", _setting(args, cfg, "seed", 0))
    patterns = str(_setting(args, cfg, "patterns", "all"))
    out = _setting(args, cfg, "out")
    disable = bool(args.disable_masks) or str(cfg.get("disable-masks", "")).lower() in (
        "1", "true", "yes")
    return ExperimentConfig(params, seed, patterns, Path(out) if out else None, disable)


def select_patterns(params: Params, spec: str, seed: int) -> list[FailureTable]:
    """Resolve ``all``, ``sample:N``, ``worst`` or ``file:PATH`` into tables."""
    E, H, s = params.E, params.H, params.s
    if spec == "all":
        total = count_patterns(E, H, s)
        if total > PATTERN_BUDGET:
            raise CliError(f"{total} patterns exceed the enumeration budget {PATTERN_BUDGET}; "
                           "use sample:N or worst", EXIT_SKIPPED)
        return list(pattern_space(E, H, s))
    if spec.startswith("sample:"):
        n = _as_int("patterns", spec.split(":", 1)[1])
        return list(pattern_space(E, H, s, "sample", n=n, rng=np.random.default_rng(seed)))
    if spec == "worst":
        return list(pattern_space(E, H, s, "worst", v=params.v, budget=PATTERN_BUDGET))
    if spec.startswith("file:"):
        tables = read_pattern_file(spec.split(":", 1)[1])
        for t in tables:
            if (t.E, t.H) != (E, H):
                raise CliError(f"pattern is {t.E}x{t.H}, expected {E}x{H}", EXIT_CONFIG)
            if not t.in_pattern_space(s):
                raise CliError(f"pattern has a row with more than s={s} stragglers", EXIT_CONFIG)
        return tables
    raise CliError(f"unknown pattern mode {spec!r}", EXIT_CONFIG)


def read_pattern_file(path) -> list[FailureTable]:
    """Tables of '0'/'1' rows; several tables are separated by blank lines."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read pattern file {path}: {exc}", EXIT_IO) from exc
    blocks, cur = [], []
    for line in text.splitlines():
        if line.strip():
            cur.append(line.strip())
        elif cur:
            blocks.append(cur)
            cur = []
    if cur:
        blocks.append(cur)
    try:
        return [FailureTable.from_string("\n".join(b)) for b in blocks]
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CONFIG) from exc


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def dec(x: Fraction) -> str:
    return f"{float(x):.6f}"


def loads_rows(reports):
    for rep in reports:
        for i in sorted(rep.uplink):
            up, down = rep.client_c_up(i), rep.client_c_down(i)
            yield [rep.pattern_id, i, frac(up), dec(up), frac(down), dec(down)]


def bounds_row(params: Params, measured_up=None, worst_down=None) -> dict:
    b = bound_set(params)
    vals = dict(c_up_lower=b.c_up_lower, c_up_lcm=b.c_up_lcm, c_down_lower=b.c_down_lower,
                c_down_lcm=b.c_down_lcm, measured_c_up=measured_up,
                measured_worst_c_down=worst_down)
    row = {}
    for name in BOUNDS_FIELDS:
        v = vals[name]
        row[name] = frac(v) if v is not None else ""
        row[name + "_decimal"] = dec(v) if v is not None else ""
    return row


def bounds_header():
    return [f for name in BOUNDS_FIELDS for f in (name, name + "_decimal")]


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([r[h] for h in header] if isinstance(r, dict) else r)
    return buf.getvalue()


def write_outputs(out: Path | None, files: dict):
    if out is None:
        return
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}", EXIT_IO) from exc


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def random_gradients(params: Params, seed: int, batch=()):
    rng = np.random.default_rng(seed)
    return [params.field.uniform(tuple(batch) + (params.p,), rng) for _ in range(params.E)]


def run_patterns(params: Params, tables, seed: int, *, disable_masks=False, draws=1):
    """Run full rounds; returns (load reports, list of (pattern_id, client) decode failures)."""
    batch = (draws,) if draws > 1 else ()
    enc = encode_round(params, random_gradients(params, seed, batch), seed,
                       disable_masks=disable_masks)
    want = enc.expected_sum
    reports, failures = [], []
    for pid, table in enumerate(tables):
        res = execute_round(enc, table, pattern_id=pid)
        reports.append(res.loads)
        failures.extend((pid, r) for r, got in res.decoded.items()
                        if not np.array_equal(got, want))
    return reports, failures


def run_experiment(cfg: ExperimentConfig, *, transcript=None):
    """Simulate every selected pattern; returns (exit code, summary, files)."""
    params = cfg.params
    tables = select_patterns(params, cfg.patterns, cfg.seed)
    reports, failures = run_patterns(params, tables, cfg.seed, disable_masks=cfg.disable_masks)
    b = bound_set(params)
    c_up = max((r.c_up for r in reports), default=Fraction(0))
    worst = max((r.c_down for r in reports), default=Fraction(0))
    files = {
        "loads.csv": csv_text(LOADS_HEADER, loads_rows(reports)),
        "bounds.csv": csv_text(bounds_header(), [bounds_row(params, c_up, worst)]),
    }
    if transcript is not None and tables:
        enc = encode_round(params, random_gradients(params, cfg.seed), cfg.seed,
                           disable_masks=cfg.disable_masks)
        files[transcript] = execute_round(enc, tables[0], pattern_id=0).transcript.to_log()
    conforms = worst <= b.c_down_lcm and c_up == b.c_up_lcm
    optimal = " (optimal)" if c_up == b.c_up_lower else ""
    summary = (f"patterns={len(tables)} c_up={frac(c_up)} lower={frac(b.c_up_lower)}{optimal} "
               f"worst_c_down={frac(worst)} bound={frac(b.c_down_lcm)} "
               f"decode_failures={len(failures)} "
               f"{'CONFORMS' if conforms and not failures else 'VIOLATES'}")
    return (EXIT_OK if conforms and not failures else EXIT_FAIL), summary, files


def cmd_bounds(args):
    cfg = build_config(args)
    p = cfg.params
    row = bounds_row(p)
    text = csv_text(bounds_header(), [row])
    write_outputs(cfg.out, {"bounds.csv": text})
    print(f"k={p.k} groups={p.n_groups}")
    for name in BOUNDS_FIELDS[:4]:
        print(f"{name}={row[name]} ({row[name + '_decimal']})")
    return EXIT_OK


def cmd_simulate(args):
    cfg = build_config(args)
    code, summary, files = run_experiment(cfg, transcript="transcript.log" if args.transcript
                                          else None)
    write_outputs(cfg.out, files)
    print(summary)
    return code


def parse_values(text: str) -> list[int]:
    """``1,2,5`` or an inclusive range ``1:4``."""
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(f"bad --values {text!r}", EXIT_CONFIG) from exc


def cmd_sweep(args):
    cfg_file = read_config_file(args.config) if args.config else {}
    field_name = {"v": "v", "th": "T_h"}[args.vary]
    seed = _as_int("seed", _setting(args, cfg_file, "seed", 0))
    patterns = str(_setting(args, cfg_file, "patterns", "all"))
    out = _setting(args, cfg_file, "out")
    header = ["param", "value", "feasible", "constraint"] + bounds_header()
    rows = []
    for val in parse_values(args.values):
        try:
            params = build_params(args, cfg_file, **{field_name: val})
        except CliError as exc:
            constraint = str(exc).split("[", 1)[-1].split("]", 1)[0]
            rows.append([args.vary, val, "no", constraint] + [""] * len(bounds_header()))
            continue
        tables = select_patterns(params, patterns, seed)
        reports = [plan_loads(params, t, pattern_id=i) for i, t in enumerate(tables)]
        c_up = max(r.c_up for r in reports)
        worst = max(r.c_down for r in reports)
        b = bounds_row(params, c_up, worst)
        rows.append([args.vary, val, "yes", ""] + [b[h] for h in bounds_header()])
        print(f"{args.vary}={val}: c_up={b['measured_c_up']} worst_c_down="
              f"{b['measured_worst_c_down']} bound={b['c_down_lcm']}")
    write_outputs(Path(out) if out else None, {"sweep.csv": csv_text(header, rows)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------

def suite_correctness(cfg: ExperimentConfig, draws: int):
    tables = select_patterns(cfg.params, cfg.patterns, cfg.seed)
    _, failures = run_patterns(cfg.params, tables, cfg.seed, disable_masks=cfg.disable_masks,
                               draws=draws)
    ok = not failures
    detail = f"{len(tables)} patterns x {cfg.params.E} receivers x {draws} draws"
    if failures:
        detail += f"; first failure pattern={failures[0][0]} receiver={failures[0][1]}"
    return [("correctness", ok, detail)]


def suite_bounds(cfg: ExperimentConfig):
    p = cfg.params
    b = bound_set(p)
    out = []
    if p.v == 1:
        ok = (b.c_up_lcm == uplink_v1(p.H, p.s, p.T_h)
              and b.c_down_lcm == downlink_v1(p.E, p.H, p.s, p.T_h)
              and b.c_up_lcm == b.c_up_lower)
        out.append(("bounds:closed-form-v1", ok, f"c_up={frac(b.c_up_lcm)}"))
    if p.v == 2 * p.s + 1 and p.s > 0:
        ok = (b.c_up_lcm == uplink_v2s1(p.H, p.s, p.T_h)
              and b.c_down_lcm == downlink_v2s1(p.H, p.s, p.T_h))
        out.append(("bounds:closed-form-v2s1", ok, f"c_down={frac(b.c_down_lcm)}"))
    lo_up, lo_down = lower_bounds(p.H, p.s, p.T_h)
    out.append(("bounds:lower<=achievable", lo_up <= b.c_up_lcm and lo_down <= b.c_down_lcm,
                f"{frac(lo_up)}<={frac(b.c_up_lcm)}, {frac(lo_down)}<={frac(b.c_down_lcm)}"))
    tables = select_patterns(p, cfg.patterns, cfg.seed)
    reports = [plan_loads(p, t, pattern_id=i) for i, t in enumerate(tables)]
    worst = max(r.c_down for r in reports)
    up_ok = all(r.c_up == b.c_up_lcm for r in reports)
    out.append(("bounds:conformance", up_ok and worst <= b.c_down_lcm,
                f"worst c_down {frac(worst)} vs {frac(b.c_down_lcm)} over {len(tables)} patterns"))
    return out


def suite_privacy(cfg: ExperimentConfig, budget: int):
    p = cfg.params
    out = []
    bad = ub_invertibility_sweep(p)
    out.append(("privacy:ub-invertible", bad is None,
                "all subsets" if bad is None else f"singular for groups {bad}"))
    try:
        out += _privacy_oracles(cfg, budget)
    except TooLargeToEnumerate as exc:
        out.append(("privacy:oracles", None, str(exc)))
    return out


def _privacy_oracles(cfg: ExperimentConfig, budget: int):
    p = cfg.params
    out = []
    tables = select_patterns(p, cfg.patterns, cfg.seed)
    direct = default_direct(len(tables))
    kw = dict(disable_masks=cfg.disable_masks, budget=budget, direct=direct)

    servers = [c for t in range(1, p.T_h + 1) for c in itertools.combinations(range(p.H), t)]
    if servers:
        recs = privacy_sweep(p, "servers", servers, tables, **kw)
        dep = [r for r in recs if not r.verdict.independent]
        out.append(("privacy:server-oracle", not dep,
                    f"{len(recs)} (pattern, colluder set) pairs" if not dep else
                    f"pattern {dep[0].pattern_id} servers {dep[0].colluders}: "
                    f"witness {dep[0].verdict.witness}"))
    clients = [c for t in range(1, p.T_c + 1) for c in itertools.combinations(range(p.E), t)]
    if clients:
        recs = privacy_sweep(p, "clients", clients, tables, **kw)
        dep = [r for r in recs if not r.verdict.independent]
        out.append(("privacy:client-oracle", not dep,
                    f"{len(recs)} (pattern, colluder set) pairs" if not dep else
                    f"pattern {dep[0].pattern_id} clients {dep[0].colluders}: "
                    f"witness {dep[0].verdict.witness}"))

    # negative controls: the oracle has to be able to say "dependent"
    grouping = make_groups(p.H, p.v)
    over = [h for g in grouping.groups[:p.n_nodes] for h in g]
    v = mi_server_oracle(p, over, enforce_threshold=False, budget=budget)
    out.append(("privacy:control-servers-over-threshold", not v.independent,
                f"servers {over} -> {'dependent' if not v.independent else 'independent'}"))
    if p.E >= 3:
        v = mi_client_oracle(p, [0], disable_masks=True, enforce_threshold=False, budget=budget)
        out.append(("privacy:control-client-no-masks", not v.independent,
                    f"client 0 -> {'dependent' if not v.independent else 'independent'}"))
    return out


def cmd_verify(args):
    cfg = build_config(args)
    suites = ["correctness", "bounds", "privacy"] if args.suite == "all" else [args.suite]
    results = []
    for suite in suites:
        try:
            if suite == "correctness":
                results += suite_correctness(cfg, args.draws)
            elif suite == "bounds":
                results += suite_bounds(cfg)
            else:
                results += suite_privacy(cfg, args.budget)
        except CliError as exc:
            if exc.code != EXIT_SKIPPED:
                raise
            results.append((suite, None, str(exc)))
    tag = {True: "PASS", False: "FAIL", None: "SKIP"}
    report = "".join(f"{tag[ok]} {name}: {detail}\n" for name, ok, detail in results)
    print(report, end="")
    write_outputs(cfg.out, {"verify.txt": report})
    if any(ok is False for _, ok, _ in results):
        return EXIT_FAIL
    return EXIT_SKIPPED if any(ok is None for _, ok, _ in results) else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(parser):
    parser.add_argument("--config", help="key=value file; flags override it")
    parser.add_argument("--clients", help="number of clients E")
    parser.add_argument("--servers", help="number of servers H")
    parser.add_argument("--stragglers", help="max straggling links per client s")
    parser.add_argument("--th", help="server collusion threshold T_h")
    parser.add_argument("--tc", help="client collusion threshold T_c")
    parser.add_argument("--group-size", help="servers per group v")
    parser.add_argument("--grad-len", help="gradient length p (default k)")
    parser.add_argument("--prime", help="field modulus q")
    parser.add_argument("--seed", help="global seed")
    parser.add_argument("--patterns", help="all | sample:N | worst | file:PATH")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--disable-masks", action="store_true",
                        help="test only: drop pairwise masks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcm-secagg",
                                     description="LCM multi-server secure aggregation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="print lower and achievable loads")
    _common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="run rounds over failure patterns")
    _common(p)
    p.add_argument("--transcript", action="store_true",
                   help="also write transcript.log for the first pattern")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="vary v or T_h and record bounds vs measured loads")
    _common(p)
    p.add_argument("--vary", choices=["v", "th"], required=True)
    p.add_argument("--values", required=True, help="comma list or inclusive range a:b")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run pass/fail suites")
    _common(p)
    p.add_argument("--suite", choices=["correctness", "privacy", "bounds", "all"], default="all")
    p.add_argument("--draws", type=int, default=1, help="gradient draws per pattern")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                   help="max worlds per privacy enumeration")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
