"""Command line entry point.

Subcommands::

    gen       draw a scenario and write it as JSON
    solve     run one scheme on a scenario file and write the report JSON
    sweep     run fig3 | fig4 | fig5 | fig6 | custom and write CSV
    validate  check model invariants on a scenario file

Exit codes: 0 success, 1 usage, 2 configuration/input, 3 contract violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from . import experiments as ex
from .errors import ConfigError, ContractViolation, InputDomainError
from .hexgrid import build_topology
from .noma_core import decodable_set, report_csv, report_json
from .scenario import Scenario, baseline_ground_sum_rate, dbm_to_watts, generate_scenario
from .schemes import altruistic_solve, egoistic_solve, m0_threshold

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_CONTRACT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser():
    p = _Parser(prog="coopnoma", description="UAV uplink cooperative NOMA simulator")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate a scenario JSON")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--K", "--k", dest="K", type=int, default=150)
    g.add_argument("--N", type=int, default=30)
    g.add_argument("--q", type=int, default=1)
    g.add_argument("--tiers", type=int, default=3)
    g.add_argument("--radius", type=float, default=800.0)
    g.add_argument("--pmax-dbm", type=float, default=20.0)
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--M", type=int, default=1)
    g.add_argument("--uav-x", type=float, default=150.0)
    g.add_argument("--uav-y", type=float, default=420.0)
    g.add_argument("--channel", action="append", default=[], metavar="KEY=VALUE",
                   help="channel setting, e.g. mode=simple or uav_altitude=80")
    g.add_argument("-o", "--out")
    g.add_argument("--manifest", help="also write the topology manifest JSON here")

    s = sub.add_parser("solve", help="solve a scenario with one scheme")
    s.add_argument("--scenario", required=True)
    s.add_argument("--scheme", required=True)
    s.add_argument("--M", type=int)
    s.add_argument("--mu", type=float)
    s.add_argument("--pmax-dbm", type=float)
    s.add_argument("-o", "--out")
    s.add_argument("--csv", help="also write per-RB CSV rows here")

    w = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    w.add_argument("which", choices=sorted(ex.FIGURES))
    w.add_argument("--config")
    w.add_argument("--trials", type=int)
    w.add_argument("--seed", type=int)
    w.add_argument("--k", dest="k_values", type=_int_list)
    w.add_argument("--pmax", dest="pmax_values_dbm", type=_float_list)
    w.add_argument("--mu-values", type=_float_list)
    w.add_argument("--m-values", type=_int_list)
    w.add_argument("--schemes", type=_str_list)
    w.add_argument("--ue-ids", type=_int_list)
    w.add_argument("--channel-mode")
    w.add_argument("--workers", type=int)
    w.add_argument("--timing", action="store_true", default=None,
                   help="record wall-clock times (output is then not reproducible)")
    w.add_argument("-o", "--out")
    w.add_argument("--summary")
    w.add_argument("--ue-out")

    v = sub.add_parser("validate", help="check invariants on a scenario")
    v.add_argument("--scenario", required=True)
    return p


def _write(path, text):
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from None
    try:
        return Scenario.from_json(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _parse_channel(items):
    values = {}
    kinds = {f: type(v) for f, v in vars(ch.ChannelConfig()).items()}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--channel expects KEY=VALUE, got {item!r}")
        key, raw = (x.strip() for x in item.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"unknown channel key 'channel.{key}'")
        kind = kinds[key]
        try:
            if kind is bool:
                values[key] = raw.lower() in ("1", "true", "yes")
            elif kind in (int, float):
                values[key] = kind(raw)
            elif key == "force_los":
                values[key] = None if raw.lower() == "none" else raw.lower() in ("1", "true", "yes")
            else:
                values[key] = raw
        except ValueError:
            raise ConfigError(f"channel.{key}: cannot parse {raw!r}") from None
    return ch.ChannelConfig.from_mapping(values)


def cmd_gen(a):
    cfg = _parse_channel(a.channel)
    topo = build_topology(a.tiers, a.radius)
    s = generate_scenario(topo, cfg, K=a.K, N=a.N, q=a.q, p_max_dbm=a.pmax_dbm, mu=a.mu,
                          M=a.M, seed=a.seed, uav_xy=(a.uav_x, a.uav_y))
    _write(a.out, s.to_json())
    if a.manifest:
        _write(a.manifest, topo.manifest_json())
    return EXIT_OK


def cmd_solve(a):
    s = _load_scenario(a.scenario)
    changes = {}
    if a.M is not None:
        changes["M"] = a.M
    if a.mu is not None:
        changes["mu"] = a.mu
    if a.pmax_dbm is not None:
        changes["p_max"] = dbm_to_watts(a.pmax_dbm)
    if changes:
        s = s.with_params(**changes)
    alloc, sets, report, state = ex.run_scheme(s, a.scheme)
    extra = {"scheme": a.scheme, "M": s.M, "mu": s.mu, "p_max_w": s.p_max,
             "baseline_ground_rate": baseline_ground_sum_rate(s)}
    if state is not None:
        extra["diagnostics"] = state.diagnostics()
    _write(a.out, report_json(alloc, sets, report, **extra))
    if a.csv:
        _write(a.csv, report_csv(s, alloc, sets, report))
    return EXIT_OK


def cmd_sweep(a):
    cfg = ex.SweepConfig()
    if a.config:
        try:
            text = Path(a.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = ex.parse_config(text, cfg)
    ex.update_config(cfg, trials=a.trials, seed=a.seed, k_values=a.k_values,
                     pmax_values_dbm=a.pmax_values_dbm, mu_values=a.mu_values,
                     m_values=a.m_values, schemes=a.schemes, ue_ids=a.ue_ids,
                     channel_mode=a.channel_mode, workers=a.workers, timing=a.timing,
                     out=a.out, summary=a.summary, ue_out=a.ue_out)
    rows, ue_rows = ex.run_sweep(a.which, cfg)
    _write(cfg.out, ex.rows_to_csv(rows))
    if cfg.summary:
        _write(cfg.summary, ex.summary_to_csv(ex.summarize(rows)))
    if a.which == "fig6":
        target = cfg.ue_out or str(Path(cfg.out).with_suffix("")) + "_ues.csv"
        _write(target, ex.ue_rows_to_csv(ue_rows))
    return EXIT_OK


def validation_checks(s: Scenario):
    """Yield ``(name, ok)`` for the invariants checkable on one scenario."""
    occ = s.occupied
    yield "gamma zero on unoccupied cells", bool(np.all(s.gamma[~occ] == 0))
    yield "normalised gain = F/(1+gamma)", bool(np.array_equal(s.Fnorm, s.F / (1 + s.gamma)))
    yield "normalised gain <= F", bool(np.all(s.Fnorm <= s.F))
    q = int(s.meta.get("q", 1))
    near = s.topology.coop_matrix(q)
    np.fill_diagonal(near, False)
    icic = all(not near[np.ix_(np.flatnonzero(occ[:, n]), np.flatnonzero(occ[:, n]))].any()
               for n in range(s.N))
    yield f"ICIC q={q} exclusion", icic
    rng = np.random.default_rng(0)
    ok1 = ok2 = True
    for n in range(s.N):
        p = s.p_max / s.N
        rmax = float(np.log2(1 + p * s.Fnorm[:, n].max()))
        sizes = [len(decodable_set(s, n, p, r)) for r in np.sort(rng.uniform(0, rmax, 20))]
        ok1 &= all(a >= b for a, b in zip(sizes, sizes[1:]))
        r = rmax / 2
        sizes = [len(decodable_set(s, n, pp, r)) for pp in np.sort(rng.uniform(0, s.p_max, 20))]
        ok2 &= all(a <= b for a, b in zip(sizes, sizes[1:]))
    yield "decodable set shrinks with rate", ok1
    yield "decodable set grows with power", ok2
    ego_g, alt_u, alt_keeps = [], [], True
    base = baseline_ground_sum_rate(s)
    for M in range(4):
        sm = s.with_params(M=M)
        ego_g.append(egoistic_solve(sm)[2].ground_total)
        alt = altruistic_solve(sm)[2]
        alt_u.append(alt.uav_total)
        alt_keeps &= abs(alt.ground_total - base) <= 1e-9 * max(1.0, base)
    yield "altruistic keeps the ground baseline", bool(alt_keeps)
    yield "egoistic ground rate non-decreasing in M", all(a <= b * (1 + 1e-12) for a, b in zip(ego_g, ego_g[1:]))
    yield "altruistic UAV rate non-decreasing in M", all(a <= b * (1 + 1e-12) for a, b in zip(alt_u, alt_u[1:]))
    m0 = m0_threshold(s)
    if m0 is not None:
        sm = s.with_params(M=m0)
        e, al = egoistic_solve(sm)[2], altruistic_solve(sm)[2]
        yield f"schemes coincide at M0={m0}", bool(
            abs(e.uav_total - al.uav_total) <= 1e-6 * max(1.0, e.uav_total)
            and abs(e.ground_total - base) <= 1e-6 * max(1.0, base))


def cmd_validate(a):
    s = _load_scenario(a.scenario)
    failed = 0
    for name, ok in validation_checks(s):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failed += not ok
    return EXIT_OK if not failed else EXIT_CONTRACT


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return COMMANDS[args.cmd](args)
    except (ConfigError, InputDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
