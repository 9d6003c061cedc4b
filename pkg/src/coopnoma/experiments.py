"""Monte-Carlo sweeps over UE count, UAV power budget, weight and cancellation size.

Each trial ``t`` uses scenario seed ``seed + t``. Within a trial, UE sets are
nested across ``K`` (see :mod:`coopnoma.scenario`), so per-seed trends in
``K`` compare realisations that only differ by the added UEs.

Output rows are :class:`ExperimentRow` records, written as CSV in a fixed
column order; rows are ordered by seed and then by sweep position, which
keeps files byte-identical regardless of the worker count.
"""
from __future__ import annotations

import csv
import io
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import MISSING, asdict, dataclass, field, fields

import numpy as np

from . import channel as ch
from .errors import ConfigError, InputDomainError
from .hexgrid import build_topology
from .optimizer import ao_solve
from .scenario import baseline_ground_sum_rate, dbm_to_watts, generate_scenario
from .schemes import altruistic_solve, egoistic_solve, non_orthogonal_solve, oma_solve

SCHEMES = ("egoistic", "altruistic", "oma", "noncoop-noma", "coop-noma",
           "non-orth-egoistic", "non-orth-general")
SCHEME_ALIASES = {"M=0": "noncoop-noma"}

DEFAULT_MU_GRID = [0.0] + [float(x) for x in np.logspace(-2, 2, 15)]


def run_scheme(s, scheme: str):
    """Solve ``s`` with a named scheme; returns ``(alloc, sets, report, state_or_None)``."""
    scheme = SCHEME_ALIASES.get(scheme, scheme)
    if scheme == "egoistic":
        return (*egoistic_solve(s), None)
    if scheme == "altruistic":
        return (*altruistic_solve(s), None)
    if scheme == "oma":
        return (*oma_solve(s), None)
    if scheme == "noncoop-noma":
        return ao_solve(s.with_params(M=0))
    if scheme == "coop-noma":
        return ao_solve(s)
    if scheme == "non-orth-egoistic":
        return (*non_orthogonal_solve(s, "egoistic"), None)
    if scheme == "non-orth-general":
        return ao_solve(s, restricted=True)
    raise InputDomainError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


@dataclass
class ExperimentRow:
    seed: int
    scheme: str
    K: int
    pmax_dbm: float
    mu: float
    M: int
    uav_rate: float
    ground_rate: float
    baseline_ground_rate: float
    objective_q: float
    outer_iters: int
    wall_ms: float


ROW_FIELDS = [f.name for f in fields(ExperimentRow)]


@dataclass
class SweepConfig:
    trials: int = 10
    seed: int = 0
    k_values: list = field(default_factory=lambda: [37, 74, 111, 148, 185, 222])
    pmax_values_dbm: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0])
    mu_values: list = field(default_factory=lambda: list(DEFAULT_MU_GRID))
    m_values: list = field(default_factory=lambda: [0, 1, 2, 3])
    schemes: list = field(default_factory=lambda: ["coop-noma"])
    channel_mode: str = "3gpp"
    out: str = "results.csv"
    summary: str = ""
    ue_out: str = ""
    ue_ids: list = field(default_factory=list)
    K: int = 150
    pmax_dbm: float = 20.0
    mu: float = 1.0
    N: int = 30
    q: int = 1
    num_tiers: int = 3
    cell_radius: float = 800.0
    workers: int = 1
    timing: bool = False
    absolute_rates: bool = False

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        for name in ("k_values", "pmax_values_dbm", "mu_values", "m_values", "schemes"):
            if not getattr(self, name):
                raise ConfigError(f"{name}: list must be non-empty")
        for sc in self.schemes:
            if SCHEME_ALIASES.get(sc, sc) not in SCHEMES:
                raise ConfigError(f"schemes: unknown scheme {sc!r}")
        if any(m < 0 for m in self.m_values):
            raise ConfigError("m_values: cancellation sizes must be >= 0")
        if any(mu < 0 for mu in self.mu_values) or self.mu < 0:
            raise ConfigError("mu_values: weights must be >= 0")
        ch.ChannelConfig(mode=self.channel_mode)
        return self


def _coerce(name, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is list:
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if name in ("k_values", "m_values", "ue_ids"):
                return [int(x) for x in items]
            if name in ("pmax_values_dbm", "mu_values"):
                return [float(x) for x in items]
            return items
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def _field_kinds():
    return {f.name: list if f.default is MISSING else type(f.default) for f in fields(SweepConfig)}


def parse_config(text: str, base: SweepConfig | None = None) -> SweepConfig:
    """Parse flat ``key = value`` lines (``#`` comments) into a :class:`SweepConfig`."""
    cfg = base or SweepConfig()
    kinds = _field_kinds()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key.startswith("channel."):
            key = key[len("channel."):]
            if key != "mode":
                raise ConfigError(f"channel.{key}: only channel.mode is configurable in sweeps")
            key = "channel_mode"
        if key not in kinds:
            raise ConfigError(f"{key}: unknown configuration key")
        setattr(cfg, key, _coerce(key, kinds[key], value))
    return cfg


def update_config(cfg: SweepConfig, **overrides) -> SweepConfig:
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg


# -- per-figure trial bodies --------------------------------------------------------

class _Trial:
    def __init__(self, cfg: SweepConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.topo = build_topology(cfg.num_tiers, cfg.cell_radius)
        self.chan = ch.ChannelConfig(mode=cfg.channel_mode)
        self._cache = {}
        self.rows = []
        self.ue_rows = []

    def scenario(self, K, pmax_dbm=None, mu=None, M=1):
        if K not in self._cache:
            self._cache[K] = generate_scenario(self.topo, self.chan, K=K, N=self.cfg.N,
                                               q=self.cfg.q, p_max_dbm=self.cfg.pmax_dbm,
                                               mu=self.cfg.mu, M=1, seed=self.seed)
        s = self._cache[K]
        pmax_dbm = self.cfg.pmax_dbm if pmax_dbm is None else pmax_dbm
        return s.with_params(p_max=dbm_to_watts(pmax_dbm), mu=self.cfg.mu if mu is None else mu,
                             M=M, meta={**s.meta, "p_max_dbm": pmax_dbm})

    def run(self, s, scheme, K):
        t0 = time.perf_counter()
        alloc, sets, report, state = run_scheme(s, scheme)
        wall = (time.perf_counter() - t0) * 1000 if self.cfg.timing else 0.0
        scale = self.chan.rb_bandwidth if self.cfg.absolute_rates else 1.0
        M = 0 if scheme in ("noncoop-noma", "M=0") else s.M
        if scheme.startswith("non-orth") or scheme == "oma":
            M = 0
        uav, ground = report.uav_total * scale, report.ground_total * scale
        self.rows.append(ExperimentRow(
            self.seed, SCHEME_ALIASES.get(scheme, scheme), K, float(s.meta["p_max_dbm"]),
            float(s.mu), int(M), uav, ground, baseline_ground_sum_rate(s) * scale,
            uav + s.mu * ground, 0 if state is None else state.outer_iters, wall))
        return report


def _fig3(tr: _Trial):
    for K in tr.cfg.k_values:
        for M in tr.cfg.m_values:
            tr.run(tr.scenario(K, M=M), "altruistic", K)
        tr.run(tr.scenario(K), "oma", K)


def _fig4(tr: _Trial):
    K = tr.cfg.K
    for P in tr.cfg.pmax_values_dbm:
        tr.run(tr.scenario(K, pmax_dbm=P), "non-orth-general", K)
        tr.run(tr.scenario(K, pmax_dbm=P), "noncoop-noma", K)
        for M in tr.cfg.m_values:
            if M > 0:
                tr.run(tr.scenario(K, pmax_dbm=P, M=M), "coop-noma", K)


def _fig5(tr: _Trial):
    K = tr.cfg.K
    for mu in tr.cfg.mu_values:
        tr.run(tr.scenario(K, mu=mu), "non-orth-general", K)
    for M in tr.cfg.m_values:
        tr.run(tr.scenario(K, M=M), "egoistic", K)
        tr.run(tr.scenario(K, M=M), "altruistic", K)
        for mu in tr.cfg.mu_values:
            tr.run(tr.scenario(K, mu=mu, M=M), "coop-noma", K)


def _fig6(tr: _Trial):
    K = tr.cfg.K
    base = tr.scenario(K, M=1)
    active = [ue for ue, _, _ in base.active_ues()]
    ue_ids = tr.cfg.ue_ids or active[:10]
    missing = [u for u in ue_ids if u not in active]
    if missing:
        raise InputDomainError(f"ue_ids: UEs {missing} are not scheduled in seed {tr.seed}")
    clean = {ue: float(np.log2(1 + base.gamma[j - 1, n])) for ue, j, n in base.active_ues()}
    per = []
    report = tr.run(base, "altruistic", K)
    per.append(("altruistic", base.mu, report))
    for mu in tr.cfg.mu_values:
        s = tr.scenario(K, mu=mu, M=1)
        per.append(("coop-noma", mu, tr.run(s, "coop-noma", K)))
    for ue in ue_ids:
        ao_rates = [r.per_ue_rate[ue] for sc, _, r in per if sc == "coop-noma"]
        protected = all(abs(x - clean[ue]) <= 1e-12 * max(1.0, clean[ue]) for x in ao_rates)
        for sc, mu, r in per:
            tr.ue_rows.append([tr.seed, sc, mu, ue, r.per_ue_rate[ue], clean[ue],
                               "protected" if (sc == "altruistic" or protected) else "degraded"])


def _custom(tr: _Trial):
    for K in tr.cfg.k_values:
        for P in tr.cfg.pmax_values_dbm:
            for mu in tr.cfg.mu_values:
                for M in tr.cfg.m_values:
                    for sc in tr.cfg.schemes:
                        tr.run(tr.scenario(K, pmax_dbm=P, mu=mu, M=M), sc, K)


FIGURES = {"fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6, "custom": _custom}


def run_trial(which: str, cfg: SweepConfig, seed: int):
    tr = _Trial(cfg, seed)
    FIGURES[which](tr)
    return tr.rows, tr.ue_rows


def run_sweep(which: str, cfg: SweepConfig):
    """All rows of a sweep (plus per-UE rows for ``fig6``), in deterministic order."""
    if which not in FIGURES:
        raise ConfigError(f"unknown sweep {which!r}; choose from {', '.join(FIGURES)}")
    cfg.validate()
    seeds = [cfg.seed + t for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_trial, [which] * len(seeds), [cfg] * len(seeds), seeds))
    else:
        results = [run_trial(which, cfg, sd) for sd in seeds]
    rows = [r for res in results for r in res[0]]
    ue_rows = [r for res in results for r in res[1]]
    return rows, ue_rows


def run_figure3(cfg: SweepConfig):
    return run_sweep("fig3", cfg)[0]


def run_figure4(cfg: SweepConfig):
    return run_sweep("fig4", cfg)[0]


def run_figure5(cfg: SweepConfig):
    return run_sweep("fig5", cfg)[0]


def run_figure6(cfg: SweepConfig):
    return run_sweep("fig6", cfg)


# -- output -------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(d[k]) for k in ROW_FIELDS])
    return buf.getvalue()


def ue_rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "scheme", "mu", "ue", "rate", "baseline_rate", "status"])
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def summarize(rows):
    """Mean and standard error per (scheme, K, pmax_dbm, mu, M) over seeds."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r.scheme, r.K, r.pmax_dbm, r.mu, r.M)].append(r)
    out = []
    for key, grp in groups.items():
        rec = dict(zip(("scheme", "K", "pmax_dbm", "mu", "M"), key))
        rec["trials"] = len(grp)
        for metric in ("uav_rate", "ground_rate", "objective_q"):
            vals = np.array([getattr(r, metric) for r in grp])
            rec[f"{metric}_mean"] = float(vals.mean())
            rec[f"{metric}_se"] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append(rec)
    return out


def summary_to_csv(summary) -> str:
    if not summary:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(summary[0])
    w.writerow(keys)
    for rec in summary:
        w.writerow([_fmt(rec[k]) for k in keys])
    return buf.getvalue()
