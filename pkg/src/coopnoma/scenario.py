"""Network realisations: UE drop, ICIC RB assignment and solver input data.

A :class:`Scenario` holds everything the schemes and the optimizer read:
the occupancy of every (cell, RB) pair, the ground SNRs and the UAV's
per-watt channel gains normalised by the noise power. Arrays are indexed
``[cell_id - 1, rb]`` with RBs numbered from 0.

Random draws are split into independent streams (UE placement, scheduling,
terrestrial channel, aerial channel) spawned from the scenario seed. UEs
are generated, scheduled and faded strictly in index order, so the
realisation for ``K`` UEs is a prefix of the one for ``K' > K`` under the
same seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as ch
from .errors import ContractViolation, InputDomainError
from .hexgrid import HexTopology, build_topology, point_in_hexagon

DEFAULT_UAV_XY = (150.0, 420.0)


def dbm_to_watts(dbm: float) -> float:
    return 10 ** (dbm / 10) / 1000


@dataclass
class UePlacement:
    positions: np.ndarray   # (K, 2) metres
    cells: np.ndarray       # (K,) home cell ids, 1-based

    def __len__(self):
        return len(self.cells)


def _sample_in_cell(topo, j, rng, min_dist):
    R = topo.cell_radius
    apothem = R * math.sqrt(3) / 2
    while True:
        off = np.array([rng.uniform(-apothem, apothem), rng.uniform(-R, R)])
        if point_in_hexagon(off, R) and math.hypot(*off) >= min_dist:
            return topo.centers[j - 1] + off


def place_ues(topo: HexTopology, K: int, rng: np.random.Generator, min_dist: float = 10.0) -> UePlacement:
    """Drop ``K`` ground UEs: one per cell first, the remainder in uniformly random cells.

    Positions are uniform over the hexagon, at least ``min_dist`` from the BS.
    """
    J = topo.cell_count
    if K < J:
        raise InputDomainError(f"need at least one UE per cell: K={K} < J={J}")
    first = rng.permutation(J) + 1
    cells = np.empty(K, dtype=int)
    pos = np.empty((K, 2))
    for i in range(K):
        cells[i] = first[i] if i < J else rng.integers(1, J + 1)
        pos[i] = _sample_in_cell(topo, int(cells[i]), rng, min_dist)
    return UePlacement(pos, cells)


@dataclass
class RbAssignment:
    """Ground scheduling result: ``serving[j-1, n]`` is a UE index or -1."""

    serving: np.ndarray
    blocked: tuple = ()

    @property
    def N(self) -> int:
        return self.serving.shape[1]

    @property
    def occupied(self) -> np.ndarray:
        return self.serving >= 0

    def cells_on(self, n: int) -> frozenset:
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.serving[:, n] >= 0))

    def is_feasible(self, topo: HexTopology, q: int) -> bool:
        """ICIC check: no two cells within ``q`` tiers share an RB, each UE used once."""
        occ = self.occupied
        near = topo.coop_matrix(q)
        np.fill_diagonal(near, False)
        for n in range(self.N):
            idx = np.flatnonzero(occ[:, n])
            if near[np.ix_(idx, idx)].any():
                return False
        ues = self.serving[occ]
        return len(np.unique(ues)) == len(ues)


def icic_assign(topo: HexTopology, ues: UePlacement, N: int, q: int,
                rng: np.random.Generator, shuffle: bool = True) -> RbAssignment:
    """First-fit RB assignment under the ``q``-tier exclusion rule.

    A cell may take RB ``n`` only if no cell in ``C_j(q)`` already uses it.
    UEs are visited in random order (or index order with ``shuffle=False``)
    and each scans the RBs in its own random order. UEs left without a
    feasible RB are reported in ``blocked``.
    """
    if q < 1:
        raise InputDomainError("ICIC tier q must be >= 1")
    J = topo.cell_count
    serving = -np.ones((J, N), dtype=int)
    near = topo.coop_matrix(q)
    order = rng.permutation(len(ues)) if shuffle else np.arange(len(ues))
    blocked = []
    for k in order:
        j = int(ues.cells[k]) - 1
        for n in rng.permutation(N):
            if not (serving[near[j], n] >= 0).any():
                serving[j, n] = k
                break
        else:
            blocked.append(int(k))
    return RbAssignment(serving, tuple(sorted(blocked)))


@dataclass(eq=False)
class Scenario:
    """One immutable network realisation seen by the UAV."""

    topology: HexTopology
    serving_ue: np.ndarray              # (J, N) UE index or -1
    gamma: np.ndarray                   # (J, N) ground SNR, 0 where unoccupied
    F: np.ndarray                       # (J, N) UAV gain / noise, per watt
    p_max: float
    mu: float
    M: int
    seed: int | None = None
    meta: dict = field(default_factory=dict)
    Fnorm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.serving_ue = np.asarray(self.serving_ue, dtype=int)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        shape = (self.topology.cell_count, self.serving_ue.shape[1])
        if self.gamma.shape != shape or self.F.shape != shape or self.serving_ue.shape != shape:
            raise ContractViolation(f"scenario arrays must all have shape {shape}")
        if self.N < 1:
            raise ContractViolation("scenario needs at least one RB")
        if not (np.all(np.isfinite(self.F)) and np.all(self.F > 0)):
            raise ContractViolation("UAV gains must be finite and positive")
        if np.any(self.gamma[~self.occupied] != 0) or np.any(self.gamma < 0):
            raise ContractViolation("ground SNR must be >= 0 and zero on unoccupied (cell, RB)")
        if self.mu < 0 or self.M < 0 or not self.p_max > 0:
            raise ContractViolation("need mu >= 0, M >= 0 and p_max > 0")
        self.Fnorm = self.F / (1 + self.gamma)

    @property
    def J(self) -> int:
        return self.topology.cell_count

    @property
    def N(self) -> int:
        return self.serving_ue.shape[1]

    @property
    def occupied(self) -> np.ndarray:
        return self.serving_ue >= 0

    def cells_on(self, n: int) -> frozenset:
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.serving_ue[:, n] >= 0))

    def coop(self, M: int | None = None) -> np.ndarray:
        return self.topology.coop_matrix(self.M if M is None else M)

    def active_ues(self):
        """Sorted ``(ue, cell_id, rb)`` triples of scheduled UEs."""
        js, ns = np.nonzero(self.occupied)
        rows = [(int(self.serving_ue[j, n]), int(j) + 1, int(n)) for j, n in zip(js, ns)]
        return sorted(rows)

    def with_params(self, **changes) -> "Scenario":
        """Copy with ``p_max``, ``mu`` or ``M`` (etc.) replaced."""
        return replace(self, **changes)

    # -- serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "topology_ref": {"num_tiers": self.topology.num_tiers,
                             "radius_m": self.topology.cell_radius},
            "N": self.N,
            "occupied": [sorted(self.cells_on(n)) for n in range(self.N)],
            "serving_ue": [[j, n, ue] for ue, j, n in self.active_ues()],
            "gamma": self.gamma.tolist(),
            "F": self.F.tolist(),
            "p_max_w": self.p_max,
            "mu": self.mu,
            "M": self.M,
            "seed": self.seed,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            ref = d["topology_ref"]
            topo = build_topology(int(ref["num_tiers"]), float(ref["radius_m"]))
            N = int(d["N"])
            serving = -np.ones((topo.cell_count, N), dtype=int)
            if "serving_ue" in d:
                for j, n, ue in d["serving_ue"]:
                    serving[j - 1, n] = ue
            else:
                # no UE labels: number occupied slots in (rb, cell) order
                k = 0
                for n, cells in enumerate(d["occupied"]):
                    for j in cells:
                        serving[j - 1, n] = k
                        k += 1
            occ = [sorted(int(j) + 1 for j in np.flatnonzero(serving[:, n] >= 0)) for n in range(N)]
            if occ != [sorted(c) for c in d["occupied"]]:
                raise ContractViolation("'occupied' disagrees with 'serving_ue'")
            return cls(topo, serving, np.array(d["gamma"], float), np.array(d["F"], float),
                       float(d["p_max_w"]), float(d["mu"]), int(d["M"]),
                       d.get("seed"), dict(d.get("meta", {})))
        except KeyError as exc:
            raise ContractViolation(f"scenario file is missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def assemble_scenario(topo: HexTopology, assignment: RbAssignment, ue_gains, uav_gains,
                      cfg: ch.ChannelConfig, p_max: float, mu: float, M: int,
                      seed=None, ue_power_w: float = dbm_to_watts(23.0), meta=None) -> Scenario:
    """Turn raw link gains into normalised solver data.

    ``ue_gains[k]`` is the linear gain of UE ``k`` to its serving BS and
    ``uav_gains[j-1]`` the UAV's gain ``|f_j|^2`` toward BS ``j``.
    """
    ue_gains = np.asarray(ue_gains, float)
    uav_gains = np.asarray(uav_gains, float)
    J, N = assignment.serving.shape
    if uav_gains.shape != (J,):
        raise ContractViolation(f"expected {J} UAV link gains, got {uav_gains.shape}")
    occ = assignment.occupied
    if occ.any() and assignment.serving[occ].max() >= len(ue_gains):
        raise ContractViolation("a scheduled UE has no terrestrial gain entry")
    sigma2 = ch.noise_power(cfg)
    gamma = np.zeros((J, N))
    gamma[occ] = ue_power_w * ue_gains[assignment.serving[occ]] / sigma2
    F = np.repeat((uav_gains / sigma2)[:, None], N, axis=1)
    return Scenario(topo, assignment.serving.copy(), gamma, F, float(p_max), float(mu),
                    int(M), seed, dict(meta or {}))


def generate_scenario(topo: HexTopology | None = None, cfg: ch.ChannelConfig | None = None, *,
                      K: int = 150, N: int = 30, q: int = 1, p_max_dbm: float = 20.0,
                      mu: float = 1.0, M: int = 1, seed: int = 0,
                      uav_xy=DEFAULT_UAV_XY, ue_power_dbm: float = 23.0,
                      shuffle: bool = False) -> Scenario:
    """Draw a full realisation: UEs, ICIC schedule, ground and aerial channels."""
    topo = topo or build_topology(3, 800.0)
    cfg = cfg or ch.ChannelConfig()
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    place_rng, sched_rng, ground_rng, air_rng = streams

    ues = place_ues(topo, K, place_rng)
    assignment = icic_assign(topo, ues, N, q, sched_rng, shuffle=shuffle)

    ue_gains = np.empty(K)
    for k in range(K):
        bs = (*topo.centers[ues.cells[k] - 1], cfg.bs_height)
        ue = (*ues.positions[k], cfg.ue_height)
        ue_gains[k] = ch.terrestrial_gain(cfg, ue, bs, ground_rng)

    uav = (float(uav_xy[0]), float(uav_xy[1]), cfg.uav_altitude)
    uav_gains = np.array([ch.a2g_gain(cfg, uav, (*c, cfg.bs_height), air_rng)
                          for c in topo.centers])

    meta = {"K": K, "q": q, "channel_mode": cfg.mode, "blocked": list(assignment.blocked),
            "p_max_dbm": p_max_dbm}
    return assemble_scenario(topo, assignment, ue_gains, uav_gains, cfg,
                             dbm_to_watts(p_max_dbm), mu, M, seed,
                             dbm_to_watts(ue_power_dbm), meta)


def baseline_ground_sum_rate(s: Scenario) -> float:
    """Ground sum-rate without the UAV, in bps/Hz."""
    return float(np.sum(np.log2(1 + s.gamma[s.occupied])))
