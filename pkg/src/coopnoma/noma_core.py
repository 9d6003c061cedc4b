"""Decodable/cancelling BS sets and every rate expression of the UAV model.

Rates are in bps/Hz (unit RB bandwidth). Cell ids in the returned sets are
1-based; RB indices are 0-based. A UAV power of exactly zero marks the RB
as UAV-silent: it carries no UAV rate, its ground rate is the baseline and
both of its sets are reported empty.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .scenario import Scenario, baseline_ground_sum_rate

RATE_TOL = 1e-12
FEAS_TOL = 1e-9


def _mask(s: Scenario, cells) -> np.ndarray:
    m = np.zeros(s.J, dtype=bool)
    for j in cells:
        m[j - 1] = True
    return m


def _ids(mask) -> frozenset:
    return frozenset(int(i) + 1 for i in np.flatnonzero(mask))


# -- rates ----------------------------------------------------------------------

def uav_rate_at_bs(s: Scenario, j: int, n: int, p_n: float) -> float:
    return float(np.log2(1 + p_n * s.Fnorm[j - 1, n]))


def f_u(s: Scenario, n: int) -> float:
    """Largest normalised UAV gain on RB ``n``."""
    return float(s.Fnorm[:, n].max())


def egoistic_bs(s: Scenario, n: int) -> int:
    """Cell with the largest normalised gain on RB ``n``; lowest id on ties."""
    return int(np.argmax(s.Fnorm[:, n])) + 1


def decodable_set(s: Scenario, n: int, p_n: float, r_n: float) -> frozenset:
    rates = np.log2(1 + p_n * s.Fnorm[:, n])
    return _ids(rates >= r_n - RATE_TOL)


def decodable_mask_from_assoc(s: Scenario, n: int, j_n: int) -> np.ndarray:
    col = s.Fnorm[:, n]
    return col >= col[j_n - 1]


def decodable_set_from_assoc(s: Scenario, n: int, j_n: int) -> frozenset:
    s.topology._check(j_n)
    return _ids(decodable_mask_from_assoc(s, n, j_n))


def cancel_mask(s: Scenario, n: int, decodable_mask: np.ndarray, M: int | None = None) -> np.ndarray:
    reach = s.coop(M)[decodable_mask].any(axis=0)
    return reach & s.occupied[:, n]


def cancelling_set(s: Scenario, n: int, decodable) -> frozenset:
    """Occupied BSs on RB ``n`` that receive the decoded UAV signal."""
    return _ids(cancel_mask(s, n, _mask(s, decodable)))


def ground_rate_terms(s: Scenario, n: int, p_n: float, omega_mask) -> np.ndarray:
    """Per-cell ground rates on RB ``n`` (zero on unoccupied cells)."""
    g = s.gamma[:, n]
    clean = np.log2(1 + g)
    hit = np.log2(1 + g / (1 + p_n * s.F[:, n]))
    terms = np.where(omega_mask, clean, hit)
    return np.where(s.occupied[:, n], terms, 0.0)


def ground_sum_rate_ic(s: Scenario, n: int, p_n: float, omega) -> float:
    if not isinstance(omega, np.ndarray):
        omega = _mask(s, omega)
    return float(np.sum(ground_rate_terms(s, n, p_n, omega)))


def ground_sum_rate_no_ic(s: Scenario, n: int, p_n: float) -> float:
    """Ground sum-rate on RB ``n`` with UAV interference treated as noise."""
    return ground_sum_rate_ic(s, n, p_n, np.zeros(s.J, dtype=bool))


# -- allocation evaluation -----------------------------------------------------

@dataclass
class UavAllocation:
    p: np.ndarray                       # watts per RB
    r: np.ndarray                       # bps/Hz per RB
    assoc: np.ndarray | None = None     # associated cell id per RB, 0 = none

    def __post_init__(self):
        self.p = np.asarray(self.p, float)
        self.r = np.asarray(self.r, float)
        if self.assoc is not None:
            self.assoc = np.asarray(self.assoc, dtype=int)

    @classmethod
    def from_assoc(cls, s: Scenario, p, assoc) -> "UavAllocation":
        """Allocation whose rates equal the associated BS's achievable rate."""
        p = np.asarray(p, float)
        assoc = np.asarray(assoc, dtype=int)
        g = np.where(assoc > 0, s.Fnorm[np.maximum(assoc, 1) - 1, np.arange(s.N)], 0.0)
        return cls(p, np.log2(1 + p * g), assoc)

    def to_dict(self) -> dict:
        return {"p_w": self.p.tolist(), "r_bpshz": self.r.tolist(),
                "assoc": None if self.assoc is None else self.assoc.tolist()}


@dataclass
class NomaSets:
    decodable: list          # per RB frozenset (Lambda_n)
    cancelling: list         # per RB frozenset (Omega_n)

    def to_dict(self) -> dict:
        return {"decodable": [sorted(x) for x in self.decodable],
                "cancelling": [sorted(x) for x in self.cancelling]}


@dataclass
class RateReport:
    uav_rate_per_rb: np.ndarray
    ground_rate_per_rb: np.ndarray
    per_ue_rate: dict
    mu: float
    uav_total: float = field(init=False)
    ground_total: float = field(init=False)
    objective_q: float = field(init=False)

    def __post_init__(self):
        self.uav_total = float(np.sum(self.uav_rate_per_rb))
        self.ground_total = float(np.sum(self.ground_rate_per_rb))
        self.objective_q = self.uav_total + self.mu * self.ground_total

    def to_dict(self) -> dict:
        return {
            "uav_rate_per_rb": self.uav_rate_per_rb.tolist(),
            "uav_total": self.uav_total,
            "ground_rate_per_rb": self.ground_rate_per_rb.tolist(),
            "ground_total": self.ground_total,
            "per_ue_rate": {str(k): v for k, v in sorted(self.per_ue_rate.items())},
            "mu": self.mu,
            "objective_q": self.objective_q,
        }


def check_allocation(s: Scenario, alloc: UavAllocation):
    """Raise :class:`ContractViolation` naming the first broken invariant."""
    p, r = alloc.p, alloc.r
    if p.shape != (s.N,) or r.shape != (s.N,):
        raise ContractViolation(f"allocation must have {s.N} entries per field")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ContractViolation("power must be finite and non-negative (p_n >= 0)")
    if np.any(r < 0):
        raise ContractViolation("rate must be non-negative (r_n >= 0)")
    if p.sum() > s.p_max * (1 + FEAS_TOL):
        raise ContractViolation(f"sum power {p.sum()!r} exceeds p_max {s.p_max!r}")
    cap = np.log2(1 + p * s.Fnorm.max(axis=0))
    if np.any(r > cap + FEAS_TOL):
        raise ContractViolation("rate exceeds log2(1 + p_n F_u(n)): no decodable BS")
    if alloc.assoc is not None:
        a = alloc.assoc
        if np.any((a < 0) | (a > s.J)):
            raise ContractViolation("associated BS id out of range")
        if np.any((a == 0) & (p > 0)):
            raise ContractViolation("RB with power but no associated BS")
        expect = UavAllocation.from_assoc(s, p, a).r
        if np.any(np.abs(r - expect) > FEAS_TOL):
            raise ContractViolation("rate differs from the associated BS's achievable rate")


def build_sets(s: Scenario, alloc: UavAllocation, decodable=None) -> NomaSets:
    """Decodable and cancelling sets implied by an allocation.

    ``decodable`` (per-RB sets) overrides the default; every listed BS must
    actually decode at the allocated rate.
    """
    lam, omg = [], []
    for n in range(s.N):
        p_n, r_n = alloc.p[n], alloc.r[n]
        if p_n == 0:
            lam.append(frozenset())
            omg.append(frozenset())
            continue
        if decodable is not None:
            mask = _mask(s, decodable[n])
            rates = np.log2(1 + p_n * s.Fnorm[:, n])
            if np.any(mask & (rates < r_n - RATE_TOL)):
                raise ContractViolation(f"RB {n}: listed decodable BS cannot decode rate {r_n}")
        elif alloc.assoc is not None:
            mask = decodable_mask_from_assoc(s, n, int(alloc.assoc[n]))
        else:
            mask = np.log2(1 + p_n * s.Fnorm[:, n]) >= r_n - RATE_TOL
        lam.append(_ids(mask))
        omg.append(_ids(cancel_mask(s, n, mask)))
    return NomaSets(lam, omg)


def evaluate(s: Scenario, alloc: UavAllocation, sets: NomaSets | None = None,
             cancellation: bool = True, decodable=None):
    """Rates and weighted objective of an allocation.

    Returns ``(sets, report)``. With ``cancellation=False`` no BS cancels the
    UAV signal and every occupied BS treats it as noise.
    """
    check_allocation(s, alloc)
    if sets is None:
        sets = build_sets(s, alloc, decodable)
    ground = np.empty(s.N)
    per_ue = {}
    for n in range(s.N):
        if cancellation:
            omega = _mask(s, sets.cancelling[n])
        else:
            omega = np.zeros(s.J, dtype=bool)
        if alloc.p[n] == 0:
            omega = s.occupied[:, n]
        terms = ground_rate_terms(s, n, alloc.p[n], omega)
        ground[n] = np.sum(terms)
        for j in np.flatnonzero(s.occupied[:, n]):
            per_ue[int(s.serving_ue[j, n])] = float(terms[j])
    uav = np.where(alloc.p > 0, alloc.r, 0.0)
    return sets, RateReport(uav, ground, per_ue, s.mu)


def report_csv(s: Scenario, alloc: UavAllocation, sets: NomaSets, report: RateReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rb", "p_w", "r_bpshz", "assoc", "ground_rate", "lambda_size", "omega_size"])
    for n in range(s.N):
        assoc = "" if alloc.assoc is None else int(alloc.assoc[n])
        w.writerow([n, repr(float(alloc.p[n])), repr(float(report.uav_rate_per_rb[n])), assoc,
                    repr(float(report.ground_rate_per_rb[n])),
                    len(sets.decodable[n]), len(sets.cancelling[n])])
    return buf.getvalue()


def report_json(alloc: UavAllocation, sets: NomaSets, report: RateReport, **extra) -> str:
    doc = {"allocation": alloc.to_dict(), "sets": sets.to_dict(), "report": report.to_dict()}
    doc.update(extra)
    return json.dumps(doc, sort_keys=True)


__all__ = [
    "uav_rate_at_bs", "f_u", "egoistic_bs", "decodable_set", "decodable_set_from_assoc",
    "cancelling_set", "ground_sum_rate_ic", "ground_sum_rate_no_ic", "UavAllocation",
    "NomaSets", "RateReport", "evaluate", "build_sets", "check_allocation",
    "baseline_ground_sum_rate", "report_csv", "report_json",
]
