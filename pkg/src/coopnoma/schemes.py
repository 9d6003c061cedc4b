"""Closed-form special cases and benchmark schemes.

Every solver returns ``(UavAllocation, NomaSets, RateReport)``:

* :func:`egoistic_solve` -- UAV maximises its own rate (weight on ground -> 0).
* :func:`altruistic_solve` -- UAV keeps the ground sum-rate at its
  no-UAV value by guaranteeing cancellation at every occupied BS.
* :func:`oma_solve` -- UAV only uses RBs no ground UE occupies.
* :func:`non_orthogonal_solve` -- decoding restricted to unoccupied BSs,
  no interference cancellation anywhere.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import InputDomainError
from .noma_core import UavAllocation, evaluate
from .scenario import Scenario

LN2 = math.log(2)
WF_TOL = 1e-10
WF_MAX_ITER = 200


def water_fill(gains, budget: float) -> np.ndarray:
    """Maximise ``sum log2(1 + p_n g_n)`` subject to ``sum p_n = budget``.

    RBs with ``g_n = 0`` receive no power. The water level ``1/(lambda ln 2)``
    is located by bisection; once the active set is pinned down the level
    is recomputed from it in closed form.
    """
    g = np.asarray(gains, float)
    if not budget > 0:
        raise InputDomainError("water-filling budget must be positive")
    pos = g > 0
    if not pos.any():
        raise InputDomainError("water-filling needs at least one positive gain")
    inv = np.full_like(g, np.inf)
    inv[pos] = 1.0 / g[pos]

    def alloc(level):
        return np.where(pos, np.maximum(0.0, level - inv), 0.0)

    lo = inv[pos].min()
    hi = inv[pos].max() + budget
    for _ in range(WF_MAX_ITER):
        mid = 0.5 * (lo + hi)
        total = alloc(mid).sum()
        if abs(total - budget) <= WF_TOL * budget:
            lo = hi = mid
            break
        if total < budget:
            lo = mid
        else:
            hi = mid
    level = 0.5 * (lo + hi)
    active = pos & (inv < level)
    if active.any():
        exact = (budget + inv[active].sum()) / active.sum()
        if np.array_equal(active, pos & (inv < exact)):
            level = exact
    return alloc(level)


def _silent(s: Scenario) -> UavAllocation:
    return UavAllocation(np.zeros(s.N), np.zeros(s.N), np.zeros(s.N, dtype=int))


def _finish(s, gains, assoc, decodable=None, cancellation=True):
    gains = np.asarray(gains, float)
    if np.any(gains > 0):
        p = water_fill(gains, s.p_max)
    else:
        p = np.zeros(s.N)
    assoc = np.where(p > 0, assoc, 0)
    r = np.log2(1 + p * gains)
    alloc = UavAllocation(p, r, None if decodable is not None else assoc)
    sets, report = evaluate(s, alloc, cancellation=cancellation, decodable=decodable)
    alloc.assoc = assoc
    return alloc, sets, report


def egoistic_assoc(s: Scenario) -> np.ndarray:
    return np.argmax(s.Fnorm, axis=0) + 1


def egoistic_solve(s: Scenario):
    """Associate each RB with its strongest BS and water-fill over ``F_u(n)``."""
    assoc = egoistic_assoc(s)
    return _finish(s, s.Fnorm.max(axis=0), assoc)


def altruistic_decoders(s: Scenario, n: int, M: int | None = None) -> dict:
    """``eta_j(n)`` for every occupied cell ``j``: its strongest cooperating BS."""
    coop = s.coop(M)
    col = s.Fnorm[:, n]
    out = {}
    for j in np.flatnonzero(s.occupied[:, n]):
        cand = np.flatnonzero(coop[j])
        out[int(j) + 1] = int(cand[np.argmax(col[cand])]) + 1
    return out


def altruistic_solve(s: Scenario):
    """Guarantee cancellation at every occupied BS, then water-fill over ``T_u(n)``."""
    gains = np.empty(s.N)
    assoc = np.empty(s.N, dtype=int)
    decodable = []
    for n in range(s.N):
        col = s.Fnorm[:, n]
        eta = altruistic_decoders(s, n)
        if not eta:
            assoc[n] = int(np.argmax(col)) + 1
            gains[n] = col[assoc[n] - 1]
            decodable.append(frozenset({int(assoc[n])}))
            continue
        dec = sorted(set(eta.values()))
        weakest = min(dec, key=lambda l: (col[l - 1], l))
        assoc[n] = weakest
        gains[n] = col[weakest - 1]
        decodable.append(frozenset(dec))
    return _finish(s, gains, assoc, decodable=decodable)


def m0_threshold(s: Scenario, assoc_eg=None):
    """Smallest cancellation size at which every occupied BS on every RB lies
    within the cooperation set of that RB's egoistic BS; ``None`` if no such
    size exists up to twice the tier count."""
    if assoc_eg is None:
        assoc_eg = egoistic_assoc(s)
    topo = s.topology
    for M in range(0, 2 * topo.num_tiers + 1):
        coop = topo.coop_matrix(M)
        if all(not np.any(s.occupied[:, n] & ~coop[int(assoc_eg[n]) - 1]) for n in range(s.N)):
            return M
    return None


def oma_solve(s: Scenario):
    """Water-fill over the RBs no ground UE uses; silent elsewhere."""
    free = ~s.occupied.any(axis=0)
    gains = np.where(free, s.Fnorm.max(axis=0), 0.0)
    return _finish(s, gains, egoistic_assoc(s))


def unoccupied_best(s: Scenario):
    """Best unoccupied BS per RB (0 when all are occupied) and its gain."""
    masked = np.where(s.occupied, -np.inf, s.Fnorm)
    assoc = np.argmax(masked, axis=0) + 1
    gains = masked.max(axis=0)
    none = ~np.isfinite(gains)
    assoc[none] = 0
    gains[none] = 0.0
    return assoc, gains


def non_orthogonal_solve(s: Scenario, mode: str = "egoistic"):
    """Benchmark where only unoccupied BSs decode the UAV and nobody cancels it."""
    if mode == "egoistic":
        assoc, gains = unoccupied_best(s)
        return _finish(s, gains, assoc, cancellation=False)
    if mode == "general":
        from .optimizer import ao_solve
        alloc, sets, report, _ = ao_solve(s, restricted=True)
        return alloc, sets, report
    raise InputDomainError(f"unknown non-orthogonal mode {mode!r}")
