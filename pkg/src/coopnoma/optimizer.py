"""Alternating optimisation of UAV power and BS association.

The rate of each RB is tied to its associated BS ``j_n`` (the UAV transmits
at exactly that BS's achievable rate), so the BSs that decode are those at
least as strong as ``j_n``. With associations fixed the power subproblem is
solved by successive convex approximation: the ground sum-rate over the
non-cancelling occupied BSs is convex in the powers, so its tangent plane
is a global under-estimator and each surrogate is a concave problem with
a water-filling style KKT solution. With powers fixed, each RB's
association is chosen by a partial enumeration over BSs sorted by gain.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .noma_core import UavAllocation, evaluate
from .scenario import Scenario
from .schemes import egoistic_assoc, non_orthogonal_solve, unoccupied_best, water_fill

LN2 = math.log(2)
NU_TOL = 1e-10
NU_MAX_ITER = 200


# -- helpers ------------------------------------------------------------------------

def assoc_gain(s: Scenario, assoc) -> np.ndarray:
    """Normalised gain of the associated BS per RB (0 where unassociated)."""
    assoc = np.asarray(assoc, dtype=int)
    g = s.Fnorm[np.maximum(assoc, 1) - 1, np.arange(s.N)]
    return np.where(assoc > 0, g, 0.0)


def cancel_masks(s: Scenario, assoc) -> np.ndarray:
    """``(J, N)`` cancelling-BS mask induced by associations."""
    assoc = np.asarray(assoc, dtype=int)
    thresh = assoc_gain(s, assoc)
    dec = (s.Fnorm >= thresh[None, :]) & (assoc > 0)[None, :]
    reach = (s.coop().astype(np.int64) @ dec.astype(np.int64)) > 0
    return reach & s.occupied


def interfered_rate(s: Scenario, comp: np.ndarray, p) -> np.ndarray:
    """Per-RB ground rate over the interfered BSs ``comp`` (a ``(J, N)`` mask)."""
    p = np.asarray(p, float)
    terms = np.log2(1 + s.gamma / (1 + p[None, :] * s.F))
    return np.where(comp, terms, 0.0).sum(axis=0)


def power_objective(s: Scenario, assoc, comp, p) -> float:
    """True objective of the power subproblem for fixed associations."""
    p = np.asarray(p, float)
    uav = np.log2(1 + p * assoc_gain(s, assoc)).sum()
    occ = s.occupied
    clean = np.where(occ & ~comp, np.log2(1 + s.gamma), 0.0).sum()
    return float(uav + s.mu * (clean + interfered_rate(s, comp, p).sum()))


def q_value(s: Scenario, assoc, p, cancellation: bool = True) -> float:
    if cancellation:
        comp = s.occupied & ~cancel_masks(s, assoc)
    else:
        comp = s.occupied
    return power_objective(s, assoc, comp, p)


# -- SCA ---------------------------------------------------------------------------

def sca_linearize(s: Scenario, comp: np.ndarray, p_current):
    """Tangent of the interfered ground rate at ``p_current``.

    ``comp`` marks the occupied, non-cancelling BSs per RB. Returns the
    constant ``A`` and per-RB slopes ``B`` (both bps/Hz, ``B`` per watt) such
    that ``A - sum_n B_n (p_n - p_current_n)`` under-estimates the rate.
    """
    p = np.asarray(p_current, float)[None, :]
    A = float(interfered_rate(s, comp, p[0]).sum())
    pf = 1 + p * s.F
    slope = s.F * s.gamma / (LN2 * (pf + s.gamma) * pf)
    B = np.where(comp, slope, 0.0).sum(axis=0)
    return A, B


def sca_inner_step(s: Scenario, assoc, B) -> np.ndarray:
    """Maximiser of ``sum log2(1 + p_n g_n) - mu sum B_n p_n`` on the power simplex.

    RBs with zero associated gain get no power. If the unconstrained optimum
    fits the budget it is returned; otherwise the budget multiplier ``nu``
    is located by bisection so the powers sum to ``p_max``.
    """
    g = assoc_gain(s, assoc)
    B = np.asarray(B, float)
    live = g > 0
    if not live.any():
        return np.zeros(s.N)
    inv = np.where(live, 1.0 / np.where(live, g, 1.0), np.inf)
    price = s.mu * B

    def alloc(nu):
        with np.errstate(divide="ignore"):
            level = 1.0 / ((price + nu) * LN2)
        return np.where(live, np.maximum(0.0, level - inv), 0.0)

    if np.all(price[live] > 0):
        p_tilde = alloc(0.0)
        if p_tilde.sum() <= s.p_max:
            return p_tilde

    P = s.p_max
    hi = float(np.max(g[live]) / LN2)      # zero power everywhere at or above this
    lo = hi
    for _ in range(4000):
        lo *= 0.5
        if alloc(lo).sum() >= P:
            break
    for _ in range(NU_MAX_ITER):
        mid = 0.5 * (lo + hi)
        total = alloc(mid).sum()
        if total > P:
            lo = mid
        else:
            hi = mid
        if abs(total - P) <= NU_TOL * P or hi - lo <= 1e-15 * hi:
            break
    # Newton polish: the power total is convex and decreasing in nu, so the
    # iterates converge from the over-budget side and a final rescale fixes
    # the last ulp
    nu = hi
    for _ in range(30):
        p = alloc(nu)
        on = p > 0
        if not on.any():
            break
        rem = p.sum() - P
        slope = -np.sum(1.0 / ((price[on] + nu) ** 2 * LN2))
        step = rem / slope
        if not nu - step > 0:
            break
        nu -= step
        if abs(rem) <= 1e-15 * P:
            break
    p = alloc(nu)
    total = p.sum()
    return p * (P / total) if total > P else p


@dataclass
class ScaState:
    iterations: int = 0
    p_current: np.ndarray | None = None
    b_coeff: np.ndarray | None = None
    a_const: float = 0.0
    objective_trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def sca_power_alloc(s: Scenario, assoc, comp, p_init, eps: float = 1e-4, max_iter: int = 100):
    """Successive convex approximation of the power subproblem.

    Stops when the fractional increase of the true objective drops below
    ``eps``. An iterate that would lower the objective (only possible
    through round-off) is discarded and the loop ends.
    """
    p = np.asarray(p_init, float).copy()
    state = ScaState(p_current=p)
    obj = power_objective(s, assoc, comp, p)
    state.objective_trace.append(obj)
    for _ in range(max_iter):
        A, B = sca_linearize(s, comp, p)
        state.a_const, state.b_coeff = A, B
        p_new = sca_inner_step(s, assoc, B)
        obj_new = power_objective(s, assoc, comp, p_new)
        state.iterations += 1
        if obj_new < obj:
            break
        gain = (obj_new - obj) / max(abs(obj), 1e-300)
        p, obj = p_new, obj_new
        state.objective_trace.append(obj)
        if gain < eps:
            break
    else:
        state.flags.append("max_iter")
    state.p_current = p
    return p, state


# -- association -----------------------------------------------------------------

def _rb_utility(s, n, p_n, dec_mask, cancellation=True):
    occ = s.occupied[:, n]
    if cancellation:
        omega = s.coop()[dec_mask].any(axis=0) & occ
    else:
        omega = np.zeros(s.J, dtype=bool)
    clean = np.log2(1 + s.gamma[:, n])
    hit = np.log2(1 + s.gamma[:, n] / (1 + p_n * s.F[:, n]))
    ground = np.where(occ, np.where(omega, clean, hit), 0.0).sum()
    return omega, ground


def rb_utility(s: Scenario, n: int, p_n: float, j: int, cancellation: bool = True) -> float:
    """Objective contribution of RB ``n`` when associated with BS ``j``."""
    col = s.Fnorm[:, n]
    dec = col >= col[j - 1]
    _, ground = _rb_utility(s, n, p_n, dec, cancellation)
    return float(np.log2(1 + p_n * col[j - 1]) + s.mu * ground)


def association_order(s: Scenario, n: int) -> np.ndarray:
    """Cell ids sorted by normalised gain, descending, lowest id first on ties."""
    col = s.Fnorm[:, n]
    idx = np.lexsort((np.arange(s.J), -col))
    return idx + 1


def associate_rb(s: Scenario, n: int, p_n: float):
    """Best association of RB ``n`` for power ``p_n`` by partial enumeration.

    Candidates are visited strongest first. A candidate is scored only if
    its cooperation set touches an occupied BS, and the walk stops once
    every occupied BS cancels. BSs of equal gain decode together, so a tie
    group is scored once and represented by its lowest id. Ties in the
    objective go to the earlier (stronger) candidate.
    """
    order = association_order(s, n)
    col = s.Fnorm[:, n]
    occ = s.occupied[:, n]
    if not occ.any():
        best = int(order[0])
        return best, rb_utility(s, n, p_n, best)
    coop = s.coop()
    touches = (coop[order - 1] & occ[None, :]).any(axis=1)
    dec = np.zeros(s.J, dtype=bool)
    best, best_u = None, -np.inf
    i = 0
    while i < s.J:
        k = i
        while k + 1 < s.J and col[order[k + 1] - 1] == col[order[i] - 1]:
            k += 1
        group = order[i:k + 1]
        dec[group - 1] = True
        if best is None or touches[i:k + 1].any():
            omega, ground = _rb_utility(s, n, p_n, dec)
            u = float(np.log2(1 + p_n * col[group[0] - 1]) + s.mu * ground)
            if u > best_u:
                best, best_u = int(group[0]), u
            if np.array_equal(omega, occ):
                break
        i = k + 1
    return best, best_u


def associate_full(s: Scenario, n: int, p_n: float):
    """Reference association by scoring every BS (same tie rule as the partial walk)."""
    best, best_u = None, -np.inf
    for j in association_order(s, n):
        u = rb_utility(s, n, p_n, int(j))
        if u > best_u:
            best, best_u = int(j), u
    return best, best_u


# -- AO -----------------------------------------------------------------------------

@dataclass
class AoState:
    outer_iters: int = 0
    inner_iters_per_outer: list = field(default_factory=list)
    q_trace: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    assoc: np.ndarray | None = None
    p: np.ndarray | None = None

    def diagnostics(self) -> dict:
        return {"outer_iters": self.outer_iters,
                "inner_iters_per_outer": list(self.inner_iters_per_outer),
                "q_trace": list(self.q_trace), "flags": list(self.flags)}

    def to_json(self) -> str:
        return json.dumps(self.diagnostics(), sort_keys=True)


def _init_assoc(s, restricted):
    if restricted:
        assoc, gains = unoccupied_best(s)
    else:
        assoc = egoistic_assoc(s)
        gains = s.Fnorm.max(axis=0)
    if np.any(gains > 0):
        p = water_fill(gains, s.p_max)
    else:
        p = np.zeros(s.N)
    return assoc, p


def ao_solve(s: Scenario, eps_outer: float = 1e-4, max_outer: int = 50,
             eps_inner: float = 1e-4, max_inner: int = 100, restricted: bool = False):
    """Alternate SCA power allocation and per-RB association from the egoistic point.

    With ``restricted=True`` (non-orthogonal benchmark) the UAV may associate
    only with unoccupied BSs and no BS cancels its signal.

    Returns ``(UavAllocation, NomaSets, RateReport, AoState)``.
    """
    cancellation = not restricted
    assoc, p = _init_assoc(s, restricted)
    state = AoState()
    q = q_value(s, assoc, p, cancellation)
    state.q_trace.append(q)
    for _ in range(max_outer):
        comp = (s.occupied & ~cancel_masks(s, assoc)) if cancellation else s.occupied
        p, sca = sca_power_alloc(s, assoc, comp, p, eps_inner, max_inner)
        state.inner_iters_per_outer.append(sca.iterations)
        if "max_iter" in sca.flags:
            state.flags.append(f"sca_max_iter@{state.outer_iters + 1}")
        if cancellation:
            new_assoc = assoc.copy()
            for n in range(s.N):
                j, u = associate_rb(s, n, p[n])
                if j != assoc[n] and u > rb_utility(s, n, p[n], int(assoc[n])):
                    new_assoc[n] = j
            assoc = new_assoc
        q_new = q_value(s, assoc, p, cancellation)
        state.outer_iters += 1
        state.q_trace.append(q_new)
        if (q_new - q) / max(abs(q), 1e-300) < eps_outer:
            q = q_new
            break
        q = q_new
    else:
        state.flags.append("max_outer")
    state.assoc, state.p = assoc, p
    assoc_out = np.where(p > 0, assoc, 0)
    alloc = UavAllocation.from_assoc(s, p, assoc_out)
    sets, report = evaluate(s, alloc, cancellation=cancellation)
    return alloc, sets, report, state


def ao_general(s: Scenario, **kw):
    alloc, sets, report, _ = ao_solve(s, **kw)
    return alloc, sets, report


__all__ = ["sca_linearize", "sca_inner_step", "sca_power_alloc", "associate_rb",
           "associate_full", "ao_solve", "AoState", "ScaState", "q_value",
           "non_orthogonal_solve"]
