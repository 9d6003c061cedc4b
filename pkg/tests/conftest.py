import numpy as np
import pytest

from coopnoma.hexgrid import build_topology
from coopnoma.scenario import Scenario

_TOPOS = {}


def topology(tiers=3, radius=800.0):
    key = (tiers, radius)
    if key not in _TOPOS:
        _TOPOS[key] = build_topology(tiers, radius)
    return _TOPOS[key]


def make_scenario(occupied, gamma, F, *, tiers=1, p_max=1.0, mu=1.0, M=1, seed=None):
    """Scenario from explicit ``(J, N)`` arrays; occupied cells get consecutive UE ids."""
    occupied = np.asarray(occupied, bool)
    serving = -np.ones(occupied.shape, dtype=int)
    serving[occupied] = np.arange(occupied.sum())
    gamma = np.where(occupied, np.asarray(gamma, float), 0.0)
    return Scenario(topology(tiers), serving, gamma, np.asarray(F, float), p_max, mu, M, seed)


def random_scenario(seed, *, tiers=1, N=4, p_occ=0.4, p_max=None, mu=None, M=None):
    """Synthetic instance with log-normal gains and random occupancy.

    Gains are drawn around the magnitudes seen in generated scenarios so
    that power budgets near 0.1 W give rates of a few bps/Hz.
    """
    rng = np.random.default_rng(seed)
    J = topology(tiers).cell_count
    occ = rng.random((J, N)) < p_occ
    gamma = 10 ** rng.uniform(-1, 3, (J, N))
    F = 10 ** rng.uniform(0, 4, (J, 1)).repeat(N, axis=1)
    return make_scenario(
        occ, gamma, F, tiers=tiers,
        p_max=float(rng.uniform(0.01, 1.0)) if p_max is None else p_max,
        mu=float(10 ** rng.uniform(-1, 1)) if mu is None else mu,
        M=int(rng.integers(0, 3)) if M is None else M, seed=seed)


@pytest.fixture
def topo37():
    return topology(3)


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        notes = [v for k, v in report.user_properties if k == "note"]
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome, notes))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, outcome, notes in _ACCEPTANCE:
        tr.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
        for note in notes:
            tr.write_line(f"      {note}")
