"""Hexagonal multi-cell layout and tier-structured neighbour sets.

Cells are indexed by a counterclockwise spiral: cell 1 sits at the origin,
ring ``m`` holds ``6m`` cells and starts at the corner cell lying on the
+x axis. Neighbouring centres are spaced ``sqrt(3) * cell_radius`` apart
along the directions 0, 60, ..., 300 degrees, so each cell is a hexagon
with vertices at 30 + 60k degrees.

Cell ids are 1-based throughout the public API.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError

# axial lattice steps, counterclockwise from +x
_DIRECTIONS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


def _spiral(num_tiers):
    coords = [(0, 0)]
    for m in range(1, num_tiers + 1):
        q, r = m * _DIRECTIONS[0][0], m * _DIRECTIONS[0][1]
        for side in range(6):
            dq, dr = _DIRECTIONS[(side + 2) % 6]
            for _ in range(m):
                coords.append((q, r))
                q, r = q + dq, r + dr
    return coords


def hex_distance(a, b):
    """Lattice distance (number of cell hops) between two axial coordinates."""
    dq = a[0] - b[0]
    dr = a[1] - b[1]
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


@dataclass(eq=False)
class HexTopology:
    """Immutable hexagonal layout of ``cell_count`` cells."""

    num_tiers: int
    cell_radius: float
    axial: list = field(repr=False)
    centers: np.ndarray = field(repr=False)
    tier_of: dict = field(repr=False)
    hops: np.ndarray = field(repr=False)

    @property
    def cell_count(self) -> int:
        return len(self.axial)

    @property
    def cell_ids(self):
        return range(1, self.cell_count + 1)

    def _check(self, j):
        if not (isinstance(j, (int, np.integer)) and 1 <= j <= self.cell_count):
            raise InputDomainError(f"unknown cell id {j!r} (topology has {self.cell_count} cells)")

    def ring(self, j: int, m: int) -> frozenset:
        self._check(j)
        return frozenset(int(i) + 1 for i in np.flatnonzero(self.hops[j - 1] == m))

    def neighbor_set(self, j: int, M: int) -> frozenset:
        self._check(j)
        row = self.hops[j - 1]
        return frozenset(int(i) + 1 for i in np.flatnonzero((row >= 1) & (row <= M)))

    def coop_set(self, j: int, M: int) -> frozenset:
        self._check(j)
        return frozenset(int(i) + 1 for i in np.flatnonzero(self.hops[j - 1] <= M))

    def coop_matrix(self, M: int) -> np.ndarray:
        """Boolean ``(J, J)`` matrix; entry ``[j-1, l-1]`` is ``l in C_j(M)``."""
        return self.hops <= M

    def contains(self, j: int, xy) -> bool:
        """Whether point ``xy`` lies inside (or on the boundary of) hexagon ``j``."""
        self._check(j)
        return point_in_hexagon(np.asarray(xy, float) - self.centers[j - 1], self.cell_radius)

    def diameter(self) -> int:
        return int(self.hops.max())

    def manifest(self) -> dict:
        """JSON-ready description of the layout and every neighbour ring."""
        rings = {}
        for j in self.cell_ids:
            row = self.hops[j - 1]
            rings[str(j)] = {
                str(m): sorted(int(i) + 1 for i in np.flatnonzero(row == m))
                for m in range(1, int(row.max()) + 1)
            }
        return {
            "J": self.cell_count,
            "radius_m": self.cell_radius,
            "num_tiers": self.num_tiers,
            "orientation": "neighbours at 0,60,...,300 deg; spiral counterclockwise from +x",
            "ring_start_offsets": [0] * self.num_tiers,
            "centers": [[float(x), float(y)] for x, y in self.centers],
            "neighbor_rings": rings,
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), sort_keys=True)


def point_in_hexagon(offset, radius) -> bool:
    """Point-in-hexagon test relative to the cell centre.

    The hexagon has circumradius ``radius`` and vertices at 30 + 60k degrees,
    so its apothem points along 0, 60 and 120 degrees.
    """
    x, y = float(offset[0]), float(offset[1])
    apothem = radius * math.sqrt(3) / 2
    tol = 1e-9 * radius
    for ang in (0.0, math.pi / 3, 2 * math.pi / 3):
        if abs(x * math.cos(ang) + y * math.sin(ang)) > apothem + tol:
            return False
    return True


def build_topology(num_tiers: int, cell_radius: float = 800.0) -> HexTopology:
    if num_tiers < 0:
        raise InputDomainError("num_tiers must be >= 0")
    if not cell_radius > 0:
        raise InputDomainError("cell_radius must be positive")
    axial = _spiral(num_tiers)
    spacing = math.sqrt(3) * cell_radius
    a1 = np.array([spacing, 0.0])
    a2 = np.array([spacing / 2, spacing * math.sqrt(3) / 2])
    centers = np.array([q * a1 + r * a2 for q, r in axial])
    J = len(axial)
    hops = np.zeros((J, J), dtype=int)
    for i in range(J):
        for k in range(J):
            hops[i, k] = hex_distance(axial[i], axial[k])
    tier_of = {i + 1: hex_distance(c, (0, 0)) for i, c in enumerate(axial)}
    return HexTopology(num_tiers, float(cell_radius), axial, centers, tier_of, hops)


def neighbor_set(topo: HexTopology, j: int, M: int) -> frozenset:
    """First ``M`` tiers of neighbours of cell ``j``, clipped to the layout."""
    return topo.neighbor_set(j, M)


def coop_set(topo: HexTopology, j: int, M: int) -> frozenset:
    """Cell ``j`` together with its first ``M`` tiers of neighbours."""
    return topo.coop_set(j, M)
