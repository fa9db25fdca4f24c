"""Bounded 2-D phase-space regions and their uniform grained partitions.

A :class:`Partition` splits an axis-aligned rectangle into ``cells_q * cells_p``
congruent half-open cells. The cell area ``h_cell`` plays the role of the
elementary grain, so ``M * h_cell == area`` holds by construction and
``q_param = area / h_cell`` is the quasiclassical parameter.

Cells are numbered row-major with the momentum row first::

    index = row * cells_q + col      # row <- p, col <- q
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateBoundsError, OutOfRegionError, ZeroCellError


@dataclass(frozen=True)
class Region:
    q_min: float
    q_max: float
    p_min: float
    p_max: float

    @property
    def width(self) -> float:
        return self.q_max - self.q_min

    @property
    def height(self) -> float:
        return self.p_max - self.p_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, q, p):
        """Vectorised membership test for the half-open rectangle."""
        q = np.asarray(q)
        p = np.asarray(p)
        return (q >= self.q_min) & (q < self.q_max) & (p >= self.p_min) & (p < self.p_max)


UNIT_SQUARE_BOUNDS = (0.0, 1.0, 0.0, 1.0)


def make_region(q_min: float, q_max: float, p_min: float, p_max: float) -> Region:
    bounds = [float(v) for v in (q_min, q_max, p_min, p_max)]
    if not all(math.isfinite(v) for v in bounds):
        raise DegenerateBoundsError(f"region bounds must be finite, got {bounds}")
    q_min, q_max, p_min, p_max = bounds
    if not q_max > q_min:
        raise DegenerateBoundsError(f"q side has non-positive length ({q_min}, {q_max})")
    if not p_max > p_min:
        raise DegenerateBoundsError(f"p side has non-positive length ({p_min}, {p_max})")
    region = Region(q_min, q_max, p_min, p_max)
    if not (region.area > 0 and math.isfinite(region.area)):
        raise DegenerateBoundsError(f"region area {region.area} is not positive and finite")
    return region


def unit_square() -> Region:
    return make_region(*UNIT_SQUARE_BOUNDS)


@dataclass(frozen=True)
class CellId:
    index: int
    cells_q: int

    @property
    def row(self) -> int:
        return self.index // self.cells_q

    @property
    def col(self) -> int:
        return self.index % self.cells_q

    def __int__(self) -> int:
        return self.index


@dataclass(frozen=True)
class Partition:
    region: Region
    cells_q: int
    cells_p: int

    @property
    def M(self) -> int:
        return self.cells_q * self.cells_p

    @property
    def dq(self) -> float:
        return self.region.width / self.cells_q

    @property
    def dp(self) -> float:
        return self.region.height / self.cells_p

    @property
    def h_cell(self) -> float:
        return self.region.area / self.M

    @property
    def q_param(self) -> float:
        return float(self.M)

    def cell_of(self, row: int, col: int) -> CellId:
        if not (0 <= row < self.cells_p and 0 <= col < self.cells_q):
            raise OutOfRegionError(f"cell ({row}, {col}) outside a {self.cells_q}x{self.cells_p} grid")
        return CellId(row * self.cells_q + col, self.cells_q)

    def cell_bounds(self, index: int) -> tuple[float, float, float, float]:
        """``(q_lo, q_hi, p_lo, p_hi)`` of cell ``index``."""
        row, col = divmod(int(index), self.cells_q)
        r = self.region
        return (
            r.q_min + col * self.dq,
            r.q_min + (col + 1) * self.dq,
            r.p_min + row * self.dp,
            r.p_min + (row + 1) * self.dp,
        )

    def indices(self, q, p) -> np.ndarray:
        """Vectorised cell indices. Raises if any point lies outside the region."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        inside = self.region.contains(q, p)
        if not np.all(inside):
            bad = np.flatnonzero(~np.atleast_1d(inside))[0]
            qb = np.atleast_1d(q)[bad]
            pb = np.atleast_1d(p)[bad]
            raise OutOfRegionError(f"point ({qb!r}, {pb!r}) is outside the region")
        return self._raw_indices(q, p)

    def _raw_indices(self, q, p) -> np.ndarray:
        r = self.region
        col = np.floor((q - r.q_min) / r.width * self.cells_q).astype(np.int64)
        row = np.floor((p - r.p_min) / r.height * self.cells_p).astype(np.int64)
        # float rounding can push a point just below the upper edge onto it
        col = np.clip(col, 0, self.cells_q - 1)
        row = np.clip(row, 0, self.cells_p - 1)
        return row * self.cells_q + col

    def to_dict(self) -> dict:
        r = self.region
        return {
            "q_min": r.q_min,
            "q_max": r.q_max,
            "p_min": r.p_min,
            "p_max": r.p_max,
            "cells_q": self.cells_q,
            "cells_p": self.cells_p,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Partition":
        region = make_region(data["q_min"], data["q_max"], data["p_min"], data["p_max"])
        return make_partition(region, data["cells_q"], data["cells_p"])

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        return cls.from_dict(json.loads(text))


def make_partition(region: Region, cells_q: int, cells_p: int) -> Partition:
    if int(cells_q) != cells_q or int(cells_p) != cells_p:
        raise ZeroCellError(f"cell counts must be integers, got {cells_q}x{cells_p}")
    cells_q, cells_p = int(cells_q), int(cells_p)
    if cells_q < 1 or cells_p < 1:
        raise ZeroCellError(f"cell counts must be >= 1, got {cells_q}x{cells_p}")
    return Partition(region, cells_q, cells_p)


def cell_index(partition: Partition, point: Sequence[float]) -> CellId:
    q, p = (float(v) for v in point)
    if not partition.region.contains(q, p):
        raise OutOfRegionError(f"point ({q}, {p}) is outside the half-open region")
    return CellId(int(partition._raw_indices(np.array([q]), np.array([p]))[0]), partition.cells_q)


def quasiclassical_parameter(partition: Partition) -> float:
    return partition.region.area / partition.h_cell


def parse_grid(text: str) -> tuple[int, int]:
    """Parse ``"32x32"`` into ``(cells_q, cells_p)``."""
    parts = text.lower().replace("×", "x").split("x")
    if len(parts) != 2:
        raise ZeroCellError(f"grid must look like '32x32', got {text!r}")
    try:
        cq, cp = int(parts[0]), int(parts[1])
    except ValueError:
        raise ZeroCellError(f"grid must look like '32x32', got {text!r}") from None
    if cq < 1 or cp < 1:
        raise ZeroCellError(f"grid cell counts must be >= 1, got {text!r}")
    return cq, cp


def named_cell_set(partition: Partition, name: str) -> frozenset[int]:
    """Cells making up a named region: ``all``, ``left``, ``right``, ``bottom``,
    ``top`` or a quadrant such as ``bottom-left``.

    Halves need an even number of cells along the cut axis. A comma separated
    list of integers is also accepted.
    """
    name = name.strip().lower()
    if name and (name[0].isdigit() or "," in name):
        cells = frozenset(int(tok) for tok in name.split(",") if tok.strip())
        bad = [c for c in cells if not 0 <= c < partition.M]
        if bad:
            raise OutOfRegionError(f"cell indices {bad} outside [0, {partition.M})")
        return cells
    rows = np.arange(partition.M) // partition.cells_q
    cols = np.arange(partition.M) % partition.cells_q
    mask = np.ones(partition.M, dtype=bool)
    for part in name.split("-"):
        if part == "all":
            continue
        if part in ("left", "right"):
            if partition.cells_q % 2:
                raise ZeroCellError(f"'{part}' half needs an even cells_q, got {partition.cells_q}")
            half = cols < partition.cells_q // 2
            mask &= half if part == "left" else ~half
        elif part in ("bottom", "top"):
            if partition.cells_p % 2:
                raise ZeroCellError(f"'{part}' half needs an even cells_p, got {partition.cells_p}")
            half = rows < partition.cells_p // 2
            mask &= half if part == "bottom" else ~half
        else:
            raise ZeroCellError(f"unknown cell-set name {name!r}")
    return frozenset(int(i) for i in np.flatnonzero(mask))


def cell_set_measure(partition: Partition, cells: Iterable[int]) -> float:
    """Normalised Lebesgue measure of a union of cells."""
    return len(set(cells)) / partition.M
