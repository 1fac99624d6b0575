"""Structured grid of square elements, density fields, and radius neighborhoods."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Neighborhoods narrower than 1.5 element sizes would collapse to the element
# itself, so the effective radius is floored there.
MIN_NEIGHBORHOOD_FACTOR = 1.5

STAGES = ("raw", "filtered", "dgi", "physical")

_field_serial = itertools.count(1)


class ElementField:
    """One scalar per element, tagged with the pipeline stage it belongs to.

    Values are stored read-only; every construction gets a fresh revision
    number so downstream caches can detect inputs that were swapped out.
    """

    __slots__ = ("values", "stage", "revision")

    def __init__(self, values, stage: str):
        values = np.array(values, dtype=float)
        if values.ndim != 1:
            raise ValueError(f"element field must be one-dimensional, got shape {values.shape}")
        if stage not in STAGES:
            raise ValueError(f"unknown field stage {stage!r}, expected one of {STAGES}")
        if values.size and (np.isnan(values).any() or (values < 0.0).any() or (values > 1.0).any()):
            raise ValueError("density values must lie in [0, 1]")
        values.setflags(write=False)
        self.values = values
        self.stage = stage
        self.revision = next(_field_serial)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"ElementField(stage={self.stage!r}, n={self.values.size}, revision={self.revision})"


@dataclass(frozen=True)
class NeighborTable:
    """CSR-style adjacency: elements of neighborhood e are indices[indptr[e]:indptr[e+1]]."""

    radius: float
    effective_radius: float
    indptr: np.ndarray
    indices: np.ndarray

    def row(self, e: int) -> np.ndarray:
        return self.indices[self.indptr[e]:self.indptr[e + 1]]


@dataclass
class StructuredGrid:
    """Fixed rectangular grid of nx-by-ny square elements of edge length h.

    Element e = j*nx + i sits at center origin + ((i+0.5)h, (j+0.5)h);
    node n = j*(nx+1) + i. Immutable after construction.
    """

    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)
    _neighbor_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigError("element counts must be integers")
        self.nx, self.ny = int(self.nx), int(self.ny)
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"grid needs at least one element per direction, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ConfigError(f"element size must be positive, got {self.h}")

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def element_volume(self) -> float:
        # unit out-of-plane reference thickness
        return self.h * self.h

    @property
    def width(self) -> float:
        return self.nx * self.h

    @property
    def height(self) -> float:
        return self.ny * self.h

    def element_volumes(self) -> np.ndarray:
        return np.full(self.n_elements, self.element_volume)

    def element_index(self, i: int, j: int) -> int:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"element ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def node_index(self, i: int, j: int) -> int:
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise IndexError(f"node ({i}, {j}) outside grid")
        return j * (self.nx + 1) + i

    def element_centers(self) -> np.ndarray:
        """(n_elements, 2) array of element center coordinates."""
        e = np.arange(self.n_elements)
        x = self.origin[0] + (e % self.nx + 0.5) * self.h
        y = self.origin[1] + (e // self.nx + 0.5) * self.h
        return np.column_stack([x, y])

    def element_at(self, x: float, y: float) -> int:
        """Element containing point (x, y); points on the upper/right boundary clamp inward."""
        fx = (x - self.origin[0]) / self.h
        fy = (y - self.origin[1]) / self.h
        i = min(max(int(math.floor(fx)), 0), self.nx - 1)
        j = min(max(int(math.floor(fy)), 0), self.ny - 1)
        return self.element_index(i, j)

    def contains_point(self, x: float, y: float) -> bool:
        return (self.origin[0] <= x <= self.origin[0] + self.width
                and self.origin[1] <= y <= self.origin[1] + self.height)

    def neighbor_table(self, r: float) -> NeighborTable:
        """Cached table of center-to-center neighborhoods of radius max(r, 1.5h)."""
        if r < 0:
            raise ValueError(f"neighborhood radius must be nonnegative, got {r}")
        key = float(r)
        table = self._neighbor_cache.get(key)
        if table is None:
            table = self._build_neighbor_table(key)
            self._neighbor_cache[key] = table
        return table

    def _build_neighbor_table(self, r: float) -> NeighborTable:
        r_eff = max(r, MIN_NEIGHBORHOOD_FACTOR * self.h)
        ratio2 = (r_eff / self.h) ** 2 * (1.0 + 1e-12)  # tolerance keeps ties on the circle
        m = int(math.floor(math.sqrt(ratio2)))
        offsets = [(di, dj)
                   for dj in range(-m, m + 1)
                   for di in range(-m, m + 1)
                   if di * di + dj * dj <= ratio2]

        ids = np.arange(self.n_elements, dtype=np.int64).reshape(self.ny, self.nx)
        src_parts, dst_parts = [], []
        for di, dj in offsets:
            i0, i1 = max(0, -di), self.nx - max(0, di)
            j0, j1 = max(0, -dj), self.ny - max(0, dj)
            if i0 >= i1 or j0 >= j1:
                continue
            src_parts.append(ids[j0:j1, i0:i1].ravel())
            dst_parts.append(ids[j0 + dj:j1 + dj, i0 + di:i1 + di].ravel())
        src = np.concatenate(src_parts)
        dst = np.concatenate(dst_parts)
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=self.n_elements)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return NeighborTable(radius=r, effective_radius=r_eff, indptr=indptr, indices=dst)


def build_grid(nx: int, ny: int, h: float, origin: tuple[float, float] = (0.0, 0.0)) -> StructuredGrid:
    return StructuredGrid(nx=nx, ny=ny, h=h, origin=origin)


def neighborhood(grid: StructuredGrid, e: int, r: float) -> set[int]:
    """Element ids whose centers lie within max(r, 1.5h) of element e's center."""
    if not (0 <= e < grid.n_elements):
        raise IndexError(f"element id {e} outside grid with {grid.n_elements} elements")
    return set(int(i) for i in grid.neighbor_table(r).row(e))
