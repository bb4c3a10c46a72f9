"""Bird's-eye-view traversability grid.

Cells are stored ``cells[iz, ix]``: rows advance along the forward axis z,
columns along the lateral axis x. Cost 0 is free, 1 is lethal and cells
never observed hold ``spec.unknown_cost``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LETHAL = 1.0


@dataclass(frozen=True)
class GridSpec:
    resolution: float = 0.05
    width: int = 160
    height: int = 160
    origin: tuple[float, float] = (-4.0, 0.0)
    unknown_cost: float = 0.5

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not 0.0 <= self.unknown_cost <= 1.0:
            raise ValueError(f"unknown_cost must lie in [0, 1], got {self.unknown_cost}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def extent(self):
        """(x_min, x_max, z_min, z_max) in meters."""
        x0, z0 = self.origin
        return (x0, x0 + self.width * self.resolution, z0, z0 + self.height * self.resolution)

    def cell_center(self, ix, iz):
        x0, z0 = self.origin
        return x0 + (ix + 0.5) * self.resolution, z0 + (iz + 0.5) * self.resolution

    def centers(self):
        """Meshgrid of cell-center coordinates, each of shape (height, width)."""
        ix = np.arange(self.width)
        iz = np.arange(self.height)
        x, z = self.cell_center(ix, iz)
        return np.meshgrid(x, z)


@dataclass(eq=False)
class CostMap:
    spec: GridSpec
    cells: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.cells is None:
            self.cells = np.full((self.spec.height, self.spec.width), self.spec.unknown_cost)
        cells = np.asarray(self.cells, dtype=float)
        if cells.shape != (self.spec.height, self.spec.width):
            raise ValueError(
                f"cells shape {cells.shape} does not match grid "
                f"{(self.spec.height, self.spec.width)}"
            )
        if np.any(~np.isfinite(cells)) or cells.min() < 0.0 or cells.max() > 1.0:
            raise ValueError("cell costs must lie in [0, 1]")
        self.cells = cells

    @classmethod
    def filled(cls, spec: GridSpec, cost: float) -> "CostMap":
        return cls(spec, np.full((spec.height, spec.width), float(cost)))

    def copy(self) -> "CostMap":
        return CostMap(self.spec, self.cells.copy())

    def __eq__(self, other):
        if not isinstance(other, CostMap):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.cells, other.cells)


def cell_indices(spec: GridSpec, points):
    """Vectorized cell lookup: returns ``(ix, iz, inside)`` for an (..., 2) array."""
    pts = np.asarray(points, dtype=float)
    ix = np.floor((pts[..., 0] - spec.origin[0]) / spec.resolution).astype(np.int64)
    iz = np.floor((pts[..., 1] - spec.origin[1]) / spec.resolution).astype(np.int64)
    inside = (ix >= 0) & (ix < spec.width) & (iz >= 0) & (iz < spec.height)
    return ix, iz, inside


def cell_of(cmap: CostMap, point):
    """Cell ``(ix, iz)`` containing ``point``, or None outside the grid."""
    ix, iz, inside = cell_indices(cmap.spec, point)
    if not inside:
        return None
    return int(ix), int(iz)


def point_costs(cmap: CostMap, points) -> np.ndarray:
    """Cost at each point of an (..., 2) array; lethal outside the grid."""
    ix, iz, inside = cell_indices(cmap.spec, points)
    out = np.full(inside.shape, LETHAL)
    out[inside] = cmap.cells[iz[inside], ix[inside]]
    return out


def point_cost(cmap: CostMap, point) -> float:
    return float(point_costs(cmap, point))


def set_cells(cmap: CostMap, indices, cost: float) -> CostMap:
    """Return a copy with every ``(ix, iz)`` in ``indices`` set to ``cost``."""
    if not 0.0 <= cost <= 1.0:
        raise ValueError(f"cost must lie in [0, 1], got {cost}")
    out = cmap.copy()
    idx = np.asarray(list(indices), dtype=np.int64).reshape(-1, 2)
    if idx.size == 0:
        return out
    ix, iz = idx[:, 0], idx[:, 1]
    bad = (ix < 0) | (ix >= cmap.spec.width) | (iz < 0) | (iz >= cmap.spec.height)
    if np.any(bad):
        raise IndexError(f"cell index out of bounds: {idx[bad][0].tolist()}")
    out.cells[iz, ix] = float(cost)
    return out


def _header(spec: GridSpec) -> str:
    return " ".join(
        [
            str(spec.width),
            str(spec.height),
            repr(spec.resolution),
            repr(spec.origin[0]),
            repr(spec.origin[1]),
            repr(spec.unknown_cost),
        ]
    )


def save_costmap(cmap: CostMap, path, binary: bool = False) -> None:
    """Write the text format (exact round-trip) or the 8-bit binary variant."""
    path = Path(path)
    if binary:
        raster = np.rint(cmap.cells * 255).astype(np.uint8)
        path.write_bytes(f"P5 {_header(cmap.spec)}\n".encode() + raster.tobytes())
        return
    rows = [_header(cmap.spec)]
    for row in cmap.cells:
        rows.append(" ".join(repr(float(c)) for c in row))
    path.write_text("\n".join(rows) + "\n")


def _parse_header(tokens) -> GridSpec:
    if len(tokens) != 6:
        raise ValueError(f"costmap header needs 6 fields, got {len(tokens)}")
    w, h = int(tokens[0]), int(tokens[1])
    res, ox, oz, unk = (float(t) for t in tokens[2:])
    return GridSpec(res, w, h, (ox, oz), unk)


def load_costmap(path) -> CostMap:
    data = Path(path).read_bytes()
    if data.startswith(b"P5 "):
        nl = data.index(b"\n")
        spec = _parse_header(data[3:nl].decode().split())
        raster = np.frombuffer(data[nl + 1 :], dtype=np.uint8)
        if raster.size != spec.width * spec.height:
            raise ValueError("binary costmap raster size mismatch")
        return CostMap(spec, raster.reshape(spec.height, spec.width) / 255.0)
    lines = [ln for ln in data.decode().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"empty costmap file {path}")
    spec = _parse_header(lines[0].split())
    values = [float(t) for ln in lines[1:] for t in ln.split()]
    if len(values) != spec.width * spec.height:
        raise ValueError(
            f"costmap expects {spec.width * spec.height} values, found {len(values)}"
        )
    return CostMap(spec, np.array(values).reshape(spec.height, spec.width))
