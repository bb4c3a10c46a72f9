"""Per-pixel ray geometry and ground-plane projection into the BEV cost map.

Conventions: image u right, v down; camera frame x right, y up, z forward.
The camera sits at the robot origin, ``height`` meters above a flat ground
plane, so a ground point in the camera frame is ``(x, -height, z)`` and the
BEV frame is simply ``(x, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .costmap import CostMap, GridSpec

HORIZON_EPS = 1e-6


class CameraError(ValueError):
    """Invalid camera parameters or arguments."""


class RayTableParseError(CameraError):
    pass


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Dense per-pixel unit ray table plus mounting height.

    ``rays`` has shape ``(height_px, width_px, 3)``, indexed ``rays[v, u]``.
    """

    rays: np.ndarray
    height: float
    _ground: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rays = np.asarray(self.rays, dtype=float)
        if rays.ndim != 3 or rays.shape[2] != 3:
            raise CameraError(f"ray table must be (H, W, 3), got {rays.shape}")
        if not self.height > 0:
            raise CameraError(f"camera height must be positive, got {self.height}")
        norms = np.linalg.norm(rays, axis=2)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise CameraError("ray table contains non-unit rays")
        rays = rays.copy()
        rays.setflags(write=False)
        object.__setattr__(self, "rays", rays)
        object.__setattr__(self, "height", float(self.height))

    @property
    def image_dims(self) -> tuple[int, int]:
        """(width, height) in pixels."""
        return self.rays.shape[1], self.rays.shape[0]

    def ground_points(self):
        """Ground intersections for every pixel, cached.

        Returns ``(x, z, valid)`` arrays of image shape; ``x``/``z`` are NaN
        where ``valid`` is False (ray at or above the horizon).
        """
        if self._ground is None:
            dy = self.rays[..., 1]
            valid = dy < -HORIZON_EPS
            s = np.full(dy.shape, np.nan)
            s[valid] = -self.height / dy[valid]
            x = s * self.rays[..., 0]
            z = s * self.rays[..., 2]
            for a in (x, z, valid):
                a.setflags(write=False)
            object.__setattr__(self, "_ground", (x, z, valid))
        return self._ground


def _pitch_rotate(d: np.ndarray, pitch: float) -> np.ndarray:
    # Rotation about the camera x axis; negative pitch tilts the view down.
    c, s = np.cos(pitch), np.sin(pitch)
    out = np.empty_like(d)
    out[..., 0] = d[..., 0]
    out[..., 1] = c * d[..., 1] + s * d[..., 2]
    out[..., 2] = -s * d[..., 1] + c * d[..., 2]
    return out


def _pixel_grid(dims):
    width, height = dims
    if width < 1 or height < 1:
        raise CameraError(f"image dims must be positive, got {dims}")
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    return u, v


def make_pinhole(fx, fy, cx, cy, pitch, height, dims) -> CameraModel:
    """Synthetic pinhole camera materialized as a ray table."""
    if not (fx > 0 and fy > 0):
        raise CameraError(f"focal lengths must be positive, got fx={fx}, fy={fy}")
    if not height > 0:
        raise CameraError(f"camera height must be positive, got {height}")
    u, v = _pixel_grid(dims)
    d = np.stack([(u - cx) / fx, -(v - cy) / fy, np.ones_like(u)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return CameraModel(_pitch_rotate(d, pitch), height)


def make_fisheye(f, cx, cy, pitch, height, dims) -> CameraModel:
    """Equidistant fisheye (radius = f * angle off axis) as a ray table.

    Stands in for a calibrated generic model with a wide field of view.
    """
    if not f > 0:
        raise CameraError(f"focal length must be positive, got {f}")
    if not height > 0:
        raise CameraError(f"camera height must be positive, got {height}")
    u, v = _pixel_grid(dims)
    du, dv = u - cx, -(v - cy)
    r = np.hypot(du, dv)
    theta = r / f
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, np.sin(theta) / r, 0.0)
    d = np.stack([du * scale, dv * scale, np.cos(theta)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return CameraModel(_pitch_rotate(d, pitch), height)


def load_ray_table(path, height: float) -> CameraModel:
    """Read a text ray table: ``width height`` then one ``dx dy dz`` per pixel, row-major."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise RayTableParseError(f"cannot read ray table {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise RayTableParseError("empty ray table")
    try:
        width, rows = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise RayTableParseError(f"bad ray table header: {lines[0]!r}") from exc
    if width < 1 or rows < 1:
        raise RayTableParseError(f"bad ray table dims {width}x{rows}")
    body = lines[1:]
    if len(body) != width * rows:
        raise RayTableParseError(f"expected {width * rows} rays, found {len(body)}")
    try:
        rays = np.array([[float(t) for t in ln.split()] for ln in body])
    except ValueError as exc:
        raise RayTableParseError(f"non-numeric ray entry: {exc}") from exc
    if rays.ndim != 2 or rays.shape[1] != 3:
        raise RayTableParseError("each ray line must hold exactly three floats")
    if not np.all(np.isfinite(rays)):
        raise RayTableParseError("ray table contains non-finite values")
    norms = np.linalg.norm(rays, axis=1)
    if np.any(norms < 1e-12):
        raise RayTableParseError("ray table contains a zero vector")
    rays = (rays / norms[:, None]).reshape(rows, width, 3)
    try:
        return CameraModel(rays, height)
    except CameraError as exc:
        raise RayTableParseError(str(exc)) from exc


def save_ray_table(model: CameraModel, path) -> None:
    width, height = model.image_dims
    lines = [f"{width} {height}"]
    for d in model.rays.reshape(-1, 3):
        lines.append(" ".join(repr(float(c)) for c in d))
    Path(path).write_text("\n".join(lines) + "\n")


def ground_intersect(model: CameraModel, u: int, v: int):
    """Solve s * ray = (., -h, .) for one pixel.

    Returns ``(x, z)`` in meters, or None when the ray is at or above the
    horizon.
    """
    width, height = model.image_dims
    if not (0 <= u < width and 0 <= v < height):
        raise CameraError(f"pixel ({u}, {v}) outside image {width}x{height}")
    dx, dy, dz = model.rays[v, u]
    if dy >= -HORIZON_EPS:
        return None
    s = -model.height / dy
    return float(s * dx), float(s * dz)


class BevProjector:
    """Precomputed pixel-to-cell lookup for one (camera, grid) pair.

    The pixel footprint never changes between frames, so repeated projection
    reduces to two bincounts.
    """

    def __init__(self, model: CameraModel, spec: GridSpec):
        self.model = model
        self.spec = spec
        x, z, valid = model.ground_points()
        flat = np.full(x.size, -1, dtype=np.int64)
        xs, zs = x.ravel(), z.ravel()
        ok = valid.ravel() & (zs > 0)
        ix = np.floor((xs[ok] - spec.origin[0]) / spec.resolution)
        iz = np.floor((zs[ok] - spec.origin[1]) / spec.resolution)
        inside = (ix >= 0) & (ix < spec.width) & (iz >= 0) & (iz < spec.height)
        idx = np.where(inside, iz * spec.width + ix, -1).astype(np.int64)
        flat[np.flatnonzero(ok)] = idx
        self.pixel_cell = flat
        self._hit = flat >= 0
        self.pixels_per_cell = np.bincount(
            flat[self._hit], minlength=spec.width * spec.height
        ).reshape(spec.height, spec.width)

    def counts(self, mask: np.ndarray):
        """Per-cell (traversable, non-traversable) pixel counts, each (height, width)."""
        width, height = self.model.image_dims
        mask = np.asarray(mask)
        if mask.shape != (height, width):
            raise CameraError(
                f"mask shape {mask.shape} does not match image {(height, width)}"
            )
        trav = mask.ravel().astype(bool)
        cells = self.pixel_cell[self._hit]
        t = trav[self._hit]
        ncell = self.spec.width * self.spec.height
        shape = (self.spec.height, self.spec.width)
        n_free = np.bincount(cells[t], minlength=ncell).reshape(shape)
        n_block = np.bincount(cells[~t], minlength=ncell).reshape(shape)
        return n_free, n_block

    def cost_from_counts(self, n_free: np.ndarray, n_block: np.ndarray) -> CostMap:
        grid = np.full(n_free.shape, self.spec.unknown_cost)
        # Any obstacle evidence wins over free evidence.
        grid[n_block > 0] = 1.0
        grid[(n_free > 0) & (n_block == 0)] = 0.0
        return CostMap(self.spec, grid)

    def project(self, mask: np.ndarray) -> CostMap:
        return self.cost_from_counts(*self.counts(mask))


def project_mask_to_bev(model: CameraModel, mask, spec: GridSpec) -> CostMap:
    return BevProjector(model, spec).project(mask)


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM (P5) as a uint8 array of shape (rows, cols)."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"truncated PGM header in {path}")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM (magic {tokens[0]!r})")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError("only 8-bit PGM masks are supported")
    pos += 1
    raster = np.frombuffer(data[pos : pos + rows * cols], dtype=np.uint8)
    if raster.size != rows * cols:
        raise ValueError(f"PGM raster too short in {path}")
    return raster.reshape(rows, cols).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    rows, cols = image.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode() + image.tobytes())


def read_mask(path) -> np.ndarray:
    """Binary traversability mask from a PGM; 255 is traversable."""
    return read_pgm(path) >= 128


def write_mask(path, mask) -> None:
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0))
