"""Candidate path sampling and cost scoring.

Paths live in the robot BEV frame (x right, z forward) and all start at the
origin. The set is sampled once; each planning cycle only re-scores it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .costmap import CostMap, point_costs


@dataclass(frozen=True)
class SamplerSpec:
    M: int = 128
    n: int = 20
    fov_halfangle: float = math.radians(60.0)
    endpoint_radius: float = 3.5
    curvature_range: float = 0.2

    def __post_init__(self):
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0 < self.fov_halfangle <= math.pi / 2:
            raise ValueError(f"fov_halfangle must lie in (0, pi/2], got {self.fov_halfangle}")
        if not self.endpoint_radius > 0:
            raise ValueError(f"endpoint_radius must be positive, got {self.endpoint_radius}")
        if self.curvature_range < 0:
            raise ValueError("curvature_range must be non-negative")


@dataclass(frozen=True, eq=False)
class Path:
    waypoints: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 2:
            raise ValueError(f"waypoints must be (n>=2, 2), got {wp.shape}")
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    @property
    def n(self) -> int:
        return self.waypoints.shape[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.waypoints[-1]

    def to_json(self) -> dict:
        return {"kind": self.kind, "waypoints": self.waypoints.tolist()}


@dataclass(frozen=True, eq=False)
class PathSet:
    paths: tuple
    seed: int
    spec: SamplerSpec = field(default_factory=SamplerSpec)
    generated_once: bool = True

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        return self.paths[i]

    def stack(self) -> np.ndarray:
        """All waypoints as one (M, n, 2) array."""
        return np.stack([p.waypoints for p in self.paths])

    def dump(self, path) -> None:
        FsPath(path).write_text(json.dumps([p.to_json() for p in self.paths]))


def _resample(x: np.ndarray, z: np.ndarray, n: int) -> np.ndarray:
    seg = np.hypot(np.diff(x), np.diff(z))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n)
    out = np.column_stack([np.interp(targets, s, x), np.interp(targets, s, z)])
    out[0] = 0.0
    out[-1] = x[-1], z[-1]
    return out


def _polyline(ex: float, ez: float, b: float, dense: int = 256):
    if b == 0.0 or ez < 1e-6:
        t = np.linspace(0.0, 1.0, dense)
        return ex * t, ez * t
    a = (ex - b * ez * ez) / ez
    z = np.linspace(0.0, ez, dense)
    return a * z + b * z * z, z


def sample_paths(spec: SamplerSpec, seed: int) -> PathSet:
    """Linear and quadratic paths x(z) to endpoints on an arc inside the FOV.

    Endpoints are drawn in pairs: each endpoint gets one straight and one
    curved path, truncated to ``spec.M`` in total. The set is stored in order
    of increasing absolute endpoint bearing, so index tie-breaks between
    equal-cost paths favour the straighter one.
    """
    rng = np.random.default_rng(seed)
    paths = []
    while len(paths) < spec.M:
        phi = rng.uniform(-spec.fov_halfangle, spec.fov_halfangle)
        b = rng.uniform(-spec.curvature_range, spec.curvature_range)
        ex = spec.endpoint_radius * math.sin(phi)
        ez = spec.endpoint_radius * math.cos(phi)
        paths.append(Path(_resample(*_polyline(ex, ez, 0.0), spec.n), "linear"))
        if len(paths) < spec.M:
            kind = "quadratic" if ez >= 1e-6 and b != 0.0 else "linear"
            paths.append(Path(_resample(*_polyline(ex, ez, b), spec.n), kind))
    paths.sort(key=lambda p: abs(math.atan2(p.endpoint[0], p.endpoint[1])))
    return PathSet(tuple(paths), seed, spec)


def traversability_costs(stack: np.ndarray, cmap: CostMap) -> np.ndarray:
    """Sum of map cost over waypoints for an (M, n, 2) stack."""
    return point_costs(cmap, stack).sum(axis=-1)


def goal_costs(stack: np.ndarray, goal_direction) -> np.ndarray:
    """Per-path sum of (1 - cos angle)/2 between (p_i - p_1) and the goal, i >= 2."""
    g = np.asarray(goal_direction, dtype=float)
    rel = stack[..., 1:, :] - stack[..., :1, :]
    norm = np.linalg.norm(rel, axis=-1)
    cos = np.divide(rel @ g, norm, out=np.zeros_like(norm), where=norm > 0)
    return ((1.0 - np.clip(cos, -1.0, 1.0)) / 2.0).sum(axis=-1)


def traversability_cost(path: Path, cmap: CostMap) -> float:
    return float(traversability_costs(path.waypoints, cmap))


def goal_cost(path: Path, goal_direction) -> float:
    return float(goal_costs(path.waypoints, goal_direction))


def combined_cost(path: Path, cmap: CostMap, goal_direction, beta: float) -> float:
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    return traversability_cost(path, cmap) + beta * goal_cost(path, goal_direction)


def rank_by_cost(costs: np.ndarray) -> np.ndarray:
    """Indices sorted by cost, ties by index."""
    return np.argsort(costs, kind="stable")


def top_k_indices(pathset: PathSet, cmap: CostMap, K: int):
    if not 1 <= K <= len(pathset):
        raise ValueError(f"K must lie in [1, {len(pathset)}], got {K}")
    costs = traversability_costs(pathset.stack(), cmap)
    order = rank_by_cost(costs)[:K]
    return order, costs[order]


def top_k(pathset: PathSet, cmap: CostMap, K: int) -> list:
    order, _ = top_k_indices(pathset, cmap, K)
    return [pathset[i] for i in order]
