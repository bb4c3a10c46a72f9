"""Path fusion: adaptive k-means over the cheapest candidates, centroid
merging and goal-aligned selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import CostMap
from .paths import Path, PathSet, goal_costs, rank_by_cost, traversability_costs

STRATEGIES = ("no_fusion", "kmeans_only", "euclidean", "angular")


class NoPathError(RuntimeError):
    """Every retained candidate is (nearly) lethal."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FusionConfig:
    k_max: int = 8
    merge_threshold: float = 0.5
    seed: int = 0
    kmeans_restarts: int = 8
    kmeans_max_iters: int = 50

    def __post_init__(self):
        if self.k_max < 2:
            raise ValueError(f"k_max must be >= 2, got {self.k_max}")
        if self.merge_threshold < 0:
            raise ValueError("merge_threshold must be non-negative")
        if self.kmeans_restarts < 1 or self.kmeans_max_iters < 1:
            raise ValueError("kmeans_restarts and kmeans_max_iters must be >= 1")


@dataclass(frozen=True)
class PlannerConfig:
    top_k: int = 32
    strategy: str = "angular"
    beta: float = 1.0
    lethal_fraction: float = 0.9
    # Goal point for Euclidean selection; None puts it on the map border.
    goal_distance: float | None = None
    # Candidates the no-fusion baseline ranks: the whole sampled set or the top-K.
    nf_candidates: str = "all"
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 0 < self.lethal_fraction <= 1:
            raise ValueError("lethal_fraction must lie in (0, 1]")
        if self.goal_distance is not None and not self.goal_distance > 0:
            raise ValueError("goal_distance must be positive")
        if self.nf_candidates not in ("all", "top_k"):
            raise ValueError(f"nf_candidates must be 'all' or 'top_k', got {self.nf_candidates!r}")


@dataclass(eq=False)
class Clustering:
    k: int
    labels: np.ndarray
    centroids: np.ndarray  # (k, n, 2)
    inertia: float
    silhouette_loss: float | None = None
    fallback: bool = False

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


@dataclass(eq=False)
class RepresentativeSet:
    representatives: list
    provenance: list  # cluster ids merged into each representative
    members: list  # input path indices behind each representative

    def __len__(self):
        return len(self.representatives)


def as_stack(paths) -> np.ndarray:
    if isinstance(paths, np.ndarray):
        return np.asarray(paths, dtype=float)
    if isinstance(paths, PathSet):
        return paths.stack()
    return np.stack([p.waypoints if isinstance(p, Path) else np.asarray(p) for p in paths])


def path_distance(a, b) -> float:
    """Mean Euclidean distance between corresponding waypoints."""
    wa = a.waypoints if isinstance(a, Path) else np.asarray(a, dtype=float)
    wb = b.waypoints if isinstance(b, Path) else np.asarray(b, dtype=float)
    if wa.shape != wb.shape:
        raise ValueError(f"paths differ in waypoint count: {wa.shape} vs {wb.shape}")
    return float(np.linalg.norm(wa - wb, axis=-1).mean())


def distance_matrix(stack: np.ndarray, other: np.ndarray | None = None) -> np.ndarray:
    other = stack if other is None else other
    diff = stack[:, None, :, :] - other[None, :, :, :]
    return np.sqrt((diff * diff).sum(-1)).mean(-1)


def _kmeanspp(X, k, rng):
    N = X.shape[0]
    centers = [X[rng.integers(N)]]
    d2 = ((X - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(N, p=d2 / total)
        else:
            idx = rng.integers(N)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(1))
    return np.array(centers)


def _assign(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(-1)
    return d2.argmin(1), d2


def _repair_empty(X, C, labels, d2, k):
    # Move the farthest point of a multi-member cluster into each empty cluster.
    counts = np.bincount(labels, minlength=k)
    own = d2[np.arange(len(X)), labels]
    for c in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        cand = np.where(movable, own, -np.inf)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = c
        counts[c] = 1
        own[i] = 0.0
        C[c] = X[i]
    return labels


def _means(X, labels, k):
    C = np.zeros((k, X.shape[1]))
    np.add.at(C, labels, X)
    return C / np.bincount(labels, minlength=k)[:, None]


def lloyd(X: np.ndarray, init: np.ndarray, max_iters: int) -> np.ndarray:
    """Lloyd iterations from given initial centers; returns final labels."""
    k = init.shape[0]
    C = init.copy()
    labels = None
    for _ in range(max_iters):
        new, d2 = _assign(X, C)
        new = _repair_empty(X, C, new, d2, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = _means(X, labels, k)
    return labels


def _clustering_from_labels(stack, labels, k) -> Clustering:
    N, n, _ = stack.shape
    C = _means(stack.reshape(N, -1), labels, k).reshape(k, n, 2)
    dist = np.linalg.norm(stack - C[labels], axis=-1).mean(-1)
    return Clustering(k, labels.astype(np.int64), C, float((dist**2).sum()))


def kmeans(paths, k: int, seed: int = 0, restarts: int = 8, max_iters: int = 50) -> Clustering:
    """k-means on paths flattened to 2n-vectors, best of ``restarts`` k-means++ runs."""
    stack = as_stack(paths)
    N = stack.shape[0]
    if not 1 <= k <= N:
        raise ValueError(f"k must lie in [1, {N}], got {k}")
    X = stack.reshape(N, -1)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        labels = lloyd(X, _kmeanspp(X, k, rng), max_iters)
        result = _clustering_from_labels(stack, labels, k)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def silhouette_from_distances(D: np.ndarray, labels: np.ndarray) -> float:
    """Negative mean silhouette coefficient from a precomputed distance matrix."""
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if ids.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    onehot = (labels[:, None] == ids[None, :]).astype(float)
    sizes = onehot.sum(0)
    sums = D @ onehot  # (N, k): total distance from i to each cluster
    col = np.searchsorted(ids, labels)
    own_size = sizes[col]
    a = np.divide(
        sums[np.arange(len(labels)), col],
        own_size - 1,
        out=np.zeros(len(labels)),
        where=own_size > 1,
    )
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(len(labels)), col] = np.inf
    b = mean_other.min(1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(len(labels)), where=denom > 0)
    s[own_size <= 1] = 0.0
    return float(-s.mean())


def silhouette_loss(paths, clustering: Clustering) -> float:
    if clustering.k < 2:
        raise ValueError(f"silhouette loss needs k >= 2, got {clustering.k}")
    stack = as_stack(paths)
    return silhouette_from_distances(distance_matrix(stack), clustering.labels)


def adaptive_kmeans(paths, config: FusionConfig = FusionConfig()) -> Clustering:
    """Pick k in [2, min(k_max, N-1)] minimizing silhouette loss; ties go to smaller k."""
    stack = as_stack(paths)
    N = stack.shape[0]
    if N < 3:
        result = kmeans(stack, 1, config.seed, 1, config.kmeans_max_iters)
        result.fallback = True
        return result
    D = distance_matrix(stack)
    best = None
    for k in range(2, min(config.k_max, N - 1) + 1):
        # Per-k seeds keep each run independent of evaluation order.
        seed = int(np.random.SeedSequence([config.seed, k]).generate_state(1)[0])
        result = kmeans(stack, k, seed, config.kmeans_restarts, config.kmeans_max_iters)
        result.silhouette_loss = silhouette_from_distances(D, result.labels)
        if best is None or result.silhouette_loss < best.silhouette_loss:
            best = result
    return best


def merge_centroids(paths, clustering: Clustering, merge_threshold: float) -> RepresentativeSet:
    """Single-linkage over centroids; each group is represented by the mean of all its member paths."""
    stack = as_stack(paths)
    k = clustering.k
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if k > 1:
        D = distance_matrix(clustering.centroids)
        for i in range(k):
            for j in range(i + 1, k):
                if D[i, j] <= merge_threshold:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for c in range(k):
        groups.setdefault(find(c), []).append(c)
    reps, prov, members = [], [], []
    for root in sorted(groups):
        clusters = groups[root]
        idx = np.flatnonzero(np.isin(clustering.labels, clusters))
        reps.append(Path(stack[idx].mean(0), "representative"))
        prov.append(clusters)
        members.append(idx.tolist())
    return RepresentativeSet(reps, prov, members)


def _waypoints(p):
    return p.waypoints if isinstance(p, Path) else np.asarray(p, dtype=float)


def heading_angles(representatives, goal_direction) -> np.ndarray:
    """Angle between each path's start-to-end vector and the goal direction."""
    g = np.asarray(goal_direction, dtype=float)
    g = g / np.linalg.norm(g)
    out = []
    for p in representatives:
        w = _waypoints(p)
        v = w[-1] - w[0]
        norm = np.linalg.norm(v)
        cos = float(v @ g / norm) if norm > 0 else 0.0
        out.append(math.acos(min(1.0, max(-1.0, cos))))
    return np.array(out)


def select_angular_index(representatives, goal_direction) -> int:
    if len(representatives) == 0:
        raise ValueError("no representatives to select from")
    if len(representatives) == 1:
        return 0
    return int(np.argmin(heading_angles(representatives, goal_direction)))


def select_angular(representatives, goal_direction) -> Path:
    return representatives[select_angular_index(representatives, goal_direction)]


def select_euclidean_index(representatives, goal_point) -> int:
    if len(representatives) == 0:
        raise ValueError("no representatives to select from")
    g = np.asarray(goal_point, dtype=float)
    d = [float(np.linalg.norm(_waypoints(p)[-1] - g)) for p in representatives]
    return int(np.argmin(d))


def select_euclidean(representatives, goal_point) -> Path:
    return representatives[select_euclidean_index(representatives, goal_point)]


@dataclass(eq=False)
class PlanDiagnostics:
    strategy: str
    selected: Path
    selected_index: int
    top_k_indices: list
    top_k_costs: list
    k: int | None = None
    silhouette_loss: float | None = None
    representatives: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    combined_costs: list | None = None
    fallback: bool = False

    @property
    def n_merges(self) -> int:
        if self.k is None:
            return 0
        return self.k - len(self.representatives)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "k": self.k,
            "silhouette_loss": self.silhouette_loss,
            "n_merges": self.n_merges,
            "fallback": self.fallback,
            "representatives": [p.waypoints.tolist() for p in self.representatives],
            "provenance": self.provenance,
            "selected_index": self.selected_index,
            "selected": self.selected.waypoints.tolist(),
            "costs": {
                "top_k_indices": self.top_k_indices,
                "traversability": self.top_k_costs,
                "combined": self.combined_costs,
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def goal_point(cmap: CostMap, goal_direction, distance: float | None = None) -> np.ndarray:
    """Goal marker along ``goal_direction``: at ``distance`` or where the ray leaves the map."""
    g = np.asarray(goal_direction, dtype=float)
    if distance is not None:
        return g * distance
    x0, x1, z0, z1 = cmap.spec.extent
    scales = []
    for comp, lo, hi in ((g[0], x0, x1), (g[1], z0, z1)):
        if comp > 1e-12 and hi > 0:
            scales.append(hi / comp)
        elif comp < -1e-12 and lo < 0:
            scales.append(lo / comp)
    return g * min(scales) if scales else g


def plan(pathset: PathSet, cmap: CostMap, goal_direction, config: PlannerConfig = PlannerConfig()):
    """Top-K filtering, fusion and selection for one observation.

    Returns ``(path, diagnostics)``; raises NoPathError when every retained
    candidate is at least ``lethal_fraction`` lethal.
    """
    g = np.asarray(goal_direction, dtype=float)
    g = g / np.linalg.norm(g)
    stack = pathset.stack()
    M, n, _ = stack.shape
    K = min(config.top_k, M)
    f_all = traversability_costs(stack, cmap)
    order = rank_by_cost(f_all)[:K]
    f_top = f_all[order]
    top = stack[order]
    diag_base = dict(top_k_indices=order.tolist(), top_k_costs=f_top.tolist())
    if f_top.min() >= config.lethal_fraction * n:
        raise NoPathError("all candidate paths are blocked")

    if config.strategy == "no_fusion":
        # The baseline ranks the whole sampled set by the combined cost.
        if config.nf_candidates == "all":
            combined = f_all + config.beta * goal_costs(stack, g)
            i = int(rank_by_cost(combined)[0])
            path = pathset[i]
        else:
            combined = f_top + config.beta * goal_costs(top, g)
            i = int(rank_by_cost(combined)[0])
            path = pathset[int(order[i])]
        diag = PlanDiagnostics(
            "no_fusion", path, i, combined_costs=combined.tolist(), **diag_base
        )
        return path, diag

    clustering = adaptive_kmeans(top, config.fusion)
    if config.strategy == "kmeans_only":
        reps = RepresentativeSet(
            [Path(c, "representative") for c in clustering.centroids],
            [[c] for c in range(clustering.k)],
            [clustering.members(c).tolist() for c in range(clustering.k)],
        )
    else:
        reps = merge_centroids(top, clustering, config.fusion.merge_threshold)

    if config.strategy == "euclidean":
        i = select_euclidean_index(reps.representatives, goal_point(cmap, g, config.goal_distance))
    else:
        i = select_angular_index(reps.representatives, g)
    path = reps.representatives[i]
    diag = PlanDiagnostics(
        config.strategy,
        path,
        i,
        k=clustering.k,
        silhouette_loss=clustering.silhouette_loss,
        representatives=list(reps.representatives),
        provenance=reps.provenance,
        fallback=clustering.fallback,
        **diag_base,
    )
    return path, diag
