import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathfuse.costmap import CostMap, GridSpec
from pathfuse.fusion import (
    Clustering,
    FusionConfig,
    NoPathError,
    PlannerConfig,
    adaptive_kmeans,
    distance_matrix,
    goal_point,
    heading_angles,
    kmeans,
    merge_centroids,
    path_distance,
    plan,
    select_angular,
    select_euclidean,
    silhouette_loss,
)
from pathfuse.paths import Path, SamplerSpec, sample_paths

FREE = CostMap.filled(GridSpec(), 0.0)


def ray(bearing, n=20, r=3.5):
    t = np.linspace(0, r, n)
    return Path(np.column_stack([t * math.sin(bearing), t * math.cos(bearing)]))


def offset_path(dx, n=20):
    # Every waypoint shifted by the same amount, so path distances equal |dx|.
    w = np.column_stack([np.full(n, dx), np.linspace(0, 3.5, n)])
    return Path(w)


def grouped_stack(rng, centres=(-0.6, 0.0, 0.6), per=4, jitter=0.04):
    paths = []
    for b in centres:
        for _ in range(per):
            w = ray(b + rng.normal(0, jitter)).waypoints
            paths.append(w)
    return np.stack(paths)


# Independent oracles ------------------------------------------------------


def brute_silhouette(stack, labels):
    N = len(stack)
    s = []
    for i in range(N):
        same = [j for j in range(N) if labels[j] == labels[i] and j != i]
        if not same:
            s.append(0.0)
            continue
        a = sum(path_distance(stack[i], stack[j]) for j in same) / len(same)
        b = min(
            sum(path_distance(stack[i], stack[j]) for j in range(N) if labels[j] == c)
            / sum(1 for j in range(N) if labels[j] == c)
            for c in set(labels)
            if c != labels[i]
        )
        s.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return -sum(s) / N


def plain_lloyd(X, seeds, iters=100):
    C = X[list(seeds)].copy()
    labels = None
    for _ in range(iters):
        new = [min(range(len(C)), key=lambda c: float(((x - C[c]) ** 2).sum())) for x in X]
        if new == labels:
            break
        labels = new
        for c in range(len(C)):
            pts = [X[i] for i in range(len(X)) if labels[i] == c]
            if not pts:
                return None
            C[c] = np.mean(pts, axis=0)
    return labels


def path_inertia(stack, labels, k):
    total = 0.0
    for c in range(k):
        idx = [i for i in range(len(stack)) if labels[i] == c]
        centre = stack[idx].mean(0)
        total += sum(path_distance(stack[i], centre) ** 2 for i in idx)
    return total


# Distances ---------------------------------------------------------------


def test_path_distance_offset_and_symmetry(rng):
    assert path_distance(offset_path(0.0), offset_path(0.7)) == pytest.approx(0.7)
    a, b = rng.normal(size=(2, 20, 2))
    assert path_distance(a, b) == pytest.approx(path_distance(b, a))
    assert path_distance(a, a) == 0.0
    with pytest.raises(ValueError):
        path_distance(np.zeros((20, 2)), np.zeros((19, 2)))


def test_distance_matrix_matches_pairwise(rng):
    stack = rng.normal(size=(6, 20, 2))
    D = distance_matrix(stack)
    for i, j in itertools.product(range(6), repeat=2):
        assert D[i, j] == pytest.approx(path_distance(stack[i], stack[j]))


# Clustering --------------------------------------------------------------


def test_silhouette_matches_brute_force(rng):
    for trial in range(5):
        stack = rng.normal(size=(10, 20, 2))
        labels = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 2])
        rng.shuffle(labels)
        if trial == 0:
            labels = np.array([0, 1, 1, 1, 1, 2, 2, 2, 2, 2])  # includes a singleton
        cl = Clustering(3, labels, np.zeros((3, 20, 2)), 0.0)
        assert silhouette_loss(stack, cl) == pytest.approx(brute_silhouette(stack, labels), abs=1e-12)


def test_silhouette_rejects_single_cluster(rng):
    with pytest.raises(ValueError):
        silhouette_loss(rng.normal(size=(4, 20, 2)), Clustering(1, np.zeros(4, int), np.zeros((1, 20, 2)), 0.0))


def test_kmeans_matches_exhaustive_seeding_oracle(rng):
    stack = grouped_stack(rng)
    X = stack.reshape(12, -1)
    best = math.inf
    for seeds in itertools.combinations(range(12), 3):
        labels = plain_lloyd(X, seeds)
        if labels is not None:
            best = min(best, path_inertia(stack, labels, 3))
    got = kmeans(stack, 3, seed=0)
    assert got.inertia == pytest.approx(best, rel=1e-9, abs=1e-12)
    assert path_inertia(stack, got.labels, 3) == pytest.approx(got.inertia, rel=1e-9)


def test_kmeans_single_cluster_and_separable_groups(rng):
    stack = rng.normal(size=(7, 20, 2))
    one = kmeans(stack, 1)
    np.testing.assert_allclose(one.centroids[0], stack.mean(0))
    a, b = rng.normal(size=(2, 20, 2)) * 3
    two = kmeans(np.stack([a, a, a, b, b]), 2)
    assert two.inertia == pytest.approx(0.0, abs=1e-20)
    assert len(set(two.labels[:3])) == 1 and len(set(two.labels[3:])) == 1 and two.labels[0] != two.labels[3]


def test_silhouette_reference_cases(rng):
    tight = np.concatenate([offset_path(0.0).waypoints[None] + rng.normal(0, 0.01, (5, 20, 2)),
                            offset_path(5.0).waypoints[None] + rng.normal(0, 0.01, (5, 20, 2))])
    labels = np.repeat([0, 1], 5)
    assert silhouette_loss(tight, Clustering(2, labels, np.zeros((2, 20, 2)), 0.0)) < -0.9
    same = np.repeat(offset_path(0.0).waypoints[None], 6, axis=0)
    assert silhouette_loss(same, Clustering(2, np.array([0, 1, 0, 1, 0, 1]), np.zeros((2, 20, 2)), 0.0)) == 0.0
    tri = np.stack([offset_path(x).waypoints for x in (0.0, 0.0, 2.0, 2.0)] + [Path(offset_path(1.0).waypoints + [0, math.sqrt(3)]).waypoints] * 2)
    assert silhouette_loss(tri, Clustering(3, np.array([0, 0, 1, 1, 2, 2]), np.zeros((3, 20, 2)), 0.0)) == pytest.approx(-1.0)


def test_kmeans_deterministic_and_nonempty(rng):
    stack = rng.normal(size=(30, 20, 2))
    a = kmeans(stack, 5, seed=3)
    b = kmeans(stack, 5, seed=3)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert np.all(np.bincount(a.labels, minlength=5) > 0)
    with pytest.raises(ValueError):
        kmeans(stack, 31)


def test_adaptive_kmeans_finds_three_groups(rng):
    stack = grouped_stack(rng, per=6)
    cl = adaptive_kmeans(stack, FusionConfig(k_max=8))
    assert cl.k == 3
    assert len({tuple(sorted(cl.members(c).tolist())) for c in range(3)}) == 3
    for c in range(3):
        assert len({i // 6 for i in cl.members(c)}) == 1


def test_adaptive_kmeans_two_bundles_and_three_paths(rng):
    stack = grouped_stack(rng, centres=(-0.5, 0.5), per=6)
    assert adaptive_kmeans(stack, FusionConfig(k_max=6)).k == 2
    assert adaptive_kmeans(rng.normal(size=(3, 20, 2))).k == 2


def test_adaptive_kmeans_range_and_fallback(rng):
    stack = rng.normal(size=(5, 20, 2))
    cl = adaptive_kmeans(stack, FusionConfig(k_max=8))
    assert 2 <= cl.k <= 4
    tiny = adaptive_kmeans(stack[:2])
    assert tiny.fallback and tiny.k == 1


def test_adaptive_kmeans_deterministic(rng):
    stack = rng.normal(size=(32, 20, 2))
    a = adaptive_kmeans(stack, FusionConfig(seed=5))
    b = adaptive_kmeans(stack, FusionConfig(seed=5))
    assert a.k == b.k
    np.testing.assert_array_equal(a.labels, b.labels)


# Merging -----------------------------------------------------------------


def _clustering_of(paths):
    stack = np.stack([p.waypoints for p in paths])
    k = len(paths)
    return stack, Clustering(k, np.arange(k), stack.copy(), 0.0)


def test_single_linkage_on_distance_triple():
    # Constant offsets placed on a triangle with sides 0.4, 2.0 and 2.1.
    x2 = (2.1**2 - 2.0**2 + 0.4**2) / 0.8
    z2 = math.sqrt(2.1**2 - x2**2)
    paths = [offset_path(0.0), offset_path(0.4), Path(offset_path(x2).waypoints + [0.0, z2])]
    stack, cl = _clustering_of(paths)
    D = distance_matrix(stack)
    np.testing.assert_allclose([D[0, 1], D[1, 2], D[0, 2]], [0.4, 2.0, 2.1])
    assert len(merge_centroids(stack, cl, 0.3)) == 3
    r = merge_centroids(stack, cl, 0.5)
    assert len(r) == 2 and r.provenance == [[0, 1], [2]]
    np.testing.assert_allclose(r.representatives[0].waypoints[:, 0], 0.2)
    assert len(merge_centroids(stack, cl, 1.99)) == 2
    # Single linkage joins all three at the middle side; complete linkage would need 2.1.
    r = merge_centroids(stack, cl, 2.0 + 1e-9)
    assert len(r) == 1 and r.provenance == [[0, 1, 2]]


def test_single_linkage_chains():
    # 0 - 0.4 - 0.8: ends are 0.8 apart yet join through the middle at 0.45.
    paths = [offset_path(0.0), offset_path(0.4), offset_path(0.8)]
    stack, cl = _clustering_of(paths)
    r = merge_centroids(stack, cl, 0.45)
    assert len(r) == 1 and r.provenance == [[0, 1, 2]]


def test_merge_representative_is_member_mean(rng):
    stack = grouped_stack(rng)
    labels = np.repeat([0, 1, 2], 4)
    C = np.stack([stack[labels == c].mean(0) for c in range(3)])
    r = merge_centroids(stack, Clustering(3, labels, C, 0.0), 100.0)
    np.testing.assert_allclose(r.representatives[0].waypoints, stack.mean(0))
    assert r.members == [list(range(12))]


def test_merge_infinite_threshold_gives_global_mean(rng):
    stack = grouped_stack(rng)
    cl = adaptive_kmeans(stack)
    r = merge_centroids(stack, cl, math.inf)
    assert len(r) == 1
    np.testing.assert_allclose(r.representatives[0].waypoints, stack.mean(0))
    zero = merge_centroids(stack, cl, 0.0)
    np.testing.assert_allclose(np.stack([p.waypoints for p in zero.representatives]), cl.centroids)


def test_merge_threshold_zero_keeps_distinct_centroids(rng):
    stack = rng.normal(size=(6, 20, 2))
    r = merge_centroids(stack, Clustering(6, np.arange(6), stack.copy(), 0.0), 0.0)
    assert len(r) == 6


# Selection ---------------------------------------------------------------


def test_angular_selection_example():
    reps = [ray(math.radians(-40)), ray(math.radians(5)), ray(math.radians(50))]
    g = [math.sin(math.radians(20)), math.cos(math.radians(20))]
    np.testing.assert_allclose(np.degrees(heading_angles(reps, g)), [60, 15, 30], atol=1e-9)
    assert select_angular(reps, g) is reps[1]
    assert select_angular(reps[:1], [0, -1]) is reps[0]
    with pytest.raises(ValueError):
        select_angular([], g)


def test_angular_smaller_angle_and_ties():
    reps = [ray(math.radians(30)), ray(math.radians(-10))]
    assert select_angular(reps, [0, 1]) is reps[1]
    tie = [ray(math.radians(20)), ray(math.radians(-20))]
    assert select_angular(tie, [0, 1]) is tie[0]


def test_euclidean_reference_cases():
    def to(end):
        return Path(np.linspace([0.0, 0.0], end, 20))

    a, b = to([1.0, 3.0]), to([-2.0, 3.0])
    assert select_euclidean([b, a], [0.0, 10.0]) is a
    assert select_euclidean([a, b], [-2.0, 3.0]) is b
    assert select_euclidean([to([1.0, 3.0]), to([-1.0, 3.0])], [0.0, 5.0]).endpoint[0] == 1.0


def test_angular_ties_go_to_lowest_index():
    reps = [ray(math.radians(-30)), ray(math.radians(30))]
    assert select_angular(reps, [0, 1]) is reps[0]


def test_euclidean_selection_can_differ_from_angular():
    # A short path heading straight at the goal against a long one slightly off.
    short = Path(np.column_stack([np.zeros(20), np.linspace(0, 1.0, 20)]))
    long_ = ray(math.radians(10), r=7.5)
    goal = np.array([0.0, 8.0])
    assert select_angular([short, long_], [0, 1]) is short
    assert select_euclidean([short, long_], goal) is long_


def test_goal_point_on_map_border():
    g = np.array([math.sin(0.3), math.cos(0.3)])
    p = goal_point(FREE, g)
    x0, x1, z0, z1 = GridSpec().extent
    assert p[1] == pytest.approx(z1) or abs(p[0]) == pytest.approx(x1)
    np.testing.assert_allclose(p / np.linalg.norm(p), g)
    np.testing.assert_allclose(goal_point(FREE, g, 2.0), 2 * g)


# Planner -----------------------------------------------------------------


@pytest.fixture(scope="module")
def fork_map():
    # Two free corridors at -35 and +35 degrees; everything else lethal.
    spec = GridSpec()
    x, z = spec.centers()
    bearing = np.arctan2(x, np.maximum(z, 1e-9))
    free = (np.abs(np.abs(bearing) - math.radians(35)) < math.radians(12)) | (np.hypot(x, z) < 0.6)
    return CostMap(spec, np.where(free, 0.0, 1.0))


@pytest.fixture(scope="module")
def pset():
    return sample_paths(SamplerSpec(), 0)


@pytest.mark.parametrize("side", [-1, 1])
def test_plan_angular_picks_goal_branch(fork_map, pset, side):
    g = [side * math.sin(math.radians(40)), math.cos(math.radians(40))]
    path, diag = plan(pset, fork_map, g, PlannerConfig(strategy="angular"))
    end = path.endpoint
    assert np.sign(end[0]) == side
    assert abs(math.degrees(math.atan2(end[0], end[1])) - side * 35) < 12
    assert diag.k >= 2 and len(diag.representatives) >= 2
    assert len(diag.top_k_indices) == 32


def test_plan_open_field_goes_straight(pset, camera):
    from pathfuse.camera import project_mask_to_bev
    from pathfuse.sim import render_observation, synthesize_world

    world = synthesize_world("open", {}, 0)
    cmap = project_mask_to_bev(camera, render_observation(world, world.start, camera), GridSpec())
    path, _ = plan(pset, cmap, [0.0, 1.0])
    end = path.endpoint
    assert abs(math.degrees(math.atan2(end[0], end[1]))) <= 5.0


def test_plan_strategies_and_diagnostics(fork_map, pset):
    g = [math.sin(0.6), math.cos(0.6)]
    for strategy in ("no_fusion", "kmeans_only", "euclidean", "angular"):
        path, diag = plan(pset, fork_map, g, PlannerConfig(strategy=strategy))
        assert diag.strategy == strategy
        assert diag.selected is path
        js = diag.to_json()
        assert js["costs"]["top_k_indices"] == diag.top_k_indices
    _, km = plan(pset, fork_map, g, PlannerConfig(strategy="kmeans_only"))
    assert km.n_merges == 0


def test_plan_no_fusion_top_k_mode(fork_map, pset):
    g = [0.0, 1.0]
    path, diag = plan(pset, fork_map, g, PlannerConfig(strategy="no_fusion", nf_candidates="top_k", beta=0.0))
    assert len(diag.combined_costs) == 32
    assert any(path is pset[i] for i in diag.top_k_indices)


def test_plan_raises_when_all_blocked(pset):
    blocked = CostMap.filled(GridSpec(), 1.0)
    with pytest.raises(NoPathError):
        plan(pset, blocked, [0, 1])


def test_plan_deterministic(fork_map, pset):
    a, _ = plan(pset, fork_map, [0.3, 1.0])
    b, _ = plan(pset, fork_map, [0.3, 1.0])
    np.testing.assert_array_equal(a.waypoints, b.waypoints)


@pytest.mark.parametrize(
    "kwargs",
    [dict(strategy="nope"), dict(top_k=0), dict(beta=-1), dict(lethal_fraction=0), dict(goal_distance=0), dict(nf_candidates="x")],
)
def test_planner_config_validation(kwargs):
    with pytest.raises(ValueError):
        PlannerConfig(**kwargs)


# Properties --------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_merge_never_increases_count_and_partitions(seed):
    r = np.random.default_rng(seed)
    stack = r.normal(size=(int(r.integers(3, 15)), 20, 2))
    cl = adaptive_kmeans(stack, FusionConfig(k_max=5, kmeans_restarts=2))
    prev = cl.k + 1
    for t in (0.0, 0.3, 0.6, 1.2, 5.0):
        reps = merge_centroids(stack, cl, t)
        assert len(reps) <= prev
        prev = len(reps)
        assert sorted(sum(reps.members, [])) == list(range(len(stack)))


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-1.4, 1.4))
def test_angular_selection_is_argmin(b1, b2):
    reps = [ray(b1), ray(b2)]
    g = [0.0, 1.0]
    chosen = select_angular(reps, g)
    ang = heading_angles(reps, g)
    assert heading_angles([chosen], g)[0] == pytest.approx(ang.min())
