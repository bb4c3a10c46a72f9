"""Metrics and sweep harness for path fusion and selection."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np

from .camera import BevProjector, CameraModel
from .costmap import CostMap, GridSpec, load_costmap
from .fusion import NoPathError, PlannerConfig, plan
from .paths import Path, PathSet, SamplerSpec, sample_paths
from .sim import (
    NoiseSpec,
    RobotState,
    World,
    inside_corridor,
    load_world,
    render_observation,
    synthesize_world,
    to_robot_frame,
)


def iou(pred_mask, gt_mask) -> float:
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


@dataclass(eq=False)
class FusionCase:
    """One planning scene with ground-truth branch corridors in the robot frame."""

    costmap: CostMap
    branches: list  # [{"polyline": [[x, z], ...], "width": w}]
    correct_branch: int
    goal_direction: np.ndarray
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.correct_branch < len(self.branches):
            raise ValueError("correct_branch must index into branches")
        g = np.asarray(self.goal_direction, dtype=float)
        self.goal_direction = g / np.linalg.norm(g)

    @property
    def branch_count(self) -> int:
        return len(self.branches)


def membership(path, case: FusionCase) -> list:
    """Branches holding a strict majority of the path's discriminating waypoints.

    Waypoints inside every branch corridor (the shared trunk) say nothing
    about which branch a path takes, so they are left out of the vote.
    """
    wp = path.waypoints if isinstance(path, Path) else np.asarray(path, dtype=float)
    inside = np.array([inside_corridor(wp, br) for br in case.branches]).reshape(len(case.branches), len(wp))
    if len(case.branches) > 1:
        keep = ~inside.all(axis=0)
        if keep.any():
            inside = inside[:, keep]
    n = inside.shape[1]
    return [b for b in range(len(case.branches)) if np.count_nonzero(inside[b]) * 2 > n]


def classify_fusion(case: FusionCase, diagnostics) -> str:
    """Path-identification outcome for one case: "TP", "FP", "FN" or "TN".

    FP: some representative straddles branches or lies in none.
    FN: two representatives share a branch, or a branch has none.
    TP: exactly one clean representative per branch.
    Single-branch cases are TN.
    """
    if case.branch_count < 2:
        return "TN"
    owners = [membership(r, case) for r in diagnostics.representatives]
    if any(len(o) != 1 for o in owners):
        return "FP"
    counts = np.bincount([o[0] for o in owners], minlength=case.branch_count)
    return "TP" if np.all(counts == 1) else "FN"


def selection_correct(case: FusionCase, path) -> bool:
    return case.correct_branch in membership(path, case)


@dataclass
class MetricReport:
    strategy: str
    counts: dict = field(default_factory=lambda: {"TP": 0, "FP": 0, "FN": 0, "TN": 0})
    correct: int = 0
    cases: int = 0
    blocked: int = 0
    records: list = field(default_factory=list)

    @property
    def pip(self):
        d = self.counts["TP"] + self.counts["FP"]
        return self.counts["TP"] / d if d else None

    @property
    def pir(self):
        d = self.counts["TP"] + self.counts["FN"]
        return self.counts["TP"] / d if d else None

    @property
    def psa(self):
        return self.correct / self.cases if self.cases else None

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "pip": self.pip,
            "pir": self.pir,
            "psa": self.psa,
            "pip_defined": self.pip is not None,
            "pir_defined": self.pir is not None,
            "counts": self.counts,
            "correct": self.correct,
            "cases": self.cases,
            "blocked": self.blocked,
            "records": self.records,
        }


def evaluate_case(case: FusionCase, pathset: PathSet, config: PlannerConfig) -> dict:
    try:
        path, diag = plan(pathset, case.costmap, case.goal_direction, config)
    except NoPathError:
        return {"case": case.name, "event": None, "correct": False, "blocked": True, "k": None, "reps": 0}
    event = None if config.strategy == "no_fusion" else classify_fusion(case, diag)
    return {
        "case": case.name,
        "event": event,
        "correct": selection_correct(case, path),
        "blocked": False,
        "k": diag.k,
        "reps": len(diag.representatives),
    }


def _map_cases(fn, cases, jobs):
    if jobs and jobs > 1:
        from joblib import Parallel, delayed

        return Parallel(n_jobs=jobs)(delayed(fn)(c) for c in cases)
    return [fn(c) for c in cases]


def run_fusion_bench(cases, config: PlannerConfig, pathset: PathSet, jobs: int = 1) -> MetricReport:
    """Aggregate merge events and selection accuracy over a case list."""
    if len(cases) < 1:
        raise ValueError("benchmark needs at least one case")
    rows = _map_cases(lambda c: evaluate_case(c, pathset, config), cases, jobs)
    report = MetricReport(config.strategy)
    for row in rows:
        report.cases += 1
        report.correct += int(row["correct"])
        report.blocked += int(row["blocked"])
        if row["event"] is not None:
            report.counts[row["event"]] += 1
        report.records.append(row)
    return report


def pr_sweep(cases, thresholds, config: PlannerConfig, pathset: PathSet, jobs: int = 1) -> list:
    """Merge precision and recall per merge threshold (ascending)."""
    thresholds = [float(t) for t in thresholds]
    if thresholds != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    out = []
    for t in thresholds:
        cfg = replace(config, fusion=replace(config.fusion, merge_threshold=t))
        if cfg.strategy not in ("angular", "euclidean"):
            cfg = replace(cfg, strategy="angular")
        rep = run_fusion_bench(cases, cfg, pathset, jobs)
        out.append({"threshold": t, "precision": rep.pip, "recall": rep.pir, "psa": rep.psa, "report": rep})
    return out


def beta_sweep(cases, betas, config: PlannerConfig, sampler: SamplerSpec, seeds, jobs: int = 1) -> list:
    """No-fusion selection accuracy per beta, mean and standard error over path-set seeds."""
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("betas must be non-empty")
    seeds = list(seeds)
    pathsets = [sample_paths(sampler, s) for s in seeds]
    out = []
    for b in betas:
        cfg = replace(config, strategy="no_fusion", beta=b)
        scores = np.array([run_fusion_bench(cases, cfg, ps, jobs).psa for ps in pathsets])
        stderr = float(scores.std(ddof=1) / math.sqrt(len(scores))) if len(scores) > 1 else 0.0
        out.append({"beta": b, "psa": float(scores.mean()), "stderr": stderr, "per_seed": scores.tolist()})
    return out


# ---------------------------------------------------------------- cases


def case_from_world(
    world: World,
    pose: RobotState,
    goal_direction,
    camera: CameraModel,
    grid: GridSpec = GridSpec(),
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    name: str = "",
    projector: BevProjector | None = None,
) -> FusionCase:
    """Observe a world through the camera and package the scene as a FusionCase."""
    projector = projector or BevProjector(camera, grid)
    mask = render_observation(world, pose, camera, noise, np.random.default_rng(seed))
    cmap = projector.project(mask)
    branches = [
        {"polyline": to_robot_frame(b["polyline"], pose).tolist(), "width": b["width"]}
        for b in world.branches
    ]
    correct = next((i for i, b in enumerate(world.branches) if b.get("goal_correct")), 0)
    return FusionCase(cmap, branches, correct, goal_direction, name)


def fork_case_spec(index: int, suite_seed: int) -> dict:
    """Deterministic description of one synthetic fork case."""
    rng = np.random.default_rng([suite_seed, index])
    world_seed = int(rng.integers(2**31))
    arms = 3 if rng.random() < 0.25 else 2
    spread = rng.uniform(40.0, 100.0) if arms == 2 else rng.uniform(90.0, 130.0)
    center = rng.uniform(-20.0, 20.0)
    angles = [round(float(a), 3) for a in center + spread * (np.arange(arms) / (arms - 1) - 0.5)]
    params = {
        "trunk_length": round(float(rng.uniform(0.5, 2.0)), 3),
        "angles_deg": angles,
        "widths": [round(float(w), 3) for w in rng.uniform(0.6, 3.0, arms)],
        "clutter": [int(c) for c in rng.integers(0, 4, arms)],
        "goal_branch": int(rng.integers(arms)),
    }
    gb = params["goal_branch"]
    # Goal bearing anywhere inside the correct arm's sector, bounded by the
    # bisectors with its neighbours and 45 degrees beyond an outer arm.
    lo = (angles[gb - 1] + angles[gb]) / 2 + 2.0 if gb > 0 else angles[gb] - 45.0
    hi = (angles[gb] + angles[gb + 1]) / 2 - 2.0 if gb < arms - 1 else angles[gb] + 45.0
    goal_bearing = float(rng.uniform(lo, hi))
    pose = [
        float(rng.uniform(-0.15, 0.15)),
        float(rng.uniform(-0.5, 0.0)),
        float(math.pi / 2 + math.radians(rng.uniform(-8.0, 8.0))),
    ]
    return {
        "world": {"scenario_kind": "fork", "params": params, "seed": world_seed},
        "pose": pose,
        "goal_bearing_world_deg": goal_bearing,
        "noise_seed": int(rng.integers(2**31)),
    }


def case_from_spec(spec: dict, camera, grid=GridSpec(), noise=NoiseSpec(), base_dir=None, projector=None, name=""):
    wspec = spec["world"]
    if isinstance(wspec, str):
        world = load_world(FsPath(base_dir or ".") / wspec)
    else:
        world = synthesize_world(wspec["scenario_kind"], wspec.get("params", {}), wspec.get("seed", 0))
    pose = RobotState(*spec["pose"])
    b = math.radians(spec["goal_bearing_world_deg"])
    goal_world = np.array([pose.x + math.sin(b), pose.z + math.cos(b)])
    g = to_robot_frame(goal_world, pose)
    return case_from_world(
        world, pose, g, camera, grid, noise, spec.get("noise_seed", 0), name or spec.get("name", ""), projector
    )


def make_fork_suite(n: int, seed: int, camera, grid=GridSpec(), noise=NoiseSpec()) -> list:
    projector = BevProjector(camera, grid)
    return [
        case_from_spec(fork_case_spec(i, seed), camera, grid, noise, projector=projector, name=f"fork_{i:04d}")
        for i in range(n)
    ]


def write_fork_suite(directory, n: int, seed: int) -> list:
    """Write ``case_XXXX.json`` files, each embedding a regenerable world spec."""
    d = FsPath(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(n):
        spec = fork_case_spec(i, seed) | {"name": f"fork_{i:04d}"}
        f = d / f"case_{i:04d}.json"
        f.write_text(json.dumps(spec, indent=1))
        written.append(f)
    return written


def load_suite(directory, camera, grid=GridSpec(), noise=NoiseSpec()) -> list:
    """Read every ``*.json`` case in a directory, sorted by file name.

    A case either references a world (inline spec or world-file path) plus a
    pose, or carries a precomputed ``costmap`` file with inline branches.
    """
    d = FsPath(directory)
    files = sorted(d.glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no case files in {d}")
    projector = BevProjector(camera, grid)
    cases = []
    for f in files:
        spec = json.loads(f.read_text())
        if "costmap" in spec:
            cmap = load_costmap(d / spec["costmap"])
            cases.append(
                FusionCase(cmap, spec["branches"], spec["correct_branch"], spec["goal_direction"], spec.get("name", f.stem))
            )
        else:
            cases.append(case_from_spec(spec, camera, grid, noise, d, projector, spec.get("name", f.stem)))
    return cases


# ---------------------------------------------------------------- output


def _fmt(value):
    return "-" if value is None else f"{100.0 * value:.1f}"


def table_csv(rows) -> str:
    """Method,PIP,PIR,PSA rows; no-fusion rows show dashes for PIP/PIR."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Method", "PIP", "PIR", "PSA"])
    for label, rep in rows:
        nf = rep.strategy == "no_fusion"
        w.writerow([label, "-" if nf else _fmt(rep.pip), "-" if nf else _fmt(rep.pir), _fmt(rep.psa)])
    return buf.getvalue()


def pr_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "precision", "recall", "precision_defined", "recall_defined", "psa"])
    for r in rows:
        w.writerow(
            [
                repr(r["threshold"]),
                "" if r["precision"] is None else repr(r["precision"]),
                "" if r["recall"] is None else repr(r["recall"]),
                int(r["precision"] is not None),
                int(r["recall"] is not None),
                repr(r["psa"]),
            ]
        )
    return buf.getvalue()


def beta_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "psa", "stderr"])
    for r in rows:
        w.writerow([repr(r["beta"]), repr(r["psa"]), repr(r["stderr"])])
    return buf.getvalue()
