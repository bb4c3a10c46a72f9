"""Synthetic worlds, oracle observations, unicycle robot and the
receding-horizon mission loop.

World frame: x east, z north; heading theta is measured from +x, so the
robot's forward axis is (cos theta, sin theta) and its right-hand axis is
(sin theta, -cos theta). The BEV frame of a pose uses (right, forward).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np
from scipy import ndimage

from .camera import BevProjector, CameraModel
from .costmap import CostMap, GridSpec, cell_indices, load_costmap
from .fusion import NoPathError, PlannerConfig, plan
from .paths import Path, PathSet, SamplerSpec, sample_paths

SCENARIOS = ("open", "corridor", "fork", "fork_with_deadend", "obstacle_field")
WORLD_RES = 0.05


def wrap_angle(a: float) -> float:
    """Normalize to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    z: float = 0.0
    theta: float = math.pi / 2
    v: float = 0.0
    omega: float = 0.0

    def to_json(self):
        return [self.x, self.z, self.theta, self.v, self.omega]


@dataclass(frozen=True)
class NoiseSpec:
    flip_p: float = 0.0
    erode_px: int = 0


@dataclass(frozen=True)
class ControllerParams:
    v_max: float = 1.0
    v_min: float = 0.1
    omega_max: float = 1.5
    lookahead: float = 0.8


@dataclass(frozen=True)
class SimConfig:
    replan_hz: float = 3.0
    dt: float = 0.05
    v_max: float = 1.0
    v_min: float = 0.1
    omega_max: float = 1.5
    lookahead: float = 0.8
    footprint_radius: float = 0.25
    retry_budget: int = 8
    recovery_turn: float = math.pi / 4
    flip_p: float = 0.0
    erode_px: int = 0
    # Hazard monitor on the observed map; horizon 0 disables it.
    hazard_horizon: float = 0.4
    hazard_margin: float = 0.1

    @property
    def controller(self) -> ControllerParams:
        return ControllerParams(self.v_max, self.v_min, self.omega_max, self.lookahead)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.flip_p, self.erode_px)

    @property
    def substeps(self) -> int:
        return max(1, round(1.0 / (self.replan_hz * self.dt)))


@dataclass(eq=False)
class World:
    truth: CostMap  # world-frame grid, cost 0 free / 1 lethal
    branches: list  # [{"polyline": [[x, z], ...], "width": w, "goal_correct": bool}]
    scenario_kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    exterior_cost: float = 1.0
    start: RobotState = field(default_factory=RobotState)
    goal: tuple | None = None

    @property
    def extent(self):
        return self.truth.spec.extent

    def cost_at(self, points) -> np.ndarray:
        ix, iz, inside = cell_indices(self.truth.spec, points)
        out = np.full(inside.shape, float(self.exterior_cost))
        out[inside] = self.truth.cells[iz[inside], ix[inside]]
        return out

    def to_json(self) -> dict:
        return {"scenario_kind": self.scenario_kind, "params": self.params, "seed": self.seed}

    def __eq__(self, other):
        if not isinstance(other, World):
            return NotImplemented
        return (
            self.truth == other.truth
            and self.branches == other.branches
            and self.scenario_kind == other.scenario_kind
            and self.exterior_cost == other.exterior_cost
        )


@dataclass(frozen=True)
class Checkpoint:
    x: float
    z: float
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("checkpoint radius must be positive")


@dataclass(frozen=True)
class Mission:
    checkpoints: tuple
    difficulty: int = 1
    time_limit: float = 60.0

    def __post_init__(self):
        if len(self.checkpoints) < 1:
            raise ValueError("a mission needs at least one checkpoint")
        if not 1 <= self.difficulty <= 6:
            raise ValueError("difficulty must lie in 1..6")

    def to_json(self) -> dict:
        return {
            "checkpoints": [asdict(c) for c in self.checkpoints],
            "difficulty": self.difficulty,
            "time_limit": self.time_limit,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Mission":
        unknown = set(data) - {"checkpoints", "difficulty", "time_limit"}
        if unknown:
            raise ValueError(f"unknown mission keys: {sorted(unknown)}")
        cps = tuple(Checkpoint(**c) for c in data["checkpoints"])
        return cls(cps, int(data.get("difficulty", 1)), float(data.get("time_limit", 60.0)))


# ---------------------------------------------------------------- worlds


def _segment_distance(px, pz, a, b):
    ax, az = a
    bx, bz = b
    dx, dz = bx - ax, bz - az
    L2 = dx * dx + dz * dz
    if L2 == 0:
        return np.hypot(px - ax, pz - az)
    t = np.clip(((px - ax) * dx + (pz - az) * dz) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), pz - (az + t * dz))


def polyline_distance(points, polyline) -> np.ndarray:
    """Distance from each point of an (..., 2) array to a polyline."""
    pts = np.asarray(points, dtype=float)
    px, pz = pts[..., 0], pts[..., 1]
    poly = np.asarray(polyline, dtype=float)
    d = np.full(px.shape, np.inf)
    for a, b in zip(poly[:-1], poly[1:]):
        d = np.minimum(d, _segment_distance(px, pz, a, b))
    return d


def inside_corridor(points, branch) -> np.ndarray:
    return polyline_distance(points, branch["polyline"]) <= branch["width"] / 2.0


def _grid_for(bounds, margin=1.0) -> GridSpec:
    x0, x1, z0, z1 = bounds
    x0, z0 = math.floor((x0 - margin) / WORLD_RES) * WORLD_RES, math.floor((z0 - margin) / WORLD_RES) * WORLD_RES
    w = int(math.ceil((x1 + margin - x0) / WORLD_RES))
    h = int(math.ceil((z1 + margin - z0) / WORLD_RES))
    return GridSpec(WORLD_RES, w, h, (round(x0, 6), round(z0, 6)), 0.0)


def _carve(spec: GridSpec, corridors) -> CostMap:
    x, z = spec.centers()
    pts = np.stack([x, z], axis=-1)
    free = np.zeros(x.shape, dtype=bool)
    for poly, width in corridors:
        free |= polyline_distance(pts, poly) <= width / 2.0
    return CostMap(spec, np.where(free, 0.0, 1.0))


def _arm(junction, bearing_deg, length, bend_deg=0.0, bend_at=0.5):
    # Bearing is measured from +z toward +x (clockwise when viewed from above).
    b0 = math.radians(bearing_deg)
    l0 = length * bend_at if bend_deg else length
    p1 = (junction[0] + l0 * math.sin(b0), junction[1] + l0 * math.cos(b0))
    pts = [list(junction), list(p1)]
    if bend_deg:
        b1 = b0 + math.radians(bend_deg)
        l1 = length - l0
        pts.append([p1[0] + l1 * math.sin(b1), p1[1] + l1 * math.cos(b1)])
    return pts


def _bounds(polys, extra=()):
    pts = np.array([p for poly in polys for p in poly] + list(extra), dtype=float)
    return pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max()


FORK_DEFAULTS = {
    "trunk_length": 1.0,
    "trunk_width": 2.0,
    "arm_length": 12.0,
    "goal_branch": 0,
}


def _fork_params(params, seed, deadend):
    rng = np.random.default_rng(seed)
    p = dict(FORK_DEFAULTS)
    if deadend:
        p["trunk_length"] = 3.0
        p["deadend_length"] = 3.5
    if "angles_deg" not in params:
        spread = rng.uniform(50.0, 90.0)
        center = rng.uniform(-15.0, 15.0)
        p["angles_deg"] = [round(center - spread / 2, 3), round(center + spread / 2, 3)]
    if "widths" not in params:
        p["widths"] = [round(float(w), 3) for w in rng.uniform(1.6, 2.4, 2)]
    p.update(params)
    arms = len(p["angles_deg"])
    p.setdefault("bends_deg", [0.0] * arms)
    p.setdefault("clutter", [0] * arms)
    if "goal_branch" not in params:
        p["goal_branch"] = int(rng.integers(arms))
    if not (len(p["widths"]) == len(p["bends_deg"]) == len(p["clutter"]) == arms):
        raise ValueError("fork params: angles, widths, bends and clutter must have equal length")
    return p


def synthesize_world(scenario_kind: str, params: dict | None = None, seed: int = 0) -> World:
    """Deterministic synthetic world for ``(kind, params, seed)``."""
    if scenario_kind not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario_kind!r}; expected one of {SCENARIOS}")
    params = dict(params or {})
    rng = np.random.default_rng(seed)

    if scenario_kind == "open":
        size = float(params.setdefault("size", 30.0))
        spec = _grid_for((-size / 2, size / 2, -size / 2, size / 2), margin=0.0)
        truth = CostMap.filled(spec, 0.0)
        branch = {"polyline": [[0.0, 0.0], [0.0, size / 2]], "width": size, "goal_correct": True}
        return World(truth, [branch], "open", params, seed, exterior_cost=0.0, goal=(0.0, size / 2 - 2))

    if scenario_kind == "corridor":
        width = float(params.setdefault("width", 2.0))
        length = float(params.setdefault("length", 20.0))
        poly = [[0.0, -1.5], [0.0, length]]
        spec = _grid_for(_bounds([poly]), margin=width / 2 + 1.0)
        truth = _carve(spec, [(poly, width)])
        branch = {"polyline": poly, "width": width, "goal_correct": True}
        return World(truth, [branch], "corridor", params, seed, goal=(0.0, length - 1.0))

    if scenario_kind == "obstacle_field":
        size = float(params.setdefault("size", 20.0))
        count = int(params.setdefault("n_obstacles", 25))
        r_lo, r_hi = params.setdefault("radius_range", [0.2, 0.6])
        clear = float(params.setdefault("clear_radius", 2.0))
        spec = _grid_for((-size / 2, size / 2, -2.0, size), margin=0.0)
        x, z = spec.centers()
        lethal = np.zeros(x.shape, dtype=bool)
        for _ in range(count):
            while True:
                cx, cz = rng.uniform(-size / 2, size / 2), rng.uniform(0.0, size)
                if math.hypot(cx, cz) > clear:
                    break
            lethal |= np.hypot(x - cx, z - cz) <= rng.uniform(r_lo, r_hi)
        truth = CostMap(spec, np.where(lethal, 1.0, 0.0))
        branch = {"polyline": [[0.0, 0.0], [0.0, size]], "width": size, "goal_correct": True}
        return World(truth, [branch], "obstacle_field", params, seed, exterior_cost=0.0, goal=(0.0, size - 2.0))

    deadend = scenario_kind == "fork_with_deadend"
    p = _fork_params(params, seed, deadend)
    trunk = [[0.0, -1.5], [0.0, p["trunk_length"]]]
    junction = trunk[-1]
    corridors = [(trunk, p["trunk_width"])]
    branches = []
    goal = None
    for b, (ang, w, bend) in enumerate(zip(p["angles_deg"], p["widths"], p["bends_deg"])):
        length = p["arm_length"]
        if deadend and b != p["goal_branch"]:
            length = p["deadend_length"]
        arm = _arm(junction, ang, length, bend)
        corridors.append((arm, w))
        poly = trunk[:1] + arm
        branches.append({"polyline": poly, "width": w, "goal_correct": b == p["goal_branch"]})
        if b == p["goal_branch"]:
            end = np.array(arm[-1])
            prev = np.array(arm[-2])
            back = (end - prev) / np.linalg.norm(end - prev)
            goal = tuple((end - 1.5 * back).tolist())
    spec = _grid_for(_bounds([c[0] for c in corridors]), margin=2.5)
    truth = _carve(spec, corridors)
    blobs = _clutter(p, junction, rng)
    if blobs:
        x, z = spec.centers()
        lethal = np.zeros(x.shape, dtype=bool)
        for cx, cz, r in blobs:
            lethal |= np.hypot(x - cx, z - cz) <= r
        truth = CostMap(spec, np.where(lethal, 1.0, truth.cells))
    return World(truth, branches, scenario_kind, p, seed, goal=goal)


def _clutter(p, junction, rng):
    """Small lethal discs scattered inside each arm, clear of the trunk."""
    blobs = []
    for ang, w, count in zip(p["angles_deg"], p["widths"], p["clutter"]):
        b = math.radians(ang)
        fwd = (math.sin(b), math.cos(b))
        side = (fwd[1], -fwd[0])
        for _ in range(int(count)):
            s = rng.uniform(0.8, 4.0)
            off = rng.uniform(-w / 2, w / 2)
            r = rng.uniform(0.08, 0.2)
            blobs.append((junction[0] + s * fwd[0] + off * side[0], junction[1] + s * fwd[1] + off * side[1], r))
    return blobs


def load_world(path) -> World:
    """World file: regenerable ``{scenario_kind, params, seed}`` or a grid dump plus annotations."""
    path = FsPath(path)
    data = json.loads(path.read_text())
    if "grid" in data:
        unknown = set(data) - {"grid", "annotations", "exterior_cost", "scenario_kind", "start"}
        if unknown:
            raise ValueError(f"unknown world keys: {sorted(unknown)}")
        truth = load_costmap(path.parent / data["grid"])
        ann = data.get("annotations", [])
        if isinstance(ann, str):
            ann = json.loads((path.parent / ann).read_text())
        start = RobotState(*data["start"]) if "start" in data else RobotState()
        return World(
            truth,
            ann,
            data.get("scenario_kind", "corridor"),
            exterior_cost=float(data.get("exterior_cost", 1.0)),
            start=start,
        )
    unknown = set(data) - {"scenario_kind", "params", "seed"}
    if unknown:
        raise ValueError(f"unknown world keys: {sorted(unknown)}")
    return synthesize_world(data["scenario_kind"], data.get("params", {}), int(data.get("seed", 0)))


def default_mission(world: World, difficulty: int = 1, radius: float = 1.0, time_limit=None) -> Mission:
    gx, gz = world.goal
    dist = math.hypot(gx - world.start.x, gz - world.start.z)
    if time_limit is None:
        time_limit = max(20.0, 3.0 * dist)
    return Mission((Checkpoint(gx, gz, radius),), difficulty, float(time_limit))


# ---------------------------------------------------------------- frames


def to_robot_frame(points, state: RobotState) -> np.ndarray:
    """World points -> BEV (right, forward) coordinates of ``state``."""
    p = np.asarray(points, dtype=float)
    dx, dz = p[..., 0] - state.x, p[..., 1] - state.z
    c, s = math.cos(state.theta), math.sin(state.theta)
    return np.stack([dx * s - dz * c, dx * c + dz * s], axis=-1)


def to_world_frame(points, state: RobotState) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    rx, fz = p[..., 0], p[..., 1]
    c, s = math.cos(state.theta), math.sin(state.theta)
    return np.stack([state.x + rx * s + fz * c, state.z - rx * c + fz * s], axis=-1)


# ---------------------------------------------------------------- sensing


def render_observation(world: World, state: RobotState, camera: CameraModel, noise=NoiseSpec(), rng=None):
    """Oracle traversability mask: ray-cast each pixel and sample the truth grid."""
    gx, gz, valid = camera.ground_points()
    pts = to_world_frame(np.stack([np.where(valid, gx, 0.0), np.where(valid, gz, 0.0)], -1), state)
    mask = valid & (world.cost_at(pts) < 0.5)
    if noise.erode_px > 0:
        mask = ndimage.binary_erosion(mask, iterations=int(noise.erode_px), border_value=1)
    if noise.flip_p > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        mask = mask ^ (rng.random(mask.shape) < noise.flip_p)
    return mask


# ---------------------------------------------------------------- motion


def step_kinematics(state: RobotState, v_cmd, omega_cmd, dt, v_max=None, omega_max=None, substeps=1) -> RobotState:
    """Unicycle Euler integration with optional command clamping."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = float(v_cmd) if v_max is None else float(np.clip(v_cmd, -v_max, v_max))
    w = float(omega_cmd) if omega_max is None else float(np.clip(omega_cmd, -omega_max, omega_max))
    h = dt / substeps
    x, z, th = state.x, state.z, state.theta
    for _ in range(substeps):
        x += v * math.cos(th) * h
        z += v * math.sin(th) * h
        th += w * h
    return RobotState(x, z, wrap_angle(th), v, w)


def track_path(path, state: RobotState, params: ControllerParams = ControllerParams()):
    """Pure-pursuit style command toward the lookahead waypoint of a world-frame path.

    Returns ``(v_cmd, omega_cmd)``; omega is positive for left turns.
    """
    wp = path.waypoints if isinstance(path, Path) else np.asarray(path, dtype=float)
    if len(wp) == 0:
        raise ValueError("empty path")
    rel = to_robot_frame(wp, state)
    dist = np.hypot(rel[:, 0], rel[:, 1])
    nearest = int(np.argmin(dist))
    ahead = np.flatnonzero(dist[nearest:] >= params.lookahead)
    target = rel[nearest + ahead[0]] if ahead.size else rel[-1]
    alpha = math.atan2(-target[0], target[1])
    ld = max(math.hypot(*target), 1e-9)
    if abs(alpha) > math.pi / 2:
        omega = math.copysign(params.omega_max, alpha)
    else:
        omega = float(np.clip(2.0 * params.v_max * math.sin(alpha) / ld, -params.omega_max, params.omega_max))
    v = params.v_min + (params.v_max - params.v_min) * (1.0 - abs(omega) / params.omega_max)
    return v, omega


class HazardMonitor:
    """Short-horizon footprint check against the latest observed cost map.

    Unlike the planner's map, a cell counts as lethal here only when most of
    its pixels say so, which keeps isolated perception speckle from stalling
    the robot. A command is unsafe when its extrapolated pose ends closer than
    the footprint (plus margin) to lethal cells and closer than the robot is
    now.
    """

    def __init__(self, lethal: np.ndarray, spec: GridSpec, observer: RobotState, radius: float, margin: float, horizon: float):
        self.spec = spec
        self.clearance = ndimage.distance_transform_edt(~np.asarray(lethal, dtype=bool)) * spec.resolution
        self.observer = observer
        self.limit = radius + margin
        self.horizon = horizon

    def clearance_at(self, state: RobotState) -> float:
        p = to_robot_frame([state.x, state.z], self.observer)
        ix, iz, inside = cell_indices(self.spec, p[None, :])
        if not inside[0]:
            return math.inf
        return float(self.clearance[iz[0], ix[0]])

    def safe(self, state: RobotState, v: float, omega: float) -> bool:
        if v <= 0.0:
            return True
        now = self.clearance_at(state)
        pose = state
        dt = self.horizon / 4
        for _ in range(4):
            pose = step_kinematics(pose, v, omega, dt, substeps=2)
            c = self.clearance_at(pose)
            if c < self.limit and c < now:
                return False
        return True

    def filter(self, state: RobotState, v: float, omega: float, params: ControllerParams):
        """Closest safe (v, omega) to the tracker's command; turn in place if none."""
        if self.safe(state, v, omega):
            return v, omega, False
        step = 0.25 * params.omega_max
        for k in (1, -1, 2, -2, 3, -3, 4, -4):
            w = float(np.clip(omega + k * step, -params.omega_max, params.omega_max))
            vv = params.v_min + (params.v_max - params.v_min) * (1.0 - abs(w) / params.omega_max)
            if self.safe(state, vv, w):
                return vv, w, True
        return 0.0, omega if omega != 0.0 else params.omega_max, True


def check_collision(world: World, state: RobotState, footprint_radius: float) -> bool:
    """True iff a lethal cell (or lethal exterior) touches the closed footprint disk."""
    if not footprint_radius > 0:
        raise ValueError("footprint_radius must be positive")
    spec = world.truth.spec
    r = footprint_radius
    x0, x1, z0, z1 = spec.extent
    if world.exterior_cost >= 1.0 and (
        state.x - r < x0 or state.x + r > x1 or state.z - r < z0 or state.z + r > z1
    ):
        return True
    res = spec.resolution
    i0 = max(int(math.floor((state.x - r - x0) / res)) - 1, 0)
    i1 = min(int(math.floor((state.x + r - x0) / res)) + 1, spec.width - 1)
    j0 = max(int(math.floor((state.z - r - z0) / res)) - 1, 0)
    j1 = min(int(math.floor((state.z + r - z0) / res)) + 1, spec.height - 1)
    if i1 < i0 or j1 < j0:
        return False
    block = world.truth.cells[j0 : j1 + 1, i0 : i1 + 1]
    ix = np.arange(i0, i1 + 1)
    jz = np.arange(j0, j1 + 1)
    cx_lo, cz_lo = x0 + ix * res, z0 + jz * res
    ddx = np.maximum(np.maximum(cx_lo - state.x, state.x - (cx_lo + res)), 0.0)
    ddz = np.maximum(np.maximum(cz_lo - state.z, state.z - (cz_lo + res)), 0.0)
    d2 = ddz[:, None] ** 2 + ddx[None, :] ** 2
    return bool(np.any((block >= 1.0) & (d2 <= r * r)))


# ---------------------------------------------------------------- missions


def mission_score(reached: int, total: int, difficulty: float, collided: bool) -> float:
    """Proportional checkpoint score; a collision forfeits everything."""
    if collided:
        return 0.0
    return difficulty * reached / total


@dataclass(eq=False)
class SimLog:
    header: dict
    records: list
    outcome: str
    reached: int
    total: int
    score: float
    time: float

    @property
    def outcome_record(self) -> dict:
        return {
            "type": "outcome",
            "outcome": self.outcome,
            "reached": self.reached,
            "total": self.total,
            "score": self.score,
            "time": self.time,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", **self.header})]
        lines += [json.dumps(r) for r in self.records]
        lines.append(json.dumps(self.outcome_record))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "SimLog":
        rows = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
        if not rows or rows[-1].get("type") != "outcome":
            raise ValueError("simulation log must end with an outcome record")
        header = {}
        if rows[0].get("type") == "header":
            header = {k: v for k, v in rows[0].items() if k != "type"}
            rows = rows[1:]
        out = rows[-1]
        return cls(header, rows[:-1], out["outcome"], out["reached"], out["total"], out["score"], out["time"])


def goal_direction_bev(state: RobotState, goal) -> np.ndarray:
    rel = to_robot_frame(np.asarray(goal, dtype=float), state)
    n = np.linalg.norm(rel)
    return rel / n if n > 0 else np.array([0.0, 1.0])


def run_mission(
    world: World,
    mission: Mission,
    planner_config: PlannerConfig,
    camera: CameraModel,
    seed: int = 0,
    *,
    pathset: PathSet | None = None,
    sim: SimConfig = SimConfig(),
    grid: GridSpec = GridSpec(),
    start: RobotState | None = None,
    projector: BevProjector | None = None,
) -> SimLog:
    """Closed loop: observe, project, plan, then track the plan until the next replan."""
    rng = np.random.default_rng(seed)
    pathset = pathset or sample_paths(SamplerSpec(), 0)
    projector = projector or BevProjector(camera, grid)
    state = start or world.start
    ctrl = sim.controller
    t = 0.0
    cp = 0
    failures = 0
    total = len(mission.checkpoints)
    records = []
    outcome = None
    step = 0
    header = {"world": world.to_json(), "mission": mission.to_json(), "seed": seed}

    def reached_checkpoint(s):
        c = mission.checkpoints[cp]
        return math.hypot(s.x - c.x, s.z - c.z) <= c.radius

    while outcome is None:
        if t >= mission.time_limit - 1e-9:
            outcome = "timeout"
            break
        mask = render_observation(world, state, camera, sim.noise, rng)
        n_free, n_block = projector.counts(mask)
        cmap = projector.cost_from_counts(n_free, n_block)
        c = mission.checkpoints[cp]
        goal_dir = goal_direction_bev(state, (c.x, c.z))
        record = {"type": "step", "step": step, "time": t, "state": state.to_json(), "checkpoint": cp}
        try:
            path, diag = plan(pathset, cmap, goal_dir, planner_config)
        except NoPathError:
            failures += 1
            record.update(selected=None, recovery=True, k=None)
            if failures > sim.retry_budget:
                records.append(record | {"collision": False})
                outcome = "timeout"
                break
            turn_steps = max(1, round(sim.recovery_turn / (sim.omega_max * sim.dt)))
            collided = False
            for _ in range(turn_steps):
                state = step_kinematics(state, 0.0, sim.omega_max, sim.dt, sim.v_max, sim.omega_max)
                t += sim.dt
                if check_collision(world, state, sim.footprint_radius):
                    collided = True
                    break
            record["collision"] = collided
            records.append(record)
            step += 1
            if collided:
                outcome = "collision"
            continue
        failures = 0
        world_path = Path(to_world_frame(path.waypoints, state), path.kind)
        monitor = None
        if sim.hazard_horizon > 0:
            monitor = HazardMonitor(
                n_block > n_free, grid, state, sim.footprint_radius, sim.hazard_margin, sim.hazard_horizon
            )
        interventions = 0
        record.update(
            selected=np.round(world_path.waypoints, 6).tolist(),
            recovery=False,
            k=diag.k,
            n_representatives=len(diag.representatives),
        )
        collided = False
        for _ in range(sim.substeps):
            v, w = track_path(world_path, state, ctrl)
            if monitor is not None:
                v, w, hit = monitor.filter(state, v, w, ctrl)
                interventions += hit
            state = step_kinematics(state, v, w, sim.dt, sim.v_max, sim.omega_max)
            t += sim.dt
            if check_collision(world, state, sim.footprint_radius):
                collided = True
                break
            if reached_checkpoint(state):
                cp += 1
                if cp == total:
                    outcome = "success"
                break
            if t >= mission.time_limit - 1e-9:
                break
        record["collision"] = collided
        record["hazard_interventions"] = interventions
        records.append(record)
        step += 1
        if collided:
            outcome = "collision"

    score = mission_score(cp, total, mission.difficulty, outcome == "collision")
    return SimLog(header, records, outcome, cp, total, score, t)


def outcome_label(log: SimLog) -> str:
    if log.outcome == "timeout" and 0 < log.reached < log.total:
        return f"partial({log.reached}/{log.total})"
    return log.outcome


def replay(simlog: SimLog, world: World | None = None) -> list:
    """One SVG frame per logged step."""
    from .plotting import render_replay_frame

    if not simlog.records:
        return []
    if world is None:
        w = simlog.header["world"]
        world = synthesize_world(w["scenario_kind"], w.get("params", {}), w.get("seed", 0))
    return [render_replay_frame(world, simlog, i) for i in range(len(simlog.records))]
