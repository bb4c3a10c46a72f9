"""Run configuration: defaults, JSON file overrides and ``--set`` overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields

from .camera import CameraModel, load_ray_table, make_fisheye, make_pinhole
from .costmap import GridSpec
from .fusion import FusionConfig, PlannerConfig
from .paths import SamplerSpec
from .sim import NoiseSpec, SimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CameraConfig:
    kind: str = "fisheye"  # fisheye | pinhole | ray_table
    width: int = 640
    height_px: int = 480
    f: float = 240.0
    fx: float = 320.0
    fy: float = 320.0
    cx: float = 319.5
    cy: float = 239.5
    pitch: float = -0.5
    mount_height: float = 1.0
    ray_table: str | None = None

    def __post_init__(self):
        if self.kind not in ("fisheye", "pinhole", "ray_table"):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.kind == "ray_table" and not self.ray_table:
            raise ValueError("camera.kind=ray_table needs camera.ray_table")
        if self.width < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be positive")
        if not self.mount_height > 0:
            raise ValueError("camera.mount_height must be positive")


@dataclass(frozen=True)
class EvalConfig:
    suite_size: int = 200
    suite_seed: int = 0
    flip_p: float = 0.05
    erode_px: int = 2
    beta_seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        if self.suite_size < 1:
            raise ValueError("eval.suite_size must be >= 1")
        NoiseSpec(self.flip_p, self.erode_px)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(self.flip_p, self.erode_px)


_SECTIONS = {
    "camera": CameraConfig,
    "grid": GridSpec,
    "sampler": SamplerSpec,
    "fusion": FusionConfig,
    "planner": PlannerConfig,
    "sim": SimConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class RunConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def planner_config(self, **overrides) -> PlannerConfig:
        """Planner settings with the fusion section folded in."""
        from dataclasses import replace

        return replace(self.planner, fusion=self.fusion, **overrides)

    def build_camera(self) -> CameraModel:
        c = self.camera
        dims = (c.width, c.height_px)
        if c.kind == "fisheye":
            return make_fisheye(c.f, c.cx, c.cy, c.pitch, c.mount_height, dims)
        if c.kind == "pinhole":
            return make_pinhole(c.fx, c.fy, c.cx, c.cy, c.pitch, c.mount_height, dims)
        return load_ray_table(c.ray_table, c.mount_height)

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            d = asdict(getattr(self, name))
            d.pop("fusion", None)
            if isinstance(d.get("origin"), tuple):
                d["origin"] = list(d["origin"])
            if isinstance(d.get("beta_seeds"), tuple):
                d["beta_seeds"] = list(d["beta_seeds"])
            out[name] = d
        out["seed"] = self.seed
        return out


def _field_names(cls):
    return {f.name for f in fields(cls)} - {"fusion"}


def _coerce(cls, key, value):
    if key == "origin":
        return tuple(float(v) for v in value)
    if key == "beta_seeds":
        return tuple(int(v) for v in value)
    default = next(f.default for f in fields(cls) if f.name == key)
    if isinstance(default, bool) or value is None:
        return value
    if isinstance(default, int) and not isinstance(value, bool):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{cls.__name__}.{key} expects an integer, got {value}")
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def build_config(data: dict) -> RunConfig:
    """Build a RunConfig from a nested dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown configuration section(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        bad = set(section) - _field_names(cls)
        if bad:
            raise ConfigError(f"unknown key(s) in {name}: {sorted(bad)}")
        try:
            values = {k: _coerce(cls, k, v) for k, v in section.items()}
            kwargs[name] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {name} settings: {exc}") from exc
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    return RunConfig(seed=seed, **kwargs)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings to a nested dict (values parsed as JSON)."""
    data = copy.deepcopy(data)
    for item in assignments or ():
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        section, name = key.split(".", 1)
        data.setdefault(section, {})[name] = _parse_value(value)
    return data


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    data = apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    return build_config(data)


