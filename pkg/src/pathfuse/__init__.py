"""Path planning on projected traversability masks with path fusion."""

from .camera import BevProjector, CameraModel, make_fisheye, make_pinhole, project_mask_to_bev
from .costmap import CostMap, GridSpec
from .fusion import FusionConfig, NoPathError, PlannerConfig, plan
from .paths import Path, PathSet, SamplerSpec, sample_paths

__version__ = "0.1.0"

__all__ = [
    "BevProjector",
    "CameraModel",
    "CostMap",
    "FusionConfig",
    "GridSpec",
    "NoPathError",
    "Path",
    "PathSet",
    "PlannerConfig",
    "SamplerSpec",
    "make_fisheye",
    "make_pinhole",
    "plan",
    "project_mask_to_bev",
    "sample_paths",
]
