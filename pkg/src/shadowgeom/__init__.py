"""Shadow boundaries, transport, and helix diagnostics for embedded patches."""

__version__ = "0.1.0"

from .expr import parse_chart
from .geometry import AmbientSpace, Box, SubmanifoldPatch, validate_patch
from .scene import Scene, SceneError, load_scene, parse_scene
from .shadow import extract_shadow_set, product_shadow_check, smoothness_certificate
from .tolerances import DEFAULT_TOLS, Tolerances
from .transport import construct_parallel_field, holonomy_loop, parallel_transport

__all__ = [
    "__version__",
    "parse_chart",
    "AmbientSpace",
    "Box",
    "SubmanifoldPatch",
    "validate_patch",
    "Scene",
    "SceneError",
    "load_scene",
    "parse_scene",
    "extract_shadow_set",
    "product_shadow_check",
    "smoothness_certificate",
    "DEFAULT_TOLS",
    "Tolerances",
    "construct_parallel_field",
    "holonomy_loop",
    "parallel_transport",
]
