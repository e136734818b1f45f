"""Field-of-junctions image analysis."""
from .core import (Config, FieldOfJunctions, GlobalMaps, Image, JunctionParams, PatchGrid, WedgeColors,
                   build_patch_grid)
from .globalmaps import Detection, detect_vertices, global_maps, vertex_map
from .initialization import initialize_field, optimize_angles, optimize_vertex_and_angles
from .pipeline import Analysis, analyze, smooth
from .refine import objective_gradient, refine, total_objective

__all__ = [
    "Analysis", "Config", "Detection", "FieldOfJunctions", "GlobalMaps", "Image", "JunctionParams", "PatchGrid",
    "WedgeColors", "analyze", "build_patch_grid", "detect_vertices", "global_maps", "initialize_field",
    "objective_gradient", "optimize_angles", "optimize_vertex_and_angles", "refine", "smooth", "total_objective",
    "vertex_map",
]
