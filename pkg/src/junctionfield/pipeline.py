"""End-to-end analysis: initialize, refine, and assemble the global outputs."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from typing import IO, Dict, List, Optional

import numpy as np

from .core import Config, FieldOfJunctions, GlobalMaps, Image, build_patch_grid
from .globalmaps import Detection, detect_vertices, global_maps, vertex_map
from .initialization import initialize_field
from .refine import RefineStats, refine


@dataclass
class Analysis:
    field: FieldOfJunctions
    maps: GlobalMaps
    detections: List[Detection]
    timings: Dict[str, float] = dc_field(default_factory=dict)
    stats: Optional[RefineStats] = None


def outputs(field: FieldOfJunctions, config: Config, image: Optional[Image] = None):
    """Global maps (with the vertex map) and vertex detections for a field."""
    maps = global_maps(field, config.eta_px, config.delta_px, image)
    V = vertex_map(field, config.gamma_px, config.nu_d_px, config.nu_e)
    dets = detect_vertices(V, config.vertex_threshold, config.nms_radius_px, field,
                           config.gamma_px, config.nu_d_px, config.nu_e)
    return GlobalMaps(maps.boundary, maps.color, V), dets


def analyze(image: Image, config: Optional[Config] = None, log_csv: Optional[IO[str]] = None) -> Analysis:
    """Fit a field of junctions to ``image`` and extract boundaries, smoothing and vertices."""
    config = config or Config()
    config.validate()
    if image.data.shape[0] < config.patch_size or image.data.shape[1] < config.patch_size:
        raise ValueError(f"image {image.width}x{image.height} is smaller than the patch size {config.patch_size}")
    grid = build_patch_grid(image.width, image.height, config.patch_size, config.stride)
    timings = {}
    t0 = time.perf_counter()
    field = initialize_field(image, config, grid)
    t1 = time.perf_counter()
    stats = RefineStats()
    field = refine(field, image, config, log_csv=log_csv, stats=stats)
    t2 = time.perf_counter()
    maps, dets = outputs(field, config, image)
    t3 = time.perf_counter()
    timings.update(initialize=t1 - t0, refine=t2 - t1, outputs=t3 - t2, total=t3 - t0)
    return Analysis(field, maps, dets, timings, stats)


def smooth(image: Image, config: Optional[Config] = None) -> np.ndarray:
    """Boundary-aware smoothing of ``image`` (the global color map)."""
    return analyze(image, config).maps.color
