"""Per-patch initialization by exhaustive coordinate search.

``optimize_angles`` sweeps each angle slot over a uniform candidate grid
with the vertex held fixed; ``optimize_vertex_and_angles`` alternates that
sweep with 1-D searches over the vertex coordinates. Both minimize the
hard-partition squared error with optimal constant colors and only move a
coordinate when the cost strictly drops.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from . import _kernels
from ._fieldpass import image_arrays, run_pass
from .colors import _as_patch
from .core import (Config, FieldOfJunctions, Image, JunctionParams, PatchGrid, angle_candidates,
                   build_patch_grid, canonicalize_angles, vertex_offsets)


def _square(patch):
    data, w = _as_patch(patch)
    if data.shape[0] != data.shape[1] or data.shape[0] % 2 != 1:
        raise ValueError(f"patch must be square with odd size, got {data.shape[:2]}")
    return data, np.ascontiguousarray(w)


def optimize_angles(patch, vertex, M: int = 3, n_ang: int = 100) -> np.ndarray:
    """Angles from a single sweep over the slots, starting from all zeros.

    ``vertex`` is in patch pixel coordinates (origin at the top-left pixel).
    Returns the angles sorted ascending.
    """
    if n_ang < M:
        raise ValueError("n_ang must be at least M")
    data, w = _square(patch)
    slots = np.zeros(M + 2)
    slots[M:] = vertex
    _kernels.alg1_patch(data, w, np.zeros_like(data), data.shape[0], slots, M,
                        angle_candidates(n_ang), 0.0)
    return canonicalize_angles(slots[:M])[0]


def optimize_vertex_and_angles(patch, M: int = 3, n_init: int = 30, n_ang: int = 100,
                               n_vtx: int = 100, return_rounds: bool = False):
    """Alternate angle sweeps with vertex searches from the patch center.

    The vertex candidates span 3R around the center. Stops early after a
    round that changes nothing.
    """
    data, w = _square(patch)
    R = data.shape[0]
    params = np.zeros((1, M + 2))
    rounds = np.zeros(1, dtype=np.int64)
    _kernels.alg2_field(data, w, np.zeros_like(data), np.zeros(1, np.int64), np.zeros(1, np.int64), R,
                        params, M, n_init, True, angle_candidates(n_ang), vertex_offsets(R, n_vtx), 0.0, rounds)
    out = JunctionParams.from_array(params[0]).canonical()
    return (out, int(rounds[0])) if return_rounds else out


def initialize_params(image: Image, grid: PatchGrid, config: Config) -> Tuple[np.ndarray, np.ndarray]:
    """Search every patch of the grid; returns params (N, M+2) and rounds used."""
    img, wts = image_arrays(image)
    params = np.zeros((grid.n_patches, config.M + 2))
    rounds = np.zeros(grid.n_patches, dtype=np.int64)
    _kernels.alg2_field(img, wts, np.zeros_like(img), grid.rows, grid.cols, grid.R, params, config.M,
                        config.n_init, True, config.angle_candidates(), config.vertex_offsets(), 0.0, rounds)
    return params, rounds


def initialize_field(image: Image, config: Config, grid: Optional[PatchGrid] = None) -> FieldOfJunctions:
    """Initial field with colors solved under the relaxed indicators."""
    if grid is None:
        grid = build_patch_grid(image.width, image.height, config.patch_size, config.stride)
    params, _ = initialize_params(image, grid, config)
    res = run_pass(image, grid, params, eta=config.eta_px, delta=config.delta_px,
                   linear=config.color_model == "linear")
    return FieldOfJunctions(grid, params, res.colors, config.color_model)
