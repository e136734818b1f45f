"""Thin wrapper around the compiled relaxed-model pass over a field."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .core import Image, PatchGrid


@dataclass
class PassResult:
    colors: np.ndarray  # (N, M, 3, K)
    terms: np.ndarray  # (N, 3): likelihood, boundary mismatch, color mismatch
    grad: Optional[np.ndarray]  # (N, M+2) or None
    boundary: np.ndarray  # (H, W) mean of patch boundary maps
    color: np.ndarray  # (H, W, K) mean of patch renderings


def image_arrays(image: Image):
    return np.ascontiguousarray(image.data), np.ascontiguousarray(image.weights())


def run_pass(image: Image, grid: PatchGrid, params, colors=None, *, eta: float, delta: float,
             lambda_b: float = 0.0, lambda_c: float = 0.0, bhat=None, ihat=None,
             solve_colors: bool = True, linear: bool = False, want_grad: bool = False) -> PassResult:
    """Evaluate every patch; ``eta``/``delta`` in pixels."""
    img, wts = image_arrays(image)
    H, W, K = img.shape
    params = np.ascontiguousarray(params, dtype=np.float64)
    N, M = params.shape[0], params.shape[1] - 2
    col = np.zeros((N, M, 3, K)) if colors is None else np.array(colors, dtype=np.float64, copy=True)
    if colors is None and not solve_colors:
        raise ValueError("colors are required when not solving for them")
    bhat = np.zeros((H, W)) if bhat is None else np.ascontiguousarray(bhat, dtype=np.float64)
    ihat = np.zeros((H, W, K)) if ihat is None else np.ascontiguousarray(ihat, dtype=np.float64)
    grad = np.zeros((N, M + 2))
    bacc = np.zeros((H, W))
    iacc = np.zeros((H, W, K))
    terms = np.zeros((N, 3))
    _kernels.field_pass(img, wts, grid.rows, grid.cols, grid.R, params, M, float(eta), float(delta),
                        float(lambda_b), float(lambda_c), bhat, ihat, col, bool(solve_colors), bool(linear),
                        bool(want_grad), grad, bacc, iacc, terms)
    cnt = grid.counts().astype(np.float64)
    return PassResult(col, terms, grad if want_grad else None, bacc / cnt, iacc / cnt[:, :, None])
