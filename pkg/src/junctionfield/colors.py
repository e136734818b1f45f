"""Closed-form wedge colors given wedge indicators.

Both solvers minimize, per wedge j and channel k,

    sum_x u_j(x) w(x) [ (c(x) - I(x))^2 + lambda_c (c(x) - Ihat(x))^2 ]

where w is the validity mask. Equivalently they fit c to the blended
target (I + lambda_c Ihat) / (1 + lambda_c) with weights u_j w.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .core import Image, WedgeColors

MASS_THRESHOLD = 1e-6
COND_THRESHOLD = 1e8


def _as_patch(patch) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(patch, Image):
        return patch.data, patch.weights()
    data = np.asarray(patch, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    return data, np.ones(data.shape)


def _blended_target(data, global_patch, lambda_c):
    if lambda_c > 0:
        if global_patch is None:
            raise ValueError("lambda_c > 0 requires the global color patch")
        g = np.asarray(global_patch, dtype=np.float64).reshape(data.shape)
        return (data + lambda_c * g) / (1.0 + lambda_c)
    return data


def _patch_mean(target, w):
    mass = w.sum(axis=(0, 1))
    return np.where(mass > 0, (w * target).sum(axis=(0, 1)) / np.maximum(mass, 1e-300), 0.0)


def optimal_constant_colors(patch, indicators, global_patch=None, lambda_c: float = 0.0,
                            weights: Optional[np.ndarray] = None) -> WedgeColors:
    """Weighted wedge means of the blended target.

    ``indicators`` is (M, H, W). Wedges with mass below ``MASS_THRESHOLD``
    get the whole-patch mean.
    """
    data, w = _as_patch(patch)
    if weights is not None:
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64).reshape(data.shape[:2] + (-1,)), data.shape)
    target = _blended_target(data, global_patch, lambda_c)
    u = np.asarray(indicators, dtype=np.float64)[..., None]  # (M, H, W, 1)
    mass = (u * w).sum(axis=(1, 2))  # (M, K)
    num = (u * w * target).sum(axis=(1, 2))
    fallback = np.broadcast_to(_patch_mean(target, w), mass.shape)
    c = np.where(mass >= MASS_THRESHOLD, num / np.where(mass >= MASS_THRESHOLD, mass, 1.0), fallback)
    return WedgeColors("constant", c)


def local_coordinates(shape, center=None):
    """Coordinates (x, y) relative to the patch center pixel."""
    H, W = shape[:2]
    cy, cx = ((H - 1) / 2.0, (W - 1) / 2.0) if center is None else (center[1], center[0])
    y, x = np.mgrid[0:H, 0:W].astype(np.float64)
    return x - cx, y - cy


def solve_normal_3x3(A: np.ndarray, b: np.ndarray):
    """Solve a symmetric 3x3 system; None when its 1-norm condition exceeds the threshold."""
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return None
    cond = np.abs(A).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > COND_THRESHOLD:
        return None
    return inv @ b


def optimal_linear_colors(patch, indicators, global_patch=None, lambda_c: float = 0.0,
                          weights: Optional[np.ndarray] = None, center=None) -> WedgeColors:
    """Weighted least-squares planes a*x + b*y + d per wedge and channel.

    Ill-conditioned wedges (e.g. all mass on one line) fall back to the
    constant solution.
    """
    data, w = _as_patch(patch)
    if weights is not None:
        w = np.broadcast_to(np.asarray(weights, dtype=np.float64).reshape(data.shape[:2] + (-1,)), data.shape)
    target = _blended_target(data, global_patch, lambda_c)
    const = optimal_constant_colors(target, indicators, None, 0.0, weights=w).constant
    x, y = local_coordinates(data.shape, center)
    basis = np.stack([x, y, np.ones_like(x)])  # (3, H, W)
    u = np.asarray(indicators, dtype=np.float64)
    M, K = u.shape[0], data.shape[2]
    coeffs = np.zeros((M, 3, K))
    for j in range(M):
        for k in range(K):
            wt = u[j] * w[:, :, k]
            coeffs[j, 2, k] = const[j, k]
            if wt.sum() < MASS_THRESHOLD:
                continue
            A = np.einsum("pij,qij,ij->pq", basis, basis, wt)
            rhs = np.einsum("pij,ij->p", basis, wt * target[:, :, k])
            sol = solve_normal_3x3(A, rhs)
            if sol is not None:
                coeffs[j, :, k] = sol
    return WedgeColors("linear", coeffs)


def render(colors: WedgeColors, indicators, shape, center=None) -> np.ndarray:
    """sum_j u_j(x) c_j(x) over a patch; shape (H, W, K)."""
    x, y = local_coordinates(shape, center)
    c = colors.evaluate(x, y)  # (M, H, W, K)
    return (np.asarray(indicators)[..., None] * c).sum(axis=0)
