"""Patch negative log-likelihood and the restricted angle costs.

The likelihood of a patch under a junction is the squared error between
the patch and its rendering, so "negloglik" below is always a sum of
squares (the noise scale is folded into the consistency weights).

Single-patch functions take the patch as an (R, R) / (R, R, K) array or an
:class:`Image`, and junction coordinates relative to the patch's top-left
pixel. Colors are evaluated in coordinates centered on the patch center.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from . import _kernels
from .colors import MASS_THRESHOLD, _as_patch, local_coordinates, optimal_constant_colors
from .core import JunctionParams, WedgeColors, canonicalize_angles, wrap_angle
from .geometry import _half, hard_wedge_indicators, wedge_indicators


def _indicators(params, shape, hard, eta):
    y, x = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    if hard:
        return hard_wedge_indicators(params, x, y)
    return wedge_indicators(params, x, y, eta)


def patch_negloglik(patch, params: JunctionParams, colors: WedgeColors, hard: bool = True,
                    eta: float = 0.05) -> float:
    """sum_j sum_x u_j(x) |c_j(x) - I(x)|^2 over observed values.

    ``eta`` (pixels) only matters for the relaxed indicators.
    """
    data, w = _as_patch(patch)
    if colors.coeffs.shape[2] != data.shape[2]:
        raise ValueError("color channels do not match the patch")
    u = _indicators(params.canonical(), data.shape, hard, eta)
    c = colors.evaluate(*local_coordinates(data.shape))  # (M, H, W, K)
    return float((u[..., None] * w * (c - data) ** 2).sum())


def hard_objective(patch, params: JunctionParams, global_patch=None, lambda_c: float = 0.0) -> float:
    """Hard-partition cost with optimal constant colors.

    sum_j sum_x u_j [ (c_j - I)^2 + lambda_c (c_j - Ihat)^2 ]; with
    lambda_c = 0 this is the negloglik at the best colors.
    """
    data, w = _as_patch(patch)
    u = _indicators(params.canonical(), data.shape, True, 1.0)
    col = optimal_constant_colors(patch, u, global_patch, lambda_c).constant[:, None, None, :]
    total = (u[..., None] * w * (col - data) ** 2).sum()
    if lambda_c > 0:
        g = np.asarray(global_patch, dtype=np.float64).reshape(data.shape)
        total += lambda_c * (u[..., None] * w * (col - g) ** 2).sum()
    return float(total)


def restricted_negloglik(patch, params: JunctionParams, j: int, phi: float,
                         global_patch=None, lambda_c: float = 0.0) -> float:
    """Cost of the partition with angle slot ``j`` moved to ``phi``, colors re-optimized."""
    ang = list(params.angles)
    ang[j] = float(phi)
    return hard_objective(patch, JunctionParams(tuple(ang), params.vertex), global_patch, lambda_c)


def restricted_costs(patch, params: JunctionParams, j: int, candidates,
                     global_patch=None, lambda_c: float = 0.0):
    """Compiled ``restricted_negloglik`` for every candidate angle.

    Returns (costs per candidate, cost at the current angles).
    """
    data, w = _as_patch(patch)
    if data.shape[0] != data.shape[1]:
        raise ValueError("patches must be square")
    g = np.zeros_like(data) if global_patch is None else np.asarray(global_patch, dtype=np.float64).reshape(data.shape)
    return _kernels.restricted_costs_patch(data, np.ascontiguousarray(w), g, 0, 0, data.shape[0],
                                           params.as_array(), params.M, j,
                                           np.ascontiguousarray(candidates, dtype=np.float64), float(lambda_c))


@dataclass(frozen=True)
class AngularHistogram:
    """Per-bin pixel sums around a fixed vertex.

    Bin b holds the pixels whose polar angle lies in [edges[b], edges[b+1])
    (the last bin wraps). The pixel at the vertex, if any, is kept apart in
    ``vertex_stats`` and always joins the wedge that starts at the smallest
    angle. ``stats`` has shape (n_bins, 3, K): weight, sum and sum of
    squares of the values, centered on the patch mean.
    """

    edges: np.ndarray
    stats: np.ndarray
    vertex_stats: np.ndarray

    @classmethod
    def build(cls, patch, vertex, edges) -> "AngularHistogram":
        data, w = _as_patch(patch)
        edges = wrap_angle(np.asarray(edges, dtype=np.float64))
        if np.any(np.diff(edges) < 0):
            raise ValueError("edges must be sorted")
        mass = w.sum(axis=(0, 1))
        mu = np.where(mass > 0, (w * data).sum(axis=(0, 1)) / np.maximum(mass, 1e-300), 0.0)
        v = data - mu
        y, x = np.mgrid[0:data.shape[0], 0:data.shape[1]].astype(np.float64)
        dx = (x - vertex[0]).ravel()
        dy = (y - vertex[1]).ravel()
        # number of edges at or before each pixel's angle
        vh = _half(dx, dy)
        ex, ey = np.cos(edges), np.sin(edges)
        eh = _half(ex, ey)
        geq = (vh[:, None] > eh[None, :]) | ((vh[:, None] == eh[None, :]) &
                                             (ex[None, :] * dy[:, None] - ey[None, :] * dx[:, None] >= 0))
        count = geq.sum(axis=1)
        b = np.where(count > 0, count - 1, len(edges) - 1)
        at_vertex = (dx == 0) & (dy == 0)
        per_px = np.stack([w, w * v, w * v * v], axis=2).reshape(-1, 3, data.shape[2])
        stats = np.zeros((len(edges), 3, data.shape[2]))
        np.add.at(stats, b[~at_vertex], per_px[~at_vertex])
        return cls(edges, stats, per_px[at_vertex].sum(axis=0))

    def wedge_stats(self, angles) -> np.ndarray:
        """Sums per wedge (M, 3, K) for angles drawn from ``edges``."""
        ang, _ = canonicalize_angles(angles)
        idx = np.searchsorted(self.edges, ang)
        if np.any(idx >= len(self.edges)) or np.any(self.edges[np.minimum(idx, len(self.edges) - 1)] != ang):
            raise ValueError("angles must be histogram edges")
        pref = np.concatenate([np.zeros((1,) + self.stats.shape[1:]), np.cumsum(self.stats, axis=0)])
        M = len(ang)
        out = np.empty((M,) + self.stats.shape[1:])
        for m in range(M - 1):
            out[m] = pref[idx[m + 1]] - pref[idx[m]]
        out[M - 1] = pref[-1] - (pref[idx[M - 1]] - pref[idx[0]])
        out[0] += self.vertex_stats
        return out

    def negloglik(self, angles) -> float:
        """Cost of the partition with each wedge at its mean color."""
        s = self.wedge_stats(angles)
        w, s1, s2 = s[:, 0], s[:, 1], s[:, 2]
        c = np.where(w >= MASS_THRESHOLD, s1 / np.where(w >= MASS_THRESHOLD, w, 1.0), 0.0)
        return float(np.maximum(s2 - 2 * c * s1 + c * c * w, 0.0).sum())
