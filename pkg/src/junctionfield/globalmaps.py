"""Global outputs assembled from a field of junctions.

The boundary map and the color map (the boundary-aware smoothing) are
per-pixel means over the patches that contain the pixel. The vertex map
is a weighted Gaussian vote from every patch's vertex.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from typing import List, Optional, Tuple

import numpy as np

from ._fieldpass import run_pass
from .core import TWO_PI, FieldOfJunctions, GlobalMaps, Image

# near-degenerate fits on flat regions leave votes of order 1e-10
MIN_VOTE = 1e-3


def _blank(field: FieldOfJunctions) -> Image:
    g = field.grid
    return Image(np.zeros((g.height, g.width, field.channels)))


def global_maps(field: FieldOfJunctions, eta: float, delta: float, image: Optional[Image] = None) -> GlobalMaps:
    """Boundary and color maps in one pass; ``eta``/``delta`` in pixels."""
    res = run_pass(image or _blank(field), field.grid, field.params, field.colors, eta=eta, delta=delta,
                   solve_colors=False)
    return GlobalMaps(res.boundary, res.color)


def global_boundary_map(field: FieldOfJunctions, delta: float, eta: float = 1.0) -> np.ndarray:
    """Mean over containing patches of each patch's boundary map."""
    return global_maps(field, eta, delta).boundary


def global_color_map(field: FieldOfJunctions, eta: float, delta: float = 1.0) -> np.ndarray:
    """Mean over containing patches of each patch's relaxed rendering, (H, W, K)."""
    return global_maps(field, eta, delta).color


def angle_factor(angles, nu_e: float = 2.0) -> float:
    """max over angle pairs of min(1, (1 + cos d)(1 - |cos d|)^nu_e).

    Zero when every pair is parallel or anti-parallel, so straight edges
    and uniform patches do not vote.
    """
    best = 0.0
    for a, b in combinations(np.asarray(angles, dtype=np.float64), 2):
        c = np.cos(a - b)
        best = max(best, min(1.0, (1.0 + c) * (1.0 - abs(c)) ** nu_e))
    return best


def vertex_weights(field: FieldOfJunctions, nu_d: float, nu_e: float = 2.0) -> np.ndarray:
    """Per-patch vote weight: distance of the vertex to the patch center times the angle factor."""
    M = field.M
    ang = field.params[:, :M]
    c = np.cos(ang[:, :, None] - ang[:, None, :])
    f = np.minimum(1.0, (1.0 + c) * (1.0 - np.abs(c)) ** nu_e)
    iu = np.triu_indices(M, 1)
    af = f[:, iu[0], iu[1]].max(axis=1)
    d2 = ((field.params[:, M:] - field.grid.centers) ** 2).sum(axis=1)
    return np.exp(-d2 / (2.0 * nu_d * nu_d)) * af


def vertex_map(field: FieldOfJunctions, gamma: float, nu_d: float, nu_e: float = 2.0) -> np.ndarray:
    """V(x) = sum_i w_i exp(-|x - x_i|^2 / (2 gamma^2)), evaluated separably."""
    w = vertex_weights(field, nu_d, nu_e)
    g = field.grid
    vx, vy = field.params[:, field.M], field.params[:, field.M + 1]
    gx = np.exp(-((np.arange(g.width)[None, :] - vx[:, None]) ** 2) / (2.0 * gamma * gamma))
    gy = np.exp(-((np.arange(g.height)[None, :] - vy[:, None]) ** 2) / (2.0 * gamma * gamma))
    return (gy * w[:, None]).T @ gx


@dataclass(frozen=True)
class Detection:
    x: float
    y: float
    score: float
    angles: Tuple[float, ...]


def _local_maxima(V: np.ndarray) -> np.ndarray:
    pad = np.pad(V, 1, mode="constant", constant_values=-np.inf)
    H, W = V.shape
    nb = np.stack([pad[1 + dy:1 + dy + H, 1 + dx:1 + dx + W]
                   for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx])
    return V >= nb.max(axis=0)


def _set_distances(A: np.ndarray) -> np.ndarray:
    """Pairwise angle-set distances (n, n): the smallest sum of circular
    differences over matchings of the M angles."""
    n, M = A.shape
    best = np.full((n, n), np.inf)
    for perm in permutations(range(M)):
        d = np.abs((A[:, None, :] - A[None, :, list(perm)] + np.pi) % TWO_PI - np.pi).sum(axis=2)
        best = np.minimum(best, d)
    return best


def consensus_angles(field: FieldOfJunctions, x: float, y: float, gamma: float, nu_d: float,
                     nu_e: float = 2.0, pool: int = 50) -> Tuple[float, ...]:
    """Angles at (x, y): the vote-weighted medoid of the strongest voters.

    Votes are w_i exp(-|x_i - (x, y)|^2 / (2 gamma^2)). Among the ``pool``
    largest, the junction whose angle set is closest (in vote-weighted sum
    of set distances) to the others is reported. A single fitted junction
    only pins its angles to within the gap between pixel rays; the medoid
    picks a typical one instead of an arbitrary one.
    """
    w = vertex_weights(field, nu_d, nu_e)
    vtx = field.params[:, field.M:]
    vote = w * np.exp(-((vtx[:, 0] - x) ** 2 + (vtx[:, 1] - y) ** 2) / (2.0 * gamma * gamma))
    top = np.argsort(-vote, kind="stable")[:pool]
    top = top[vote[top] > 0]
    if len(top) == 0:
        return ()
    ang = field.canonical().params[top, :field.M]
    i = top[int(np.argmin(_set_distances(ang) @ vote[top]))]
    return tuple(float(a) for a in field.canonical().params[i, :field.M])


def detect_vertices(V: np.ndarray, threshold: float = 0.3, nms_radius: float = 5.0,
                    field: Optional[FieldOfJunctions] = None, gamma: float = 1.0, nu_d: float = 1.0,
                    nu_e: float = 2.0, min_vote: float = MIN_VOTE) -> List[Detection]:
    """Local maxima of V / max(V) above ``threshold`` with greedy suppression.

    Maxima are visited by decreasing score (ties in raster order); one is
    kept when it lies at least ``nms_radius`` from every kept one. Maps
    whose peak is below ``min_vote`` (in units of one full-weight vote)
    hold no detections. With a ``field``, each detection carries
    :func:`consensus_angles`.
    """
    if threshold < 0 or nms_radius < 1:
        raise ValueError("threshold must be >= 0 and nms_radius >= 1")
    V = np.asarray(V, dtype=np.float64)
    peak = V.max() if V.size else 0.0
    if peak <= 0 or peak < min_vote:
        return []
    Vn = V / peak
    ys, xs = np.nonzero(_local_maxima(Vn) & (Vn > threshold))
    order = np.lexsort((xs, ys, -Vn[ys, xs]))
    kept: List[Tuple[int, int]] = []
    for k in order:
        x, y = xs[k], ys[k]
        if all((x - a) ** 2 + (y - b) ** 2 >= nms_radius ** 2 for a, b in kept):
            kept.append((x, y))
    out = []
    for x, y in kept:
        angles = consensus_angles(field, x, y, gamma, nu_d, nu_e) if field is not None else ()
        out.append(Detection(float(x), float(y), float(Vn[y, x]), angles))
    return out
