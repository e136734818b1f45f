"""Junction geometry: line distances, relaxed wedge indicators, boundary maps.

All functions take a single junction and evaluate on arbitrary arrays of
pixel coordinates ``x`` (column) and ``y`` (row). Angles are measured from
the +x axis toward +y. Lengths (``eta``, ``delta``) are in the same units
as the coordinates.

Wedges are numbered by ascending angle: wedge j covers polar angles
[phi_j, phi_{j+1}) around the vertex, the last one wrapping around to the
first angle.
"""
from __future__ import annotations

import numpy as np

from .core import JunctionParams, canonicalize_angles


def line_distance(point, vertex, angle):
    """Signed distance from the line through ``vertex`` with direction ``angle``.

    Positive on the side the direction vector turns toward (+y for angle 0).
    """
    x, y = point
    return -(np.asarray(x) - vertex[0]) * np.sin(angle) + (np.asarray(y) - vertex[1]) * np.cos(angle)


def _sorted(params: JunctionParams) -> np.ndarray:
    ang, _ = canonicalize_angles(params.angles)
    return ang


def junction_distances(params: JunctionParams, x, y) -> np.ndarray:
    """Distances d_{1k}, k = 2..M, stacked on axis 0.

    d_{1k} = min(d_1, -d_k) when phi_k - phi_1 < pi, else max(d_1, -d_k).
    d_{1k} > 0 exactly on the sector swept from phi_1 to phi_k.
    """
    ang = _sorted(params)
    d = [line_distance((x, y), params.vertex, a) for a in ang]
    out = []
    for k in range(1, len(ang)):
        if ang[k] - ang[0] < np.pi:
            out.append(np.minimum(d[0], -d[k]))
        else:
            out.append(np.maximum(d[0], -d[k]))
    return np.stack(out)


def heaviside(d, eta):
    return 0.5 * (1.0 + (2.0 / np.pi) * np.arctan(np.asarray(d) / eta))


def heaviside_derivative(d, eta):
    d = np.asarray(d)
    return (1.0 / np.pi) * eta / (eta * eta + d * d)


def wedge_indicators(params: JunctionParams, x, y, eta: float) -> np.ndarray:
    """Relaxed indicators u_j, shape (M, *x.shape); they sum to one.

    With h_k = H(d_{1k}): wedge 1 is h_2...h_M and wedge j >= 2 is
    (1 - h_j) h_{j+1}...h_M.
    """
    h = heaviside(junction_distances(params, x, y), eta)
    M = h.shape[0] + 1
    u = np.empty((M,) + h.shape[1:])
    tail = np.ones(h.shape[1:])  # product of h_k for k > j
    for j in range(M - 1, 0, -1):
        u[j] = tail * (1.0 - h[j - 1])
        tail = tail * h[j - 1]
    u[0] = tail
    return u


def _half(x, y):
    """0 for polar angles in [0, pi), 1 for [pi, 2pi)."""
    return np.where((y > 0.0) | ((y == 0.0) & (x > 0.0)), 0, 1)


def hard_wedge_labels(params: JunctionParams, x, y) -> np.ndarray:
    """Index of the wedge containing each point; the vertex itself gets 0.

    Polar angles are compared without trigonometric inversion: v is at or
    past the ray u when it lies in a later half-plane, or in the same one
    with a non-negative cross product. The compiled kernels use the same
    comparison so their partitions agree exactly.
    """
    ang = _sorted(params)
    dx = np.asarray(x, dtype=np.float64) - params.vertex[0]
    dy = np.asarray(y, dtype=np.float64) - params.vertex[1]
    vh = _half(dx, dy)
    count = np.zeros(dx.shape, dtype=np.int64)
    for a in ang:
        ux, uy = np.cos(a), np.sin(a)
        uh = _half(ux, uy)
        count += (vh > uh) | ((vh == uh) & (ux * dy - uy * dx >= 0.0))
    labels = np.where(count > 0, count - 1, len(ang) - 1)
    return np.where((dx == 0.0) & (dy == 0.0), 0, labels)


def hard_wedge_indicators(params: JunctionParams, x, y) -> np.ndarray:
    labels = hard_wedge_labels(params, x, y)
    return np.stack([(labels == j).astype(np.float64) for j in range(params.M)])


def patch_boundary_map(params: JunctionParams, x, y, delta: float) -> np.ndarray:
    """pi * delta * H'_delta(min_k |d_{1k}|), evaluated as delta^2 / (delta^2 + m^2) so it never exceeds 1."""
    m = np.abs(junction_distances(params, x, y)).min(axis=0)
    return delta * delta / (delta * delta + m * m)


def patch_coordinates(R: int):
    """Pixel coordinates (x, y) of an R x R patch, origin at its top-left."""
    y, x = np.mgrid[0:R, 0:R].astype(np.float64)
    return x, y
