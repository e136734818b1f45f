"""Shared data types, patch-grid indexing and configuration."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * np.pi


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def wrap_angle(a):
    """Map angles into [0, 2pi). Works on scalars and arrays."""
    w = np.mod(a, TWO_PI)
    # np.mod(-1e-20, 2pi) rounds to exactly 2pi
    return np.where(w >= TWO_PI, 0.0, w) if np.ndim(w) else (0.0 if w >= TWO_PI else float(w))


def canonicalize_angles(angles) -> Tuple[np.ndarray, np.ndarray]:
    """Wrap to [0, 2pi) and stable-sort along the last axis.

    Returns the sorted angles and the permutation that produced them, so
    ``sorted = wrapped[..., perm]``. Equal angles keep their input order.
    """
    wrapped = wrap_angle(np.asarray(angles, dtype=np.float64))
    perm = np.argsort(wrapped, axis=-1, kind="stable")
    return np.take_along_axis(np.asarray(wrapped), perm, axis=-1), perm


@dataclass(frozen=True)
class Image:
    """K-channel raster with an optional validity mask.

    ``data`` has shape (height, width, K); a 2-D array is promoted to K=1.
    ``mask`` may be per pixel (height, width) or per channel
    (height, width, K); True marks an observed value.
    """

    data: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] < 1:
            raise ValueError(f"image data must be (H, W) or (H, W, K), got {data.shape}")
        object.__setattr__(self, "data", _frozen(data))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape not in (data.shape[:2], data.shape):
                raise ValueError(f"mask shape {mask.shape} does not match image {data.shape}")
            object.__setattr__(self, "mask", _frozen(mask))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def weights(self) -> np.ndarray:
        """Per-value weights (H, W, K): 1 for observed, 0 for masked out."""
        if self.mask is None:
            return np.ones(self.data.shape)
        m = self.mask if self.mask.ndim == 3 else self.mask[:, :, None]
        return np.broadcast_to(m, self.data.shape).astype(np.float64)


@dataclass(frozen=True)
class JunctionParams:
    """M angles (radians, CCW from +x toward +y) and a vertex (x, y)."""

    angles: Tuple[float, ...]
    vertex: Tuple[float, float]

    @property
    def M(self) -> int:
        return len(self.angles)

    def canonical(self) -> "JunctionParams":
        ang, _ = canonicalize_angles(self.angles)
        return JunctionParams(tuple(float(a) for a in ang), (float(self.vertex[0]), float(self.vertex[1])))

    def as_array(self) -> np.ndarray:
        return np.array([*self.angles, *self.vertex], dtype=np.float64)

    @classmethod
    def from_array(cls, p: Sequence[float]) -> "JunctionParams":
        p = [float(v) for v in p]
        return cls(tuple(p[:-2]), (p[-2], p[-1]))


@dataclass(frozen=True)
class WedgeColors:
    """Per-wedge color functions for one patch.

    ``coeffs`` has shape (M, 3, K) holding (a, b, d) so that wedge j has
    color ``a*x + b*y + d`` in patch-local coordinates. For the constant
    model a = b = 0.
    """

    model: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.model not in ("constant", "linear"):
            raise ValueError(f"unknown color model {self.model!r}")
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim == 2:  # (M, K) constant colors
            c = np.stack([np.zeros_like(c), np.zeros_like(c), c], axis=1)
        if not np.all(np.isfinite(c)):
            raise ValueError("color coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def constant(self) -> np.ndarray:
        """(M, K) offsets; the colors themselves for the constant model."""
        return self.coeffs[:, 2, :]

    def evaluate(self, x, y) -> np.ndarray:
        """Colors of every wedge at local coordinates; shape (M, *x.shape, K)."""
        x = np.asarray(x, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        a, b, d = (self.coeffs[:, k, :].reshape((-1,) + (1,) * (x.ndim - 1) + (self.coeffs.shape[2],))
                   for k in range(3))
        return a * x + b * y + d


@dataclass(frozen=True)
class PatchGrid:
    """Dense R x R patches with stride; edge patches clamped inside the image."""

    height: int
    width: int
    R: int
    stride: int
    row_starts: np.ndarray  # distinct top-row offsets along y
    col_starts: np.ndarray  # distinct left-column offsets along x

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.row_starts), len(self.col_starts)

    @property
    def n_patches(self) -> int:
        return len(self.row_starts) * len(self.col_starts)

    @property
    def rows(self) -> np.ndarray:
        """Top row of every patch, row-major over the grid."""
        return np.repeat(self.row_starts, len(self.col_starts))

    @property
    def cols(self) -> np.ndarray:
        return np.tile(self.col_starts, len(self.row_starts))

    @property
    def centers(self) -> np.ndarray:
        """(N, 2) patch centers as (x, y) pixel coordinates."""
        h = self.R // 2
        return np.stack([self.cols + h, self.rows + h], axis=1).astype(np.float64)

    def patches_containing(self, x: int, y: int) -> np.ndarray:
        """Indices of the patches whose support contains pixel (x, y)."""
        r = self.row_starts
        c = self.col_starts
        rs = np.nonzero((r <= y) & (y < r + self.R))[0]
        cs = np.nonzero((c <= x) & (x < c + self.R))[0]
        return (rs[:, None] * len(c) + cs[None, :]).ravel()

    def counts(self) -> np.ndarray:
        """|N_x| for every pixel, shape (height, width)."""
        ry = np.zeros(self.height + 1, dtype=np.int64)
        np.add.at(ry, self.row_starts, 1)
        np.add.at(ry, self.row_starts + self.R, -1)
        cx = np.zeros(self.width + 1, dtype=np.int64)
        np.add.at(cx, self.col_starts, 1)
        np.add.at(cx, self.col_starts + self.R, -1)
        return np.outer(np.cumsum(ry)[:-1], np.cumsum(cx)[:-1])


def _starts(n: int, R: int, s: int) -> np.ndarray:
    starts = []
    for st in range(0, n - R + 1, s):
        # a stride wider than the patch would leave gaps; fill them
        while starts and st > starts[-1] + R:
            starts.append(starts[-1] + R)
        starts.append(st)
    while starts[-1] < n - R:
        starts.append(min(starts[-1] + R, n - R))
    return np.array(starts, dtype=np.int64)


def build_patch_grid(width: int, height: int, R: int, stride: int = 1) -> PatchGrid:
    if R % 2 != 1 or R < 3:
        raise ValueError(f"patch size must be an odd integer >= 3, got {R}")
    if R > min(width, height):
        raise ValueError(f"patch size {R} exceeds image size {width}x{height}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return PatchGrid(height, width, R, stride,
                     _frozen(_starts(height, R, stride)), _frozen(_starts(width, R, stride)))


@dataclass(frozen=True)
class FieldOfJunctions:
    """Junction parameters and wedge colors for every patch of a grid.

    ``params`` is (N, M+2): M angles followed by the vertex (x, y) in image
    pixel coordinates. ``colors`` is (N, M, 3, K) in the layout of
    :class:`WedgeColors`, wedges ordered by ascending angle.
    """

    grid: PatchGrid
    params: np.ndarray
    colors: np.ndarray
    color_model: str = "constant"

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64)
        c = np.asarray(self.colors, dtype=np.float64)
        n = self.grid.n_patches
        if p.ndim != 2 or p.shape[0] != n:
            raise ValueError(f"expected params for {n} patches, got {p.shape}")
        if c.shape[:3] != (n, p.shape[1] - 2, 3):
            raise ValueError(f"colors shape {c.shape} does not match params {p.shape}")
        object.__setattr__(self, "params", _frozen(p))
        object.__setattr__(self, "colors", _frozen(c))

    @property
    def M(self) -> int:
        return self.params.shape[1] - 2

    @property
    def channels(self) -> int:
        return self.colors.shape[3]

    def junction(self, i: int) -> JunctionParams:
        return JunctionParams.from_array(self.params[i])

    def wedge_colors(self, i: int) -> WedgeColors:
        return WedgeColors(self.color_model, self.colors[i])

    def canonical(self) -> "FieldOfJunctions":
        ang, _ = canonicalize_angles(self.params[:, : self.M])
        p = np.concatenate([ang, self.params[:, self.M:]], axis=1)
        return replace(self, params=p)


@dataclass(frozen=True)
class GlobalMaps:
    boundary: np.ndarray  # (H, W) in [0, 1]
    color: np.ndarray  # (H, W, K)
    vertex: Optional[np.ndarray] = None  # (H, W), non-negative


@dataclass
class Config:
    """Analysis settings.

    ``eta``, ``delta`` and ``lr_vertex`` are in half-patch units: a patch
    spans [-1, 1], so one unit is (R - 1) / 2 pixels. The ``*_px``
    properties give pixel values. ``gamma`` and ``nu_d`` default to R/4 and R/2 pixels.
    """

    patch_size: int = 21
    M: int = 3
    lambda_b: float = 0.5
    lambda_c: float = 0.1
    eta: float = 0.01
    delta: float = 0.1
    n_init: int = 30
    n_iter: int = 1000
    lr_vertex: float = 0.03
    lr_angle: float = 0.003
    angle_samples: int = 100
    vertex_samples: int = 100
    reinit_every: int = 50
    stride: int = 1
    color_model: str = "constant"
    gamma: Optional[float] = None
    nu_d: Optional[float] = None
    nu_e: float = 2.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    vertex_threshold: float = 0.3
    nms_radius: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.M not in (3, 4):
            raise ValueError(f"M must be 3 or 4, got {self.M}")
        if self.patch_size % 2 != 1 or self.patch_size < 3:
            raise ValueError(f"patch size must be odd and >= 3, got {self.patch_size}")
        if self.lambda_b < 0 or self.lambda_c < 0:
            raise ValueError("consistency weights must be non-negative")
        if self.eta <= 0 or self.delta <= 0:
            raise ValueError("eta and delta must be positive")
        if self.color_model not in ("constant", "linear"):
            raise ValueError(f"color model must be 'constant' or 'linear', got {self.color_model!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.angle_samples < self.M or self.vertex_samples < 2:
            raise ValueError("too few search samples")
        if self.n_init < 0 or self.n_iter < 0 or self.reinit_every < 1:
            raise ValueError("iteration counts must be non-negative (reinit period >= 1)")

    @property
    def half_patch(self) -> float:
        return (self.patch_size - 1) / 2.0

    @property
    def eta_px(self) -> float:
        return self.eta * self.half_patch

    @property
    def delta_px(self) -> float:
        return self.delta * self.half_patch

    @property
    def lr_vertex_px(self) -> float:
        return self.lr_vertex * self.half_patch

    @property
    def gamma_px(self) -> float:
        return self.patch_size / 4.0 if self.gamma is None else float(self.gamma)

    @property
    def nu_d_px(self) -> float:
        return self.patch_size / 2.0 if self.nu_d is None else float(self.nu_d)

    @property
    def nms_radius_px(self) -> float:
        return self.patch_size / 2.0 if self.nms_radius is None else float(self.nms_radius)

    def angle_candidates(self) -> np.ndarray:
        return angle_candidates(self.angle_samples)

    def vertex_offsets(self) -> np.ndarray:
        return vertex_offsets(self.patch_size, self.vertex_samples)


def angle_candidates(n: int) -> np.ndarray:
    """Search grid for angles: k * 2pi / n, k = 0..n-1."""
    return np.arange(n) * (TWO_PI / n)


def vertex_offsets(R: int, n: int) -> np.ndarray:
    """Search grid for one vertex coordinate, relative to the patch center."""
    return np.linspace(-1.5 * R, 1.5 * R, n)
