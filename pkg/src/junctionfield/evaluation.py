"""Synthetic benchmark images, noise, and evaluation metrics.

Three 64 x 64 grayscale image families with analytic ground truth:

* type 1: two smooth star-shaped blobs (levels 128 and 255) on black.
  Radius r(t) = r0 (1 + a2 cos(2t + p2) + a3 cos(3t + p3)) with
  r0 ~ U[8, 13] px and a2, a3 ~ U[0, 0.15].
* type 2: two rotated squares (levels 128 and 255) on black with side
  ~ U[16, 40] px and rotation ~ U[0, pi/2), redrawn until both fit with a
  2 px margin and do not touch.
* type 3: four regions with levels {0, 85, 170, 255} meeting at two
  3-junctions. The junctions are joined by a segment of length
  ~ U[14, 22] px and each sends two rays to the border, opening at
  half-angles ~ U[40, 75] deg around the outward direction. Junctions are
  kept >= 21 px from the borders.

Images are sampled at pixel centers, so noiseless images hold only the
generator levels (stored as level / 255). The ground-truth boundary is
every pixel whose center lies within 1/2 px of an analytic boundary.

All randomness comes from Philox generators keyed by (seed, stream ids).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from . import pnm
from .core import Image

IMAGE_SIZE = 64
JUNCTION_MARGIN = 21
THRESHOLDS = tuple(np.round(np.arange(1, 10) * 0.1, 1))


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for one named stream of a seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class TrueVertex:
    x: float
    y: float
    angles: Tuple[float, ...]  # radians, directions of the incident boundaries


@dataclass(frozen=True)
class GroundTruth:
    boundary: np.ndarray  # (H, W) bool
    vertices: Tuple[TrueVertex, ...]
    labels: np.ndarray  # (H, W) region index
    polylines: Tuple[np.ndarray, ...]  # each (n, 2) as (x, y)


@dataclass(frozen=True)
class Sample:
    kind: int
    index: int
    image: Image
    truth: GroundTruth


# ---------------------------------------------------------------------------
# rasterization helpers
# ---------------------------------------------------------------------------

def _pixel_grid(size):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    return x, y


def polyline_distance(polylines: Sequence[np.ndarray], size: int) -> np.ndarray:
    """Distance from each pixel center to the nearest polyline segment."""
    x, y = _pixel_grid(size)
    best = np.full(x.shape, np.inf)
    for pl in polylines:
        pl = np.asarray(pl, dtype=np.float64)
        for (ax, ay), (bx, by) in zip(pl[:-1], pl[1:]):
            dx, dy = bx - ax, by - ay
            L2 = dx * dx + dy * dy
            t = np.clip(((x - ax) * dx + (y - ay) * dy) / L2, 0.0, 1.0) if L2 > 0 else 0.0
            best = np.minimum(best, np.hypot(x - ax - t * dx, y - ay - t * dy))
    return best


def boundary_mask(polylines, size: int) -> np.ndarray:
    return polyline_distance(polylines, size) <= 0.5


def _ray_end(p, d, size):
    """Where the ray p + t d leaves the box [-0.5, size - 0.5]^2."""
    ts = []
    for k in range(2):
        if d[k] > 0:
            ts.append((size - 0.5 - p[k]) / d[k])
        elif d[k] < 0:
            ts.append((-0.5 - p[k]) / d[k])
    return p + min(ts) * d


def _unit(a):
    return np.array([np.cos(a), np.sin(a)])


def _wrap(a):
    return float(np.mod(a, 2 * np.pi))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def make_blobs(rng: np.random.Generator, size: int = IMAGE_SIZE):
    """Type 1: returns (image, labels, polylines, vertices)."""
    x, y = _pixel_grid(size)
    for _ in range(10000):
        shapes = []
        for _ in range(2):
            r0 = rng.uniform(8, 13)
            a = rng.uniform(0, 0.15, 2)
            p = rng.uniform(0, 2 * np.pi, 2)
            rmax = r0 * (1 + a.sum())
            c = rng.uniform(2 + rmax, size - 3 - rmax, 2)
            shapes.append((c, r0, a, p, rmax))
        (c1, *_, m1), (c2, *_, m2) = shapes
        if np.hypot(*(c1 - c2)) > m1 + m2 + 2:
            break
    labels = np.zeros((size, size), dtype=np.int64)
    polylines = []
    t = np.linspace(0, 2 * np.pi, 721)
    for k, (c, r0, a, p, _) in enumerate(shapes):
        rad = lambda th: r0 * (1 + a[0] * np.cos(2 * th + p[0]) + a[1] * np.cos(3 * th + p[1]))  # noqa: E731
        th = np.arctan2(y - c[1], x - c[0])
        labels[np.hypot(x - c[0], y - c[1]) < rad(th)] = k + 1
        polylines.append(np.stack([c[0] + rad(t) * np.cos(t), c[1] + rad(t) * np.sin(t)], axis=1))
    levels = np.array([0, 128, 255]) / 255.0
    return levels[labels], labels, polylines, []


def make_squares(rng: np.random.Generator, size: int = IMAGE_SIZE, rotation: Optional[float] = None,
                 count: int = 2):
    """Type 2 (two squares); ``rotation`` fixes the angle of every square."""
    x, y = _pixel_grid(size)

    def inside(c, s, rho, pad=0.0):
        u = (x - c[0]) * np.cos(rho) + (y - c[1]) * np.sin(rho)
        v = -(x - c[0]) * np.sin(rho) + (y - c[1]) * np.cos(rho)
        return np.maximum(np.abs(u), np.abs(v)) <= s / 2 + pad

    for _ in range(100000):
        sq = []
        ok = True
        for _ in range(count):
            s = rng.uniform(16, 40)
            rho = rng.uniform(0, np.pi / 2) if rotation is None else float(rotation)
            half = s / 2 * (abs(np.cos(rho)) + abs(np.sin(rho)))
            if half > size / 2 - 3:
                ok = False
                break
            c = rng.uniform(2 + half, size - 3 - half, 2)
            sq.append((c, s, rho))
        if not ok:
            continue
        masks = [inside(c, s, r, 2.0) for c, s, r in sq]
        if count < 2 or not np.any(masks[0] & masks[1]):
            break
    labels = np.zeros((size, size), dtype=np.int64)
    polylines, vertices = [], []
    for k, (c, s, rho) in enumerate(sq):
        labels[inside(c, s, rho)] = k + 1
        R = np.array([[np.cos(rho), -np.sin(rho)], [np.sin(rho), np.cos(rho)]])
        corners = [c + R @ np.array(v) * s / 2 for v in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
        polylines.append(np.array(corners + [corners[0]]))
        for i, q in enumerate(corners):
            nxt, prv = corners[(i + 1) % 4], corners[(i - 1) % 4]
            angs = tuple(sorted(_wrap(np.arctan2(*(w - q)[::-1])) for w in (nxt, prv)))
            vertices.append(TrueVertex(float(q[0]), float(q[1]), angs))
    levels = np.array([0, 128, 255][: count + 1]) / 255.0 if count <= 2 else np.linspace(0, 1, count + 1)
    return levels[labels], labels, polylines, vertices


def make_junctions(rng: np.random.Generator, size: int = IMAGE_SIZE):
    """Type 3: two 3-junctions joined by a segment."""
    x, y = _pixel_grid(size)
    lo, hi = JUNCTION_MARGIN, size - 1 - JUNCTION_MARGIN
    for _ in range(100000):
        theta = rng.uniform(0, np.pi)
        L = rng.uniform(14, 22)
        c = rng.uniform(lo, hi, 2)
        u = _unit(theta)
        j1, j2 = c - u * L / 2, c + u * L / 2
        if min(j1.min(), j2.min()) >= lo and max(j1.max(), j2.max()) <= hi:
            break
    a1, a2 = np.deg2rad(rng.uniform(40, 75, 2))
    n = np.array([-u[1], u[0]])

    def in_wedge(j, axis, half):
        d = np.stack([x - j[0], y - j[1]])
        r = np.hypot(d[0], d[1])
        cosang = (d[0] * axis[0] + d[1] * axis[1]) / np.where(r > 0, r, 1.0)
        return (r > 0) & (cosang > np.cos(half))

    labels = np.where((x - c[0]) * n[0] + (y - c[1]) * n[1] >= 0, 0, 1)
    labels[in_wedge(j1, -u, a1)] = 2
    labels[in_wedge(j2, u, a2)] = 3
    ang1 = (theta, theta + np.pi - a1, theta + np.pi + a1)
    ang2 = (theta + np.pi, theta + a2, theta - a2)
    polylines = [np.array([j1, j2])]
    for j, angs in ((j1, ang1[1:]), (j2, ang2[1:])):
        for a in angs:
            polylines.append(np.array([j, _ray_end(j, _unit(a), size)]))
    vertices = [TrueVertex(float(j1[0]), float(j1[1]), tuple(sorted(_wrap(a) for a in ang1))),
                TrueVertex(float(j2[0]), float(j2[1]), tuple(sorted(_wrap(a) for a in ang2)))]
    levels = rng.permutation(np.array([0, 85, 170, 255])) / 255.0
    return levels[labels], labels, polylines, vertices


_MAKERS = {1: make_blobs, 2: make_squares, 3: make_junctions}


def make_sample(kind: int, index: int, seed: int = 0, size: int = IMAGE_SIZE) -> Sample:
    img, labels, polylines, vertices = _MAKERS[kind](rng_for(seed, kind, index), size)
    polylines = tuple(np.asarray(p, dtype=np.float64) for p in polylines)
    truth = GroundTruth(boundary_mask(polylines, size), tuple(vertices), labels, polylines)
    return Sample(kind, index, Image(img), truth)


def generate_dataset(seed: int = 0, per_type: int = 100, kinds: Sequence[int] = (1, 2, 3),
                     size: int = IMAGE_SIZE) -> List[Sample]:
    """``per_type`` images of each requested type (300 by default)."""
    return [make_sample(k, i, seed, size) for k in kinds for i in range(per_type)]


def add_noise(image: Image, sigma: float, seed: int = 0) -> Image:
    """Add i.i.d. N(0, sigma^2) to every value; no clipping."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return image
    noise = rng_for(seed, 0x6E6F).normal(0.0, sigma, image.data.shape)
    return Image(image.data + noise, image.mask)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _name(s: Sample) -> str:
    return f"type{s.kind}_{s.index:03d}"


def save_dataset(samples: Sequence[Sample], out_dir) -> None:
    """One 8-bit PGM and one JSON ground-truth file per sample."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in samples:
        pnm.write(out / f"{_name(s)}.pgm", s.image.data[:, :, 0])
        meta = {
            "type": s.kind,
            "index": s.index,
            "size": s.image.width,
            "vertices": [{"x": v.x, "y": v.y, "angles_deg": [float(np.rad2deg(a)) for a in v.angles]}
                         for v in s.truth.vertices],
            "polylines": [p.tolist() for p in s.truth.polylines],
        }
        (out / f"{_name(s)}.json").write_text(json.dumps(meta, indent=1))


def load_truth(path) -> GroundTruth:
    """Ground truth from a JSON file; labels come from the sibling PGM if present."""
    path = Path(path)
    meta = json.loads(path.read_text())
    size = int(meta["size"])
    polylines = tuple(np.asarray(p, dtype=np.float64) for p in meta["polylines"])
    vertices = tuple(TrueVertex(v["x"], v["y"], tuple(np.deg2rad(v["angles_deg"]))) for v in meta["vertices"])
    pgm = path.with_suffix(".pgm")
    labels = np.unique(pnm.read(pgm), return_inverse=True)[1].reshape(size, size) if pgm.exists() \
        else np.zeros((size, size), dtype=np.int64)
    return GroundTruth(boundary_mask(polylines, size), vertices, labels, polylines)


def load_dataset(in_dir) -> List[Sample]:
    out = []
    for js in sorted(Path(in_dir).glob("type*_*.json")):
        meta = json.loads(js.read_text())
        img = Image(pnm.read(js.with_suffix(".pgm")))
        out.append(Sample(int(meta["type"]), int(meta["index"]), img, load_truth(js)))
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _prf(matched: int, n_pred: int, n_true: int) -> Tuple[float, float, float]:
    p = matched / n_pred if n_pred else 0.0
    r = matched / n_true if n_true else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def match_count(pred_mask: np.ndarray, true_mask: np.ndarray, match_dist: float) -> int:
    """Size of a maximum one-to-one matching between pixels within ``match_dist``."""
    if match_dist < 0:
        raise ValueError("match_dist must be non-negative")
    py, px = np.nonzero(pred_mask)
    ty, tx = np.nonzero(true_mask)
    if len(px) == 0 or len(tx) == 0:
        return 0
    index = -np.ones(true_mask.shape, dtype=np.int64)
    index[ty, tx] = np.arange(len(tx))
    r = int(np.floor(match_dist))
    rows, cols = [], []
    H, W = true_mask.shape
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx * dx + dy * dy > match_dist * match_dist:
                continue
            qy, qx = py + dy, px + dx
            ok = (qy >= 0) & (qy < H) & (qx >= 0) & (qx < W)
            j = np.full(len(px), -1)
            j[ok] = index[qy[ok], qx[ok]]
            hit = j >= 0
            rows.append(np.nonzero(hit)[0])
            cols.append(j[hit])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(px), len(tx)))
    return int((maximum_bipartite_matching(graph, perm_type="column") >= 0).sum())


def boundary_fscore(predicted: np.ndarray, threshold: float, truth, match_dist: float = 2.0):
    """(precision, recall, F) of ``predicted >= threshold`` against the true boundary."""
    true_mask = truth.boundary if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=bool)
    pred = np.asarray(predicted) >= threshold
    return _prf(match_count(pred, true_mask, match_dist), int(pred.sum()), int(true_mask.sum()))


def best_boundary_fscore(predicted: np.ndarray, truth, match_dist: float = 2.0, thresholds=THRESHOLDS):
    """Best F over the binarization thresholds; returns (P, R, F, threshold)."""
    best = (0.0, 0.0, 0.0, float(thresholds[0]))
    for t in thresholds:
        p, r, f = boundary_fscore(predicted, t, truth, match_dist)
        if f > best[2]:
            best = (p, r, f, float(t))
    return best


def match_points(pred: Sequence[Tuple[float, float]], true: Sequence[Tuple[float, float]], match_dist: float):
    """One-to-one matching with the most pairs within ``match_dist``, then the
    smallest total distance. Returns a list of (pred index, true index)."""
    if len(pred) == 0 or len(true) == 0:
        return []
    P = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    T = np.asarray(true, dtype=np.float64).reshape(-1, 2)
    d = np.hypot(P[:, None, 0] - T[None, :, 0], P[:, None, 1] - T[None, :, 1])
    ok = d <= match_dist
    big = 1.0 + d[ok].sum() if ok.any() else 1.0
    rows, cols = linear_sum_assignment(np.where(ok, d, big + d.max()))
    return [(int(i), int(j)) for i, j in zip(rows, cols) if ok[i, j]]


def _xy(v):
    return (v.x, v.y)


def vertex_fscore(detections, true_vertices, match_dist: float = 2.0):
    """(precision, recall, F, pairs) for point detections against true vertices."""
    pairs = match_points([_xy(d) for d in detections], [_xy(v) for v in true_vertices], match_dist)
    return (*_prf(len(pairs), len(detections), len(true_vertices)), pairs)


def _circ(a, b):
    return np.abs((np.asarray(a) - np.asarray(b) + np.pi) % (2 * np.pi) - np.pi)


def vertex_angle_error(pred_angles, true_angles) -> float:
    """Mean absolute angular difference (degrees) under the best assignment.

    When the sets differ in size, the smaller set is assigned into the
    larger one.
    """
    a, b = list(pred_angles), list(true_angles)
    if len(a) < len(b):
        a, b = b, a
    best = min(_circ([a[i] for i in perm], b).sum() for perm in permutations(range(len(a)), len(b)))
    return float(np.rad2deg(best / len(b)))


def angle_error(pairs) -> float:
    """Mean of ``vertex_angle_error`` over (pred angles, true angles) pairs."""
    pairs = list(pairs)
    if not pairs:
        return float("nan")
    return float(np.mean([vertex_angle_error(p, t) for p, t in pairs]))


def psnr(estimate: np.ndarray, reference: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(estimate, dtype=np.float64) - np.asarray(reference, dtype=np.float64)) ** 2))
    return float("inf") if mse == 0 else 10.0 * np.log10(peak * peak / mse)
