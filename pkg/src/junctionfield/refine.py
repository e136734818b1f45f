"""Joint gradient refinement of a field of junctions.

The objective couples all patches:

    sum_i lik_i + lambda_b sum_i sum_x (B_i(x) - Bhat(x))^2
                + lambda_c sum_i sum_j sum_x u_ij(x) |c_ij(x) - Ihat(x)|^2

where Bhat and Ihat are the global maps from the previous iterate and are
held constant while differentiating. Colors are re-solved in closed form
every iteration; angles and vertices take one Adam step.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field as dc_field, replace
from typing import IO, List, Optional

import numpy as np

from . import _kernels
from ._fieldpass import image_arrays, run_pass
from .core import Config, FieldOfJunctions, GlobalMaps, Image, wrap_angle

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Adam moments for an (N, P) parameter block with per-column step sizes."""

    lr: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _pass(field: FieldOfJunctions, image: Image, lambda_b, lambda_c, maps: GlobalMaps, eta, delta, grad):
    return run_pass(image, field.grid, field.params, field.colors, eta=eta, delta=delta,
                    lambda_b=lambda_b, lambda_c=lambda_c, bhat=maps.boundary, ihat=maps.color,
                    solve_colors=False, want_grad=grad)


def objective_terms(terms: np.ndarray, lambda_b: float, lambda_c: float) -> np.ndarray:
    """Per-patch objective from the (likelihood, boundary, color) columns."""
    return terms[:, 0] + lambda_b * terms[:, 1] + lambda_c * terms[:, 2]


def total_objective(field: FieldOfJunctions, image: Image, lambda_b: float, lambda_c: float,
                    maps: GlobalMaps, eta: float, delta: float) -> float:
    """Objective at the field's own colors; ``eta``/``delta`` in pixels."""
    res = _pass(field, image, lambda_b, lambda_c, maps, eta, delta, False)
    return float(objective_terms(res.terms, lambda_b, lambda_c).sum())


def objective_gradient(field: FieldOfJunctions, image: Image, lambda_b: float, lambda_c: float,
                       maps: GlobalMaps, eta: float, delta: float) -> np.ndarray:
    """d(total_objective)/d(params) with colors and maps fixed, shape (N, M+2)."""
    return _pass(field, image, lambda_b, lambda_c, maps, eta, delta, True).grad


@dataclass
class RefineStats:
    objective: List[float] = dc_field(default_factory=list)
    reinit_accepted: List[int] = dc_field(default_factory=list)


def varying_patches(image: Image, grid, M: int) -> np.ndarray:
    """Indices of the patches whose observed values are not all equal."""
    img, wts = image_arrays(image)
    cost = np.zeros(grid.n_patches)
    _kernels.hard_cost_field(img, wts, np.zeros_like(img), grid.rows, grid.cols, grid.R,
                             np.zeros((grid.n_patches, M + 2)), M, 0.0, cost)
    return np.nonzero(cost > _kernels.UNIFORM_TOL)[0]


def _reinit_round(image: Image, fld: FieldOfJunctions, params, colors, cfg: Config, lb, lc, maps: GlobalMaps,
                  current_obj: np.ndarray, active: np.ndarray) -> int:
    """One warm-started search round per active patch; keep it where the local objective drops."""
    img, wts = image_arrays(image)
    g = fld.grid
    prop = params.copy()
    sub = np.ascontiguousarray(prop[active])
    rounds = np.zeros(len(active), dtype=np.int64)
    _kernels.alg2_field(img, wts, np.ascontiguousarray(maps.color), g.rows[active], g.cols[active], g.R, sub, cfg.M,
                        1, False, cfg.angle_candidates(), cfg.vertex_offsets(), float(lc), rounds)
    prop[active] = sub
    moved = np.nonzero(np.any(prop != params, axis=1))[0]
    if len(moved) == 0:
        return 0
    K = img.shape[2]
    col = np.zeros((len(moved), cfg.M, 3, K))
    terms = np.zeros((len(moved), 3))
    H, W = img.shape[:2]
    _kernels.field_pass(img, wts, g.rows[moved], g.cols[moved], g.R, prop[moved], cfg.M, cfg.eta_px, cfg.delta_px,
                        float(lb), float(lc), np.ascontiguousarray(maps.boundary), np.ascontiguousarray(maps.color),
                        col, True, cfg.color_model == "linear", False, np.zeros((len(moved), cfg.M + 2)),
                        np.zeros((H, W)), np.zeros((H, W, K)), terms)
    new_obj = objective_terms(terms, lb, lc)
    better = new_obj < current_obj[moved]
    idx = moved[better]
    params[idx] = prop[idx]
    colors[idx] = col[better]
    return int(better.sum())


def refine(field: FieldOfJunctions, image: Image, config: Config, log_csv: Optional[IO[str]] = None,
           stats: Optional[RefineStats] = None) -> FieldOfJunctions:
    """Run ``config.n_iter`` refinement iterations from ``field``.

    Consistency weights ramp linearly from 0 at the first iteration to
    their configured values at the last. Every ``reinit_every`` iterations
    one warm-started search round is tried on each patch. ``log_csv``
    receives one row of objective terms per iteration.
    """
    cfg = config
    M = cfg.M
    if field.M != M:
        raise ValueError(f"field has M={field.M}, config has M={M}")
    linear = cfg.color_model == "linear"
    params = np.array(field.params, copy=True)
    colors = np.array(field.colors, copy=True)
    lr = np.r_[np.full(M, cfg.lr_angle), np.full(2, cfg.lr_vertex_px)]
    opt = AdamState(lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    first = run_pass(image, field.grid, params, colors, eta=cfg.eta_px, delta=cfg.delta_px, solve_colors=False)
    maps = GlobalMaps(first.boundary, first.color)
    writer = None
    if log_csv is not None:
        writer = csv.writer(log_csv)
        writer.writerow(["iteration", "objective", "likelihood", "boundary", "color", "lambda_b", "lambda_c"])
    N = cfg.n_iter
    # constant patches have a flat likelihood; the search is not retried there
    active = varying_patches(image, field.grid, M)
    lb = lc = 0.0
    for t in range(1, N + 1):
        frac = (t - 1) / (N - 1) if N > 1 else 1.0
        lb, lc = cfg.lambda_b * frac, cfg.lambda_c * frac
        res = run_pass(image, field.grid, params, colors, eta=cfg.eta_px, delta=cfg.delta_px, lambda_b=lb,
                       lambda_c=lc, bhat=maps.boundary, ihat=maps.color, solve_colors=True, linear=linear,
                       want_grad=True)
        colors = res.colors
        bad = np.nonzero(~np.all(np.isfinite(res.grad), axis=1))[0]
        if len(bad):
            raise FloatingPointError(f"non-finite gradient at patch {int(bad[0])} (iteration {t})")
        per_patch = objective_terms(res.terms, lb, lc)
        obj = float(per_patch.sum())
        if stats is not None:
            stats.objective.append(obj)
        if writer is not None:
            tot = res.terms.sum(axis=0)
            writer.writerow([t, repr(obj), repr(tot[0]), repr(tot[1]), repr(tot[2]), repr(lb), repr(lc)])
        params = opt.step(params, res.grad)
        params[:, :M] = wrap_angle(params[:, :M])
        maps = GlobalMaps(res.boundary, res.color)
        if t % cfg.reinit_every == 0 and t < N:
            cur = run_pass(image, field.grid, params, colors, eta=cfg.eta_px, delta=cfg.delta_px, lambda_b=lb,
                           lambda_c=lc, bhat=maps.boundary, ihat=maps.color, solve_colors=True, linear=linear)
            colors = cur.colors
            n_acc = _reinit_round(image, field, params, colors, cfg, lb, lc, maps,
                                  objective_terms(cur.terms, lb, lc), active)
            if stats is not None:
                stats.reinit_accepted.append(n_acc)
            log.debug("iteration %d: reinit accepted on %d patches", t, n_acc)
    final = run_pass(image, field.grid, params, colors, eta=cfg.eta_px, delta=cfg.delta_px, lambda_b=lb,
                     lambda_c=lc, bhat=maps.boundary, ihat=maps.color, solve_colors=N > 0, linear=linear)
    return replace(field, params=params, colors=final.colors)
