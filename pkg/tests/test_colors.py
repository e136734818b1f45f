import numpy as np
import pytest

from junctionfield.colors import (local_coordinates, optimal_constant_colors, optimal_linear_colors, render,
                                  solve_normal_3x3)
from junctionfield.core import Image, JunctionParams, WedgeColors
from junctionfield.geometry import hard_wedge_indicators, patch_coordinates, wedge_indicators


def soft_indicators(rng, M, R):
    u = rng.uniform(0, 1, (M, R, R))
    return u / u.sum(axis=0)


def wls(x, y, t, w):
    """Weighted least squares with an independent dense solver."""
    A = np.stack([x.ravel(), y.ravel(), np.ones(x.size)], axis=1) * np.sqrt(w.ravel())[:, None]
    return np.linalg.lstsq(A, t.ravel() * np.sqrt(w.ravel()), rcond=None)[0]


def objective(data, g, u, lam, coeffs):
    x, y = local_coordinates(data.shape)
    c = coeffs[0] * x + coeffs[1] * y + coeffs[2]
    return float((u * ((c - data) ** 2 + lam * (c - g) ** 2)).sum())


def test_uniform_patch_constant():
    u = soft_indicators(np.random.default_rng(0), 3, 7)
    c = optimal_constant_colors(np.full((7, 7), 0.4), u)
    np.testing.assert_allclose(c.constant, 0.4)


def test_large_lambda_tends_to_global_mean(rng):
    data, g = rng.uniform(size=(2, 9, 9))
    u = soft_indicators(rng, 3, 9)
    c = optimal_constant_colors(data, u, g, 1e9).constant[:, 0]
    expect = (u * g).sum(axis=(1, 2)) / u.sum(axis=(1, 2))
    np.testing.assert_allclose(c, expect, atol=1e-8)


def test_constant_matches_direct_weighted_mean(rng):
    data, g = rng.uniform(size=(2, 9, 9))
    u = soft_indicators(rng, 3, 9)
    c = optimal_constant_colors(data, u, g, 0.5).constant[:, 0]
    for j in range(3):
        num = den = 0.0
        for yy in range(9):
            for xx in range(9):
                num += u[j, yy, xx] * (data[yy, xx] + 0.5 * g[yy, xx])
                den += u[j, yy, xx]
        assert c[j] == pytest.approx(num / (1.5 * den), abs=1e-10)


def test_masked_pixels_excluded(rng):
    data = rng.uniform(size=(7, 7))
    mask = rng.uniform(size=(7, 7)) > 0.3
    u = soft_indicators(rng, 3, 7)
    c = optimal_constant_colors(Image(data, mask), u).constant[:, 0]
    expect = (u * mask * data).sum(axis=(1, 2)) / (u * mask).sum(axis=(1, 2))
    np.testing.assert_allclose(c, expect, atol=1e-12)
    corrupted = np.where(mask, data, 1e6)
    np.testing.assert_allclose(optimal_constant_colors(Image(corrupted, mask), u).constant[:, 0], expect, atol=1e-9)


def test_empty_wedge_falls_back_to_patch_mean(rng):
    data = rng.uniform(size=(5, 5))
    u = np.zeros((3, 5, 5))
    u[0] = 1.0
    c = optimal_constant_colors(data, u).constant[:, 0]
    assert c[1] == pytest.approx(data.mean()) and c[2] == pytest.approx(data.mean())


def test_linear_recovers_plane_in_wedge():
    R = 11
    p = JunctionParams((0.3, 2.0, 4.0), (5.2, 4.7))
    x, y = patch_coordinates(R)
    u = hard_wedge_indicators(p, x, y)
    lx, ly = local_coordinates((R, R))
    truth = [(0.02, -0.01, 0.3), (-0.03, 0.05, 0.6), (0.0, 0.04, 0.9)]
    img = sum(u[j] * (a * lx + b * ly + d) for j, (a, b, d) in enumerate(truth))
    c = optimal_linear_colors(img, u)
    np.testing.assert_allclose(c.coeffs[:, :, 0], np.array(truth), atol=1e-8)


def test_linear_on_constant_data_has_zero_slope(rng):
    u = soft_indicators(rng, 3, 9)
    c = optimal_linear_colors(np.full((9, 9), 0.7), u)
    assert np.abs(c.coeffs[:, :2]).max() < 1e-8
    np.testing.assert_allclose(c.coeffs[:, 2], 0.7)


def test_linear_matches_dense_wls(rng):
    data, g = rng.uniform(size=(2, 9, 9))
    u = soft_indicators(rng, 3, 9)
    c = optimal_linear_colors(data, u, g, 0.3)
    x, y = local_coordinates((9, 9))
    t = (data + 0.3 * g) / 1.3
    for j in range(3):
        np.testing.assert_allclose(c.coeffs[j, :, 0], wls(x, y, t, u[j]), atol=1e-8)


@pytest.mark.parametrize("linear", [False, True])
def test_solutions_are_minimizers(rng, linear):
    data, g = rng.uniform(size=(2, 9, 9))
    u = soft_indicators(rng, 3, 9)
    solver = optimal_linear_colors if linear else optimal_constant_colors
    coeffs = solver(data, u, g, 0.5).coeffs[:, :, 0]
    for j in range(3):
        base = objective(data, g, u[j], 0.5, coeffs[j])
        for q in (range(3) if linear else [2]):
            for s in (1e-3, -1e-3):
                c = coeffs[j].copy()
                c[q] += s
                assert objective(data, g, u[j], 0.5, c) >= base


def test_channel_separability(rng):
    data = rng.uniform(size=(9, 9, 3))
    u = soft_indicators(rng, 3, 9)
    for solver in (optimal_constant_colors, optimal_linear_colors):
        full = solver(data, u).coeffs
        for k in range(3):
            np.testing.assert_allclose(solver(data[:, :, k], u).coeffs[:, :, 0], full[:, :, k], atol=1e-12)


def test_ill_conditioned_wedge_falls_back():
    R = 7
    data = np.arange(R * R, dtype=float).reshape(R, R) / 49
    u = np.zeros((3, R, R))
    u[0, 3, :] = 1.0  # a single row: y has no spread
    u[1] = 1.0 - u[0]
    c = optimal_linear_colors(data, u)
    assert c.coeffs[0, 0, 0] == 0 and c.coeffs[0, 1, 0] == 0
    assert c.coeffs[0, 2, 0] == pytest.approx(data[3].mean())


def test_solve_normal_rejects_singular():
    assert solve_normal_3x3(np.ones((3, 3)), np.ones(3)) is None
    np.testing.assert_allclose(solve_normal_3x3(np.eye(3) * 2, np.ones(3)), 0.5)


def test_render_is_indicator_weighted_sum():
    R = 9
    p = JunctionParams((0.5, 2.5, 4.5), (4.3, 3.9))
    x, y = patch_coordinates(R)
    u = wedge_indicators(p, x, y, 0.05)
    coeffs = np.array([[0.01, 0.0, 0.2], [0.0, -0.02, 0.5], [0.0, 0.0, 0.8]])[:, :, None]
    img = render(WedgeColors("linear", coeffs), u, (R, R))
    lx, ly = local_coordinates((R, R))
    expect = sum(u[j] * (coeffs[j, 0, 0] * lx + coeffs[j, 1, 0] * ly + coeffs[j, 2, 0]) for j in range(3))
    np.testing.assert_allclose(img[:, :, 0], expect, atol=1e-14)
