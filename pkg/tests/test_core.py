import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from junctionfield.core import (Config, FieldOfJunctions, Image, JunctionParams, WedgeColors, angle_candidates,
                                build_patch_grid, canonicalize_angles, vertex_offsets, wrap_angle)


def brute_counts(grid):
    c = np.zeros((grid.height, grid.width), dtype=int)
    for r, q in zip(grid.rows, grid.cols):
        c[r:r + grid.R, q:q + grid.R] += 1
    return c


def test_single_patch_grid():
    g = build_patch_grid(5, 5, 5, 1)
    assert g.n_patches == 1
    assert np.all(g.counts() == 1)
    assert list(g.patches_containing(2, 4)) == [0]


def test_seven_by_seven_stride_one():
    g = build_patch_grid(7, 7, 5, 1)
    assert g.n_patches == 9
    assert g.counts()[3, 3] == 9
    assert len(g.patches_containing(3, 3)) == 9


def test_seven_by_seven_stride_two_covers():
    g = build_patch_grid(7, 7, 5, 2)
    assert g.n_patches == 4
    assert np.all(brute_counts(g) >= 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 40), st.integers(5, 40), st.sampled_from([3, 5, 7]), st.integers(1, 6))
def test_grid_coverage_and_counts(w, h, R, s):
    assume(R <= min(w, h))
    g = build_patch_grid(w, h, R, s)
    c = g.counts()
    np.testing.assert_array_equal(c, brute_counts(g))
    assert c.min() >= 1
    assert g.rows.max() + R == h and g.cols.max() + R == w
    if s <= R:  # wider strides need filler patches to keep coverage
        assert c[R:-R, R:-R].max(initial=0) <= int(np.ceil(R / s)) ** 2


def test_interior_count_is_r_squared():
    g = build_patch_grid(20, 20, 5, 1)
    assert g.counts()[10, 10] == 25


def test_patches_containing_matches_counts():
    g = build_patch_grid(12, 9, 5, 2)
    c = g.counts()
    for y in range(9):
        for x in range(12):
            idx = g.patches_containing(x, y)
            assert len(idx) == c[y, x]
            for i in idx:
                assert g.rows[i] <= y < g.rows[i] + 5 and g.cols[i] <= x < g.cols[i] + 5


@pytest.mark.parametrize("w,h,R,s", [(4, 10, 5, 1), (10, 10, 4, 1), (10, 10, 5, 0), (10, 10, 1, 1)])
def test_grid_errors(w, h, R, s):
    with pytest.raises(ValueError):
        build_patch_grid(w, h, R, s)


def test_wrap_angle_edge():
    assert wrap_angle(-1e-20) == 0.0
    np.testing.assert_allclose(wrap_angle(np.array([-np.pi, 7.0])), [np.pi, 7.0 - 2 * np.pi])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=4))
def test_canonicalize_idempotent(angles):
    p = JunctionParams(tuple(angles), (1.0, 2.0)).canonical()
    assert p.canonical() == p
    assert all(0 <= a < 2 * np.pi for a in p.angles)
    assert list(p.angles) == sorted(p.angles)


def test_canonicalize_ties_keep_input_order():
    _, perm = canonicalize_angles([1.0, 0.5, 1.0, 1.0])
    assert list(perm) == [1, 0, 2, 3]


def test_image_promotion_and_mask():
    img = Image(np.zeros((4, 5)), mask=np.ones((4, 5), dtype=bool))
    assert (img.height, img.width, img.channels) == (4, 5, 1)
    with pytest.raises(ValueError):
        Image(np.zeros((4, 5)), mask=np.ones((5, 4), dtype=bool))
    m = np.ones((4, 5), dtype=bool)
    m[0, 0] = False
    assert Image(np.zeros((4, 5, 2)), m).weights()[0, 0].tolist() == [0.0, 0.0]


def test_wedge_colors_validation():
    with pytest.raises(ValueError):
        WedgeColors("constant", np.array([[np.nan]]))
    with pytest.raises(ValueError):
        WedgeColors("cubic", np.zeros((3, 1)))
    c = WedgeColors("linear", np.arange(9.0).reshape(3, 3, 1))
    np.testing.assert_allclose(c.evaluate(np.array(1.0), np.array(2.0))[:, 0], [0 + 2 + 2, 3 + 8 + 5, 6 + 14 + 8])


def test_field_shape_checks():
    g = build_patch_grid(6, 6, 5, 1)
    with pytest.raises(ValueError):
        FieldOfJunctions(g, np.zeros((3, 5)), np.zeros((4, 3, 3, 1)))
    f = FieldOfJunctions(g, np.zeros((4, 5)), np.zeros((4, 3, 3, 1)))
    assert f.M == 3 and f.channels == 1


def test_config_defaults():
    c = Config()
    assert (c.M, c.eta, c.delta, c.n_init, c.n_iter) == (3, 0.01, 0.1, 30, 1000)
    assert (c.lr_vertex, c.lr_angle, c.angle_samples, c.vertex_samples, c.reinit_every) == (0.03, 0.003, 100, 100, 50)
    assert (c.beta1, c.beta2, c.adam_eps, c.nu_e) == (0.9, 0.999, 1e-8, 2.0)
    assert c.nu_d_px == c.patch_size / 2


@pytest.mark.parametrize("kw", [dict(M=5), dict(patch_size=10), dict(lambda_b=-1), dict(color_model="x"),
                                dict(eta=0), dict(stride=0)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        Config(**kw)


def test_search_grids():
    a = angle_candidates(4)
    np.testing.assert_allclose(a, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    o = vertex_offsets(11, 100)
    assert len(o) == 100 and o[0] == -16.5 and o[-1] == 16.5
