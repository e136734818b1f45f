import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from junctionfield.core import JunctionParams
from junctionfield.geometry import (hard_wedge_indicators, hard_wedge_labels, heaviside, junction_distances,
                                    line_distance, patch_boundary_map, wedge_indicators)

angle = st.floats(0, 2 * np.pi, exclude_max=True)
coord = st.floats(-30, 30)


def sector_oracle(angles, vertex, x, y):
    """Wedge label from atan2 polar angles, the half-open sector rule."""
    a = np.sort(np.mod(angles, 2 * np.pi))
    t = np.mod(np.arctan2(y - vertex[1], x - vertex[0]), 2 * np.pi)
    lab = np.searchsorted(a, t, side="right") - 1
    return np.where(lab < 0, len(a) - 1, lab)


def test_line_distance_examples():
    assert line_distance((3.0, 4.0), (3.0, 4.0), 1.234) == 0
    assert line_distance((5.0, 2.0), (0.0, 0.0), 0.0) == pytest.approx(2.0)
    assert line_distance((5.0, 2.0), (0.0, 0.0), np.pi / 2) == pytest.approx(-5.0)


def test_junction_distance_hand_example():
    p = JunctionParams((0.0, np.pi / 2, np.pi), (0.0, 0.0))
    d = junction_distances(p, np.array(1.0), np.array(1.0))
    assert d[0] == pytest.approx(1.0)


def test_equal_angles_give_equal_distances_and_empty_wedges():
    p = JunctionParams((1.0, 1.0, 1.0), (0.0, 0.0))
    y, x = np.mgrid[-5:6, -5:6] + 0.5
    d = junction_distances(p, x, y)
    np.testing.assert_array_equal(d[0], d[1])
    h = hard_wedge_indicators(p, x, y)
    # only the wrap-around wedge [phi, phi + 2pi) is non-empty
    assert h[0].sum() == 0 and h[1].sum() == 0 and h[2].sum() == x.size


def test_heaviside_half_at_zero():
    for eta in (1e-3, 0.5, 10.0):
        assert heaviside(0.0, eta) == 0.5


def test_indicator_limit_example():
    # build a junction whose sorted distances are d12 = -2, d13 = +3 at the query point
    p = JunctionParams((0.0, np.pi / 2, np.pi), (0.0, 0.0))
    x, y = np.array(-2.0), np.array(3.0)
    d = junction_distances(p, x, y)
    u = wedge_indicators(p, x, y, 1e-9)
    # wedge order follows ascending angles: last wedge is 1 - H(d_13)
    h = (d > 0).astype(float)
    expect = [h[0] * h[1], (1 - h[0]) * h[1], 1 - h[1]]
    np.testing.assert_allclose(u, expect, atol=1e-9)


def test_boundary_map_values():
    p = JunctionParams((0.0, 0.0, 0.0), (0.0, 0.0))
    x = np.zeros(3)
    y = np.array([0.0, 0.3, 3.0])
    np.testing.assert_allclose(patch_boundary_map(p, x, y, 0.3), [1.0, 0.5, 1 / 101])


@settings(max_examples=200, deadline=None)
@given(st.lists(angle, min_size=3, max_size=4), coord, coord, coord, coord, st.floats(1e-3, 5))
def test_partition_of_unity_and_boundary_range(angles, vx, vy, x, y, eta):
    p = JunctionParams(tuple(angles), (vx, vy))
    u = wedge_indicators(p, np.array(x), np.array(y), eta)
    assert abs(u.sum() - 1.0) < 1e-12
    assert np.all(u >= 0)
    b = patch_boundary_map(p, np.array(x), np.array(y), eta)
    assert 0 < b <= 1


@settings(max_examples=50, deadline=None)
@given(st.lists(angle, min_size=3, max_size=4), coord, coord, st.floats(-20, 20), st.floats(-20, 20))
def test_translation_equivariance(angles, vx, vy, tx, ty):
    y, x = np.mgrid[-6:7, -6:7].astype(float)
    p = JunctionParams(tuple(angles), (vx, vy))
    q = JunctionParams(tuple(angles), (vx + tx, vy + ty))
    np.testing.assert_allclose(wedge_indicators(p, x, y, 0.5), wedge_indicators(q, x + tx, y + ty, 0.5), atol=1e-12)
    np.testing.assert_allclose(patch_boundary_map(p, x, y, 0.5), patch_boundary_map(q, x + tx, y + ty, 0.5),
                               atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(angle, min_size=3, max_size=4), st.floats(-3, 3), st.floats(-3, 3))
def test_relaxed_indicators_converge_to_sector_oracle(angles, vx, vy):
    y, x = np.mgrid[-16:17, -16:17].astype(float)
    p = JunctionParams(tuple(angles), (vx, vy))
    d = np.abs(junction_distances(p, x, y)).min(axis=0)
    off = d > 1e-3
    oracle = sector_oracle(np.array(angles), (vx, vy), x, y)
    u = wedge_indicators(p, x, y, 1e-9)
    np.testing.assert_allclose(u.argmax(axis=0)[off], oracle[off])
    assert np.all(u.max(axis=0)[off] > 1 - 1e-5)


@settings(max_examples=100, deadline=None)
@given(st.lists(angle, min_size=3, max_size=4), st.floats(-3, 3), st.floats(-3, 3))
def test_hard_labels_match_sector_oracle(angles, vx, vy):
    y, x = np.mgrid[-8:9, -8:9].astype(float)
    p = JunctionParams(tuple(angles), (vx, vy))
    lab = hard_wedge_labels(p, x, y)
    oracle = sector_oracle(np.array(angles), (vx, vy), x, y)
    # away from the rays both rules agree; rays are measure zero
    d = np.abs(junction_distances(p, x, y)).min(axis=0)
    keep = d > 1e-9
    np.testing.assert_array_equal(lab[keep], oracle[keep])


def test_vertex_pixel_gets_first_wedge():
    p = JunctionParams((0.5, 2.0, 4.0), (3.0, 3.0))
    assert hard_wedge_labels(p, np.array(3.0), np.array(3.0)) == 0


def test_distances_are_one_lipschitz(rng):
    for _ in range(50):
        p = JunctionParams(tuple(rng.uniform(0, 2 * np.pi, 3)), tuple(rng.uniform(-5, 5, 2)))
        a = rng.uniform(-10, 10, (2, 200))
        b = a + rng.normal(0, 1, a.shape)
        da = junction_distances(p, a[0], a[1])
        db = junction_distances(p, b[0], b[1])
        assert np.all(np.abs(da - db) <= np.hypot(*(a - b)) + 1e-12)
