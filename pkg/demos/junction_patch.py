"""Fit one generalized junction to a noisy patch.

Renders a 3-junction, adds noise, runs the vertex-and-angle coordinate
descent, and compares the result with the truth.

    python3 demos/junction_patch.py
"""
import numpy as np

from junctionfield.core import JunctionParams
from junctionfield.geometry import hard_wedge_labels, patch_coordinates
from junctionfield.initialization import optimize_vertex_and_angles

R = 21
truth = JunctionParams(tuple(np.deg2rad([25.0, 150.0, 260.0])), (9.3, 11.2))
x, y = patch_coordinates(R)
clean = np.array([0.15, 0.55, 0.9])[hard_wedge_labels(truth, x, y)]
noisy = clean + np.random.default_rng(0).normal(0, 0.15, clean.shape)

fit = optimize_vertex_and_angles(noisy, M=3, n_init=30, n_ang=100, n_vtx=100)
print("true angles (deg):  ", np.round(np.rad2deg(truth.angles), 1))
print("fitted angles (deg):", np.round(np.rad2deg(fit.angles), 1))
print("true vertex:  ", truth.vertex)
print("fitted vertex:", tuple(round(v, 2) for v in fit.vertex))
