"""Effect of the boundary-consistency weight on a smooth curve.

A smooth blob has no corners. With a small weight, patches along the
curve fit bends as junctions and the vertex map reports several of them.
A large weight makes overlapping patches agree, so fewer vertices remain
and they sit far apart.

    python3 demos/consistency_weight.py
"""
import numpy as np

from junctionfield.core import Config, Image
from junctionfield.pipeline import analyze

y, x = np.mgrid[0:64, 0:64].astype(float)
th = np.arctan2(y - 31.5, x - 31.5)
r = 16 * (1 + 0.15 * np.cos(2 * th) + 0.1 * np.cos(3 * th + 1.0))
blob = Image(np.where(np.hypot(x - 31.5, y - 31.5) < r, 0.8, 0.2))

for lam in (0.5, 10.0):
    dets = analyze(blob, Config(patch_size=21, lambda_b=lam, n_iter=200)).detections
    sep = min((max(abs(a.x - b.x), abs(a.y - b.y)) for i, a in enumerate(dets) for b in dets[i + 1:]),
              default=float("inf"))
    print(f"lambda_b={lam}: {len(dets)} vertices, closest pair {sep} px apart (l-inf)")
