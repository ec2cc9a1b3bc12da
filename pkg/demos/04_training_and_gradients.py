"""A taste of training: gradient verification plus a short adversarial run.

First the finite-difference harness certifies every loss term's analytic
gradient on tiny double-precision networks, then the sketch-to-orientation
pair trains for a couple hundred iterations on eight synthetic samples so
the content term visibly drops. The full desk-scale experiments live in the
acceptance suite; this is the two-minute tour.
"""

import time

import numpy as np

from strandforge.datagen import DatagenConfig, make_sv_sample
from strandforge.neural import TrainHyper
from strandforge.neural.gradcheck import run_gradient_suite
from strandforge.neural.train import train

print("== gradient suite (7 loss terms, central differences, h=1e-5) ==")
t0 = time.time()
for rep in run_gradient_suite(tol=1e-4, samples_per_tensor=4, seed=0):
    status = "ok " if rep.ok(1e-4) else "FAIL"
    print(f"  {status} {rep.name:<20} max rel err {rep.max_rel_err:.2e} "
          f"({rep.checked} coords, {rep.skipped_kinks} kink-skipped)")
print(f"  done in {time.time() - t0:.1f}s")

print("== short adversarial run: 8 samples, 200 iterations ==")
cfg = DatagenConfig(resolution=32, grid=(32, 32, 24), seed=100)
samples = [make_sv_sample(cfg, i) for i in range(8)]
hyper = TrainHyper(epochs=200, batch_size=8, scale=0.25, seed=0)
t0 = time.time()
g_params, d_params, info = train("s2o", samples, hyper)
hist = info["history"]
for k in (0, 50, 100, 150, len(hist) - 1):
    h = hist[k]
    print(f"  iter {h['iteration']:4d}  content/elem {h['content_per_element']:.4f}  "
          f"style {h['style']:.3f}  critic {h['d_loss']:+.3f}")
print(f"trained {len(hist)} iterations in {time.time() - t0:.0f}s "
      f"({1000 * (time.time() - t0) / len(hist):.0f} ms/iter)")
