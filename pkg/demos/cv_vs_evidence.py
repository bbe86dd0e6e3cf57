"""
Evidence versus cross-validation
================================

Five-fold cross-validation over 21 grid values is the usual way to set the
regularization.  The evidence route needs one decomposition instead of
five and no grid.  We compare wall clock and held-out accuracy.
"""

import time

from evsel import train
from evsel.dataio import SynthSpec, generate_synthetic
from evsel.lssvm import fit_with_lambdas, predict_scores
from evsel.metrics import accuracy
from evsel.selection import cv_grid_search

bank, labels, (tr, te) = generate_synthetic(SynthSpec(n=1000, d=128, k=10, noise_level=0.3, seed=4))
btr, ltr, bte = bank.columns(tr), labels.rows(tr), bank.columns(te)

t0 = time.perf_counter()
ev_model = train(btr, ltr)
t_ev = time.perf_counter() - t0

cv = cv_grid_search(btr, ltr, folds=5, seed=0)
cv_model = fit_with_lambdas(btr, ltr, cv.chosen)

# %%

for name, model, ms in (("evidence", ev_model, t_ev * 1e3), ("5-fold CV", cv_model, cv.elapsed_ms)):
    acc = accuracy(predict_scores(model, bte), labels.data[te]).mean
    print(f"{name:10s} {ms:8.1f} ms   test accuracy {acc:.3f}")

print("\nper-class lambda (evidence):", " ".join(f"{v:.3g}" for v in ev_model.lambdas))
print("per-class lambda (CV):      ", " ".join(f"{v:.3g}" for v in cv.chosen))
