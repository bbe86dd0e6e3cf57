"""
Growing an ensemble of feature banks
====================================

Each of four banks separates only one pair of classes from the rest, so
concatenating them should help.  Greedy forward selection tries the banks
in order of their own evidence and keeps one only if the evidence of the
concatenation rises.  Exhaustive search over all subsets gives the
reference answer.
"""

from evsel import CandidateSet, exhaustive_ensemble, greedy_ensemble
from evsel.dataio import synthetic_bank, synthetic_labels

labels = synthetic_labels(240, 8, seed=3)
banks = [synthetic_bank(labels, 20, noise_level=0.1, informative_classes=[2 * m, 2 * m + 1],
                        seed=20 + m, name=f"block{m}") for m in range(4)]
noise = synthetic_bank(labels, 20, noise_level=1.0, seed=99, name="noise")
cset = CandidateSet(tuple(banks) + (noise,), labels)

greedy = greedy_ensemble(cset)
for d in greedy.decisions:
    before = "-" if d.evidence_before is None else f"{d.evidence_before:.2f}"
    print(f"{d.action:6s} {d.name:7s} before {before:>10s}  after {d.evidence_after:.2f}")
print("greedy:", " + ".join(greedy.selected), f"({greedy.n_trainings} trainings)")

# %%
# Exhaustive search trains 2^5 - 1 = 31 subsets.

best = exhaustive_ensemble(cset)
print("exhaustive:", " + ".join(best.selected), f"({best.n_trainings} trainings)")
print(f"evidence greedy {greedy.evidence:.2f}, exhaustive {best.evidence:.2f}")
