"""
Scoring a clustering against ground truth
=========================================

Cluster ids are arbitrary, so accuracy first finds the best one-to-one
matching between predicted clusters and true classes. NMI and ARI are
invariant to relabelling by construction.
"""

import numpy as np

from imvcc.metrics import acc, ari, assignment_map, contingency, nmi

truth = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
# the same partition with ids shuffled, plus one sample in the wrong group
pred = np.array([2, 2, 1, 0, 0, 0, 1, 1, 1])

# rows are true classes, columns predicted clusters
table = contingency(truth, pred)
print("contingency table\n", table)

# the matching maximises the diagonal after permuting columns
perm = assignment_map(table)
print("true class -> predicted cluster:", dict(enumerate(perm.tolist())))

print(f"ACC {acc(truth, pred):.4f}  NMI {nmi(truth, pred):.4f}  ARI {ari(truth, pred):.4f}")

# relabelling the prediction changes none of the three scores
relabelled = np.array([5, 7, 9])[pred]
print(f"relabelled: ACC {acc(truth, relabelled):.4f}  NMI {nmi(truth, relabelled):.4f}  "
      f"ARI {ari(truth, relabelled):.4f}")

# ARI is chance-corrected and can go negative; NMI bottoms out at 0
print("anti-correlated pair:", ari([0, 0, 1, 1], [0, 1, 0, 1]), nmi([0, 0, 1, 1], [0, 1, 0, 1]))
