"""
Subgroups and what drives them
==============================

k is picked by mean silhouette, a forest learns the cluster labels, and
TreeSHAP attributions say which concepts push a patient into a subgroup.
"""

import numpy as np
from sklearn.metrics import adjusted_rand_score

from sepsis_pathways.subgroups import ForestConfig, explain_subgroups, select_k, train_forest, tree_shap
from sepsis_pathways.synthcohort import planted_gaussians

# four planted blobs in 6 dimensions
x, truth = planted_gaussians(400, 4, 6, seed=0)
report = select_k(x, range(2, 9), seed=0, n_init=4)
for k, s in sorted(report.scores.items()):
    print(f"k={k}: silhouette {s:.3f}")
labels = report.clusterings[report.best_k].labels
print("chosen k:", report.best_k, "ARI vs planted:", adjusted_rand_score(truth, labels))

# ternary concept vectors where concept 2 marks cluster 1
rng = np.random.default_rng(1)
tern = rng.choice([-1.0, 0.0, 1.0], size=(300, 5))
y = rng.integers(0, 2, size=300)
tern[:, 2] = np.where(y == 1, 1.0, -1.0)
forest = train_forest(tern, y, ForestConfig(n_trees=50, seed=0))
print("out-of-bag accuracy:", forest.oob_score)

# attributions add up to the forest's probabilities
shap = tree_shap(forest, tern[:5])
print("max local-accuracy gap:", np.abs(shap.base + shap.values.sum(axis=1) - forest.predict_proba(tern[:5])).max())

cuis = ["cough", "fever", "rash", "edema", "nausea"]
for profile in explain_subgroups(forest, tern, y, top_m=2, cuis=cuis):
    print(profile.cluster, [(e.cui, e.direction, round(e.score, 3)) for e in profile.ranked()])
