"""Patient subgroups: k-means on dense vectors, forest + TreeSHAP explanations."""

from .clustering import Clustering, SilhouetteReport, kmeans, select_k, silhouette, silhouette_samples
from .explain import ProfileEntry, SubgroupProfile, explain_subgroups, misclassified_patients, shap_summary
from .forest import DecisionTree, ForestConfig, ForestModel, build_tree, train_forest
from .treeshap import ShapAttribution, tree_shap, tree_shap_tree

__all__ = [
    "Clustering",
    "DecisionTree",
    "ForestConfig",
    "ForestModel",
    "ProfileEntry",
    "ShapAttribution",
    "SilhouetteReport",
    "SubgroupProfile",
    "build_tree",
    "explain_subgroups",
    "kmeans",
    "misclassified_patients",
    "select_k",
    "shap_summary",
    "silhouette",
    "silhouette_samples",
    "tree_shap",
    "tree_shap_tree",
    "train_forest",
]
