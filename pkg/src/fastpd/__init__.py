"""Consistent, linear-time partial dependence estimation for tree ensembles."""

from .augment import (AugmentedEnsemble, AugmentedLeaf, AugmentedTree, PDCache,
                      all_pd_per_tree, augment, augment_ensemble, load_snapshot,
                      pd_evaluate, pd_evaluate_ensemble, save_snapshot)
from .baseline import (PathDependent, VanillaPD, coverage, path_dependent_pd,
                       path_dependent_shap, vanilla_pd)
from .data import Dataset, generate_dgp, load_csv, save_csv
from .errors import (BudgetExceededError, DataError, DimensionError, FastPDError,
                     ModelFormatError, UnsupportedModelError)
from .explain import (Decomposition, ShapMatrix, interaction_closed_form, decompose, importance,
                      mobius, pd_plot, shap_direct, shap_from_decomposition, zeta)
from .kernels import BACKEND
from .model import Node, Tree, TreeEnsemble, from_sklearn, parse_model, predict, serialize
from .subsets import FeatureSubset

__version__ = "0.1.0"
