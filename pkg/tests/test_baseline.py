import numpy as np
import pytest

from fastpd.augment import augment_ensemble
from fastpd.baseline import (PathDependent, VanillaPD, coverage, path_dependent_pd,
                             path_dependent_shap, vanilla_pd)
from fastpd.data import four_atom_dataset
from fastpd.errors import BudgetExceededError, DimensionError
from fastpd.model import Node, Tree, TreeEnsemble
from fastpd.subsets import FeatureSubset

from helpers import all_subsets, random_instance, single, swapped_trees

X0 = np.array([0.1, 0.2])


def test_vanilla_on_four_atoms():
    bg = four_atom_dataset()
    for tree in swapped_trees():
        ens = single(tree)
        assert vanilla_pd(ens, bg, X0, [0]) == -0.5
        assert vanilla_pd(ens, bg, X0, []) == 7.0
        assert vanilla_pd(ens, bg, X0, [0, 1]) == ens.predict(X0)


def test_vanilla_full_subset_is_prediction():
    inst = random_instance(2)
    full = FeatureSubset.full(inst.d)
    for x in inst.eval_points[:5]:
        assert vanilla_pd(inst.ensemble, inst.background, x, full) == pytest.approx(
            inst.ensemble.predict(x), rel=1e-12, abs=1e-12)


def test_vanilla_estimator_matches_literal_definition():
    inst = random_instance(8, n_eval=6)
    got = VanillaPD(inst.ensemble, inst.background).pd(inst.eval_points, all_subsets(inst.d))
    for i, x in enumerate(inst.eval_points):
        for k, s in enumerate(all_subsets(inst.d)):
            assert got[i, k] == pytest.approx(vanilla_pd(inst.ensemble, inst.background, x, s),
                                              rel=1e-10, abs=1e-10)


def test_path_pd_on_four_atoms():
    bg = four_atom_dataset()
    a, b = swapped_trees()
    ca, cb = coverage(a, bg), coverage(b, bg)
    # preorder layout: root, left split, its two leaves, right split, its two leaves
    assert ca.tolist() == [2500, 750, 500, 250, 1750, 250, 1500]
    assert path_dependent_pd(a, ca, X0, []) == 7.0
    assert path_dependent_pd(a, ca, X0, [0]) == 5.0
    assert path_dependent_pd(b, cb, X0, [0]) == -0.5
    assert path_dependent_pd(a, ca, X0, [1]) == -0.5
    assert path_dependent_pd(b, cb, X0, [1]) == 5.0
    assert path_dependent_pd(a, ca, X0, [0, 1]) == 10.0
    for tree in (a, b):
        est = PathDependent(single(tree), bg)
        np.testing.assert_array_equal(est.pd(X0, all_subsets(2))[0],
                                      [path_dependent_pd(tree, coverage(tree, bg), X0, s)
                                       for s in all_subsets(2)])


def test_path_shap_on_four_atoms():
    bg = four_atom_dataset()
    a, b = swapped_trees()
    np.testing.assert_allclose(path_dependent_shap(single(a), bg, X0).values, [[4.25, -1.25]],
                               atol=1e-12)
    np.testing.assert_allclose(path_dependent_shap(single(b), bg, X0).values, [[-1.25, 4.25]],
                               atol=1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_path_kernel_matches_recursion(seed):
    inst = random_instance(seed, n_eval=5)
    est = PathDependent(inst.ensemble, inst.background)
    subsets = all_subsets(inst.d)
    got = est.pd(inst.eval_points, subsets)
    for i, x in enumerate(inst.eval_points):
        for k, s in enumerate(subsets):
            want = inst.ensemble.intercept + sum(
                path_dependent_pd(t, cov, x, s) for t, cov in zip(inst.ensemble.trees, est.covers))
            assert got[i, k] == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_path_full_subset_is_prediction_and_local_accuracy():
    inst = random_instance(14)
    est = PathDependent(inst.ensemble, inst.background)
    full = FeatureSubset.full(inst.d)
    np.testing.assert_allclose(est.pd(inst.eval_points, [full])[:, 0],
                               inst.ensemble.predict(inst.eval_points), rtol=1e-12, atol=1e-12)
    phi = est.shap(inst.eval_points)
    np.testing.assert_allclose(phi.predictions(), inst.ensemble.predict(inst.eval_points),
                               rtol=1e-10, atol=1e-10)


def test_zero_coverage_contributes_nothing():
    # no background row reaches the right branch
    tree = Tree.from_nodes([Node(0, 0, 10.0, 1, 2), Node(1, 1, 0.0, 3, 4), Node(2, 1, 0.0, 5, 6),
                            Node(3, value=1.0), Node(4, value=2.0), Node(5, value=7.0),
                            Node(6, value=9.0)])
    bg = np.array([[0.0, -1.0], [0.0, 1.0]])
    cov = coverage(tree, bg)
    assert cov[int(tree.right[0])] == 0
    assert path_dependent_pd(tree, cov, [20.0, 0.0], [0]) == 0.0
    assert path_dependent_pd(tree, cov, [20.0, 0.0], []) == 1.5


def test_path_equals_empirical_for_product_structure():
    # with a full-factorial background, path weights equal empirical frequencies
    g = np.random.default_rng(0)
    vals = np.array([0.0, 1.0, 2.0])
    bg = np.array([[a, b] for a in vals for b in vals])
    trees = []
    for _ in range(3):
        f0 = int(g.integers(2))
        trees.append(Tree.from_nodes([
            Node(0, f0, 0.5, 1, 2), Node(1, 1 - f0, 1.5, 3, 4), Node(2, 1 - f0, 0.5, 5, 6),
            *[Node(k, value=float(g.normal())) for k in (3, 4, 5, 6)]]))
    ens = TreeEnsemble(tuple(trees), 0.0, 2)
    X = g.uniform(-0.5, 2.5, size=(20, 2))
    np.testing.assert_allclose(PathDependent(ens, bg).pd(X, all_subsets(2)),
                               augment_ensemble(ens, bg).pd(X, all_subsets(2)), atol=1e-12)


def test_baseline_errors():
    inst = random_instance(1)
    with pytest.raises(DimensionError):
        VanillaPD(inst.ensemble, np.zeros((3, inst.d + 1)))
    with pytest.raises(DimensionError):
        vanilla_pd(inst.ensemble, inst.background, inst.eval_points[0], [inst.d])
    with pytest.raises(BudgetExceededError):
        VanillaPD(inst.ensemble, inst.background).lattices(inst.eval_points, budget=0)
