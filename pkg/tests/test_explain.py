import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fastpd.augment import augment_ensemble
from fastpd.errors import DataError
from fastpd.explain import (Decomposition, interaction_closed_form, decompose, importance, mobius,
                            pd_plot, shap_direct, shap_from_decomposition, shapley_weight, zeta)
from fastpd.model import Node, Tree, TreeEnsemble
from fastpd.subsets import FeatureSubset

from helpers import random_instance


def test_mobius_of_known_lattice():
    np.testing.assert_array_equal(mobius(np.array([5.0, 10.0, 3.0, 12.0])), [5, 5, -2, 4])


def test_decompose_known_lattice():
    lat = {FeatureSubset(0): 5.0, FeatureSubset(1): 10.0, FeatureSubset(2): 3.0,
           FeatureSubset(3): 12.0}
    dec = decompose([lat], num_features=2)
    assert dec.intercept == 5.0
    assert [float(v[0]) for v in dec.components.values()] == [5.0, -2.0, 4.0]
    assert dec.total()[0] == 12.0


def direct_mobius(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    for s in range(len(v)):
        for u in range(len(v)):
            if u & ~s == 0:
                out[s] += (-1) ** bin(s ^ u).count("1") * v[u]
    return out


@given(arrays(np.float64, st.sampled_from([1, 2, 4, 8, 16]),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_mobius_matches_definition_and_inverts(v):
    m = mobius(v)
    np.testing.assert_allclose(m, direct_mobius(v), atol=1e-9)
    np.testing.assert_allclose(zeta(m), v, atol=1e-9)


def test_mobius_needs_power_of_two():
    with pytest.raises(DataError):
        mobius(np.zeros(3))


def test_constant_pd_has_no_components():
    lat = {FeatureSubset(m): np.full(4, 2.0) for m in range(8)}
    dec = decompose([lat], num_features=3)
    assert dec.intercept == 2.0
    assert all(np.all(v == 0) for v in dec.components.values())
    assert dec.pruned().components == {}


def test_incomplete_lattice_and_varying_base_rejected():
    with pytest.raises(DataError, match="incomplete"):
        decompose([{FeatureSubset(0): 1.0, FeatureSubset(3): 2.0}])
    with pytest.raises(DataError):
        decompose([{FeatureSubset(0): np.array([1.0, 2.0]), FeatureSubset(1): np.zeros(2)}])


def test_shapley_weights_sum_to_one():
    for d in range(1, 12):
        total = sum(math.comb(d - 1, s) * shapley_weight(s, d) for s in range(d))
        assert abs(total - 1.0) < 1e-12
    assert abs(shapley_weight(1, 3) - 1 / 6) < 1e-15


@pytest.mark.parametrize("seed", range(10))
def test_shap_from_components_matches_enumeration(seed):
    inst = random_instance(seed, max_d=5, n_eval=4)
    aug = augment_ensemble(inst.ensemble, inst.background)
    phi = aug.shap(inst.eval_points)

    def v(x, s):
        return float(aug.pd(x, [s], use_cache=False)[0, 0])

    for i, x in enumerate(inst.eval_points):
        for k in range(inst.d):
            assert abs(phi.values[i, k] - shap_direct(v, x, k)) <= 1e-10 * (1 + abs(phi.values[i, k]))
    np.testing.assert_allclose(phi.predictions(), inst.ensemble.predict(inst.eval_points),
                               rtol=1e-10, atol=1e-10)


def test_shap_direct_single_feature():
    assert shap_direct(lambda x, s: 3.0 * (0 in s) + 1.0, [0.5], 0) == 3.0


def test_shap_direct_guards():
    from fastpd.errors import DimensionError
    with pytest.raises(DimensionError):
        shap_direct(lambda x, s: 0.0, np.zeros(20), 0)
    with pytest.raises(DimensionError):
        shap_direct(lambda x, s: 0.0, np.zeros(3), 3)


def test_importance_and_pd_plot():
    pts = np.array([[2.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    dec = Decomposition(1.0, {FeatureSubset.of([0]): np.array([1.0, -1.0, 3.0]),
                              FeatureSubset.of([0, 1]): np.zeros(3)}, pts, 2)
    imp = importance(dec)
    assert list(imp) == [FeatureSubset.of([0]), FeatureSubset.of([0, 1])]
    assert imp[FeatureSubset.of([0])] == pytest.approx(5 / 3)
    plot = pd_plot(dec, 0)
    np.testing.assert_array_equal(plot, [[0.0, 0.0], [1.0, 4.0], [2.0, 2.0]])
    assert list(importance(Decomposition(0.0, {s: 7 * v for s, v in dec.components.items()}))) == list(imp)


def test_decomposition_outputs():
    dec = Decomposition(0.5, {FeatureSubset.of([1, 0]): np.array([2.0]),
                              FeatureSubset.of([1]): np.array([-1.0])}, None, 2, ("a", "b"))
    assert dec.to_csv().splitlines() == ["__intercept,b,a:b", "0.5,-1,2"]
    doc = json.loads(dec.to_json())
    assert doc["components"] == {"b": [-1.0], "a:b": [2.0]}
    assert dec.truncated(1).to_csv().splitlines()[0] == "__intercept,b"
    np.testing.assert_array_equal(dec.value_function([1]), [-0.5])
    np.testing.assert_array_equal(dec.component([0]), [0.0])
    with pytest.raises(DataError):
        Decomposition(0.0, {FeatureSubset(0): np.zeros(1)})


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 1))
def test_interaction_closed_form(x1, x2, exy):
    r = interaction_closed_form([x1, x2], exy)
    m = x1 + 2 * x1 * x2
    assert abs(r["m0"] + r["m1"] + r["m2"] + r["m12"] - m) <= 1e-12 * (1 + abs(m))
    assert abs(r["phi1"] - (r["m1"] + 0.5 * r["m12"])) <= 1e-12 * (1 + abs(m))


def grid_tree() -> Tree:
    """``x1 + 2 x1 x2`` exactly on the grid {-1, 0, 1}^2."""
    nodes = [Node(0, 0, -0.5, 1, 2), Node(2, 0, 0.5, 3, 4)]
    nid = 5
    for parent, x1 in ((1, -1.0), (3, 0.0), (4, 1.0)):
        a, b, c, e = nid, nid + 1, nid + 2, nid + 3
        nid += 4
        nodes += [Node(parent, 1, -0.5, a, b), Node(b, 1, 0.5, c, e),
                  Node(a, value=x1 - 2 * x1), Node(c, value=x1), Node(e, value=x1 + 2 * x1)]
    return Tree.from_nodes(nodes)


@pytest.mark.parametrize("a, b, c", [(3, 1, 2), (1, 3, 0), (2, 2, 4), (5, 0, 1)])
def test_interaction_on_exact_grid_tree(a, b, c):
    rows = ([(1, 1)] * a + [(-1, -1)] * a + [(1, -1)] * b + [(-1, 1)] * b + [(0, 0)] * c)
    bg = np.array(rows, dtype=float)
    exy = float(np.mean(bg[:, 0] * bg[:, 1]))
    ens = TreeEnsemble((grid_tree(),), 0.0, 2)
    X = np.array([[x, y] for x in (-1.0, 0.0, 1.0) for y in (-1.0, 0.0, 1.0)])
    np.testing.assert_array_equal(ens.predict(X), X[:, 0] + 2 * X[:, 0] * X[:, 1])
    aug = augment_ensemble(ens, bg)
    dec = aug.decompose(X)
    phi = aug.shap(X).values
    for i, x in enumerate(X):
        r = interaction_closed_form(x, exy)
        assert abs(dec.intercept - r["m0"]) < 1e-12
        assert abs(dec.component([0])[i] - r["m1"]) < 1e-12
        assert abs(dec.component([1])[i] - r["m2"]) < 1e-12
        assert abs(dec.component([0, 1])[i] - r["m12"]) < 1e-12
        assert abs(phi[i, 0] - r["phi1"]) < 1e-12


def test_decomposition_scales_linearly():
    inst = random_instance(12)
    X = inst.eval_points
    base = augment_ensemble(inst.ensemble, inst.background).decompose(X)
    scaled = augment_ensemble(inst.ensemble.scaled(-2.5), inst.background).decompose(X)
    assert scaled.intercept == pytest.approx(-2.5 * base.intercept, rel=1e-12, abs=1e-12)
    for s, v in base.components.items():
        np.testing.assert_allclose(scaled.components[s], -2.5 * v, rtol=1e-10, atol=1e-10)


def test_components_are_centred_on_background():
    # identification: every m_S averages to zero over the background in any coordinate of S
    inst = random_instance(21, max_d=3)
    bg = inst.background
    dec = augment_ensemble(inst.ensemble, bg).decompose(bg)
    for s, v in dec.components.items():
        if len(s) == 1:
            assert abs(v.mean()) <= 1e-9 * (1 + np.abs(v).max())
