"""Shared fixtures and a random instance generator for the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fastpd.model import Node, Tree, TreeEnsemble


def swapped_trees() -> tuple[Tree, Tree]:
    """Two trees computing the same function, split order swapped.

    Leaves: 10 when both or neither of ``x1 < 0.5`` and ``x2 < 0.3`` hold, else -5.
    """
    a = Tree.from_nodes([
        Node(0, 0, 0.5, 1, 2), Node(1, 1, 0.3, 3, 4), Node(2, 1, 0.3, 5, 6),
        Node(3, value=10.0), Node(4, value=-5.0), Node(5, value=-5.0), Node(6, value=10.0)])
    b = Tree.from_nodes([
        Node(0, 1, 0.3, 1, 2), Node(1, 0, 0.5, 3, 4), Node(2, 0, 0.5, 5, 6),
        Node(3, value=10.0), Node(4, value=-5.0), Node(5, value=-5.0), Node(6, value=10.0)])
    return a, b


def single(tree: Tree, d: int = 2, intercept: float = 0.0) -> TreeEnsemble:
    return TreeEnsemble((tree,), intercept, d)


def repeated_feature_tree() -> Tree:
    """Depth-3 tree on three features with a repeated feature on one path.

    root x0<0 -> (x1<0 -> leaf 1 | leaf 2) | (x2<0 -> (x0<1 -> leaf 3 | leaf 4) | leaf 5)
    """
    return Tree.from_nodes([
        Node(0, 0, 0.0, 1, 2),
        Node(1, 1, 0.0, 3, 4), Node(3, value=1.0), Node(4, value=2.0),
        Node(2, 2, 0.0, 5, 6),
        Node(5, 0, 1.0, 7, 8), Node(7, value=3.0), Node(8, value=4.0),
        Node(6, value=5.0)])


def lattice_ensemble() -> TreeEnsemble:
    """With :func:`lattice_background` and x = (0, 0): v = (5, 10, 3, 12)."""
    return single(Tree.from_nodes([
        Node(0, 0, 0.5, 1, 2), Node(1, 1, 0.5, 3, 4), Node(2, 1, 0.5, 5, 6),
        Node(3, value=12.0), Node(4, value=8.0), Node(5, value=-6.0), Node(6, value=6.0)]))


def lattice_background() -> np.ndarray:
    return np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]])


def random_tree(g: np.random.Generator, X: np.ndarray, max_depth: int,
                leaf_prob: float = 0.2, dyadic: bool = False) -> Tree:
    """Random binary tree whose thresholds are mostly background values (ties)."""
    d = X.shape[1]
    nodes: list[Node] = []
    counter = [0]

    def grow(depth: int) -> int:
        nid = counter[0]
        counter[0] += 1
        if depth == max_depth or (depth > 0 and g.random() < leaf_prob):
            v = float(g.integers(-8, 9)) if dyadic else float(g.normal(scale=3.0))
            nodes.append(Node(nid, value=v))
            return nid
        f = int(g.integers(d))
        col = X[:, f]
        if g.random() < 0.7:
            t = float(col[g.integers(len(col))])
        else:
            t = float(g.uniform(col.min() - 0.5, col.max() + 0.5))
        nodes.append(None)  # placeholder keeps preorder ids stable
        slot = len(nodes) - 1
        left = grow(depth + 1)
        right = grow(depth + 1)
        nodes[slot] = Node(nid, f, t, left, right)
        return nid

    grow(0)
    return Tree.from_nodes(nodes)


@dataclass
class Instance:
    ensemble: TreeEnsemble
    background: np.ndarray
    eval_points: np.ndarray

    @property
    def d(self) -> int:
        return self.ensemble.num_features


def random_instance(seed: int, *, max_d: int = 4, max_depth: int = 4, max_nb: int = 200,
                    n_eval: int = 50, max_trees: int = 5, dyadic: bool = False) -> Instance:
    """Small ensemble, background and evaluation rows with many exact ties.

    Half the instances draw data from a coarse grid so that thresholds,
    background values and evaluation coordinates coincide.
    """
    g = np.random.default_rng(seed)
    d = int(g.integers(1, max_d + 1))
    n_b = int(g.integers(1, max_nb + 1))
    if g.random() < 0.5:
        B = g.integers(0, 5, size=(n_b, d)) / 4.0
        pool = g.integers(0, 5, size=(n_eval, d)) / 4.0
    else:
        B = g.normal(size=(n_b, d))
        pool = g.normal(size=(n_eval, d))
    # some evaluation rows copy background rows exactly
    take = g.random(n_eval) < 0.3
    pool[take] = B[g.integers(n_b, size=int(take.sum()))]
    trees = tuple(random_tree(g, B, int(g.integers(0, max_depth + 1)), dyadic=dyadic)
                  for _ in range(int(g.integers(1, max_trees + 1))))
    icpt = float(g.integers(-3, 4)) if dyadic else float(g.normal())
    return Instance(TreeEnsemble(trees, icpt, d), B, pool)


def all_subsets(d: int):
    from fastpd.subsets import FeatureSubset
    return [FeatureSubset(m) for m in range(1 << d)]
