import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from conftest import grid_walk, random_chain
from msirl.errors import ConfigError
from msirl.forward import stationary_distribution
from msirl.wavelets import (build_tree, load_tree, orthonormalize, save_tree, score_wavelets,
                            unpack, unpack_wavelets, wavelet_levels)


def _check_tree(tree):
    eps = tree.epsilon
    dims = tree.dims
    assert all(a >= b for a, b in zip(dims, dims[1:]))
    for lv in tree.levels:
        Phi, Psi = lv.scaling, lv.wavelet
        assert np.abs(Phi.T @ Phi - np.eye(Phi.shape[1])).max() <= 10 * eps
        if Psi.shape[1]:
            assert np.abs(Psi.T @ Psi - np.eye(Psi.shape[1])).max() <= 10 * eps
            assert np.abs(Psi.T @ Phi).max() <= 10 * eps
        assert Phi.shape[1] + Psi.shape[1] == Phi.shape[0]


def test_identity_operator_no_compression():
    n = 12
    tree = build_tree(sp.identity(n, format="csr"), 1e-6, max_levels=1)
    Phi = tree.levels[0].scaling
    assert tree.dims[1] == n
    np.testing.assert_array_equal(np.abs(Phi).sum(axis=0), 1.0)
    np.testing.assert_array_equal(np.sort(np.abs(Phi).argmax(axis=0)), np.arange(n))


def test_full_mixing_rank_one():
    n = 10
    tree = build_tree(np.full((n, n), 1.0 / n), 1e-6)
    assert tree.dims == [n, 1]
    phi = tree.levels[0].scaling[:, 0]
    np.testing.assert_allclose(np.abs(phi), 1 / np.sqrt(n), atol=1e-14)
    W = unpack_wavelets(tree, 1)
    assert W.shape == (n, n - 1)
    assert np.abs(W.T @ np.ones(n)).max() <= 1e-12
    assert np.abs(W.T @ W - np.eye(n - 1)).max() <= 1e-12


def test_rejects_non_stochastic():
    with pytest.raises(ConfigError):
        build_tree(np.array([[0.5, 0.5], [0.5, 0.4]]), 1e-6)
    with pytest.raises(ConfigError):
        build_tree(np.eye(2), 0.0)


@pytest.mark.parametrize("eps", [1e-6, 1e-4])
def test_tree_invariants_desk(desk, eps):
    chain = desk[2]
    tree = build_tree(chain.T, eps, 60)
    _check_tree(tree)
    assert tree.dims[-1] == 1
    # deepest scaling function aligns with the stationary law of P
    phi = unpack(tree, tree.depth)[:, 0]
    mu = stationary_distribution(chain.P)
    cos = abs(phi @ mu) / (np.linalg.norm(phi) * np.linalg.norm(mu))
    assert cos >= 1 - 10 * eps


def test_tree_invariants_random():
    rng = np.random.default_rng(0)
    for seed in range(5):
        chain = random_chain(int(rng.integers(10, 60)), np.random.default_rng(seed), density=0.1)
        _check_tree(build_tree(chain.T, 1e-6, 40))


def test_unpack_products(desk_tree):
    tree = desk_tree
    np.testing.assert_array_equal(unpack(tree, 1), tree.levels[0].scaling)
    direct = tree.levels[0].scaling @ tree.levels[1].scaling
    assert np.abs(unpack(tree, 2) - direct).max() <= 1e-12
    for j in range(1, tree.depth + 1):
        B = unpack(tree, j)
        assert np.abs(B.T @ B - np.eye(B.shape[1])).max() <= 10 * tree.epsilon
    with pytest.raises(ConfigError):
        unpack(tree, 0)
    with pytest.raises(ConfigError):
        unpack(tree, tree.depth + 1)
    np.testing.assert_array_equal(tree.basis(0), np.eye(tree.n))


def test_complete_orthonormal_system(desk_tree):
    tree = desk_tree
    rng = np.random.default_rng(1)
    X = rng.normal(size=(tree.n, 100))
    X /= np.linalg.norm(X, axis=0)
    for l in (1, 4, tree.depth):
        W = unpack_wavelets(tree, l)
        assert W.shape[1] == tree.n - tree.dims[l]
        B = np.hstack([unpack(tree, l), W])
        assert np.abs(B.T @ B - np.eye(tree.n)).max() <= 10 * tree.epsilon
        err = np.linalg.norm(B @ (B.T @ X) - X, axis=0)
        assert err.max() <= 10 * tree.epsilon
        lv = wavelet_levels(tree, l)
        assert len(lv) == W.shape[1] and lv.min() == 0 and lv.max() == l - 1


def test_level1_locality(desk, desk_tree):
    T = desk[2].T.toarray()
    Phi = desk_tree.levels[0].scaling
    piv = desk_tree.levels[0].pivots
    for k in range(Phi.shape[1]):
        support = (T[:, piv[:k + 1]] != 0).any(axis=1)
        assert not np.any((Phi[:, k] != 0) & ~support)


@pytest.mark.parametrize("eps", [1e-6, 1e-4])
def test_operator_compression_symmetric(eps):
    """Dyadic powers are reproduced to within j*eps on a reversible walk."""
    T = grid_walk(8, 10)
    tree = build_tree(T, eps, 40)
    Tp = T.copy()
    for j in range(1, tree.depth + 1):
        Tp = Tp @ Tp if j > 1 else T @ T
        B = unpack(tree, j)
        approx = B @ tree.levels[j - 1].op @ B.T
        assert np.linalg.norm(approx - Tp, 2) <= 10 * j * eps


def test_mgs_reference_agrees_with_qr():
    rng = np.random.default_rng(2)
    T = random_chain(40, rng, density=0.15).T.toarray()
    Q1, p1 = orthonormalize(T, 1e-8, "qr")
    Q2, p2 = orthonormalize(T, 1e-8, "mgs")
    assert Q1.shape == Q2.shape
    # both span the same space
    assert np.linalg.norm(Q1 - Q2 @ (Q2.T @ Q1)) <= 1e-8
    tree = build_tree(grid_walk(4, 4), 1e-6, 10, method="mgs")
    _check_tree(tree)


@given(st.integers(2, 30), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_orthonormalize_properties(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n)) @ np.diag(10.0 ** rng.uniform(-12, 0, n)) @ rng.normal(size=(n, n))
    Q, piv = orthonormalize(M, 1e-6)
    assert np.abs(Q.T @ Q - np.eye(Q.shape[1])).max(initial=0.0) <= 1e-10
    assert len(set(piv.tolist())) == len(piv)


def test_score_examples():
    rng = np.random.default_rng(3)
    W = rng.normal(size=(7, 4))
    np.testing.assert_array_equal(score_wavelets(np.zeros(7), W), 0.0)
    e = np.zeros(7)
    e[2] = 1.0
    np.testing.assert_array_equal(score_wavelets(e, W), np.abs(W[2]))
    np.testing.assert_allclose(score_wavelets(np.full(7, 1 / 7), W),
                               np.abs(W).sum(axis=0) / 7, rtol=1e-14)
    with pytest.raises(ConfigError):
        score_wavelets(-e, W)
    with pytest.raises(ConfigError):
        score_wavelets(np.ones(3), W)


def test_persistence_round_trip(tmp_path, desk_tree):
    save_tree(desk_tree, tmp_path / "tree")
    t2 = load_tree(tmp_path / "tree")
    assert t2.dims == desk_tree.dims and t2.epsilon == desk_tree.epsilon
    for a, b in zip(desk_tree.levels, t2.levels):
        np.testing.assert_array_equal(a.scaling, b.scaling)
        np.testing.assert_array_equal(a.wavelet, b.wavelet)
        np.testing.assert_array_equal(a.op, b.op)
