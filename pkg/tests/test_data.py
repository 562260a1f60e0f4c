import math

import numpy as np
import pytest

from bmpursuit.data import (
    PatchSet,
    add_noise,
    coef_error,
    dct_overcomplete,
    dct_unitary,
    extract_patches,
    rand_omp_support,
    rmse_per_pixel,
    signal_error,
    support_error,
    support_overlap,
    validity_stats,
)
from bmpursuit.model import SupportPattern


def test_dct_unitary(rng):
    A = dct_unitary(4)
    assert A.shape == (4, 4)
    assert np.allclose(A.T @ A, np.eye(4), atol=1e-12)
    A64 = dct_unitary(64)
    assert np.allclose(A64.T @ A64, np.eye(64), atol=1e-12)
    assert np.allclose(A64[:, 0], A64[0, 0])
    x = rng.normal(size=64)
    assert math.isclose(np.linalg.norm(A64 @ x), np.linalg.norm(x))
    with pytest.raises(ValueError):
        dct_unitary(10)


def test_dct_overcomplete():
    A = dct_overcomplete(64, 256)
    assert A.shape == (64, 256)
    assert np.allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-12)
    # every unitary atom has a highly correlated partner in the frame
    U = dct_unitary(64)
    best = np.abs(U.T @ A).max(axis=1)
    assert best.min() > 0.8
    with pytest.raises(ValueError):
        dct_overcomplete(64, 36)


def test_extract_patches():
    img = np.arange(64.0).reshape(8, 8)
    ps = extract_patches(img)
    assert len(ps) == 1
    assert np.allclose(ps.patches.mean(axis=1), 0)
    assert np.allclose(ps.with_dc(), img.ravel()[None, :])
    assert len(extract_patches(np.zeros((16, 16)), 8, 4)) == 9
    flat = extract_patches(np.full((16, 16), 7.0), 8, 8)
    assert np.all(flat.patches == 0) and np.all(flat.dc_values == 7)
    assert len(extract_patches(np.zeros((4, 4)))) == 0
    with pytest.raises(ValueError):
        extract_patches(np.zeros(5))


def test_add_noise(rng):
    ps = PatchSet(np.zeros((2000, 64)), np.zeros(2000))
    same = add_noise(ps, 0.0, seed=1)
    assert np.array_equal(same.patches, ps.patches)
    noisy = add_noise(ps, 10.0, seed=1)
    # DC removal keeps (n-1)/n of the per-entry noise variance
    var = noisy.patches.var() * 64 / 63
    assert abs(var / 100.0 - 1) < 0.02
    assert np.allclose(noisy.patches.mean(axis=1), 0)
    assert np.array_equal(noisy.patches, add_noise(ps, 10.0, seed=1).patches)
    assert not np.array_equal(noisy.patches, add_noise(ps, 10.0, seed=2).patches)
    full = noisy.with_dc()
    assert abs(full.var() / 100.0 - 1) < 0.02
    with pytest.raises(ValueError):
        add_noise(ps, -1.0)


def test_validity_uniform_marginals():
    S = np.array([[1, -1], [-1, 1]])
    st = validity_stats(S)
    assert np.allclose(st.R, 0)


def test_validity_independent_supports(rng):
    X = np.where(rng.random((200_000, 4)) < 0.3, 1, -1)
    st = validity_stats(X)
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(st.U[off], math.log10(1.1), atol=0.01)


def test_validity_cooccurring_pair_and_sentinel():
    S = np.array([[1, 1, -1], [-1, -1, -1], [1, 1, -1]])
    st = validity_stats(S)
    assert math.isclose(st.V[0, 1], math.log10(1.1))
    assert st.inactive.tolist() == [False, False, True]
    assert np.all(st.U[:, 2] == 1.0) and np.all(st.V[:, 2] == 1.0)
    assert st.R[2] == math.inf
    with pytest.raises(ValueError):
        validity_stats(S, delta=0)


def test_support_metrics():
    assert support_error([[1, 2]], [[1, 2]]) == 0
    assert support_error([[1, 2]], [[2, 3]]) == 0.5
    assert support_error([[]], [[]]) == 0
    assert np.allclose(support_overlap([[0], [0, 1, 2]], [[], [0]]), [0, 1 / 3])
    pats = [SupportPattern.from_indices([1, 2], 4)]
    assert support_error(pats, np.array([[-1, -1, 1, 1]])) == 0.5
    with pytest.raises(ValueError):
        support_overlap([[1]], [[1], [2]])


def test_coef_and_signal_error(rng):
    X = rng.normal(size=(5, 8))
    assert coef_error(X, X) == 0
    assert math.isclose(coef_error(X, np.zeros_like(X)), 1.0)
    # hand case: errors 1 and 0 over energies 4 and 1
    assert math.isclose(coef_error([[2, 0], [0, 1]], [[1, 0], [0, 1]]), math.sqrt(1 / 5))
    A = dct_unitary(16)
    X = rng.normal(size=(4, 16))
    Xh = X + rng.normal(size=X.shape)
    assert math.isclose(signal_error(A, X, Xh), coef_error(X, Xh))
    B = rng.normal(size=(3, 2))
    truth, est = np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])
    expected = np.linalg.norm(B @ (est[0] - truth[0])) / np.linalg.norm(B @ truth[0])
    assert math.isclose(signal_error(B, truth, est), expected)
    assert coef_error(np.zeros((1, 2)), np.zeros((1, 2))) == 0


def test_rand_omp_support():
    x = np.array([0.5, -3.0, 3.0, 0.1])
    assert rand_omp_support(x, 0).k == 0
    assert rand_omp_support(x, 1).indices.tolist() == [1]
    assert rand_omp_support(x, 3).indices.tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        rand_omp_support(x, 5)


def test_rmse_per_pixel():
    C = np.arange(12.0).reshape(3, 4)
    assert rmse_per_pixel(C, C) == 0
    assert math.isclose(rmse_per_pixel(C, C + 2.5), 2.5)
    assert math.isclose(rmse_per_pixel([[0, 0]], [[3, 4]]), math.sqrt(12.5))
    with pytest.raises(ValueError):
        rmse_per_pixel(C, C[:2])
