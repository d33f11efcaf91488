import numpy as np
import pytest

import hadfact as hf
from hadfact.core import face_split, numerical_rank, rows_to_mats
from hadfact.initializers import (
    available_inits,
    get_init,
    init_fs,
    init_fsl,
    init_fsr,
    init_svd_based,
    optimal_gamma,
)


def rel_err(X, f):
    return np.linalg.norm(np.asarray(X - f.reconstruct())) / np.linalg.norm(
        X.toarray() if hasattr(X, "toarray") else X)


def aligned_face_split(n, r, rng, lo=1.0, hi=2.0):
    """n = r^2 matrix in the face-split set with orthogonal columns of
    distinct norms (rows are scaled one-hot Kronecker rows)."""
    assert n == r * r
    A = np.zeros((n, r))
    B = np.zeros((n, r))
    scales = np.sort(rng.uniform(lo, hi, size=n))[::-1]
    perm = rng.permutation(n)
    for s in range(n):
        i, j = divmod(perm[s], r)
        A[s, i] = scales[s]
        B[s, j] = 1.0
    return face_split(A, B)  # row s = scales[s] * e_{perm[s]}


# --------------------------------------------------------------- svd-based

def test_svd_init_all_ones_exact():
    X = np.ones((9, 7))
    for r in (1, 3):
        f = init_svd_based(X, r)
        assert rel_err(X, f) <= 1e-12


def test_svd_init_nonnegative_symmetric(rng):
    X = rng.random((10, 8))
    f = init_svd_based(X, 3)
    np.testing.assert_array_equal(f.W1, f.W2)
    np.testing.assert_array_equal(f.H1, f.H2)


def test_svd_init_matches_dense_oracle(rng):
    X = rng.normal(size=(20, 15))
    r = 3
    f = init_svd_based(X, r)

    def best_rank(Y, k):
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        return (U[:, :k] * s[:k]) @ Vt[:k]

    expected = best_rank(np.sqrt(np.abs(X)), r) * best_rank(np.sign(X) * np.sqrt(np.abs(X)), r)
    got = f.reconstruct()
    assert np.linalg.norm(got - expected) <= 1e-10 * np.linalg.norm(expected)


def test_svd_init_sparse_keeps_pattern():
    import scipy.sparse as sp
    X = sp.random(40, 30, density=0.1, random_state=2, format="csr")
    X.data -= 0.5  # mixed signs
    f = init_svd_based(X, 2)
    assert f.W1.shape == (40, 2)
    dense = init_svd_based(X.toarray(), 2)
    assert rel_err(X.toarray(), f) == pytest.approx(rel_err(X.toarray(), dense), abs=1e-8)


def test_svd_init_rank_out_of_range(rng):
    with pytest.raises(ValueError, match="range"):
        init_svd_based(rng.random((5, 4)), 5)


# ---------------------------------------------------------------- fs family

def test_fs_rank_one_equals_tsvd_split(rng):
    X = rng.random((12, 9))
    f = init_fs(X, 1)
    t = hf.tsvd(X, 1)
    np.testing.assert_allclose(f.assemble_w(), (t.U * np.sqrt(t.S)), atol=1e-10)
    np.testing.assert_allclose(f.assemble_h(), (t.V * np.sqrt(t.S)), atol=1e-10)


def test_fs_on_aligned_exact_face_split(rng):
    # X = W H^T with both factors of aligned face-split structure: the TSVD
    # factors project losslessly, so the initialization is near exact
    r = 2
    n = r * r
    W = aligned_face_split(n, r, rng, 2.0, 3.0)
    H = aligned_face_split(n, r, rng, 0.5, 1.5)
    X = W @ H.T
    f = init_fs(X, r)
    assert rel_err(X, f) <= 1e-10


def test_fs_error_at_least_tsvd_truncation(rng):
    X = rng.random((30, 30))
    r = 2
    f = init_fs(X, r)
    t = hf.tsvd(X, r * r)
    tsvd_err = np.linalg.norm(X - t.reconstruct()) / np.linalg.norm(X)
    assert rel_err(X, f) >= tsvd_err - 1e-12


def test_fs_beats_random_init_on_most_seeds():
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.random((30, 30))
        f = init_fs(X, 2)
        g = hf.HadamardFactors(rng.normal(size=(30, 2)), rng.normal(size=(30, 2)),
                               rng.normal(size=(30, 2)), rng.normal(size=(30, 2)))
        if rel_err(X, f) <= rel_err(X, g):
            wins += 1
    assert wins >= 95


def test_fs_family_requires_small_rank(rng):
    X = rng.random((8, 8))
    for fn in (init_fs, init_fsl, init_fsr):
        with pytest.raises(ValueError, match="min"):
            fn(X, 3)  # 9 > 8
    assert available_inits(8, 8, 3) == ["svd"]
    assert available_inits(9, 9, 3) == ["svd", "fs", "fsl", "fsr"]


def test_fsl_least_squares_step_is_optimal(rng):
    X = rng.random((25, 20))
    r = 2
    f = init_fsl(X, r)
    H = f.assemble_h()
    # recompute the least-squares optimum as an oracle
    U_star = np.linalg.lstsq(H, X.T, rcond=None)[0].T
    base = np.linalg.norm(X - U_star @ H.T)
    t = hf.tsvd(X, r * r)
    U_tilde = t.U * np.sqrt(t.S)
    assert base <= np.linalg.norm(X - U_tilde @ H.T) + 1e-12
    for _ in range(100):
        M = rng.normal(size=U_star.shape)
        assert base <= np.linalg.norm(X - M @ H.T) + 1e-12


def test_fsl_on_aligned_right_factor(rng):
    # right TSVD factor already projectable: the least-squares left factor
    # reproduces X exactly and the final error is its projection error alone
    r = 2
    n = r * r
    Ut = np.linalg.qr(rng.normal(size=(10, n)))[0] * rng.uniform(2.0, 4.0, size=n)
    Vt = aligned_face_split(n, r, rng)
    X = Ut @ Vt.T
    f = init_fsl(X, r)
    H = f.assemble_h()
    U_star = np.linalg.lstsq(H, X.T, rcond=None)[0].T
    assert np.linalg.norm(X - U_star @ H.T) <= 1e-8 * np.linalg.norm(X)
    from hadfact.manifold import project_bmr
    expected_err = np.linalg.norm(X - project_bmr(U_star).assemble() @ H.T)
    got_err = np.linalg.norm(X - f.reconstruct())
    assert got_err == pytest.approx(expected_err, abs=1e-10 * np.linalg.norm(X))


def test_fsr_is_fsl_of_transpose(rng):
    X = rng.random((14, 11))
    f = init_fsr(X, 2)
    g = init_fsl(X.T, 2)
    np.testing.assert_array_equal(f.W1, g.H1)
    np.testing.assert_array_equal(f.H1, g.W1)
    np.testing.assert_array_equal(f.W2, g.H2)
    np.testing.assert_array_equal(f.H2, g.W2)


def test_all_inits_feasible(rng):
    X = rng.random((16, 12))
    for name in available_inits(16, 12, 2):
        f = get_init(name, X, 2)
        for M in rows_to_mats(f.assemble_w(), 2):
            assert numerical_rank(M) <= 1
        for M in rows_to_mats(f.assemble_h(), 2):
            assert numerical_rank(M) <= 1


def test_get_init_unknown_name(rng):
    with pytest.raises(ValueError, match="unknown"):
        get_init("kmeans", rng.random((5, 5)), 1)


# ------------------------------------------------------------ optimal gamma

def test_optimal_gamma_exact_product(rng):
    W = rng.normal(size=(9, 3))
    H = rng.normal(size=(7, 3))
    X = W @ H.T
    assert optimal_gamma(X, W, H) == pytest.approx(1.0, rel=1e-12)
    assert optimal_gamma(X, np.sqrt(2) * W, np.sqrt(2) * H) == pytest.approx(0.5, rel=1e-12)


def test_optimal_gamma_local_optimality(rng):
    X = rng.random((10, 8))
    W = rng.normal(size=(10, 3))
    H = rng.normal(size=(8, 3))
    g = optimal_gamma(X, W, H)

    def err(gamma):
        return np.linalg.norm(X - gamma * W @ H.T)

    assert err(g) <= err(g + 0.01) and err(g) <= err(g - 0.01)
    # stationarity by central differences
    eps = 1e-6
    deriv = (err(g + eps) ** 2 - err(g - eps) ** 2) / (2 * eps)
    assert abs(deriv) <= 1e-8 * max(err(g) ** 2, 1.0)


def test_optimal_gamma_degenerate_denominator():
    X = np.ones((4, 4))
    assert optimal_gamma(X, np.zeros((4, 2)), np.zeros((4, 2))) == 1.0


def test_optimal_gamma_split_never_hurts(rng):
    X = rng.random((12, 9))
    W = rng.normal(size=(12, 4))
    H = rng.normal(size=(9, 4))
    g = optimal_gamma(X, W, H)
    W2 = np.sqrt(abs(g)) * W
    H2 = np.sign(g) * np.sqrt(abs(g)) * H
    assert np.linalg.norm(X - W2 @ H2.T) <= np.linalg.norm(X - W @ H.T) + 1e-12
