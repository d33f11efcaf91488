import numpy as np
import pytest

from hadfact.core import face_split, numerical_rank, rows_to_mats
from hadfact.manifold import FaceSplitPoint, project_bmr, tangent_project


def closed_form_svd_2x2(M):
    """Rank-1 part of a 2x2 matrix from the closed-form SVD (test oracle)."""
    A = M.T @ M
    tr, det = A[0, 0] + A[1, 1], A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = max(tr * tr / 4 - det, 0.0)
    lam = tr / 2 + np.sqrt(disc)
    # right singular vector from (A - lam I) v = 0
    if abs(A[0, 1]) > 1e-300:
        v = np.array([A[0, 1], lam - A[0, 0]])
    elif abs(A[1, 0]) > 1e-300:
        v = np.array([lam - A[1, 1], A[1, 0]])
    else:
        v = np.array([1.0, 0.0]) if A[0, 0] >= A[1, 1] else np.array([0.0, 1.0])
    v /= np.linalg.norm(v)
    u = M @ v
    sigma = np.linalg.norm(u)
    if sigma > 0:
        u /= sigma
    return sigma * np.outer(u, v)


def test_project_identity_row():
    # vec of I_2: two equal singular values, projection keeps exactly one,
    # with sigma = 1 and Frobenius distance 1 from the input
    P = project_bmr(np.array([[1.0, 0.0, 0.0, 1.0]]))
    out = P.assemble()
    assert np.linalg.norm(out - np.array([1.0, 0.0, 0.0, 1.0])) == pytest.approx(1.0, rel=1e-12)
    M = rows_to_mats(out, 2)[0]
    assert numerical_rank(M) == 1
    assert np.linalg.svd(M, compute_uv=False)[0] == pytest.approx(1.0, rel=1e-12)


def test_project_idempotent_on_face_split(rng):
    W = face_split(rng.normal(size=(9, 3)), rng.normal(size=(9, 3)))
    P = project_bmr(W)
    assert np.linalg.norm(P.assemble() - W) <= 1e-10 * np.linalg.norm(W)


def test_project_double_application(rng):
    A = rng.normal(size=(8, 9))
    once = project_bmr(A).assemble()
    twice = project_bmr(once).assemble()
    assert np.linalg.norm(twice - once) <= 1e-12 * max(np.linalg.norm(once), 1.0)


def test_project_1x4_against_closed_form():
    row = np.array([[1.0, 2.0, 3.0, 4.0]])
    # column-major reshape of the row is [[1, 3], [2, 4]]
    M = rows_to_mats(row, 2)[0]
    np.testing.assert_array_equal(M, [[1.0, 3.0], [2.0, 4.0]])
    expected = closed_form_svd_2x2(M)
    got = rows_to_mats(project_bmr(row).assemble(), 2)[0]
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_project_rejects_non_square_columns():
    with pytest.raises(ValueError, match="perfect square"):
        project_bmr(np.ones((3, 5)))


def test_project_zero_rows_stay_zero(rng):
    A = rng.normal(size=(4, 4))
    A[2] = 0.0
    P = project_bmr(A)
    assert np.all(P.W1[2] == 0.0) and np.all(P.W2[2] == 0.0)
    assert not P.nonzero[2]


def test_projection_optimality_vs_random_feasible(rng):
    # closest point: no random face-split matrix may be closer than the projection
    for _ in range(4):
        m = int(rng.integers(2, 9))
        A = rng.normal(size=(m, 4))
        proj = project_bmr(A).assemble()
        d_proj = np.linalg.norm(A - proj)
        for _ in range(250):
            Q = face_split(rng.normal(size=(m, 2)), rng.normal(size=(m, 2)))
            assert d_proj <= np.linalg.norm(A - Q) + 1e-12


def test_fixed_point_iff_rank_one_rows(rng):
    # fixed by the projection <=> every reshaped row has rank <= 1
    good = face_split(rng.normal(size=(6, 3)), rng.normal(size=(6, 3)))
    assert np.linalg.norm(project_bmr(good).assemble() - good) <= 1e-10 * np.linalg.norm(good)
    bad = rng.normal(size=(6, 9))
    assert any(numerical_rank(M) > 1 for M in rows_to_mats(bad, 3))
    assert np.linalg.norm(project_bmr(bad).assemble() - bad) > 1e-6


# ------------------------------------------------------------ tangent space

def _point(rng, m, r):
    return FaceSplitPoint(rng.normal(size=(m, r)), rng.normal(size=(m, r)))


def test_tangent_contains_base_point(rng):
    P = _point(rng, 7, 3)
    W = P.assemble()
    np.testing.assert_allclose(tangent_project(P, W), W, atol=1e-12)


def test_tangent_idempotent(rng):
    P = _point(rng, 6, 3)
    A = rng.normal(size=(6, 9))
    once = tangent_project(P, A)
    np.testing.assert_allclose(tangent_project(P, once), once, atol=1e-12)


def test_tangent_linear(rng):
    P = _point(rng, 5, 2)
    A = rng.normal(size=(5, 4))
    B = rng.normal(size=(5, 4))
    lhs = tangent_project(P, 2.0 * A - 3.0 * B)
    rhs = 2.0 * tangent_project(P, A) - 3.0 * tangent_project(P, B)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_tangent_self_adjoint(rng):
    P = _point(rng, 6, 3)
    A = rng.normal(size=(6, 9))
    B = rng.normal(size=(6, 9))
    lhs = np.sum(tangent_project(P, A) * B)
    rhs = np.sum(A * tangent_project(P, B))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(abs(lhs), 1.0))


def test_tangent_rejects_zero_rows(rng):
    W1 = rng.normal(size=(4, 2))
    W1[1] = 0.0
    P = FaceSplitPoint(W1, rng.normal(size=(4, 2)))
    with pytest.raises(ValueError, match="zero row"):
        tangent_project(P, np.ones((4, 4)))


def test_face_split_point_caches(rng):
    P = _point(rng, 8, 3)
    np.testing.assert_allclose(np.linalg.norm(P.x, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(P.y, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(P.mu * P.nu, P.rho)
    # assembled rows reshape to rank-1 matrices
    for M in rows_to_mats(P.assemble(), 3):
        assert numerical_rank(M) <= 1
