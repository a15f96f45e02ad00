import numpy as np
import pytest

from encagg.errors import DegenerateCovariance, InvalidInput
from encagg.projection import (
    GradientMatrix,
    check_orthonormal,
    decompose_against_subspace,
    project_gradients,
    project_or_origin,
    top_eigenpairs,
    variance_captured,
)
from oracles import jacobi_eigh


def _sample_cov(g):
    x = g - g.mean(axis=0)
    return x.T @ x / (g.shape[0] - 1)


def test_gradient_matrix_validation():
    with pytest.raises(InvalidInput):
        GradientMatrix(np.ones((3, 1)))
    with pytest.raises(InvalidInput):
        GradientMatrix(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidInput):
        GradientMatrix(np.ones((2, 2)), client_ids=["a", "a"])
    gm = GradientMatrix(np.ones((2, 3)), client_ids=["a", "b"])
    assert gm.n == 2 and gm.d == 3 and gm.client_ids == ("a", "b")


def test_fixed_5x3_against_jacobi():
    g = np.array(
        [
            [2.0, 0.5, -1.0],
            [1.0, 1.5, 0.0],
            [-0.5, 2.0, 1.0],
            [3.0, -1.0, 0.5],
            [0.0, 0.0, 2.0],
        ]
    )
    vals, vecs = jacobi_eigh(_sample_cov(g))
    p = project_gradients(g)
    np.testing.assert_allclose(p.eigenvalues, vals[:2], atol=1e-8)
    for j in range(2):
        s = np.sign(p.basis[:, j] @ vecs[:, j])
        np.testing.assert_allclose(p.basis[:, j], s * vecs[:, j], atol=1e-8)
    np.testing.assert_allclose(p.projected, (g - g.mean(axis=0)) @ p.basis, atol=1e-10)


def test_rank_two_data_preserves_distances():
    rng = np.random.default_rng(3)
    plane, _ = np.linalg.qr(rng.normal(size=(10, 2)))
    g = rng.normal(size=(4, 2)) @ plane.T
    p = project_gradients(g)
    for i in range(4):
        for j in range(4):
            assert abs(np.linalg.norm(p.projected[i] - p.projected[j]) - np.linalg.norm(g[i] - g[j])) < 1e-9
    assert abs(variance_captured(p, g) - 1.0) < 1e-9


def test_identical_rows_are_degenerate():
    g = np.tile([1.0, 2.0, 3.0], (5, 1))
    with pytest.raises(DegenerateCovariance):
        project_gradients(g)
    assert np.all(project_or_origin(g).projected == 0.0)


def test_two_rows_rank_one():
    p = project_gradients(np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]))
    assert p.eigenvalues[1] == pytest.approx(0.0, abs=1e-12)
    assert p.eigenvalues[0] == pytest.approx(12.5)
    assert abs(p.projected[0, 0] - p.projected[1, 0]) == pytest.approx(5.0)
    check_orthonormal(p.basis, 1e-10)


def test_gram_path_matches_covariance_path():
    # d > n uses the n x n Gram matrix
    rng = np.random.default_rng(5)
    g = rng.normal(size=(6, 40)) * np.linspace(3, 0.1, 40)
    p = project_gradients(g)
    vals, _ = jacobi_eigh(_sample_cov(g)[:40, :40])
    np.testing.assert_allclose(p.eigenvalues, vals[:2], rtol=1e-9)


def test_variance_identity_and_orthonormality():
    rng = np.random.default_rng(0)
    for _ in range(30):
        g = rng.normal(size=(rng.integers(3, 15), rng.integers(2, 9)))
        p = project_gradients(g)
        np.testing.assert_allclose(p.projected.var(axis=0, ddof=1), p.eigenvalues, atol=1e-8)
        assert np.abs(p.basis.T @ p.basis - np.eye(2)).max() <= 1e-10
        assert p.eigenvalues[0] >= p.eigenvalues[1] >= 0


def test_sign_canonical():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(8, 5))
    p = project_gradients(g)
    for j in range(2):
        col = p.basis[:, j]
        assert col[np.argmax(np.abs(col))] > 0
    q = project_gradients(g.copy())
    assert np.array_equal(p.basis, q.basis)


def test_translation_leaves_distances():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(7, 6))
    a = project_gradients(g).projected
    b = project_gradients(g + rng.normal(size=6) * 100).projected
    da = np.linalg.norm(a[:, None] - a[None], axis=2)
    db = np.linalg.norm(b[:, None] - b[None], axis=2)
    assert np.abs(da - db).max() < 1e-9


def test_variance_captured_bounds():
    rng = np.random.default_rng(4)
    g = rng.normal(size=(200, 4))
    p = project_gradients(g)
    vals, _ = jacobi_eigh(_sample_cov(g))
    assert variance_captured(p, g) == pytest.approx(vals[:2].sum() / vals.sum(), abs=1e-9)
    dominant = rng.normal(size=(50, 4)) * [10.0, 1.0, 1.0, 1.0]
    pd = project_gradients(dominant)
    assert variance_captured(pd, dominant) >= pd.eigenvalues[0] / pd.total_variance - 1e-12
    with pytest.raises(InvalidInput):
        variance_captured(p, np.ones((3, 4)))


def test_top_eigenpairs_small_gap():
    q, _ = np.linalg.qr(np.random.default_rng(6).normal(size=(5, 5)))
    m = q @ np.diag([1.0, 1.0 - 1e-7, 0.5, 0.2, 0.0]) @ q.T
    vals, _ = top_eigenpairs(m, 2)
    np.testing.assert_allclose(vals, [1.0, 1.0 - 1e-7], atol=1e-10)


def test_decompose_against_subspace():
    rng = np.random.default_rng(7)
    basis, _ = np.linalg.qr(rng.normal(size=(6, 2)))
    par, perp = decompose_against_subspace(basis[:, 0], basis)
    np.testing.assert_allclose(par, basis[:, 0], atol=1e-12)
    assert np.linalg.norm(perp) < 1e-12
    v = rng.normal(size=6)
    v = v - basis @ (basis.T @ v)
    par, perp = decompose_against_subspace(v, basis)
    assert np.linalg.norm(par) < 1e-12
    np.testing.assert_allclose(perp, v, atol=1e-12)
    v = rng.normal(size=6)
    par, perp = decompose_against_subspace(v, basis)
    np.testing.assert_allclose(par + perp, v, atol=1e-12)
    assert abs(par @ perp) < 1e-10
    assert np.linalg.norm(basis.T @ perp) <= 1e-10 * np.linalg.norm(v)
    with pytest.raises(InvalidInput):
        decompose_against_subspace(v, np.ones((6, 2)))
