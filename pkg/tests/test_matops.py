import numpy as np
import pytest

from h2hinf import matops


def test_vec_stacks_columns():
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    assert np.array_equal(matops.vec(m), [1.0, 2.0, 3.0, 4.0])


def test_vec_zero_matrix():
    assert np.array_equal(matops.vec(np.zeros((2, 3))), np.zeros(6))


def test_vec_outer_product_kron_identity():
    x = np.array([1.0, 2.0])
    y = np.array([3.0, 4.0])
    lhs = matops.vec(np.outer(x, y))
    assert np.array_equal(lhs, matops.kron(y.reshape(-1, 1), x.reshape(-1, 1)).ravel())
    assert np.array_equal(lhs, [3.0, 6.0, 4.0, 8.0])


def test_mat_inverts_vec():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 4))
    assert np.array_equal(matops.mat(matops.vec(m), 3, 4), m)
    with pytest.raises(ValueError):
        matops.mat(np.ones(5), 2, 3)


def test_svec_row_wise_upper_triangle():
    p = np.array([[1.0, 2.0], [2.0, 3.0]])
    assert np.array_equal(matops.svec(p), [1.0, 2.0, 3.0])
    assert np.array_equal(matops.svec(np.eye(3)), [1, 0, 0, 1, 0, 1])


def test_svec_rejects_asymmetric():
    with pytest.raises(ValueError):
        matops.svec(np.array([[1.0, 2.0], [2.1, 3.0]]))


def test_smat_examples():
    assert np.array_equal(matops.smat([1.0, 2.0, 3.0]), [[1.0, 2.0], [2.0, 3.0]])
    assert np.array_equal(matops.smat([5.0]), [[5.0]])
    with pytest.raises(ValueError):
        matops.smat(np.arange(4.0))


def test_svec_smat_round_trips_exact():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = rng.integers(1, 7)
        p = rng.normal(size=(n, n))
        p = p + p.T
        assert np.array_equal(matops.smat(matops.svec(p)), p)
        v = rng.normal(size=n * (n + 1) // 2)
        assert np.array_equal(matops.svec(matops.smat(v)), v)


def test_vecv_examples():
    assert np.array_equal(matops.vecv([1.0, 2.0]), [1.0, 2.0, 2.0, 4.0])
    assert np.array_equal(matops.vecv([3.0]), [9.0])


def test_vecv_quadratic_form_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = rng.integers(1, 6)
        x = rng.normal(size=n)
        p = rng.normal(size=(n, n))
        p = p + p.T
        want = x @ p @ x
        got = matops.vecv(x) @ matops.vec(p)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_quad_basis_examples():
    assert np.array_equal(matops.quad_basis([1.0, 2.0]), [1.0, 4.0, 4.0])
    assert np.array_equal(matops.quad_basis(np.zeros(3)), np.zeros(6))


def test_quad_basis_pairs_with_svec():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = rng.integers(1, 6)
        x = rng.normal(size=n)
        p = rng.normal(size=(n, n))
        p = p + p.T
        want = x @ p @ x
        got = matops.quad_basis(x) @ matops.svec(p)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_quad_dual_frobenius_pairing():
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = rng.integers(1, 6)
        m = rng.normal(size=(n, n))
        p = rng.normal(size=(n, n))
        p = p + p.T
        want = np.trace(p @ m)
        got = matops.quad_dual(m) @ matops.svec(p)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
        x = rng.normal(size=n)
        assert np.allclose(matops.quad_dual(np.outer(x, x)), matops.quad_basis(x))


def test_kron_examples():
    assert np.array_equal(matops.kron(np.eye(2), [[5.0]]), np.diag([5.0, 5.0]))
    assert np.array_equal(matops.kron([[2.0]], [[3.0]]), [[6.0]])


def test_kron_vec_identity():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = rng.normal(size=(2, 2))
        x = rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2))
        lhs = matops.vec(a @ x @ b)
        rhs = matops.kron(b.T, a) @ matops.vec(x)
        assert np.allclose(lhs, rhs, rtol=1e-12)


def test_kron_mixed_product():
    rng = np.random.default_rng(6)
    for na, nb in [(2, 2), (2, 3), (3, 3)]:
        a, c = rng.normal(size=(2, na, na))
        b, d = rng.normal(size=(2, nb, nb))
        lhs = matops.kron(a, b) @ matops.kron(c, d)
        rhs = matops.kron(a @ c, b @ d)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_tvec_permutation_examples():
    assert np.array_equal(matops.tvec_permutation(1, 1), [[1.0]])
    t = matops.tvec_permutation(2, 2)
    assert np.array_equal(t @ np.array([1.0, 2.0, 3.0, 4.0]), [1.0, 3.0, 2.0, 4.0])


def test_tvec_permutation_transposes_vec():
    rng = np.random.default_rng(7)
    for m in range(1, 5):
        for n in range(1, 5):
            a = rng.normal(size=(m, n))
            t = matops.tvec_permutation(m, n)
            assert np.array_equal(t @ matops.vec(a), matops.vec(a.T))
            assert np.allclose(matops.tvec_permutation(n, m) @ t, np.eye(m * n))
