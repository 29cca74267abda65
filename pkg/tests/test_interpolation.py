import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_stable, rel
from interpmor.errors import RankCollapse, SingularReducedPencil, SingularShift
from interpmor.interpolation import (TangentData, build_left_basis, build_right_basis,
                                     interpolatory_reduce, petrov_galerkin_reduce,
                                     realify_and_orthogonalize, reduce_with_feedthrough,
                                     verify_interpolation)
from interpmor.lti import DescriptorSystem


@pytest.fixture
def data3():
    return TangentData.bitangential([0.0], [[1.0, 2.0]], [[3.0, 1.0]])


def conj_data(rng, m, p, k=2, real=1, orders=None):
    """Conjugate-closed bitangential data with `k` pairs and `real` real points."""
    z = rng.uniform(0.2, 2, k) + 1j * rng.uniform(0.2, 3, k)
    pts = np.concatenate([z, z.conj(), rng.uniform(0.2, 3, real)])
    r = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
    l = rng.standard_normal((k, p)) + 1j * rng.standard_normal((k, p))
    R = np.vstack([r, r.conj(), rng.standard_normal((real, m))])
    L = np.vstack([l, l.conj(), rng.standard_normal((real, p))])
    return TangentData.bitangential(pts, R, L, orders)


# -- the worked example ------------------------------------------------------------


def test_example3_bases(example3, data3):
    np.testing.assert_allclose(build_right_basis(example3, data3).real.ravel(), [-2, -1, 4], atol=1e-14)
    np.testing.assert_allclose(build_left_basis(example3, data3).real.ravel(), [0.5, -1, 6.5], atol=1e-14)


def test_example3_projection(example3, data3):
    red = interpolatory_reduce(example3, data3, orthogonalize=False)
    assert red.E[0, 0] == pytest.approx(26, abs=1e-12)
    assert red.A[0, 0] == pytest.approx(-5, abs=1e-12)
    np.testing.assert_allclose(red.B, [[6, -0.5]], atol=1e-12)
    np.testing.assert_allclose(red.C, [[2], [-1]], atol=1e-12)


def test_example3_interpolation_values(example3, data3):
    red = interpolatory_reduce(example3, data3)
    r, l = np.array([1.0, 2.0]), np.array([3.0, 1.0])
    np.testing.assert_allclose(red.transfer(0) @ r, [2, -1], atol=1e-12)
    np.testing.assert_allclose(l @ red.transfer(0), [6, -0.5], atol=1e-12)
    assert (l @ red.transfer_derivative(0) @ r).real == pytest.approx(-26, abs=1e-12)
    assert verify_interpolation(example3, red, data3).max_residual < 1e-12
    # tangential only: the full matrix is not matched
    np.testing.assert_allclose(red.transfer(0), [[2.4, -0.2], [-1.2, 0.1]], atol=1e-12)


def test_example3_full_matrix_interpolation(example3):
    V = np.linalg.solve(-example3.A, example3.B)
    W = np.linalg.solve(-example3.A.T, example3.C.T)
    np.testing.assert_allclose(V, [[0, -1], [-1, 0], [5 / 3, 7 / 6]], atol=1e-14)
    np.testing.assert_allclose(W, [[1 / 6, 0], [0, -1], [11 / 6, 1]], atol=1e-14)
    red = petrov_galerkin_reduce(example3, V, W)
    np.testing.assert_allclose(red.transfer(0), [[5 / 3, 1 / 6], [1, -1]], atol=1e-12)
    np.testing.assert_allclose(red.transfer_derivative(0), [[-55 / 18, -71 / 36], [-8 / 3, -7 / 6]],
                               atol=1e-12)


# -- bases --------------------------------------------------------------------------


def test_identity_solves():
    sys = DescriptorSystem(-np.eye(3), np.eye(3), np.eye(3))
    d = TangentData([0.0], [[1, 0, 0]], [0.0], [[0, 1, 0]])
    np.testing.assert_allclose(build_right_basis(sys, d).ravel(), [1, 0, 0])
    np.testing.assert_allclose(build_left_basis(sys, d).ravel(), [0, 1, 0])


def test_hermite_chain_columns(rng):
    sys = random_stable(7, 2, 2, seed=1, descriptor=True)
    s = 0.8
    d = TangentData.bitangential([s], [[1.0, -1.0]], [[0.5, 2.0]], orders=[2])
    K = s * sys.E - sys.A
    v1 = np.linalg.solve(K, sys.B @ [1.0, -1.0])
    w1 = np.linalg.solve(K.T, sys.C.T @ [0.5, 2.0])
    V, W = build_right_basis(sys, d), build_left_basis(sys, d)
    assert rel(V[:, 1], np.linalg.solve(K, sys.E @ v1)) < 1e-12
    assert rel(W[:, 1], np.linalg.solve(K.T, sys.E.T @ w1)) < 1e-12


def test_realify():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 3))
    Q = realify_and_orthogonalize(X)
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-14)
    assert np.linalg.matrix_rank(np.hstack([Q, X])) == 3
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    Q = realify_and_orthogonalize(np.column_stack([v, v.conj()]))
    assert Q.shape[1] == 2
    assert np.linalg.matrix_rank(np.column_stack([Q, v.real, v.imag])) == 2
    assert realify_and_orthogonalize(np.column_stack([X, X[:, 0]])).shape[1] == 3
    with pytest.raises(RankCollapse):
        realify_and_orthogonalize(np.zeros((4, 2)))


def test_conjugate_closure_enforced():
    with pytest.raises(ValueError):
        TangentData.bitangential([1 + 1j], [[1.0]], [[1.0]])
    with pytest.raises(ValueError):
        TangentData.bitangential([1.0], [[0.0, 0.0]], [[1.0]])


def test_tangent_dict_roundtrip():
    rng = np.random.default_rng(3)
    d = conj_data(rng, 2, 3)
    back = TangentData.from_dict(d.to_dict())
    assert np.array_equal(back.right_points, d.right_points)
    assert np.array_equal(back.left_dirs, d.left_dirs)


def test_singular_shift(example3):
    d = TangentData.bitangential([-1.0], [[1.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(SingularShift):
        interpolatory_reduce(example3, d)


# -- projection ---------------------------------------------------------------------------


def test_identity_projection():
    sys = random_stable(5, 2, 2, seed=2, descriptor=True)
    red = petrov_galerkin_reduce(sys, np.eye(5), np.eye(5))
    for s in [0.3, 1j]:
        assert rel(red.transfer(s), sys.transfer(s)) < 1e-13


def test_basis_invariance(rng):
    sys = random_stable(8, 2, 2, seed=3)
    V, W = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
    T1, T2 = rng.standard_normal((3, 3)) + 2 * np.eye(3), rng.standard_normal((3, 3)) + 2 * np.eye(3)
    a = petrov_galerkin_reduce(sys, V, W)
    b = petrov_galerkin_reduce(sys, V @ T1, W @ T2)
    for s in [0.1, 2j, 1 - 1j]:
        assert rel(b.transfer(s), a.transfer(s)) < 1e-10


def test_singular_reduced_pencil():
    sys = random_stable(4, seed=4)
    V = np.eye(4)[:, :1]
    W = np.eye(4)[:, 1:2]
    E = np.eye(4)
    with pytest.raises(SingularReducedPencil):
        petrov_galerkin_reduce(DescriptorSystem(sys.A, sys.B, sys.C, None, E), V, W)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(8, 30), m=st.integers(1, 3), p=st.integers(1, 3))
def test_lagrange_and_hermite_conditions(seed, n, m, p):
    sys = random_stable(n, m, p, seed=seed)
    rng = np.random.default_rng(seed)
    d = conj_data(rng, m, p, k=2, real=1)
    red = interpolatory_reduce(sys, d)
    rep = verify_interpolation(sys, red, d)
    assert max(r for *_, r in rep.right + rep.left) < 1e-9
    assert max(r for *_, r in rep.bitangential) < 1e-8


def test_separate_left_right_points(rng):
    sys = random_stable(12, 2, 2, seed=5)
    d = TangentData([0.5, 1.5], rng.standard_normal((2, 2)), [3.0, 4.0], rng.standard_normal((2, 2)))
    red = interpolatory_reduce(sys, d)
    rep = verify_interpolation(sys, red, d)
    assert rep.bitangential == []
    assert rep.max_residual < 1e-9


@pytest.mark.parametrize("orders", [[2, 2, 2, 2, 2], [3, 3, 3, 3, 3]])
def test_higher_order_hermite(orders):
    sys = random_stable(30, 2, 2, seed=6)
    rng = np.random.default_rng(6)
    d = conj_data(rng, 2, 2, k=2, real=1, orders=orders)
    red = interpolatory_reduce(sys, d)
    rep = verify_interpolation(sys, red, d)
    assert max(k for _, k, _ in rep.bitangential) == 2 * orders[0] - 1
    assert rep.max_residual < 1e-7


def test_unrelated_model_fails(example3, data3):
    other = random_stable(3, 2, 2, seed=7)
    assert verify_interpolation(example3, other, data3).max_residual > 1e-2
    assert verify_interpolation(example3, example3, data3).max_residual == 0.0


# -- feedthrough ------------------------------------------------------------------------


def test_feedthrough_zero_matches_projection(rng):
    sys = random_stable(10, 2, 2, seed=8)
    d = conj_data(rng, 2, 2)
    a = reduce_with_feedthrough(sys, d, np.zeros((2, 2)))
    b = interpolatory_reduce(sys, d, orthogonalize=False)
    for s in [0.2, 3j]:
        assert rel(a.transfer(s), b.transfer(s)) < 1e-10


def test_feedthrough_identity_example3(example3):
    d = TangentData([1.0, 2.0], [[1.0, 2.0], [2.0, -1.0]], [3.0, 4.0], [[3.0, 1.0], [1.0, 1.0]])
    red = reduce_with_feedthrough(example3, d, np.eye(2))
    np.testing.assert_array_equal(red.D, np.eye(2))
    rep = verify_interpolation(example3, red, d)
    assert max(r for *_, r in rep.right + rep.left) < 1e-10


def test_feedthrough_degenerate_point_rejected(example3, data3):
    # with this D_r the reduced pole lands exactly on the interpolation point
    with pytest.raises(SingularReducedPencil):
        reduce_with_feedthrough(example3, data3, np.eye(2))


def test_feedthrough_limit(rng):
    sys = random_stable(8, seed=9)
    d = conj_data(rng, 1, 1)
    red = reduce_with_feedthrough(sys, d, [[5.0]])
    assert red.transfer(1e12)[0, 0].real == pytest.approx(5.0, rel=1e-6)
    assert verify_interpolation(sys, red, TangentData(d.right_points, d.right_dirs, [], np.zeros((0, 1)))
                                ).max_residual < 1e-9
