import numpy as np
import pytest

from interpmor.coprime import ScalarSFunction
from interpmor.errors import SingularReducedK
from interpmor.interpolation import TangentData
from interpmor.parametric import (CoefficientFunction, ParametricCoprimeSystem, ParamTangentData,
                                  mass_spring, multipoint_bases, param_eval, param_reduce,
                                  parametric_reduce, sensitivity_residual)

P = ScalarSFunction.power
PI = np.array([0.2, 0.3])


def random_parametric(n, nu, m=1, p=1, seed=0):
    """``K = s I + A0 + sum_i k_i(p) A_i`` with positive coefficients and SPD ``A_i``."""
    rng = np.random.default_rng(seed)

    def spd():
        X = rng.standard_normal((n, n))
        return X @ X.T / n + 0.1 * np.eye(n)

    coefs = [CoefficientFunction("exp_affine", (0.1, rng.uniform(-1, 1, nu))),
             CoefficientFunction("polynomial", [(1.0, [0] * nu), (0.5, [2] + [0] * (nu - 1))]),
             CoefficientFunction("polynomial", [(2.0, [0] * nu), (1.0, [1] * nu)])]
    K = [(None, [(P(1), np.eye(n)), (P(0), spd() + rng.standard_normal((n, n)) * 0.05)])]
    K += [(c, [(P(0), spd())]) for c in coefs[:nu]]
    B = [(None, [(P(0), rng.standard_normal((n, m)))]),
         (CoefficientFunction.coordinate(0), [(P(0), rng.standard_normal((n, m)))])]
    C = [(None, [(P(0), rng.standard_normal((p, n)))]),
         (CoefficientFunction("exp_affine", (0.0, [0.5] * nu)), [(P(0), rng.standard_normal((p, n)))])]
    return ParametricCoprimeSystem(K, B, C, nu)


# -- the worked example ---------------------------------------------------------------


def test_example_values():
    ev = param_eval(mass_spring(), 1.0, PI)
    assert ev.value[0, 0].real == pytest.approx(1.7885e-1, abs=5e-5)
    assert ev.ds[0, 0].real == pytest.approx(-2.4814e-1, abs=5e-5)
    np.testing.assert_allclose(ev.grad[:, 0, 0].real, [-4.5894e-2, 1.9349e-2], atol=5e-7)


def test_example_bases_and_reduction():
    sys = mass_spring()
    d = ParamTangentData([PI], [TangentData.bitangential([1.0])])
    raw = multipoint_bases(sys, d, orthogonalize=False)
    np.testing.assert_allclose(raw.V.ravel(), [2.5661e-1, 1.7885e-1], atol=5e-5)
    np.testing.assert_allclose(raw.W.ravel(), [1.7885e-1, 4.2768e-1], atol=5e-5)
    red = param_reduce(sys, raw.V, raw.W)
    ev = red.evaluate(1.0, PI)
    assert ev.value[0, 0].real == pytest.approx(1.7885e-1, abs=5e-5)
    np.testing.assert_allclose(ev.grad[:, 0, 0].real, [-4.5894e-2, 1.9349e-2], atol=5e-7)
    rep = sensitivity_residual(sys, red, 1.0, PI)
    assert rep.max_residual < 1e-12


def test_gradient_finite_difference_example():
    sys = mass_spring()
    ev = sys.evaluate(1.0, PI)
    h = 1e-6
    for j in range(2):
        e = np.eye(2)[j] * h
        fd = (sys.transfer(1.0, PI + e) - sys.transfer(1.0, PI - e)) / (2 * h)
        assert abs(ev.grad[j] - fd).max() < 1e-5 * max(abs(fd).max(), 1e-3)


@pytest.mark.parametrize("seed", range(4))
def test_gradient_finite_difference_random(seed):
    rng = np.random.default_rng(seed)
    nu = int(rng.integers(1, 4))
    sys = random_parametric(int(rng.integers(5, 31)), nu, 2, 2, seed=seed)
    p0 = rng.uniform(0.1, 0.9, nu)
    s = 0.5 + 1j * rng.uniform(0, 2)
    ev = sys.evaluate(s, p0)
    h = 1e-6
    for j in range(nu):
        e = np.eye(nu)[j] * h
        fd = (sys.transfer(s, p0 + e) - sys.transfer(s, p0 - e)) / (2 * h)
        assert np.linalg.norm(ev.grad[j] - fd) < 1e-5 * max(np.linalg.norm(fd), 1e-3)


def test_coefficient_functions():
    p = np.array([0.5, 2.0])
    poly = CoefficientFunction("polynomial", [(3.0, [2, 1]), (1.0, [0, 0])])
    assert poly(p) == pytest.approx(3 * 0.25 * 2 + 1)
    np.testing.assert_allclose(poly.gradient(p), [3 * 2 * 0.5 * 2, 3 * 0.25])
    ex = CoefficientFunction("exp_affine", (0.1, [1.0, -1.0]))
    np.testing.assert_allclose(ex.gradient(p), np.array([1.0, -1.0]) * ex(p))
    assert CoefficientFunction.from_dict(poly.to_dict()) == poly
    with pytest.raises(ValueError):
        CoefficientFunction("sine", 1.0)


# -- reduction ---------------------------------------------------------------------------


def test_identity_bases():
    sys = random_parametric(6, 2, seed=1)
    red = param_reduce(sys, np.eye(6), np.eye(6))
    for s, p in [(0.5, [0.2, 0.4]), (1 + 2j, [0.9, 0.1])]:
        assert abs(red.transfer(s, p) - sys.transfer(s, p)).max() < 1e-12


def test_structure_preserved():
    sys = mass_spring()
    red = parametric_reduce(sys, ParamTangentData([PI], [TangentData.bitangential([1.0])]))
    assert red.group_counts == sys.group_counts
    assert red.group_counts["K"] == sys.nu + 1
    # every stored matrix of the reduced model is r-dimensional
    r = red.n
    for c, terms in red.K_groups:
        assert all(M.shape == (r, r) for _, M in terms)


def test_duplicate_points_truncated():
    sys = mass_spring()
    d1 = TangentData.bitangential([1.0])
    single = multipoint_bases(sys, ParamTangentData([PI], [d1]))
    double = multipoint_bases(sys, ParamTangentData([PI, PI], [d1, d1]))
    assert single.order == double.order == 1


def test_grid_interpolation():
    sys = mass_spring()
    data = ParamTangentData.grid([0.5, 2.0], [[0.18, 0.28], [0.22, 0.33]])
    red = parametric_reduce(sys, data)
    assert red.n == 2
    pairs = data.pairs()
    assert len(pairs) == 4
    for s, pi, r, l in pairs:
        assert sensitivity_residual(sys, red, s, pi, r, l).max_residual < 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_random_instances_all_conditions(seed):
    rng = np.random.default_rng(10 + seed)
    nu = int(rng.integers(1, 4))
    sys = random_parametric(int(rng.integers(10, 31)), nu, 2, 2, seed=seed)
    pts = rng.uniform(0.1, 0.9, (2, nu))
    z = 0.5 + 1j

    def conj_rows(k):
        v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        return np.vstack([v, v.conj(), rng.standard_normal(k)])
    data = ParamTangentData(pts, [TangentData.bitangential([z, np.conj(z), 1.5], conj_rows(2), conj_rows(2))
                                  for _ in pts])
    red = parametric_reduce(sys, data)
    for s, pi, r, l in data.pairs():
        assert sensitivity_residual(sys, red, s, pi, r, l).max_residual < 1e-9


def test_one_sided_projection():
    sys = mass_spring()
    d = ParamTangentData([PI], [TangentData.bitangential([1.0])])
    V = multipoint_bases(sys, d).V
    red = param_reduce(sys, V, V)
    rep = sensitivity_residual(sys, red, 1.0, PI)
    assert rep.right < 1e-12
    assert rep.hermite > 1e-3 and rep.gradient > 1e-3


def test_self_residual_zero():
    sys = mass_spring()
    assert sensitivity_residual(sys, sys, 2.0, [0.17, 0.31]).max_residual == 0.0


def test_box_enforced():
    sys = mass_spring()
    with pytest.raises(ValueError):
        sys.transfer(1.0, [0.5, 0.3])
    with pytest.raises(ValueError):
        sys.transfer(1.0, [0.2])


def test_reduced_singularity_detected():
    sys = mass_spring()
    V, W = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    # W^T K(s, p) V = -k2 - p2 s vanishes at s = -k2 / p2
    param_reduce(sys, V, W, probes=[(1.0, PI)])
    with pytest.raises(SingularReducedK):
        param_reduce(sys, V, W, probes=[(-2.0 / PI[1], PI)])
