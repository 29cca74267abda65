"""End-to-end acceptance checks, one test per criterion.

Each test runs inside the ``criterion`` fixture, which times it against its
budget and records a PASS or FAIL line printed in the terminal summary.
"""

import json

import numpy as np
import pytest

from conftest import index1, random_stable, rel
from interpmor import io
from interpmor.cli import EXIT_OK, main
from interpmor.coprime import delay_family
from interpmor.dae import additive_decomposition, dae_reduce
from interpmor.errors import ReductionError
from interpmor.h2 import (IrkaConfig, _pack, _unpack, h2_error_norm, h2_error_sq, h2_gradient, irka,
                          optimality_residuals, real_gradient)
from interpmor.interpolation import (TangentData, build_left_basis, build_right_basis,
                                     interpolatory_reduce, petrov_galerkin_reduce,
                                     verify_interpolation)
from interpmor.loewner import SampledTransfer, loewner_build, tf_irka
from interpmor.lti import DescriptorSystem, h2_norm, h2_norm_quadrature, is_stable, pole_residue
from interpmor.parametric import (ParamTangentData, mass_spring, multipoint_bases, param_eval,
                                  param_reduce)
from interpmor.weighted import (WeightSystem, fmap_direct, fmap_realization, weighted_h2_norm,
                                weighted_optimality_residuals)


def probes(k=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 3, k) + 1j * rng.uniform(-5, 5, k)


def conj_closed_data(rng, r, m, p, lo, hi):
    """Random conjugate-closed bitangential data with magnitudes log-uniform in [lo, hi]."""
    k = int(rng.integers(0, r // 2 + 1))
    z = np.exp(rng.uniform(np.log(lo), np.log(hi), k)) * (1 + 1j * rng.uniform(0.1, 2, k))
    x = np.exp(rng.uniform(np.log(lo), np.log(hi), r - 2 * k))
    R = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
    L = rng.standard_normal((k, p)) + 1j * rng.standard_normal((k, p))
    return TangentData.bitangential(np.concatenate([z, z.conj(), x]),
                                    np.vstack([R, R.conj(), rng.standard_normal((r - 2 * k, m))]),
                                    np.vstack([L, L.conj(), rng.standard_normal((r - 2 * k, p))]))


def test_worked_example(criterion, example3):
    with criterion(1, "worked 3 x 3 example reproduced exactly", limit=1.0):
        d = TangentData.bitangential([0.0], [[1.0, 2.0]], [[3.0, 1.0]])
        np.testing.assert_allclose(build_right_basis(example3, d).real.ravel(), [-2, -1, 4], atol=1e-10)
        np.testing.assert_allclose(build_left_basis(example3, d).real.ravel(), [0.5, -1, 6.5], atol=1e-10)
        red = interpolatory_reduce(example3, d, orthogonalize=False)
        np.testing.assert_allclose([red.E[0, 0], red.A[0, 0]], [26, -5], atol=1e-10)
        np.testing.assert_allclose(red.B, [[6, -0.5]], atol=1e-10)
        np.testing.assert_allclose(red.C, [[2], [-1]], atol=1e-10)
        r, l = np.array([1.0, 2.0]), np.array([3.0, 1.0])
        np.testing.assert_allclose(red.transfer(0) @ r, [2, -1], atol=1e-10)
        np.testing.assert_allclose(l @ red.transfer(0), [6, -0.5], atol=1e-10)
        assert abs(l @ red.transfer_derivative(0) @ r + 26) < 1e-10
        V = np.linalg.solve(-example3.A, example3.B)
        W = np.linalg.solve(-example3.A.T, example3.C.T)
        full = petrov_galerkin_reduce(example3, V, W)
        np.testing.assert_allclose(full.transfer(0), [[5 / 3, 1 / 6], [1, -1]], atol=1e-10)
        np.testing.assert_allclose(full.transfer_derivative(0),
                                   [[-55 / 18, -71 / 36], [-8 / 3, -7 / 6]], atol=1e-10)


def test_mass_spring(criterion):
    with criterion(2, "mass-spring parametric example", limit=1.0):
        sys, pi = mass_spring(), np.array([0.2, 0.3])
        bases = multipoint_bases(sys, ParamTangentData([pi], [TangentData.bitangential([1.0])]),
                                 orthogonalize=False)
        np.testing.assert_allclose(bases.V.real.ravel(), [2.5661e-1, 1.7885e-1], rtol=1e-4)
        np.testing.assert_allclose(bases.W.real.ravel(), [1.7885e-1, 4.2768e-1], rtol=1e-4)
        full = param_eval(sys, 1.0, pi)
        printed = [1.7885e-1, -2.4814e-1, -4.5894e-2, 1.9349e-2]
        values = [full.value[0, 0], full.ds[0, 0], *full.grad[:, 0, 0]]
        np.testing.assert_allclose(np.real(values), printed, rtol=1e-4)
        red = param_reduce(sys, bases.V, bases.W).evaluate(1.0, pi)
        reduced = [red.value[0, 0], red.ds[0, 0], *red.grad[:, 0, 0]]
        np.testing.assert_allclose(reduced, values, rtol=1e-9, atol=0)


def test_irka_optimality(criterion):
    with criterion(3, "IRKA optimality on 20 random systems", limit=120.0):
        failures = []
        for k in range(20):
            rng = np.random.default_rng(1000 + k)
            n, m, r = int(rng.integers(10, 41)), int(rng.integers(1, 4)), int(rng.integers(2, 7))
            sys = random_stable(n, m, m, seed=1000 + k)
            res = irka(sys, IrkaConfig(r=r, restarts=4, polish=True))
            if not res.converged:
                failures.append(f"instance {k}: not converged")
                continue
            if res.optimality.max_residual >= 1e-7:
                failures.append(f"instance {k}: residual {res.optimality.max_residual:.2e}")
            err = h2_error_norm(sys, pole_residue(res.reduced))
            lam = np.abs(np.linalg.eigvals(sys.A))
            best = np.inf
            for _ in range(50):
                try:
                    red = interpolatory_reduce(sys, conj_closed_data(rng, r, m, m, lam.min(), lam.max()))
                except ReductionError:
                    continue
                if is_stable(red).stable:
                    best = min(best, h2_norm(sys - red))
            if err > best:
                failures.append(f"instance {k}: error {err:.6e} above random {best:.6e}")
        assert not failures, "; ".join(failures)


def test_h2_consistency(criterion):
    with criterion(4, "H2 error formula, state space and quadrature agree", limit=60.0):
        for k in range(10):
            rng = np.random.default_rng(k)
            n, r, m = int(rng.integers(4, 13)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
            sys, red = random_stable(n, m, m, seed=k), random_stable(r, m, m, seed=100 + k)
            a = h2_error_norm(sys, pole_residue(red))
            b = h2_norm(sys - red)
            c = h2_norm_quadrature(sys - red)
            assert abs(a - b) <= 1e-5 * b and abs(a - c) <= 1e-5 * c and abs(b - c) <= 1e-5 * c
        one = DescriptorSystem([[-1.0]], [[1.0]], [[1.0]])
        two = DescriptorSystem([[-2.0]], [[1.0]], [[1.0]])
        assert abs(h2_error_norm(one, pole_residue(two)) - np.sqrt(1 / 12)) < 1e-10


def test_gradients(criterion):
    with criterion(5, "H2 gradients against finite differences", limit=60.0):
        worst = 0.0
        for k in range(10):
            rng = np.random.default_rng(20 + k)
            n, r = int(rng.integers(6, 21)), int(rng.integers(1, 5))
            sys = random_stable(n, 2, 2, seed=20 + k)
            pr = pole_residue(random_stable(r, 2, 2, seed=70 + k))
            nrm2 = h2_norm(sys) ** 2
            x = _pack(pr)
            g = real_gradient(h2_gradient(sys, pr), pr)
            h = 1e-6
            fd = np.array([(h2_error_sq(sys, _unpack(x + h * e, pr), nrm2)
                            - h2_error_sq(sys, _unpack(x - h * e, pr), nrm2)) / (2 * h)
                           for e in np.eye(x.size)])
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1.0))
        assert worst < 1e-5, f"finite-difference deviation {worst:.2e}"
        for k in range(3):
            sys = random_stable(16, 2, 2, seed=8 + k)
            res = irka(sys, IrkaConfig(r=3, max_iters=500))
            assert res.converged
            pr = pole_residue(res.reduced)
            assert h2_gradient(sys, pr).real_norm(pr) < 1e-6 * h2_norm(sys) ** 2


def test_loewner_and_tf_irka(criterion, tmp_path):
    with criterion(6, "Loewner conditions, exact recovery and delay benchmark", limit=120.0):
        for k in range(5):
            rng = np.random.default_rng(30 + k)
            sys = random_stable(int(rng.integers(6, 16)), 2, 2, seed=30 + k)
            d = conj_closed_data(rng, 5, 2, 2, 0.3, 3.0)
            red = loewner_build(SampledTransfer.of(sys), d).to_system()
            rep = verify_interpolation(sys, red, d)
            assert len(rep.right) + len(rep.left) + len(rep.bitangential) == 3 * 5
            assert rep.max_residual < 1e-10, f"Hermite residual {rep.max_residual:.2e}"

        exact = random_stable(4, 1, 1, seed=9)
        res = tf_irka(SampledTransfer.of(exact), IrkaConfig(r=4))
        pts = probes(20, seed=1)
        assert max(rel(res.reduced.transfer(s), exact.transfer(s)) for s in pts) < 1e-8

        io.write_system(tmp_path / "delay.json", delay_family(100, kappa=3.0, tau=0.1))
        out = tmp_path / "tf"
        assert main(["tfirka", "--system", str(tmp_path / "delay.json"), "--order", "10", "--pade2",
                     "--freq-min", "1e-2", "--freq-max", "1e2", "--out", str(out)]) == EXIT_OK
        dev = json.loads((out / "report.json").read_text())["result"]["max_log10_deviation"]
        assert dev["tfirka"] < dev["pade2"], dev


def test_dae_polynomial_part(criterion):
    with criterion(7, "DAE reduction keeps the polynomial part", limit=30.0):
        for k in range(3):
            sys = index1(seed=40 + k)
            rng = np.random.default_rng(40 + k)
            d = TangentData.bitangential([0.3, 1.0, 2.5], rng.standard_normal((3, 2)),
                                         rng.standard_normal((3, 2)))
            red = dae_reduce(sys, d).system
            _, P = additive_decomposition(sys)
            _, Pr = additive_decomposition(red)
            for s in probes(seed=k):
                assert rel(Pr.transfer(s), P.transfer(s)) < 1e-9
            # the error is strictly proper: no constant offset, decay like 1/omega
            far = np.abs(red.transfer(1e6j) - sys.transfer(1e6j)).max()
            mid = np.abs(red.transfer(1e3j) - sys.transfer(1e3j)).max()
            assert far < 1e-4 * np.abs(sys.transfer(1e6j)).max()
            assert far < 2e-3 * mid


def test_weighted(criterion):
    with criterion(8, "weighted-H2 F-map, identity weight and matrix equations", limit=30.0):
        for k in range(3):
            sys = random_stable(7, 2, 2, seed=50 + k)
            w = random_stable(k + 2, 2, 2, seed=60 + k)
            D = np.random.default_rng(k).standard_normal((2, 2))
            W = WeightSystem(w.A, w.B, w.C, D)
            F = fmap_realization(sys, W)
            for s in probes(seed=k):
                assert rel(F.transfer(s), fmap_direct(sys, W, s)) < 1e-8
            Aw, Bw, Cw, Dw = W.A_w, W.B_w, W.C_w, W.D_w
            scale = max(np.abs(Aw).max() * np.abs(F.P_w).max(), np.abs(Bw).max() ** 2, 1.0)
            lyap = Aw @ F.P_w + F.P_w @ Aw.T + Bw @ Bw.T
            syl = sys.A @ F.Z + F.Z @ Aw.T + sys.B @ (Cw @ F.P_w + Dw @ Bw.T)
            assert np.abs(lyap).max() < 1e-9 * scale
            assert np.abs(syl).max() < 1e-9 * max(scale, np.abs(sys.A).max() * np.abs(F.Z).max())

        sys = random_stable(10, 2, 2, seed=59)
        red = irka(sys, IrkaConfig(r=3)).reduced
        eye = WeightSystem.identity(2)
        F = fmap_realization(sys, eye)
        for s in probes():
            assert rel(F.transfer(s), sys.transfer(s)) < 1e-12
        assert abs(weighted_h2_norm(sys, red, eye) - h2_norm(sys - red)) < 1e-12 * h2_norm(sys)
        a = weighted_optimality_residuals(sys, red, eye).interpolation.max_residual
        b = optimality_residuals(sys, pole_residue(red)).max_residual
        assert abs(a - b) < 1e-12


def test_io_and_determinism(criterion, tmp_path):
    with criterion(9, "bit-exact file round trip and deterministic reports", limit=60.0):
        rng = np.random.default_rng(9)
        sys = random_stable(7, 2, 3, seed=9, descriptor=True)
        sys = DescriptorSystem(sys.A, sys.B, sys.C, rng.standard_normal((3, 2)) / 3, sys.E)
        io.write_system(tmp_path / "s.json", sys)
        back = io.read_system(tmp_path / "s.json")
        for name in "EABCD":
            assert np.array_equal(getattr(back, name), getattr(sys, name))
        io.write_system(tmp_path / "p.json", random_stable(15, 2, 2, seed=10))
        runs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["irka", "--system", str(tmp_path / "p.json"), "--order", "3", "--init", "random",
                         "--seed", "11", "--out", str(out)]) == EXIT_OK
            runs.append(out)
        files = sorted(p.name for p in runs[0].iterdir())
        assert files == sorted(p.name for p in runs[1].iterdir()) and "report.json" in files
        for name in files:
            assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
