import numpy as np
import pytest
from scipy.linalg import expm

from torusfloer import hamiltonian as ham
from torusfloer.loopspace import j0_matrix


EPS = 0.01


def cos_cos_hamiltonian(eps=EPS):
    """H = eps (cos 2 pi q + cos 2 pi p) on T^2."""
    return ham.TrigHamiltonian(
        1, (ham.TrigTerm(eps, (1, 0)), ham.TrigTerm(eps, (0, 1)))
    )


def perturbed_hamiltonian(eps=EPS, delta=0.001):
    """cos+cos plus a small t-dependent term delta cos 2 pi q cos 2 pi t."""
    return ham.TrigHamiltonian(
        1,
        (
            ham.TrigTerm(eps, (1, 0)),
            ham.TrigTerm(eps, (0, 1)),
            ham.TrigTerm(delta, (1, 0), 0.0, 1, 0.0),
        ),
    )


class TestEvaluation:
    def test_critical_point_values(self):
        H = cos_cos_hamiltonian()
        x = np.array([0.0, 0.0])
        assert ham.eval_h(H, 0.3, x) == pytest.approx(2 * EPS)
        assert np.allclose(ham.grad_h(H, 0.0, x), 0.0)
        assert np.allclose(ham.hess_h(H, 0.0, x), -4 * np.pi**2 * EPS * np.eye(2))

    def test_empty_hamiltonian(self):
        H = ham.TrigHamiltonian(1, ())
        x = np.array([0.3, 0.4])
        assert ham.eval_h(H, 0.0, x) == 0.0
        assert np.allclose(ham.grad_h(H, 0.0, x), 0.0)
        assert np.allclose(ham.hess_h(H, 0.0, x), 0.0)

    def test_saddle_point(self):
        H = cos_cos_hamiltonian()
        x = np.array([0.5, 0.0])
        assert ham.eval_h(H, 0.0, x) == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(ham.grad_h(H, 0.0, x), 0.0, atol=1e-14)
        expected = np.diag([4 * np.pi**2 * EPS, -4 * np.pi**2 * EPS])
        assert np.allclose(ham.hess_h(H, 0.0, x), expected)

    def test_broadcasting(self):
        H = perturbed_hamiltonian()
        ts = np.linspace(0, 1, 7)
        xs = np.random.default_rng(0).uniform(0, 1, (7, 2))
        vals = ham.eval_h(H, ts, xs)
        assert vals.shape == (7,)
        for i in range(7):
            assert vals[i] == pytest.approx(float(ham.eval_h(H, ts[i], xs[i])))
        g = ham.grad_h(H, ts, xs)
        assert g.shape == (7, 2)

    def test_finite_difference_consistency_order(self):
        H = perturbed_hamiltonian()
        rng = np.random.default_rng(5)
        orders_g, orders_h = [], []
        for _ in range(10):
            x = rng.uniform(0, 1, 2)
            t = rng.uniform(0, 1)
            v = rng.standard_normal(2)
            v /= np.linalg.norm(v)
            errs_g, errs_h = [], []
            for h in (1e-3, 5e-4):
                fd_g = (ham.eval_h(H, t, x + h * v) - ham.eval_h(H, t, x - h * v)) / (2 * h)
                errs_g.append(abs(fd_g - float(ham.grad_h(H, t, x) @ v)))
                fd_h = (ham.grad_h(H, t, x + h * v) - ham.grad_h(H, t, x - h * v)) / (2 * h)
                errs_h.append(np.linalg.norm(fd_h - ham.hess_h(H, t, x) @ v))
            orders_g.append(np.log2(errs_g[0] / errs_g[1]) / np.log2(2.0))
            orders_h.append(np.log2(errs_h[0] / errs_h[1]) / np.log2(2.0))
        assert np.median(orders_g) > 1.9
        assert np.median(orders_h) > 1.9


class TestVectorField:
    def test_j0_rotation(self):
        H = cos_cos_hamiltonian()
        x = np.array([0.13, 0.71])
        g = ham.grad_h(H, 0.0, x)
        xh = ham.vector_field_xh(H, 0.0, x)
        assert np.allclose(xh, [g[1], -g[0]])

    def test_quarter_point(self):
        H = ham.TrigHamiltonian(1, (ham.TrigTerm(EPS, (1, 0)),))
        x = np.array([0.25, 0.0])
        g = ham.grad_h(H, 0.0, x)
        assert np.allclose(g, [-2 * np.pi * EPS, 0.0])
        assert np.allclose(ham.vector_field_xh(H, 0.0, x), [0.0, 2 * np.pi * EPS])

    def test_critical_point_zero(self):
        H = cos_cos_hamiltonian()
        assert np.allclose(ham.vector_field_xh(H, 0.5, np.zeros(2)), 0.0)


class TestFlow:
    def test_zero_hamiltonian_identity(self):
        H = ham.TrigHamiltonian(1, ())
        p = np.array([0.2, 0.9])
        x, D = ham.flow_map(H, p, steps=16)
        assert np.allclose(x, p)
        assert np.allclose(D, np.eye(2))

    def test_critical_point_linearization_matches_exponential(self):
        H = cos_cos_hamiltonian()
        p = np.zeros(2)
        x, D = ham.flow_map(H, p, steps=256)
        assert np.allclose(x, p, atol=1e-12)
        exact = expm(j0_matrix(1) @ ham.hess_h(H, 0.0, p))
        assert np.allclose(D, exact, atol=1e-10)

    def test_symplecticity_defect(self):
        H = cos_cos_hamiltonian()
        J = j0_matrix(1)
        p = np.array([0.17, 0.43])
        _, D = ham.flow_map(H, p, steps=512)
        assert np.max(np.abs(D.T @ J @ D - J)) < 1e-8

    def test_autonomous_energy_drift_order(self):
        H = cos_cos_hamiltonian(eps=0.3)
        p = np.array([0.21, 0.68])
        drifts = []
        for steps in (64, 128):
            x, _ = ham.flow_map(H, p, steps=steps)
            drifts.append(abs(float(ham.eval_h(H, 0.0, x) - ham.eval_h(H, 0.0, p))))
        assert drifts[1] < drifts[0] / 8  # at least ~order 3 observed, expect 4


class TestMonodromy:
    def test_zero_hamiltonian_constant_identity(self):
        H = ham.TrigHamiltonian(1, ())
        path = ham.monodromy(H, lambda t: np.zeros(2), steps=64)
        assert np.allclose(path.mats, np.eye(2))

    def test_constant_orbit_scalar_hessian_rotation(self):
        lam = 0.35
        H = ham.TrigHamiltonian(1, ())
        J = j0_matrix(1)

        # synthetic generator S = lam I through path_from_generator
        path = ham.path_from_generator(1, lambda t: lam * np.eye(2), steps=128)
        for t, mat in zip(path.ts[::16], path.mats[::16]):
            assert np.allclose(mat, expm(J * lam * t), atol=1e-10)

    def test_hyperbolic_block(self):
        lam = 0.2
        S = np.diag([lam, -lam])
        path = ham.path_from_generator(1, lambda t: S, steps=128)
        J = j0_matrix(1)
        end_exact = expm(J @ S)
        assert np.allclose(path.end(), end_exact, atol=1e-10)
        d = np.linalg.det(np.eye(2) - path.end())
        assert abs(d) > 1e-4

    def test_perturbed_orbit_monodromy_defect(self):
        H = perturbed_hamiltonian()
        path = ham.monodromy(H, lambda t: np.zeros(2), steps=512)
        assert path.symp_defect() < 1e-6

    def test_time_average(self):
        H = perturbed_hamiltonian()
        Hbar = H.time_average()
        assert len(Hbar.terms) == 2
        x = np.array([0.3, 0.6])
        ts = np.linspace(0, 1, 400, endpoint=False)
        avg = float(np.mean(ham.eval_h(H, ts, np.broadcast_to(x, (400, 2)))))
        assert avg == pytest.approx(float(ham.eval_h(Hbar, 0.0, x)), abs=1e-12)
