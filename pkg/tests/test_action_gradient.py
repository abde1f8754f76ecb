import numpy as np
import pytest

from torusfloer import action_gradient as ag
from torusfloer import loopspace as ls
from torusfloer.hamiltonian import TrigHamiltonian, TrigTerm

from test_hamiltonian import cos_cos_hamiltonian, perturbed_hamiltonian

EPS = 0.01
SPACE = ls.GalerkinSpace(1, 4)


def random_hs_vector(rng, space=SPACE, scale=0.3):
    v = scale * rng.standard_normal(space.dim_total)
    v[space.block(0)] = rng.uniform(0, 1, space.two_n)
    return v


class TestAction:
    def test_constant_loop_autonomous(self):
        H = cos_cos_hamiltonian()
        c = ls.constant_loop([0.0, 0.0], N=4)
        assert ag.action(H, c) == pytest.approx(2 * EPS, abs=1e-14)

    def test_pure_positive_mode_no_hamiltonian(self):
        H = TrigHamiltonian(1, ())
        x = ls.single_mode_loop(1, 4, 1, [1.0, 0.0])
        assert ag.action(H, x) == pytest.approx(-np.pi, rel=1e-13)

    def test_pure_negative_mode_no_hamiltonian(self):
        H = TrigHamiltonian(1, ())
        x = ls.single_mode_loop(1, 4, -1, [1.0, 0.0])
        assert ag.action(H, x) == pytest.approx(np.pi, rel=1e-13)


class TestGradient:
    def test_pure_plus_mode_flows_out(self):
        H = TrigHamiltonian(1, ())
        x = ls.single_mode_loop(1, 4, 1, [0.7, -0.2])
        g = ag.gradient(H, x)
        assert np.allclose(g.coeff(1), -x.coeff(1))
        assert np.allclose(g.base, 0.0)

    def test_constant_loop_zero_hamiltonian(self):
        H = TrigHamiltonian(1, ())
        g = ag.gradient(H, ls.constant_loop([0.4, 0.6], N=4))
        assert np.allclose(g.base, 0.0) and np.allclose(g.coeffs, 0.0)

    def test_saddle_is_critical(self):
        H = cos_cos_hamiltonian()
        c = ls.constant_loop([0.5, 0.0], N=4)
        g = ag.gradient(H, c)
        assert np.linalg.norm(ls.loop_to_flat(g)) < 1e-13

    def test_matches_hs_vector_version(self):
        rng = np.random.default_rng(1)
        H = perturbed_hamiltonian()
        x = ls.FourierLoop(1, 4, rng.uniform(0, 1, 2), 0.2 * rng.standard_normal((8, 2)))
        g_loop = ag.gradient(H, x)
        g_vec = ag.gradient_hs(H, SPACE, ls.loop_to_hs(x))
        # the loop form stores its base mod 1; the vector form is raw tangent data
        back = ls.hs_to_loop(SPACE, g_vec)
        assert np.allclose(g_loop.coeffs, back.coeffs, atol=1e-12)
        assert np.allclose(ls.reduce_mod_half(g_loop.base - back.base), 0.0, atol=1e-12)

    @pytest.mark.parametrize("N", [4, 8])
    def test_finite_difference_consistency(self, N):
        """Directional derivatives of the action match the gradient."""
        space = ls.GalerkinSpace(1, N)
        H = perturbed_hamiltonian()
        rng = np.random.default_rng(42 + N)
        h = 1e-5
        for _ in range(20):
            v = random_hs_vector(rng, space)
            d = rng.standard_normal(space.dim_total)
            d /= np.linalg.norm(d)
            fd = (
                ag.action_hs(H, space, v + h * d) - ag.action_hs(H, space, v - h * d)
            ) / (2 * h)
            exact = float(ag.gradient_hs(H, space, v) @ d)
            assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


class TestHessian:
    def test_zero_hamiltonian_exact_signs(self):
        H = TrigHamiltonian(1, ())
        hess = ag.hessian(H, ls.zero_loop(1, 4))
        expected = np.diag(-ag.quad_signs(SPACE))
        assert np.allclose(hess.matrix, expected, atol=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        H = perturbed_hamiltonian()
        hess = ag.hessian_hs(H, SPACE, random_hs_vector(rng))
        assert np.max(np.abs(hess.matrix - hess.matrix.T)) < 1e-12

    def test_constant_orbit_scalar_hessian_eigenvalues(self):
        # hess H = lam I at a constant loop: mode-k eigenvalue of the action
        # Hessian is -sign(k) + lam/(2 pi |k|); the base block gives lam
        lam = -4 * np.pi**2 * EPS
        H = cos_cos_hamiltonian()
        hess = ag.hessian(H, ls.constant_loop([0.0, 0.0], N=4))
        vals = np.sort(np.linalg.eigvalsh(hess.matrix))
        expected = [lam, lam]
        for k in range(1, 5):
            expected += [-1 + lam / (2 * np.pi * k)] * 2
            expected += [1 + lam / (2 * np.pi * k)] * 2
        assert np.allclose(vals, np.sort(expected), atol=1e-10)

    @pytest.mark.parametrize("N", [4, 8])
    def test_finite_difference_consistency(self, N):
        space = ls.GalerkinSpace(1, N)
        H = perturbed_hamiltonian()
        rng = np.random.default_rng(7 + N)
        h = 1e-5
        for _ in range(20):
            v = random_hs_vector(rng, space)
            d = rng.standard_normal(space.dim_total)
            d /= np.linalg.norm(d)
            fd = (
                ag.gradient_hs(H, space, v + h * d)
                - ag.gradient_hs(H, space, v - h * d)
            ) / (2 * h)
            exact = ag.hessian_hs(H, space, v).matrix @ d
            err = np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-12)
            assert err < 1e-6


class TestRelativeIndex:
    def _orbit_stub(self, point, n_samples=64):
        samples = np.tile(np.asarray(point, dtype=float), (n_samples + 1, 1))

        class Stub:
            pass

        o = Stub()
        o.samples = samples
        return o

    def test_census_indices(self):
        H = cos_cos_hamiltonian()
        cases = {
            (0.0, 0.0): 1,     # maximum of H
            (0.5, 0.5): -1,    # minimum
            (0.5, 0.0): 0,     # saddles
            (0.0, 0.5): 0,
        }
        for point, expected in cases.items():
            got = ag.relative_index(H, self._orbit_stub(point), SPACE)
            assert got == expected, point

    def test_projection_formula_agrees(self):
        H = cos_cos_hamiltonian()
        for point in [(0.0, 0.0), (0.5, 0.5), (0.5, 0.0)]:
            stub = self._orbit_stub(point)
            a = ag.relative_index(H, stub, SPACE)
            b = ag.relative_index_by_projection(H, stub, SPACE)
            assert a == b

    def test_stability_across_N(self):
        H = perturbed_hamiltonian()
        for N in (3, 5):
            space = ls.GalerkinSpace(1, N)
            got = ag.relative_index(H, self._orbit_stub((0.0, 0.0)), space)
            assert got == 1

    def test_commutator_band_decay(self):
        H = perturbed_hamiltonian()
        space = ls.GalerkinSpace(1, 12)
        v = ls.loop_to_hs(ls.constant_loop([0.2, 0.3], N=12))
        norms = ag.commutator_band_norms(H, space, v, cuts=[1, 2, 4, 8])
        assert all(b <= a * 0.75 for a, b in zip(norms, norms[1:]))

    def test_launch_frame_dimensions(self):
        H = cos_cos_hamiltonian()
        for point, expected_d in [((0.0, 0.0), 2), ((0.5, 0.0), 1)]:
            v = ls.loop_to_hs(ls.constant_loop(point, N=4))
            vals, vecs = ag.launch_frame(H, SPACE, v)
            assert vecs.shape[1] == expected_d
        # the minimum has no launch directions at all
        v = ls.loop_to_hs(ls.constant_loop([0.5, 0.5], N=4))
        vals, vecs = ag.launch_frame(H, SPACE, v)
        assert vecs.shape[1] == 0
