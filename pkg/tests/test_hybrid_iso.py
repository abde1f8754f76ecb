import numpy as np
import pytest

from torusfloer import hybrid_iso as hy
from torusfloer import loopspace as ls
from torusfloer import orbits as orb
from torusfloer.chain_algebra import GF2Matrix, Generator
from torusfloer.floer_solver import CylinderGrid, FloerParams

from test_hamiltonian import cos_cos_hamiltonian

SPACE = ls.GalerkinSpace(1, 4)


@pytest.fixture(scope="module")
def census():
    return orb.find_orbits(cos_cos_hamiltonian(), seed_grid=8)


class TestConstantSolution:
    def test_coupled_linearization_nonsingular(self, census):
        H = cos_cos_hamiltonian()
        for o in census:
            smin = hy.hybrid_constant_diagnostic(H, None, o, SPACE)
            assert smin > 1e-4, o.oid

    def test_basin_of_constant_solution(self, census):
        """Newton from random small guesses near the constant configuration
        converges back to it (uniqueness of the diagonal solution)."""
        H = cos_cos_hamiltonian()
        x = census[0]
        params = hy.HybridParams(floer=FloerParams(M_s=65))
        prob = hy.HybridProblem(H, None, SPACE, x, x, params)
        assert prob.index == 0
        rng = np.random.default_rng(3)
        L, M = 10.0, 65
        xp = prob.xp_flat
        for _ in range(3):
            xi0 = rng.standard_normal(prob.d)
            xi0 /= np.linalg.norm(xi0)
            tau0 = -10.0  # backward flight keeps the launch near the orbit
            vend = prob.morse_end(xi0, tau0)
            start = prob.hs_to_flat(vend)
            w = np.linspace(0, 1, M)
            vals = start[None, :] + np.outer(w, xp - start)
            vals += 1e-4 * rng.standard_normal(vals.shape)
            cyl = CylinderGrid(SPACE, 0.0, L, vals, (x.oid, x.oid))
            sol = prob.solve(xi0, tau0, cyl)
            assert sol.matching_defect < 1e-6
            assert sol.energy < 1e-10
            # the cylinder hugs the constant orbit
            assert np.max(np.abs(sol.cylinder.values - xp)) < 2e-3


class TestGenuineHybrid:
    def test_max_to_saddle_index_one_family(self, census):
        """A hybrid solutions exists for one index difference: half Morse
        line out of the maximum matched to a half cylinder into a saddle."""
        H = cos_cos_hamiltonian()
        x, y = census[0], census[1]
        params = hy.HybridParams(floer=FloerParams(M_s=97))
        prob = hy.HybridProblem(H, None, SPACE, x, y, params)
        assert prob.index == 1
        # aim the launch along the planar direction toward the saddle
        direction = np.zeros(SPACE.dim_total)
        direction[SPACE.block(0)] = np.asarray(y.point) - np.asarray(x.point)
        direction[SPACE.block(0)] = ls.reduce_mod_half(direction[SPACE.block(0)])
        xi0 = prob.frame.T @ (direction / np.linalg.norm(direction))
        xi0 /= np.linalg.norm(xi0)
        tau0 = 12.0
        L, M = 12.0, 97
        vend = prob.morse_end(xi0, tau0)
        start = prob.hs_to_flat(vend)
        w = np.linspace(0, 1, M)
        vals = start[None, :] + np.outer(w, prob.xp_flat - start)
        cyl = CylinderGrid(SPACE, 0.0, L, vals, (x.oid, y.oid))
        sol = prob.solve(xi0, tau0, cyl)
        assert sol.matching_defect < 1e-6
        gap = x.action - y.action
        assert 0 < sol.energy < gap + 1e-6
        # action of the matching slice dominates the cylinder energy budget
        from torusfloer.floer_solver import slice_action

        a0 = slice_action(H, SPACE, sol.cylinder.values[0])
        assert a0 <= x.action + 1e-8
        assert sol.energy == pytest.approx(a0 - y.action, abs=1e-6)


class TestCounts:
    def test_diagonal_is_one(self, census):
        H = cos_cos_hamiltonian()
        for o in census:
            hc = hy.count_hybrid(H, None, o, o, census, SPACE)
            assert hc.count == 1

    def test_equal_action_saddles_zero(self, census):
        H = cos_cos_hamiltonian()
        hc = hy.count_hybrid(H, None, census[1], census[2], census, SPACE)
        assert hc.count == 0
        hc = hy.count_hybrid(H, None, census[2], census[1], census, SPACE)
        assert hc.count == 0

    def test_wrong_action_order_zero(self, census):
        H = cos_cos_hamiltonian()

        class Fake:
            pass

        # pretend the minimum shares the maximum's index; energy still wins
        x = census[3]
        y = census[0]
        hc = hy.count_hybrid(H, None, x, y, census, SPACE)
        assert hc.count == 0


class TestPhi:
    def test_identity_phi_for_cos_cos(self, census):
        H = cos_cos_hamiltonian()
        phi, ledger = hy.build_phi(H, None, census, SPACE)
        for k, mat in phi.items():
            assert np.array_equal(mat.data, np.eye(mat.shape[0], dtype=np.uint8)), k

    def test_triangular_report(self, census):
        H = cos_cos_hamiltonian()
        phi, _ = hy.build_phi(H, None, census, SPACE)
        table = {}
        for o in census:
            table.setdefault(o.cz, []).append(o)
        gens = {}
        for k in table:
            table[k].sort(key=lambda o: (o.action, o.oid))
            gens[k] = [
                Generator(i, k, o.action, o.oid) for i, o in enumerate(table[k])
            ]
        rep = hy.check_triangular(phi, gens)
        assert rep.ok and rep.invertible

    def test_triangular_detects_violations(self):
        gens = {0: [Generator(0, 0, 0.0, 0), Generator(1, 0, 1.0, 1)]}
        ok = hy.check_triangular({0: GF2Matrix([[1, 1], [0, 1]])}, gens)
        assert ok.ok
        bad_diag = hy.check_triangular({0: GF2Matrix([[1, 0], [0, 0]])}, gens)
        assert not bad_diag.ok
        below = hy.check_triangular({0: GF2Matrix([[1, 0], [1, 1]])}, gens)
        assert not below.ok
