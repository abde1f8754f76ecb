import numpy as np
import pytest

from torusfloer import action_gradient as ag
from torusfloer import loopspace as ls
from torusfloer import orbits as orb
from torusfloer.errors import DegenerateOrbitError
from torusfloer.hamiltonian import TrigHamiltonian, eval_h, flow_map, flow_points

from test_hamiltonian import cos_cos_hamiltonian, perturbed_hamiltonian

EPS = 0.01


@pytest.fixture(scope="module")
def census():
    return orb.find_orbits(cos_cos_hamiltonian(), seed_grid=8)


class TestCensus:
    def test_four_orbits(self, census):
        assert len(census) == 4
        expected_points = {(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)}
        got = {tuple(np.round(o.point, 6)) for o in census}
        assert got == expected_points

    def test_actions_sorted_descending(self, census):
        acts = [o.action for o in census]
        assert acts == sorted(acts, reverse=True)
        assert acts[0] == pytest.approx(2 * EPS, abs=1e-12)
        assert acts[1] == pytest.approx(0.0, abs=1e-12)
        assert acts[2] == pytest.approx(0.0, abs=1e-12)
        assert acts[3] == pytest.approx(-2 * EPS, abs=1e-12)

    def test_cz_indices(self, census):
        assert [o.cz for o in census] == [1, 0, 0, -1]

    def test_nondegeneracy_margins(self, census):
        assert all(o.nondeg_margin > 1e-6 for o in census)

    def test_brute_force_basin_oracle(self):
        """Independent check: |phi(p) - p| on a fine grid has exactly the
        four census points as near-zeros."""
        H = cos_cos_hamiltonian()
        grid = 64
        pts = np.array(
            [(i / grid, j / grid) for i in range(grid) for j in range(grid)]
        )
        qs = flow_points(H, pts, steps=64)
        resid = np.linalg.norm(ls.reduce_mod_half(qs - pts), axis=1)
        small = pts[resid < 5e-4]
        # near-zeros cluster around the four fixed points only
        anchors = np.array([[0, 0], [0, 0.5], [0.5, 0], [0.5, 0.5]])
        for p in small:
            d = min(np.linalg.norm(ls.reduce_mod_half(p - a)) for a in anchors)
            assert d < 0.05

    def test_seed_grid_doubling_stable(self, census):
        again = orb.find_orbits(cos_cos_hamiltonian(), seed_grid=16)
        assert len(again) == len(census)
        for a, b in zip(census, again):
            assert orb.torus_distance(a.point, b.point) < 1e-9

    def test_euler_characteristic(self, census):
        n = 1
        assert sum((-1) ** (o.cz + n) for o in census) == 0


class TestDegenerate:
    def test_zero_hamiltonian_raises(self):
        with pytest.raises(DegenerateOrbitError):
            orb.find_orbits(TrigHamiltonian(1, ()), seed_grid=2)


class TestPerturbed:
    def test_orbits_persist(self):
        H = perturbed_hamiltonian()
        found = orb.find_orbits(H, seed_grid=8)
        assert len(found) == 4
        anchors = np.array([[0, 0], [0, 0.5], [0.5, 0], [0.5, 0.5]])
        for o in found:
            d = min(orb.torus_distance(o.point, a) for a in anchors)
            assert d < 0.05

    def test_perturbed_indices_and_actions(self):
        H = perturbed_hamiltonian()
        found = orb.find_orbits(H, seed_grid=8)
        assert [o.cz for o in found] == [1, 0, 0, -1]
        assert found[0].action == pytest.approx(2 * EPS, abs=1e-9)
        assert found[1].action == pytest.approx(0.0, abs=1e-9)


class TestAction:
    def test_constant_orbit_action_is_h(self, census):
        for o in census:
            H = cos_cos_hamiltonian()
            assert o.action == pytest.approx(
                float(eval_h(H, 0.0, o.point)), abs=1e-12
            )

    def test_single_mode_loop_action(self):
        """A pure k=1 mode loop with H = 0 has action -pi |v|^2, matching the
        quadratic form evaluated by the action module."""
        H = TrigHamiltonian(1, ())
        v = np.array([0.37, -0.11])
        x = ls.single_mode_loop(1, 4, 1, v)
        ts = np.arange(65) / 64
        samples = ls.eval_loop_lifted(x, ts)
        a1 = orb.action_of(H, samples)
        a2 = ag.action(H, x)
        assert a1 == pytest.approx(-np.pi * float(v @ v), rel=1e-12)
        assert a1 == pytest.approx(a2, rel=1e-12)

    def test_lift_invariance(self, census):
        H = cos_cos_hamiltonian()
        o = census[0]
        shifted = o.samples + np.array([2.0, -1.0])
        assert orb.action_of(H, shifted) == pytest.approx(o.action, abs=1e-12)


class TestIndexAgreement:
    @pytest.mark.parametrize("N", [4, 6])
    def test_m_equals_mu(self, census, N):
        H = cos_cos_hamiltonian()
        space = ls.GalerkinSpace(1, N)
        for o in census:
            m = ag.relative_index(H, o, space)
            assert m == o.cz

    def test_m_equals_mu_perturbed(self):
        H = perturbed_hamiltonian()
        space = ls.GalerkinSpace(1, 4)
        for o in orb.find_orbits(H, seed_grid=8):
            assert ag.relative_index(H, o, space) == o.cz
