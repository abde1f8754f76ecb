import numpy as np
import pytest

from torusfloer import action_gradient as ag
from torusfloer import loopspace as ls
from torusfloer import morse_complex as mc
from torusfloer import orbits as orb
from torusfloer.chain_algebra import homology_ranks, verify_complex
from torusfloer.hamiltonian import TrigHamiltonian, eval_h, grad_h

from test_hamiltonian import cos_cos_hamiltonian, perturbed_hamiltonian

SPACE = ls.GalerkinSpace(1, 4)


# ---------------------------------------------------------------------------
# Independent planar oracle: the constant-loop torus is invariant under the
# gradient flow of an autonomous Hamiltonian, where the dynamics reduce to
# the planar downhill flow x' = -grad H.  Separatrix directions out of a
# critical point are counted by direct bisection of basin boundaries in 2-d.
# ---------------------------------------------------------------------------


def planar_flow(H, p, T=250.0, h=0.02, crit=None, r_trap=1e-6):
    x = np.asarray(p, dtype=float).copy()
    steps = int(T / h)
    for _ in range(steps):
        k1 = -grad_h(H, 0.0, x)
        k2 = -grad_h(H, 0.0, x + h / 2 * k1)
        k3 = -grad_h(H, 0.0, x + h / 2 * k2)
        k4 = -grad_h(H, 0.0, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if crit is not None:
            for j, c in enumerate(crit):
                if np.linalg.norm(ls.reduce_mod_half(x - c)) < r_trap:
                    return j, x
    if crit is not None:
        d = [np.linalg.norm(ls.reduce_mod_half(x - c)) for c in crit]
        return int(np.argmin(d)), x
    return None, x


def planar_separatrix_count(H, source, target, crit, n_dirs=256):
    """Brute-force count of downhill separatrices source -> target.

    A source with a one-dimensional unstable direction contributes its two
    rays; a local maximum is meshed over the full circle of directions with
    basin-boundary bisection.
    """
    hess = np.asarray(__import__("torusfloer.hamiltonian", fromlist=["hess_h"]).hess_h(
        H, 0.0, crit[source]
    ))
    vals, vecs = np.linalg.eigh(-hess)  # downhill flow linearization
    unstable = np.flatnonzero(vals > 0)

    def run(start):
        j, _ = planar_flow(H, start, crit=crit)
        return j

    if len(unstable) == 1:
        e = vecs[:, unstable[0]]
        return sum(run(crit[source] + 1e-3 * s * e) == target for s in (1, -1))

    def terminal(angle):
        return run(crit[source] + 1e-3 * np.array([np.cos(angle), np.sin(angle)]))

    angles = 2 * np.pi * np.arange(n_dirs) / n_dirs
    labels = [terminal(a) for a in angles]
    count = 0
    for i in range(n_dirs):
        a, b = angles[i], angles[i] + 2 * np.pi / n_dirs
        la, lb = labels[i], labels[(i + 1) % n_dirs]
        if la == target:
            count += 1  # direct hit is its own separatrix
            continue
        if lb == target or la == lb:
            continue
        for _ in range(45):
            mid = 0.5 * (a + b)
            lm = terminal(mid)
            if lm == target:
                count += 1
                break
            if lm == la:
                a = mid
            else:
                b = mid
    return count


@pytest.fixture(scope="module")
def setup():
    H = cos_cos_hamiltonian()
    orbits = orb.find_orbits(H, seed_grid=8)
    for o in orbits:
        o.rel_index = ag.relative_index(H, o, SPACE)
    params = mc.MorseParams(mesh=32)
    system = mc.FlowSystem(H, None, SPACE, orbits, params)
    return H, orbits, system, params


class TestIntegrateFlow:
    def test_start_at_critical_point_is_constant(self, setup):
        H, orbits, system, params = setup
        traj = mc.integrate_flow(system, system.orbit_vecs[0])
        assert traj.label[:2] == ("orbit", 0)
        assert traj.flow_time == 0.0

    def test_pure_mode_grows_exponentially_without_hamiltonian(self):
        H0 = TrigHamiltonian(1, ())
        params = mc.MorseParams()
        system = mc.FlowSystem(H0, None, SPACE, [], params)
        v0 = np.zeros(SPACE.dim_total)
        v0[SPACE.block(1)] = [1e-3, 0.0]
        traj = mc.integrate_flow(system, v0, horizon=2.0)
        assert traj.label == ("horizon",)
        growth = np.linalg.norm(traj.samples[-1][SPACE.block(1)]) / 1e-3
        assert growth == pytest.approx(np.exp(traj.flow_time), rel=1e-5)

    def test_launch_from_max_descends_monotonically(self, setup):
        H, orbits, system, params = setup
        _, frame = system.frames[0]
        start = system.orbit_vecs[0] + 1e-3 * (
            frame @ np.array([np.cos(0.4), np.sin(0.4)])
        )
        traj = mc.integrate_flow(system, start, source_oid=0)
        assert traj.label[0] == "orbit"
        assert traj.label[1] in (1, 2, 3)
        assert np.all(np.diff(traj.actions) < 1e-10)

    def test_constant_mode_torus_invariant(self, setup):
        H, orbits, system, params = setup
        _, frame = system.frames[0]
        start = system.orbit_vecs[0] + 1e-3 * frame[:, 0]
        traj = mc.integrate_flow(system, start, source_oid=0)
        nonconst = np.delete(traj.samples, SPACE.block(0), axis=1)
        assert np.max(np.abs(nonconst)) < 1e-9

    def test_trajectory_residual_small(self, setup):
        H, orbits, system, params = setup
        _, frame = system.frames[0]
        start = system.orbit_vecs[0] + 1e-3 * (
            frame @ np.array([np.cos(1.0), np.sin(1.0)])
        )
        traj = mc.integrate_flow(system, start, source_oid=0)
        assert mc.trajectory_residual(system, traj) < 1e-5


class TestPerturbation:
    def test_bound_and_vanishing(self, setup):
        H, orbits, system, params = setup
        rng = np.random.default_rng(11)
        K = mc.CompactPerturbation.seeded(
            SPACE, system.orbit_vecs, rng, magnitude=1e-3
        )
        for _ in range(40):
            v = rng.standard_normal(SPACE.dim_total) * 0.3
            v[SPACE.block(0)] = rng.uniform(0, 1, 2)
            g = np.linalg.norm(ag.gradient_hs(H, SPACE, v))
            assert np.linalg.norm(K(v, g)) <= 0.5e-3 * g + 1e-15
        for w in system.orbit_vecs:
            g = np.linalg.norm(ag.gradient_hs(H, SPACE, w))
            assert np.linalg.norm(K(w, g)) == 0.0


class TestCounting:
    def test_saddle_to_min_two_lines(self, setup):
        H, orbits, system, params = setup
        for saddle in (1, 2):
            found = mc.connection_counts(system, saddle, [3])
            assert found[3].count == 2
            assert len(found[3].witnesses) == 2

    def test_max_to_saddles_two_each(self, setup):
        H, orbits, system, params = setup
        found = mc.connection_counts(system, 0, [1, 2])
        assert found[1].count == 2
        assert found[2].count == 2

    def test_planar_oracle_agrees(self, setup):
        H, orbits, system, params = setup
        crit = [o.point for o in orbits]
        assert planar_separatrix_count(H, 0, 1, crit, n_dirs=64) == 2
        assert planar_separatrix_count(H, 1, 3, crit, n_dirs=16) == 2

    def test_equal_action_pair_has_no_connection(self, setup):
        H, orbits, system, params = setup
        # the two saddles have equal action; no trajectory can join them
        found = mc.connection_counts(system, 1, [2, 3])
        assert found[2].count == 0


class TestBoundary:
    def test_boundary_vanishes_and_squares_to_zero(self, setup):
        H, orbits, system, params = setup
        C, wits = mc.morse_boundary(H, None, orbits, SPACE, params)
        for k, mat in C.boundary.items():
            assert mat.is_zero(), f"degree {k}"
        assert verify_complex(C).ok
        assert homology_ranks(C) == {1: 1, 0: 2, -1: 1}

    def test_witness_energy_drop_matches_action_gap(self, setup):
        H, orbits, system, params = setup
        found = mc.connection_counts(system, 1, [3])
        for w in found[3].witnesses:
            assert w.actions[0] == pytest.approx(orbits[1].action, abs=1e-4)
            assert w.actions[-1] == pytest.approx(orbits[3].action, abs=1e-4)


@pytest.mark.slow
class TestCountStability:
    def test_half_launch_radius(self, setup):
        H, orbits, system, params = setup
        small = mc.MorseParams(mesh=32, r_launch=params.r_launch / 2)
        system2 = mc.FlowSystem(H, None, SPACE, orbits, small)
        found = mc.connection_counts(system2, 1, [3])
        assert found[3].count == 2

    def test_double_mode_cutoff(self, setup):
        H, orbits, system, params = setup
        space2 = ls.GalerkinSpace(1, 8)
        for o in orbits:
            o.rel_index = ag.relative_index(H, o, space2)
        system2 = mc.FlowSystem(H, None, space2, orbits, mc.MorseParams(mesh=32))
        found = mc.connection_counts(system2, 1, [3])
        assert found[3].count == 2
