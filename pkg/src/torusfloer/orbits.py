"""Location and classification of contractible 1-periodic orbits."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import conley_zehnder
from .errors import DegenerateOrbitError
from .hamiltonian import (
    SymplecticPath,
    TrigHamiltonian,
    eval_h,
    flow_map,
    flow_orbit_samples,
    hess_h,
    monodromy,
)
from .loopspace import (
    FourierLoop,
    _complexify,
    _realify,
    eval_loop_lifted,
    loop_from_samples,
    reduce_mod_half,
)

log = logging.getLogger(__name__)


@dataclass
class PeriodicOrbit:
    """A nondegenerate contractible 1-periodic orbit.

    ``samples`` hold the lifted trajectory on a uniform t-grid including both
    endpoints; ``rel_index`` is filled by the index stage of the pipeline.
    """

    oid: int
    n: int
    samples: np.ndarray
    loop: FourierLoop
    action: float
    monodromy: SymplecticPath
    cz: int
    nondeg_margin: float
    rel_index: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def point(self) -> np.ndarray:
        return np.mod(self.samples[0], 1.0)

    def x_of_t(self, hi_loop: FourierLoop | None = None):
        """Trigonometric interpolant of the orbit, in the lift of ``samples``."""
        loop = hi_loop if hi_loop is not None else self.loop
        base_shift = self.samples[0] - np.asarray(
            eval_loop_lifted(loop, 0.0), dtype=float
        )

        def x_shifted(t):
            return np.asarray(eval_loop_lifted(loop, t), dtype=float) + base_shift

        return x_shifted


def torus_distance(p, q) -> float:
    return float(np.linalg.norm(reduce_mod_half(np.asarray(p) - np.asarray(q))))


def action_of(H: TrigHamiltonian, samples: np.ndarray) -> float:
    """Action from lifted orbit samples: 1/2 int w0(x', x) + int H(t, x).

    The time derivative is spectral; the quadrature is the uniform trapezoid
    rule, exact for band-limited integrands on this grid.
    """
    samples = np.asarray(samples, dtype=float)
    pts = samples
    if np.allclose(samples[0], samples[-1], atol=1e-6):
        pts = samples[:-1]
    M = pts.shape[0]
    n = pts.shape[1] // 2
    z = _complexify(pts, n)
    freqs = np.fft.fftfreq(M) * M
    dz = np.fft.ifft(np.fft.fft(z, axis=0) * (2j * np.pi) * freqs[:, None], axis=0)
    dx = _realify(dz)
    # w0(u, v) = <J0 u, v>
    Ju = np.concatenate([dx[:, n:], -dx[:, :n]], axis=1)
    sympl = 0.5 * np.sum(Ju * pts, axis=1)
    ts = np.arange(M) / M
    return float(np.mean(sympl + eval_h(H, ts, pts)))


def cz_of(orbit: PeriodicOrbit, tol_deg: float = 1e-6) -> int:
    """Conley-Zehnder index of the orbit's linearized-flow path."""
    mu = conley_zehnder.cz_index(orbit.monodromy, tol_deg=tol_deg)
    orbit.cz = mu
    return mu


def find_orbits(
    H: TrigHamiltonian,
    seed_grid: int = 8,
    tol_orbit: float = 1e-10,
    *,
    steps: int = 512,
    n_samples: int = 64,
    tol_deg: float = 1e-6,
    tol_symp: float = 1e-6,
    loop_N: int = 8,
    max_newton: int = 40,
) -> list[PeriodicOrbit]:
    """All contractible 1-periodic orbits, by Newton on the time-1 return map.

    Grid seeds that fail to converge are discarded (logged); converged points
    are deduplicated modulo integer translations and each survivor must pass
    the nondegeneracy check.  The list is sorted by action, descending.
    """
    n = H.n
    two_n = 2 * n
    grid = np.arange(seed_grid) / seed_grid
    seeds = np.array(np.meshgrid(*([grid] * two_n), indexing="ij")).reshape(two_n, -1).T

    # Newton on all seeds in lockstep; converged or hopeless ones freeze
    P = seeds.astype(float).copy()
    active = np.ones(len(P), dtype=bool)
    converged = np.zeros(len(P), dtype=bool)
    eye = np.eye(two_n)
    for _ in range(max_newton):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        Q, D = flow_map(H, P[idx], steps=steps)
        F = Q - P[idx]
        res = np.linalg.norm(F, axis=1)
        done = res < tol_orbit
        converged[idx[done]] = True
        active[idx[done]] = False
        rem = idx[~done]
        if rem.size == 0:
            continue
        A = D[~done] - eye
        try:
            step = np.linalg.solve(A, -F[~done][..., None])[..., 0]
        except np.linalg.LinAlgError:
            # singular return maps: drop the affected seeds one by one
            step = np.zeros_like(F[~done])
            for j in range(rem.size):
                try:
                    step[j] = np.linalg.solve(A[j], -F[~done][j])
                except np.linalg.LinAlgError:
                    active[rem[j]] = False
        lengths = np.linalg.norm(step, axis=1)
        big = lengths > 0.75
        step[big] *= (0.75 / lengths[big])[:, None]
        P[rem] += step
    for i in np.flatnonzero(~converged):
        log.info("seed %s discarded: Newton did not converge", seeds[i])

    found = []
    for p in np.mod(P[converged], 1.0):
        p[p > 1.0 - 10 * tol_orbit] = 0.0
        if all(torus_distance(p, q) > 10 * tol_orbit for q in found):
            found.append(p)

    orbits = []
    for p in found:
        _, D = flow_map(H, p, steps=steps)
        margin = abs(float(np.linalg.det(np.eye(two_n) - D)))
        if margin <= tol_deg:
            raise DegenerateOrbitError(
                f"orbit at {np.round(p, 6)} has |det(I - Dphi)| = {margin:.3e} "
                f"<= tol_deg = {tol_deg:.1e}",
                point=p,
            )
        samples = flow_orbit_samples(H, p, steps, n_samples)
        loop = loop_from_samples(samples[:-1], loop_N)
        hi_N = (n_samples - 2) // 2
        hi_loop = loop_from_samples(samples[:-1], hi_N)
        base_shift = samples[0] - eval_loop_lifted(hi_loop, 0.0)

        def x_of_t(t, _hi=hi_loop, _shift=base_shift):
            return np.asarray(eval_loop_lifted(_hi, t)) + _shift

        path = monodromy(H, x_of_t, steps=steps, tol_symp=tol_symp)
        act = action_of(H, samples)
        orbit = PeriodicOrbit(
            oid=-1,
            n=n,
            samples=samples,
            loop=loop,
            action=act,
            monodromy=path,
            cz=0,
            nondeg_margin=margin,
        )
        orbit.cz = conley_zehnder.cz_index(path, tol_deg=tol_deg, tol_symp=tol_symp)
        orbits.append(orbit)

    orbits.sort(key=lambda o: (-o.action, tuple(np.round(o.point, 9))))
    for i, o in enumerate(orbits):
        o.oid = i
    return orbits
