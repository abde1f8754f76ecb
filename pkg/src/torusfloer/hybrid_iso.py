"""Hybrid half-trajectory/half-cylinder solutions and the chain map they count.

A hybrid solution couples a negative-gradient half-trajectory launched from
the unstable sphere of one orbit with a Floer half-cylinder pinned to another
orbit at the far end; the two meet at the s = 0 slice.  The counts of these
solutions between equal-index orbits assemble the chain map between the
gradient-flow and Floer complexes, which is upper triangular with unit
diagonal once generators are ordered by action.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .action_gradient import drift_spectrum, gradient_hs
from .chain_algebra import GF2Matrix
from .errors import NewtonError, StructuralError
from .floer_solver import (
    CylinderGrid,
    FloerParams,
    _mt,
    box_residual,
    energy,
    orbit_flat_vector,
    slice_linearization,
)
from .hamiltonian import TrigHamiltonian
from .loopspace import GalerkinSpace, loop_from_samples, loop_to_hs

log = logging.getLogger(__name__)


@dataclass
class HybridParams:
    floer: FloerParams = field(default_factory=FloerParams)
    r_launch: float = 1e-3
    tol_match: float = 1e-6
    flow_step: float = 0.02
    newton_max: int = 40
    multistart: int = 8
    m_left: int = 48


@dataclass
class HybridSolution:
    xi: np.ndarray
    tau: float
    morse_times: np.ndarray
    morse_samples: np.ndarray  # hs coordinates
    cylinder: CylinderGrid
    matching_defect: float
    endpoints: tuple
    energy: float
    info: dict = field(default_factory=dict)


def _rk4_flow(system_drift, v0, tau, step):
    """Fixed-step RK4 flow over [0, tau]; returns the end state."""
    n = max(8, int(np.ceil(abs(tau) / step)))
    h = tau / n
    v = np.asarray(v0, dtype=float).copy()
    for _ in range(n):
        k1 = system_drift(v)
        k2 = system_drift(v + h / 2 * k1)
        k3 = system_drift(v + h / 2 * k2)
        k4 = system_drift(v + h * k3)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


def _rk4_flow_path(system_drift, v0, tau, step):
    n = max(8, int(np.ceil(abs(tau) / step)))
    h = tau / n
    v = np.asarray(v0, dtype=float).copy()
    ts = [0.0]
    out = [v.copy()]
    for i in range(n):
        k1 = system_drift(v)
        k2 = system_drift(v + h / 2 * k1)
        k3 = system_drift(v + h / 2 * k2)
        k4 = system_drift(v + h * k3)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ts.append((i + 1) * h)
        out.append(v.copy())
    return np.array(ts), np.array(out)


class HybridProblem:
    """Newton system for one (x-, x+) pair.

    Unknowns: launch coordinates xi on the full unstable eigenframe of x-,
    the flight time tau, and the half-cylinder values on [0, L].  Equations:
    the matching row u(0) = flow_tau(launch(xi)), the box residual of the
    Floer equation, the far-end projection rows at x+, the normalization
    |xi| = 1, and tau pinning when the relative index exceeds the
    Conley-Zehnder index of the target.
    """

    def __init__(self, H, K, space, xm_orbit, xp_orbit, params: HybridParams):
        self.H = H
        self.K = K
        self.space = space
        self.params = params
        self.M_t = _mt(space, params.floer.M_t)
        self.xm_hs = loop_to_hs(loop_from_samples(xm_orbit.samples[:-1], space.N))
        self.xp_flat = orbit_flat_vector(space, xp_orbit)
        vals, vecs = drift_spectrum(H, space, self.xm_hs, self.M_t)
        self.frame = vecs[:, vals > 0]
        self.d = self.frame.shape[1]
        B = slice_linearization(H, space, self.xp_flat, self.M_t)
        w, V = np.linalg.eigh(0.5 * (B + B.T))
        self.Qp = V[:, w < 0]  # forbidden at the far end
        self.index = self.d - self.Qp.shape[1]
        self.endpoints = (xm_orbit.oid, xp_orbit.oid)

    def drift(self, v):
        g = gradient_hs(self.H, self.space, v, self.M_t)
        out = -g
        if self.K is not None:
            out = out + self.K(v, float(np.linalg.norm(g)))
        return out

    def launch_point(self, xi):
        return self.xm_hs + self.params.r_launch * (self.frame @ xi)

    def morse_end(self, xi, tau):
        return _rk4_flow(self.drift, self.launch_point(xi), tau, self.params.flow_step)

    def hs_to_flat(self, v_hs):
        return v_hs / self.space.hs_scale()

    def residual(self, xi, tau, cyl: CylinderGrid, pin_tau, tau0):
        u = cyl.values
        vend = self.morse_end(xi, tau)
        match = u[0] - self.hs_to_flat(vend)
        R = box_residual(self.H, cyl, self.M_t)
        proj = self.Qp.T @ (u[-1] - self.xp_flat)
        parts = [match, R.ravel(), proj, [float(xi @ xi) - 1.0]]
        if pin_tau:
            parts.append([tau - tau0])
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    def solve(self, xi0, tau0, cyl_guess: CylinderGrid):
        p = self.params
        space = self.space
        D = space.dim_total
        M = cyl_guess.M_s
        h = cyl_guess.h
        pin_tau = self.index >= 1
        xi = np.asarray(xi0, dtype=float).copy()
        tau = float(tau0)
        u = cyl_guess.values.copy()
        N = M * D + self.d + 1

        def pack_F():
            return self.residual(
                xi, tau, CylinderGrid(space, 0.0, cyl_guess.length, u),
                pin_tau, tau0,
            )

        F = pack_F()
        n_rows = F.size
        if n_rows != N and not pin_tau:
            raise StructuralError(
                f"hybrid system is {n_rows} x {N}; index {self.index} pair "
                "needs tau pinning or equal indices"
            )

        for it in range(1, p.newton_max + 1):
            sup = float(np.abs(F).max())
            if sup < p.floer.tol_floer:
                break
            # matching-row Jacobian: flow derivative in xi by central
            # differences, in tau analytically via the drift
            vend = self.morse_end(xi, tau)
            cols_xi = np.zeros((D, self.d))
            eps = 1e-6
            for j in range(self.d):
                e = np.zeros(self.d)
                e[j] = eps
                vp = self.morse_end(xi + e, tau)
                vm = self.morse_end(xi - e, tau)
                cols_xi[:, j] = -self.hs_to_flat((vp - vm) / (2 * eps))
            col_tau = -self.hs_to_flat(self.drift(vend))

            rows, cols, vals = [], [], []

            def put_block(r0, c0, B):
                rr, cc = np.nonzero(B)
                rows.extend(r0 + rr)
                cols.extend(c0 + cc)
                vals.extend(np.asarray(B)[rr, cc])

            # unknown layout: [u (M*D), xi (d), tau (1)]
            put_block(0, 0, np.eye(D))
            put_block(0, M * D, cols_xi)
            put_block(0, M * D + self.d, col_tau[:, None])
            r0 = D
            eyeD = np.arange(D)
            for i in range(M - 1):
                B = 0.5 * slice_linearization(
                    self.H, space, 0.5 * (u[i] + u[i + 1]), self.M_t
                )
                base = r0 + i * D
                rr, cc = np.nonzero(B)
                rows.extend(base + rr)
                cols.extend(i * D + cc)
                vals.extend(B[rr, cc])
                rows.extend(base + rr)
                cols.extend((i + 1) * D + cc)
                vals.extend(B[rr, cc])
                rows.extend(base + eyeD)
                cols.extend(i * D + eyeD)
                vals.extend([-1.0 / h] * D)
                rows.extend(base + eyeD)
                cols.extend((i + 1) * D + eyeD)
                vals.extend([1.0 / h] * D)
            r1 = r0 + (M - 1) * D
            put_block(r1, (M - 1) * D, self.Qp.T)
            r2 = r1 + self.Qp.shape[1]
            put_block(r2, M * D, 2 * xi[None, :])
            r3 = r2 + 1
            if pin_tau:
                rows.append(r3)
                cols.append(M * D + self.d)
                vals.append(1.0)
                r3 += 1
            A = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, N)).tocsc()
            if n_rows == N:
                try:
                    delta = splu(A).solve(-F)
                except RuntimeError:
                    delta, *_ = np.linalg.lstsq(A.toarray(), -F, rcond=None)
            else:
                delta, *_ = np.linalg.lstsq(A.toarray(), -F, rcond=None)

            base_norm = float(np.linalg.norm(F))
            step = 1.0
            for _ in range(12):
                u_try = u + step * delta[: M * D].reshape(M, D)
                xi_try = xi + step * delta[M * D : M * D + self.d]
                tau_try = tau + step * float(delta[-1])
                F_try = self.residual(
                    xi_try, tau_try,
                    CylinderGrid(space, 0.0, cyl_guess.length, u_try),
                    pin_tau, tau0,
                )
                if float(np.linalg.norm(F_try)) < (1 - 1e-4 * step) * base_norm:
                    break
                step *= 0.5
            else:
                raise NewtonError("hybrid Newton stalled in line search")
            u, xi, tau, F = u_try, xi_try, tau_try, F_try
        else:
            raise NewtonError(
                f"hybrid Newton did not converge ({float(np.abs(F).max()):.2e})"
            )

        cyl = CylinderGrid(space, 0.0, cyl_guess.length, u, self.endpoints)
        ts, path = _rk4_flow_path(
            self.drift, self.launch_point(xi), tau, self.params.flow_step
        )
        vend = path[-1]
        defect = float(np.abs(u[0] - self.hs_to_flat(vend)).max())
        return HybridSolution(
            xi=xi,
            tau=tau,
            morse_times=ts - tau,
            morse_samples=path,
            cylinder=cyl,
            matching_defect=defect,
            endpoints=self.endpoints,
            energy=energy(self.H, cyl, self.M_t),
            info={"iterations": it, "residual": float(np.abs(F).max())},
        )


def hybrid_constant_diagnostic(
    H: TrigHamiltonian,
    K,
    orbit,
    space: GalerkinSpace,
    L_line: float = 20.0,
    L_cyl: float = 10.0,
    m_left: int = 48,
    m_right: int = 48,
    M_t: int = None,
) -> float:
    """Smallest singular value of the coupled linearization at the constant
    hybrid solution u = x; positive values certify the isolated solution."""
    M_t = _mt(space, M_t)
    D = space.dim_total
    v_hs = loop_to_hs(loop_from_samples(orbit.samples[:-1], space.N))
    from .action_gradient import hessian_hs

    A = -hessian_hs(H, space, v_hs, M_t).matrix  # drift Jacobian, hs coords
    wA, VA = np.linalg.eigh(A)
    QA = VA[:, wA <= 0]  # forbidden at -infinity on the half line
    B = slice_linearization(H, space, v_hs / space.hs_scale(), M_t)
    wB, VB = np.linalg.eigh(0.5 * (B + B.T))
    QB = VB[:, wB < 0]  # forbidden at +infinity on the half cylinder

    h_l = L_line / (m_left - 1)
    h_r = L_cyl / (m_right - 1)
    n_rows = QA.shape[1] + (m_left - 1) * D + D + (m_right - 1) * D + QB.shape[1]
    N = (m_left + m_right) * D
    if n_rows != N:
        raise StructuralError(
            f"coupled diagnostic is {n_rows} x {N}: index counts disagree"
        )
    Mat = np.zeros((n_rows, N))
    r = 0
    Mat[r : r + QA.shape[1], :D] = QA.T
    r += QA.shape[1]
    for i in range(m_left - 1):
        c0 = i * D
        Mat[r : r + D, c0 : c0 + D] = -np.eye(D) / h_l - A / 2
        Mat[r : r + D, c0 + D : c0 + 2 * D] = np.eye(D) / h_l - A / 2
        r += D
    # matching: eta(0) in hs coords equals xi(0) in flat coords
    scale = space.hs_scale()
    Mat[r : r + D, (m_left - 1) * D : m_left * D] = np.diag(1.0 / scale)
    Mat[r : r + D, m_left * D : (m_left + 1) * D] = -np.eye(D)
    r += D
    for i in range(m_right - 1):
        c0 = (m_left + i) * D
        Mat[r : r + D, c0 : c0 + D] = -np.eye(D) / h_r + B / 2
        Mat[r : r + D, c0 + D : c0 + 2 * D] = np.eye(D) / h_r + B / 2
        r += D
    Mat[r : r + QB.shape[1], (m_left + m_right - 1) * D :] = QB.T
    sv = np.linalg.svd(Mat, compute_uv=False)
    return float(sv[-1])


def solve_hybrid(H, K, xm_orbit, xp_orbit, space, guess, params: HybridParams = None):
    """Solve the coupled problem from guess = (xi0, tau0, cylinder)."""
    params = params or HybridParams()
    prob = HybridProblem(H, K, space, xm_orbit, xp_orbit, params)
    xi0, tau0, cyl = guess
    return prob.solve(xi0, tau0, cyl)


@dataclass
class HybridCount:
    count: int
    solutions: list
    reason: str
    near_broken: list = field(default_factory=list)


def count_hybrid(H, K, x, y, orbits, space, params: HybridParams = None, rng=None) -> HybridCount:
    """upsilon(x, y) mod 2 between equal-index orbits.

    The diagonal is 1 without solving (the constant solution is the whole
    moduli space); pairs whose action order forbids positive energy are 0
    analytically.  The remaining pairs run a multistart over the unstable
    sphere and seeded cylinder guesses.
    """
    params = params or HybridParams()
    rng = rng or np.random.default_rng(0)
    if x.oid == y.oid:
        return HybridCount(1, [], "constant solution (diagonal)")
    if y.action >= x.action - 1e-9:
        return HybridCount(0, [], "energy forbids the action order")

    prob = HybridProblem(H, K, space, x, y, params)
    if prob.index != 0:
        raise ValueError("count_hybrid needs matching indices")
    M = params.floer.M_s
    L = params.floer.L or 10.0
    s_grid = np.arange(M) * (L / (M - 1))
    xp = prob.xp_flat
    solutions = []
    near_broken = []
    others = [
        o for o in orbits
        if o.oid not in (x.oid, y.oid) and y.action < o.action < x.action
    ]
    for trial in range(params.multistart):
        xi0 = rng.standard_normal(prob.d)
        xi0 /= np.linalg.norm(xi0)
        tau0 = rng.uniform(5.0, 25.0)
        vend = prob.morse_end(xi0, tau0)
        start_flat = prob.hs_to_flat(vend)
        w = np.linspace(0, 1, M)
        vals = start_flat[None, :] + np.outer(w, xp - start_flat)
        cyl = CylinderGrid(space, 0.0, L, vals, (x.oid, y.oid))
        try:
            sol = prob.solve(xi0, tau0, cyl)
        except (NewtonError, StructuralError):
            continue
        # near-broken configurations linger at an intermediate critical loop
        broken = False
        for o in others:
            ov = loop_to_hs(loop_from_samples(o.samples[:-1], space.N))
            dmin = min(
                float(np.linalg.norm(s - ov)) for s in sol.morse_samples[:: max(1, len(sol.morse_samples) // 64)]
            )
            if dmin < 2e-2:
                broken = True
        if broken:
            near_broken.append(sol)
            continue
        dup = False
        for prev in solutions:
            if (
                np.linalg.norm(prev.xi - sol.xi) < 1e-6
                and abs(prev.tau - sol.tau) < 1e-4
            ):
                dup = True
                break
        if not dup:
            solutions.append(sol)
    return HybridCount(len(solutions) % 2, solutions, "multistart", near_broken)


def build_phi(H, K, orbits, space, params: HybridParams = None, rng=None):
    """Chain-map matrices per degree from the hybrid counts.

    Generators are ordered by increasing action within each degree (ties by
    orbit id), matching the ordering used by the boundary assemblies.
    """
    params = params or HybridParams()
    rng = rng or np.random.default_rng(0)
    degrees = {}
    for o in orbits:
        degrees.setdefault(o.cz, []).append(o)
    for k in degrees:
        degrees[k].sort(key=lambda o: (o.action, o.oid))
    phi = {}
    ledger = {}
    for k, gens in sorted(degrees.items()):
        mat = np.zeros((len(gens), len(gens)), dtype=np.uint8)
        for cj, src in enumerate(gens):
            for ri, tgt in enumerate(gens):
                hc = count_hybrid(H, K, src, tgt, orbits, space, params, rng)
                mat[ri, cj] = hc.count % 2
                ledger[(src.oid, tgt.oid)] = hc
        phi[k] = GF2Matrix(mat)
    return phi, ledger


@dataclass
class TriangularReport:
    ok: bool
    offending: tuple | None
    invertible: bool


def check_triangular(phi: dict, generator_table: dict) -> TriangularReport:
    """Unit diagonal and vanishing below-diagonal entries in action order.

    ``generator_table`` maps degree -> list of generators sorted by
    increasing action (ties by id); invertibility over GF(2) follows from
    triangularity with unit diagonal.
    """
    for k, mat in phi.items():
        gens = generator_table.get(k, [])
        A = mat.data
        if A.shape != (len(gens), len(gens)):
            raise StructuralError(f"phi at degree {k} has wrong shape")
        for i in range(len(gens)):
            if A[i, i] != 1:
                return TriangularReport(False, (k, gens[i].orbit_id, "diagonal"), False)
            for j in range(i):
                if A[i, j] != 0:
                    return TriangularReport(
                        False, (k, gens[i].orbit_id, gens[j].orbit_id), False
                    )
    return TriangularReport(True, None, True)
