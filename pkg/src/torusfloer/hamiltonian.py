"""Trigonometric-polynomial Hamiltonians on S^1 x T^{2n} with exact calculus.

A Hamiltonian is a finite sum of products
    H(t, x) = sum_j a_j cos(2 pi m_j . x + phi_j) cos(2 pi l_j t + psi_j)
with integer spatial frequencies m_j and integer temporal frequencies l_j, so
H is 1-periodic in every variable by construction and the gradient and Hessian
are closed-form trigonometric sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationQualityError
from .loopspace import j0_matrix


@dataclass(frozen=True)
class TrigTerm:
    a: float
    m: tuple
    phi: float = 0.0
    l: int = 0
    psi: float = 0.0


@dataclass(frozen=True)
class TrigHamiltonian:
    n: int
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(
            TrigTerm(float(t.a), tuple(int(v) for v in t.m), float(t.phi), int(t.l), float(t.psi))
            for t in self.terms
        )
        for t in terms:
            if len(t.m) != 2 * self.n:
                raise ValueError("spatial frequency vector must have length 2n")
        object.__setattr__(self, "terms", terms)

    @property
    def two_n(self):
        return 2 * self.n

    def _arrays(self):
        if not self.terms:
            z = np.zeros(0)
            return z, np.zeros((0, self.two_n)), z, z, z
        a = np.array([t.a for t in self.terms])
        m = np.array([t.m for t in self.terms], dtype=float)
        phi = np.array([t.phi for t in self.terms])
        l = np.array([t.l for t in self.terms], dtype=float)
        psi = np.array([t.psi for t in self.terms])
        return a, m, phi, l, psi

    def time_average(self) -> "TrigHamiltonian":
        """Average over t; only l=0 terms survive, scaled by cos(psi)."""
        kept = [
            TrigTerm(t.a * np.cos(t.psi), t.m, t.phi, 0, 0.0)
            for t in self.terms
            if t.l == 0
        ]
        return TrigHamiltonian(self.n, tuple(kept))

    def c2_bound(self) -> float:
        """Crude sup bound on the spectral norm of the spatial Hessian."""
        total = 0.0
        for t in self.terms:
            m = np.asarray(t.m, dtype=float)
            total += abs(t.a) * 4 * np.pi**2 * float(m @ m)
        return total


def eval_h(H: TrigHamiltonian, t, x) -> np.ndarray:
    """H(t, x); t broadcastable against x.shape[:-1], x has trailing dim 2n."""
    a, m, phi, l, psi = H._arrays()
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if a.size == 0:
        return np.zeros(np.broadcast_shapes(t.shape, x.shape[:-1]))
    sp = np.cos(2 * np.pi * (x @ m.T) + phi)  # (..., terms)
    tp = np.cos(2 * np.pi * np.multiply.outer(t, l) + psi)
    return np.sum(a * sp * tp, axis=-1)


def grad_h(H: TrigHamiltonian, t, x) -> np.ndarray:
    a, m, phi, l, psi = H._arrays()
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out_shape = np.broadcast_shapes(t.shape, x.shape[:-1]) + (H.two_n,)
    if a.size == 0:
        return np.zeros(out_shape)
    sp = np.sin(2 * np.pi * (x @ m.T) + phi)
    tp = np.cos(2 * np.pi * np.multiply.outer(t, l) + psi)
    w = -2 * np.pi * a * sp * tp  # (..., terms)
    return np.broadcast_to(w @ m, out_shape).copy()


def hess_h(H: TrigHamiltonian, t, x) -> np.ndarray:
    a, m, phi, l, psi = H._arrays()
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out_shape = np.broadcast_shapes(t.shape, x.shape[:-1]) + (H.two_n, H.two_n)
    if a.size == 0:
        return np.zeros(out_shape)
    cp = np.cos(2 * np.pi * (x @ m.T) + phi)
    tp = np.cos(2 * np.pi * np.multiply.outer(t, l) + psi)
    w = -4 * np.pi**2 * a * cp * tp
    mm = np.einsum("ji,jk->jik", m, m)  # (terms, 2n, 2n)
    return np.broadcast_to(np.einsum("...j,jik->...ik", w, mm), out_shape).copy()


def vector_field_xh(H: TrigHamiltonian, t, x) -> np.ndarray:
    """Hamiltonian vector field X_H = J0 grad H."""
    g = grad_h(H, t, x)
    J = j0_matrix(H.n)
    return g @ J.T


def flow_map(H: TrigHamiltonian, p, steps: int = 512):
    """Time-1 flow and its linearization, by fixed-step RK4 on the lift.

    Accepts a single point (2n,) or a batch (B, 2n); the variational equation
    is integrated alongside.  Points are returned lifted (not reduced).
    """
    if steps < 16:
        raise ValueError("need steps >= 16")
    n2 = H.two_n
    J = j0_matrix(H.n)
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    x = np.atleast_2d(p).astype(float).copy()
    B = x.shape[0]
    D = np.broadcast_to(np.eye(n2), (B, n2, n2)).copy()

    def rhs(t, x, D):
        Hx = hess_h(H, t, x)  # (B, 2n, 2n)
        return vector_field_xh(H, t, x), np.einsum("ab,ibc,icd->iad", J, Hx, D)

    h = 1.0 / steps
    for i in range(steps):
        t = i * h
        k1x, k1D = rhs(t, x, D)
        k2x, k2D = rhs(t + h / 2, x + h / 2 * k1x, D + h / 2 * k1D)
        k3x, k3D = rhs(t + h / 2, x + h / 2 * k2x, D + h / 2 * k2D)
        k4x, k4D = rhs(t + h, x + h * k3x, D + h * k3D)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        D = D + h / 6 * (k1D + 2 * k2D + 2 * k3D + k4D)
    if single:
        return x[0], D[0]
    return x, D


def flow_points(H: TrigHamiltonian, p, steps: int = 64) -> np.ndarray:
    """Time-1 flow of a batch of points, without the linearization."""
    x = np.atleast_2d(np.asarray(p, dtype=float)).copy()
    h = 1.0 / steps
    for i in range(steps):
        t = i * h
        k1 = vector_field_xh(H, t, x)
        k2 = vector_field_xh(H, t + h / 2, x + h / 2 * k1)
        k3 = vector_field_xh(H, t + h / 2, x + h / 2 * k2)
        k4 = vector_field_xh(H, t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def flow_orbit_samples(H: TrigHamiltonian, p, steps: int, n_samples: int) -> np.ndarray:
    """Integrate the orbit through p over [0,1]; return n_samples+1 lifted points."""
    if steps % n_samples != 0:
        raise ValueError("steps must be a multiple of n_samples")
    x = np.asarray(p, dtype=float).copy()
    h = 1.0 / steps
    stride = steps // n_samples
    out = [x.copy()]
    for i in range(steps):
        t = i * h
        k1 = vector_field_xh(H, t, x)
        k2 = vector_field_xh(H, t + h / 2, x + h / 2 * k1)
        k3 = vector_field_xh(H, t + h / 2, x + h / 2 * k2)
        k4 = vector_field_xh(H, t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % stride == 0:
            out.append(x.copy())
    return np.array(out)


@dataclass(frozen=True)
class SymplecticPath:
    """Sampled solution of Psi' = J0 S(t) Psi, Psi(0) = I, on [0, 1].

    ``generator`` is the symmetric matrix function S(t) when available; it is
    used for adaptive re-integration between samples.
    """

    n: int
    ts: np.ndarray
    mats: np.ndarray
    generator: object = None

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        mats = np.asarray(self.mats, dtype=float)
        if mats.shape != (ts.size, 2 * self.n, 2 * self.n):
            raise ValueError("mats must have shape (len(ts), 2n, 2n)")
        if not np.allclose(mats[0], np.eye(2 * self.n), atol=1e-13):
            raise ValueError("path must start at the identity")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "mats", mats)

    def symp_defect(self) -> float:
        J = j0_matrix(self.n)
        d = np.einsum("tji,jk,tkl->til", self.mats, J, self.mats) - J
        return float(np.max(np.abs(d)))

    def end(self) -> np.ndarray:
        return self.mats[-1]


def _rk4_sympl(S, t0, psi0, t1, substeps):
    J = j0_matrix(psi0.shape[0] // 2)
    h = (t1 - t0) / substeps
    psi = psi0.copy()
    for i in range(substeps):
        t = t0 + i * h

        def f(tt, P):
            return (J @ S(tt)) @ P

        k1 = f(t, psi)
        k2 = f(t + h / 2, psi + h / 2 * k1)
        k3 = f(t + h / 2, psi + h / 2 * k2)
        k4 = f(t + h, psi + h * k3)
        psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def path_from_generator(n: int, S, steps: int = 512, generator_attached=True) -> SymplecticPath:
    """Integrate Psi' = J0 S(t) Psi over [0,1] with fixed-step RK4."""
    ts = np.linspace(0.0, 1.0, steps + 1)
    mats = np.empty((steps + 1, 2 * n, 2 * n))
    mats[0] = np.eye(2 * n)
    for i in range(steps):
        mats[i + 1] = _rk4_sympl(S, ts[i], mats[i], ts[i + 1], 1)
    return SymplecticPath(n, ts, mats, S if generator_attached else None)


def monodromy(H: TrigHamiltonian, x_of_t, steps: int = 512, tol_symp: float = 1e-6) -> SymplecticPath:
    """Linearized-flow path along a 1-periodic orbit t -> x(t).

    ``x_of_t`` maps t in [0,1] to the (lifted) orbit point.  Raises
    IntegrationQualityError when the symplecticity defect exceeds tol_symp.
    """

    def S(t):
        return hess_h(H, t, x_of_t(t))

    path = path_from_generator(H.n, S, steps=steps)
    defect = path.symp_defect()
    if defect > tol_symp:
        raise IntegrationQualityError(
            f"monodromy symplecticity defect {defect:.3e} exceeds {tol_symp:.1e}"
        )
    return path


def diagonal_path(n: int, lam: float, steps: int = 256) -> SymplecticPath:
    """The model path e^{J0 lambda t} with constant generator lambda I."""
    lam = float(lam)

    def S(_t):
        return lam * np.eye(2 * n)

    J = j0_matrix(n)
    ts = np.linspace(0.0, 1.0, steps + 1)
    from scipy.linalg import expm

    mats = np.array([expm(J * lam * t) for t in ts])
    return SymplecticPath(n, ts, mats, S)
