"""Conley-Zehnder index of nondegenerate symplectic paths.

The index is computed by the rotation-number/crossing-form method:

* the winding of rho(Psi(t)) -- the complex determinant of the unitary polar
  factor of Psi(t) -- drives adaptive refinement of the sample grid until no
  step winds by more than a quarter turn;
* parameter values where Psi(t) has eigenvalue 1 are located as minima of
  the smallest singular value of Psi(t) - I and contribute the signature of
  the generator restricted to the kernel;
* the start point contributes half the signature of the generator at t=0.

The overall sign is anchored so that the family e^{J0 lambda t} with scalar
generator lambda I evaluates to -2n floor(lambda / 2 pi) - n.
"""

from __future__ import annotations

import bisect

import numpy as np
from scipy.linalg import expm, logm
from scipy.optimize import minimize_scalar

from .errors import DegeneracyError, IntegrationQualityError, ResolutionError
from .hamiltonian import SymplecticPath, _rk4_sympl
from .loopspace import j0_matrix

_QUARTER_TURN = np.pi / 2
_ACCEPT_SIGMA = 1e-6
_REJECT_SIGMA = 1e-3


def _polar_unitary(mat: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(mat)
    return U @ Vt


def _rho(mat: np.ndarray, n: int) -> complex:
    """det_C of the unitary polar factor, on the unit circle."""
    O = _polar_unitary(mat)
    A = O[:n, :n]
    B = O[:n, n:]
    val = np.linalg.det(A + 1j * B)
    m = abs(val)
    if m < 1e-8:
        raise ResolutionError("degenerate unitary factor; path far from symplectic")
    return val / m


def _min_singular(mat: np.ndarray) -> float:
    return float(np.linalg.svd(mat - np.eye(mat.shape[0]), compute_uv=False)[-1])


class _PathEval:
    """Evaluate a sampled symplectic path anywhere in [0, 1].

    With a generator available the path is re-integrated by RK4 from the
    nearest stored knot; otherwise geodesic interpolation in the polar
    decomposition bridges between knots.
    """

    def __init__(self, path: SymplecticPath):
        self.n = path.n
        self.ts = np.asarray(path.ts, dtype=float)
        self.mats = np.asarray(path.mats, dtype=float)
        self.generator = path.generator
        self.h0 = float(np.min(np.diff(self.ts))) if self.ts.size > 1 else 1.0

    def S(self, t: float) -> np.ndarray:
        if self.generator is not None:
            S = np.asarray(self.generator(float(t)), dtype=float)
            return 0.5 * (S + S.T)
        # finite differences of the interpolated path: S = -J0 Psi' Psi^{-1}
        h = max(self.h0 / 8.0, 1e-7)
        lo, hi = max(0.0, t - h), min(1.0, t + h)
        dpsi = (self(hi) - self(lo)) / (hi - lo)
        J = j0_matrix(self.n)
        S = -J @ dpsi @ np.linalg.inv(self(t))
        return 0.5 * (S + S.T)

    def __call__(self, t: float) -> np.ndarray:
        t = float(t)
        i = int(np.searchsorted(self.ts, t))
        if i < self.ts.size and abs(self.ts[i] - t) < 1e-15:
            return self.mats[i]
        if i > 0 and abs(self.ts[i - 1] - t) < 1e-15:
            return self.mats[i - 1]
        if self.generator is not None:
            j = max(0, min(i - 1, self.ts.size - 1))
            t0, psi0 = self.ts[j], self.mats[j]
            sub = max(2, int(np.ceil(abs(t - t0) / self.h0 * 2)))
            return _rk4_sympl(self.S, t0, psi0.copy(), t, sub)
        # polar geodesic between bracketing knots
        j = max(1, min(i, self.ts.size - 1))
        ta, tb = self.ts[j - 1], self.ts[j]
        w = (t - ta) / (tb - ta)
        return _polar_geodesic(self.mats[j - 1], self.mats[j], w)


def _polar_geodesic(A: np.ndarray, B: np.ndarray, w: float) -> np.ndarray:
    Oa, Ob = _polar_unitary(A), _polar_unitary(B)
    Pa, Pb = A @ Oa.T, B @ Ob.T
    O = Oa @ np.real(expm(w * logm(Oa.T @ Ob)))
    Pa_h = np.real(_sqrtm_sym(Pa))
    Pa_hi = np.linalg.inv(Pa_h)
    P = Pa_h @ np.real(expm(w * logm(Pa_hi @ Pb @ Pa_hi))) @ Pa_h
    return P @ O


def _sqrtm_sym(P: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (P + P.T))
    return (vecs * np.sqrt(np.clip(vals, 1e-15, None))) @ vecs.T


def _principal_angle(z: complex) -> float:
    return float(np.angle(z))


def _signature(form: np.ndarray, scale: float) -> int:
    vals = np.linalg.eigvalsh(0.5 * (form + form.T))
    tol = 1e-8 * max(1.0, scale)
    if np.any(np.abs(vals) <= tol):
        raise ResolutionError("degenerate crossing form; perturb the data")
    return int(np.sum(vals > 0) - np.sum(vals < 0))


def cz_index(
    path: SymplecticPath,
    tol_deg: float = 1e-6,
    tol_symp: float = 1e-6,
    max_doublings: int = 12,
) -> int:
    """Conley-Zehnder index of a nondegenerate path Psi with Psi(0) = I."""
    n = path.n
    two_n = 2 * n
    end = path.end()
    det_end = float(np.linalg.det(np.eye(two_n) - end))
    if abs(det_end) <= tol_deg:
        raise DegeneracyError(
            f"|det(I - Psi(1))| = {abs(det_end):.3e} <= tol_deg = {tol_deg:.1e}"
        )
    defect = path.symp_defect()
    if defect > 10 * tol_symp:
        raise IntegrationQualityError(
            f"path symplecticity defect {defect:.3e} exceeds {tol_symp:.1e}"
        )

    ev = _PathEval(path)

    # coarse grid: reuse path knots, capped so refinement stays cheap
    if path.ts.size > 129:
        stride = path.ts.size // 128
        ts = list(path.ts[::stride])
        mats = list(path.mats[::stride])
        if ts[-1] != path.ts[-1]:
            ts.append(float(path.ts[-1]))
            mats.append(path.mats[-1])
    else:
        ts = list(path.ts)
        mats = list(path.mats)
    rhos = [_rho(m, n) for m in mats]

    # refine until every step winds less than a quarter turn
    for _round in range(max_doublings + 1):
        inserts = []
        for i in range(len(ts) - 1):
            dphi = _principal_angle(rhos[i + 1] / rhos[i])
            if abs(dphi) >= _QUARTER_TURN and ts[i + 1] - ts[i] > 1e-13:
                inserts.append(0.5 * (ts[i] + ts[i + 1]))
        if not inserts:
            break
        if _round == max_doublings:
            raise ResolutionError(
                f"winding not resolved after {max_doublings} refinement rounds"
            )
        for tm in inserts:
            j = bisect.bisect_left(ts, tm)
            m = ev(tm)
            ts.insert(j, tm)
            mats.insert(j, m)
            rhos.insert(j, _rho(m, n))

    winding = sum(
        _principal_angle(rhos[i + 1] / rhos[i]) for i in range(len(ts) - 1)
    )

    # start-point contribution: half signature of the generator at t = 0
    S0 = ev.S(0.0)
    half0_twice = _signature(S0, float(np.abs(S0).max()))
    if half0_twice % 2 != 0:
        raise ResolutionError("odd signature at the start point")
    total = half0_twice // 2

    # interior crossings: minima of sigma_min(Psi - I) past the first peak
    d = np.array([_min_singular(m) for m in mats])
    first_peak = None
    for i in range(1, len(ts) - 1):
        if d[i] >= d[i - 1] and d[i] > d[i + 1]:
            first_peak = i
            break
    crossings = []
    if first_peak is not None:
        for i in range(first_peak, len(ts) - 1):
            if 0 < i < len(ts) - 1 and d[i] <= d[i - 1] and d[i] <= d[i + 1]:
                crossings.extend(
                    _locate_crossings(ev, ts[i - 1], ts[i + 1], n)
                )
        # crossing exactly at the final knot would contradict nondegeneracy,
        # but one may hide between the last interior minimum and t = 1
        if d[-1] < d[-2] and d[-1] < _REJECT_SIGMA:
            crossings.extend(_locate_crossings(ev, ts[-2], 1.0, n))

    seen = []
    for t0 in sorted(crossings):
        if seen and abs(t0 - seen[-1]) < 1e-9:
            continue
        seen.append(t0)
        total += _crossing_signature(ev, t0, n)

    mu = -total
    # safety net: the index and the accumulated winding must stay within n
    if abs(mu + winding / np.pi) > n + 0.9:
        raise ResolutionError(
            f"index {mu} inconsistent with accumulated winding {winding / np.pi:.3f} pi"
        )
    return int(mu)


def _locate_crossings(ev: _PathEval, a: float, b: float, n: int) -> list[float]:
    """Return crossing times in [a, b], located by minimizing sigma_min."""

    def f(t):
        return _min_singular(ev(t))

    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": 1e-13})
    t0, d0 = float(res.x), float(res.fun)
    if d0 >= _REJECT_SIGMA:
        return []
    if d0 > _ACCEPT_SIGMA:
        raise ResolutionError(
            f"ambiguous near-crossing at t = {t0:.6f} (sigma_min = {d0:.2e})"
        )
    out = [t0]
    # a nearly coincident crossing of another eigenvalue block may hide in
    # the same bracket; re-scan both sides once
    for lo, hi in ((a, t0 - 1e-5), (t0 + 1e-5, b)):
        if hi - lo < 1e-4:
            continue
        sub = np.linspace(lo, hi, 9)
        vals = [f(t) for t in sub]
        j = int(np.argmin(vals))
        if 0 < j < 8 and vals[j] < _REJECT_SIGMA:
            res2 = minimize_scalar(
                f, bounds=(sub[j - 1], sub[j + 1]), method="bounded",
                options={"xatol": 1e-13},
            )
            if float(res2.fun) < _ACCEPT_SIGMA and abs(float(res2.x) - t0) > 1e-6:
                out.append(float(res2.x))
    return out


def _crossing_signature(ev: _PathEval, t0: float, n: int) -> int:
    psi = ev(t0)
    two_n = 2 * n
    U, sig, Vt = np.linalg.svd(psi - np.eye(two_n))
    cut = max(1e3 * float(sig[-1]), 1e-9)
    kdim = int(np.sum(sig <= cut))
    if kdim == 0 or float(sig[-1]) >= _ACCEPT_SIGMA:
        raise ResolutionError(f"crossing at t = {t0:.6f} lost its kernel")
    if kdim < two_n and sig[two_n - kdim - 1] < 1e3 * float(sig[two_n - kdim]):
        raise ResolutionError(
            f"no clear singular-value gap at crossing t = {t0:.6f}"
        )
    B = Vt[two_n - kdim :].T  # orthonormal kernel basis
    S = ev.S(t0)
    form = B.T @ S @ B
    return _signature(form, float(np.abs(S).max()))
