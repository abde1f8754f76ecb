"""The action functional on the truncated loop space and its derivatives.

Internally everything lives in "hs" coordinates (mode blocks scaled by
sqrt(2 pi |k|)), in which the loop-space metric is Euclidean, the quadratic
part of the action is diagonal, and the Hessian is a symmetric matrix whose
spectrum can be counted directly.  The negative gradient field used by the
flow modules is drift = -grad.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SpectralGapError, TruncationError
from .hamiltonian import TrigHamiltonian, eval_h, grad_h, hess_h
from .loopspace import (
    FourierLoop,
    GalerkinSpace,
    _complexify,
    _realify,
    flat_to_loop,
    hs_to_loop,
    jstar,
    loop_from_samples,
    loop_to_flat,
    loop_to_hs,
    project,
)


def default_mt(N: int) -> int:
    return max(8 * N + 16, 64)


def quad_signs(space: GalerkinSpace) -> np.ndarray:
    """+1 on positive-frequency entries, -1 on negative, 0 on the base block."""
    k = space.mode_of_block()
    return np.sign(k).astype(float)


@lru_cache(maxsize=32)
def _synthesis_ops(n: int, N: int, M_t: int):
    """Sampling/truncation maps between flat mode vectors and t-samples.

    Returns (to_samples, to_modes): to_samples maps a flat (D,) vector to
    (M_t, 2n) samples; to_modes is its truncated left inverse.
    """
    space = GalerkinSpace(n, N)
    D = space.dim_total

    def to_samples(v):
        v = np.asarray(v, dtype=float)
        C = np.zeros((M_t, n), dtype=complex)
        for k in space.modes():
            C[k % M_t] += _complexify(v[space.block(k)], n)
        return _realify(np.fft.fft(C, axis=0))

    def to_modes(samples):
        Z = np.fft.ifft(_complexify(np.asarray(samples, dtype=float), n), axis=0)
        out = np.zeros(D)
        for k in space.modes():
            out[space.block(k)] = _realify(Z[k % M_t])
        return out

    return to_samples, to_modes


def hs_sample(space: GalerkinSpace, v_hs: np.ndarray, M_t: int) -> np.ndarray:
    """Sample the loop with hs coordinates v_hs at M_t uniform times (lifted)."""
    to_samples, _ = _synthesis_ops(space.n, space.N, M_t)
    return to_samples(np.asarray(v_hs, dtype=float) / space.hs_scale())


def action_hs(H: TrigHamiltonian, space: GalerkinSpace, v_hs, M_t: int = None) -> float:
    M_t = M_t or default_mt(space.N)
    v = np.asarray(v_hs, dtype=float)
    quad = -0.5 * float(np.sum(quad_signs(space) * v * v))
    ts = np.arange(M_t) / M_t
    samples = hs_sample(space, v, M_t)
    return quad + float(np.mean(eval_h(H, ts, samples)))


def action(H: TrigHamiltonian, x: FourierLoop, M_t: int = None) -> float:
    """A(x) = -1/2 (|P+ x|^2 - |P- x|^2)_{H^{1/2}} + int_0^1 H(t, x(t)) dt."""
    return action_hs(H, x.space, loop_to_hs(x), M_t)


def gradient_hs(H: TrigHamiltonian, space: GalerkinSpace, v_hs, M_t: int = None) -> np.ndarray:
    """H^{1/2}-gradient of the action in hs coordinates."""
    M_t = M_t or default_mt(space.N)
    v = np.asarray(v_hs, dtype=float)
    ts = np.arange(M_t) / M_t
    samples = hs_sample(space, v, M_t)
    gsam = grad_h(H, ts, samples)
    _, to_modes = _synthesis_ops(space.n, space.N, M_t)
    gmodes = to_modes(gsam)
    return -quad_signs(space) * v + gmodes / space.hs_scale()


def gradient(H: TrigHamiltonian, x: FourierLoop, M_t: int = None) -> FourierLoop:
    """-P+ x + P- x + jstar of the mode expansion of grad H along the loop."""
    M_t = M_t or default_mt(x.N)
    samples = np.arange(M_t) / M_t
    pts = hs_sample(x.space, loop_to_hs(x), M_t)
    gsam = grad_h(H, samples, pts)
    nl = jstar(loop_from_samples(gsam, x.N))
    out = loop_to_flat(nl).copy()
    out += -loop_to_flat(project(x, "plus")) + loop_to_flat(project(x, "minus"))
    return flat_to_loop(x.space, out)


@dataclass(frozen=True)
class HessianMatrix:
    """Second derivative of the action in the hs-orthonormal mode basis."""

    space: GalerkinSpace
    matrix: np.ndarray

    def drift_jacobian(self) -> np.ndarray:
        """Jacobian of the negative gradient field."""
        return -self.matrix


def multiplication_matrix_flat(H: TrigHamiltonian, space: GalerkinSpace, v_hs, M_t: int = None) -> np.ndarray:
    """Flat mode matrix of pointwise multiplication by hess H(t, x(t))."""
    M_t = M_t or default_mt(space.N)
    D = space.dim_total
    to_samples, to_modes = _synthesis_ops(space.n, space.N, M_t)
    ts = np.arange(M_t) / M_t
    pts = hs_sample(space, np.asarray(v_hs, dtype=float), M_t)
    S = hess_h(H, ts, pts)  # (M_t, 2n, 2n)
    cols = np.empty((D, D))
    eye = np.eye(D)
    for d in range(D):
        sam = to_samples(eye[d])
        cols[:, d] = to_modes(np.einsum("jab,jb->ja", S, sam))
    return cols


def hessian_hs(H: TrigHamiltonian, space: GalerkinSpace, v_hs, M_t: int = None) -> HessianMatrix:
    Mhat = multiplication_matrix_flat(H, space, v_hs, M_t)
    scale = space.hs_scale()
    mat = np.diag(-quad_signs(space)) + Mhat / np.outer(scale, scale)
    return HessianMatrix(space, 0.5 * (mat + mat.T))


def hessian(H: TrigHamiltonian, x: FourierLoop, M_t: int = None) -> HessianMatrix:
    return hessian_hs(H, x.space, loop_to_hs(x), M_t)


def drift_spectrum(H: TrigHamiltonian, space: GalerkinSpace, v_hs, M_t: int = None):
    """Eigen-decomposition of the linearized negative gradient field.

    Returns (vals, vecs) in descending order of eigenvalue.
    """
    hess = hessian_hs(H, space, v_hs, M_t)
    vals, vecs = np.linalg.eigh(hess.drift_jacobian())
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def _index_once(H: TrigHamiltonian, samples: np.ndarray, space: GalerkinSpace, tol_spec: float) -> int:
    loop = loop_from_samples(samples, space.N)
    vals, _ = drift_spectrum(H, space, loop_to_hs(loop))
    gap = float(np.min(np.abs(vals)))
    if gap <= tol_spec:
        raise SpectralGapError(
            f"eigenvalue {gap:.3e} within tol_spec {tol_spec:.1e} of zero"
        )
    return int(np.sum(vals > 0)) - space.dim_V


def relative_index(H: TrigHamiltonian, orbit, space: GalerkinSpace, tol_spec: float = 1e-8) -> int:
    """Unstable-eigenvalue count against the reference half-space dimension.

    Computed at mode cutoffs N and N+2; disagreement raises TruncationError.
    """
    samples = orbit.samples[:-1] if orbit.samples.shape[0] % 2 == 1 else orbit.samples
    m1 = _index_once(H, samples, space, tol_spec)
    m2 = _index_once(H, samples, GalerkinSpace(space.n, space.N + 2), tol_spec)
    if m1 != m2:
        raise TruncationError(
            f"relative index unstable across N={space.N} -> {space.N + 2} "
            f"({m1} vs {m2}); raise N"
        )
    return m1


def relative_index_by_projection(H: TrigHamiltonian, orbit, space: GalerkinSpace) -> int:
    """Cross-check: relative dimension of the unstable space against R^n x H^+.

    dim(U, V) = dim(U cap V_perp) - dim(U_perp cap V), computed from ranks.
    Used only by tests; the production path counts eigenvalues.
    """
    samples = orbit.samples[:-1] if orbit.samples.shape[0] % 2 == 1 else orbit.samples
    loop = loop_from_samples(samples, space.N)
    vals, vecs = drift_spectrum(H, space, loop_to_hs(loop))
    U = vecs[:, vals > 0]
    D = space.dim_total
    # V = first n coordinate axes of the base block plus all k>0 blocks
    cols = []
    for i in range(space.n):
        e = np.zeros(D)
        e[i] = 1.0
        cols.append(e)
    for k in range(1, space.N + 1):
        blk = space.block(k)
        for i in range(blk.start, blk.stop):
            e = np.zeros(D)
            e[i] = 1.0
            cols.append(e)
    V = np.array(cols).T

    def dim_cap(A, B):
        # dim(span A cap span B) = dim A + dim B - rank([A B])
        r = np.linalg.matrix_rank(np.hstack([A, B]), tol=1e-10)
        return A.shape[1] + B.shape[1] - r

    def orth_complement(A):
        q, _ = np.linalg.qr(A, mode="complete")
        return q[:, A.shape[1] :]

    return dim_cap(U, orth_complement(V)) - dim_cap(orth_complement(U), V)


def commutator_band_norms(H: TrigHamiltonian, space: GalerkinSpace, v_hs, cuts) -> list[float]:
    """Norm of [drift Jacobian, P+] restricted to modes |k| > K, per K in cuts.

    The decay of these norms in K is the truncated surrogate of the
    compactness conditions on the reference splitting.
    """
    A = hessian_hs(H, space, v_hs).drift_jacobian()
    k = space.mode_of_block()
    Pp = np.diag((k > 0).astype(float))
    C = A @ Pp - Pp @ A
    out = []
    for K in cuts:
        mask = np.abs(k) > K
        sub = C[np.ix_(mask, mask)]
        out.append(float(np.linalg.norm(sub, 2)) if sub.size else 0.0)
    return out


def band_split(H: TrigHamiltonian, vals: np.ndarray, margin: float = 0.05):
    """Split eigenvalues of the drift Jacobian into the +1 band and the rest.

    The band collects the unstable directions shared by every singular point
    (positive-frequency modes, perturbed by at most |hess H|/2pi); launch
    directions for connection counting are the unstable eigenvalues below it.
    """
    width = H.c2_bound() / (2 * np.pi) + margin
    in_band = np.abs(vals - 1.0) <= width
    return in_band


def launch_frame(H: TrigHamiltonian, space: GalerkinSpace, v_hs, M_t: int = None):
    """Unstable directions at a critical loop, quotiented by the shared band.

    Returns (vals, vecs) of the non-band unstable eigenvalues, descending.
    Raises TruncationError when the band does not have its expected dimension.
    """
    vals, vecs = drift_spectrum(H, space, v_hs, M_t)
    pos = vals > 0
    in_band = band_split(H, vals)
    band_count = int(np.sum(pos & in_band))
    if band_count != 2 * space.n * space.N:
        raise TruncationError(
            f"unstable band has dimension {band_count}, expected "
            f"{2 * space.n * space.N}; Hamiltonian too large for this cutoff"
        )
    keep = pos & ~in_band
    return vals[keep], vecs[:, keep]
