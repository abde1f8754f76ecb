"""Truncated Fourier loops in T^{2n} and the fractional Sobolev calculus on them.

A loop is represented as x(t) = [x_0] + sum_{0<|k|<=N} e^{2 pi k J0 t} x_k with
x_0 reduced mod Z^{2n} and coefficients x_k in R^{2n}.  The H^s inner product
weights mode k by (2 pi |k|)^{2s}; with that convention s=0 is the honest L^2
pairing, s=1/2 matches the loop-space metric used throughout, and the adjoint
of the inclusion H^{1/2} -> L^2 multiplies mode k by 1/(2 pi |k|) exactly.

Two coordinate systems are used downstream:

* "flat" vectors: the raw (x_0, x_k) blocks stacked in mode order, and
* "hs" vectors: flat blocks scaled by sqrt(2 pi |k|), so the H^{1/2} inner
  product becomes the Euclidean dot product.

Both are dense arrays of length ``GalerkinSpace.dim_total``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError


def j0_matrix(n: int) -> np.ndarray:
    """Standard complex structure [[0, I], [-I, 0]] on R^{2n}."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


@dataclass(frozen=True)
class GalerkinSpace:
    """Mode truncation |k| <= N of loops in T^{2n}."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ValueError("need n >= 1 and N >= 1")

    @property
    def two_n(self) -> int:
        return 2 * self.n

    @property
    def dim_total(self) -> int:
        return 2 * self.n * (2 * self.N + 1)

    @property
    def dim_V(self) -> int:
        # reference subspace R^n x (positive-frequency modes)
        return self.n + 2 * self.n * self.N

    def modes(self) -> list[int]:
        """Mode order used for all dense vectors: 0, 1..N, -1..-N."""
        return [0] + list(range(1, self.N + 1)) + [-k for k in range(1, self.N + 1)]

    def mode_position(self, k: int) -> int:
        if k == 0:
            return 0
        if not 1 <= abs(k) <= self.N:
            raise ValueError(f"mode {k} outside truncation N={self.N}")
        return k if k > 0 else self.N + abs(k)

    def block(self, k: int) -> slice:
        p = self.mode_position(k)
        return slice(p * self.two_n, (p + 1) * self.two_n)

    def mode_of_block(self) -> np.ndarray:
        """Mode index per vector entry, shape (dim_total,)."""
        return np.repeat(np.array(self.modes()), self.two_n)

    def hs_weights(self, s: float) -> np.ndarray:
        """Per-entry weights (2 pi |k|)^{2s}; the k=0 block has weight 1."""
        k = np.abs(self.mode_of_block()).astype(float)
        w = np.ones_like(k)
        nz = k > 0
        w[nz] = (2.0 * np.pi * k[nz]) ** (2.0 * s)
        return w

    def hs_scale(self) -> np.ndarray:
        """sqrt of the H^{1/2} weights; maps flat to hs coordinates."""
        return np.sqrt(self.hs_weights(0.5))


@dataclass(frozen=True)
class FourierLoop:
    """Truncated Fourier loop; base in [0,1)^{2n}, coeffs rows k=1..N,-1..-N."""

    n: int
    N: int
    base: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        if base.shape != (2 * self.n,):
            raise ValueError("base must have shape (2n,)")
        if coeffs.shape != (2 * self.N, 2 * self.n):
            raise ValueError("coeffs must have shape (2N, 2n)")
        if not (np.all(np.isfinite(base)) and np.all(np.isfinite(coeffs))):
            raise ValueError("loop data must be finite")
        base = np.mod(base, 1.0)
        # mod can return 1.0 for tiny negative inputs
        base[base >= 1.0] -= 1.0
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "coeffs", coeffs)
        base.flags.writeable = False
        coeffs.flags.writeable = False

    @property
    def space(self) -> GalerkinSpace:
        return GalerkinSpace(self.n, self.N)

    def _row(self, k: int) -> int:
        if k == 0 or abs(k) > self.N:
            raise ValueError(f"no coefficient stored for mode {k}")
        return (k - 1) if k > 0 else (self.N + abs(k) - 1)

    def coeff(self, k: int) -> np.ndarray:
        return self.coeffs[self._row(k)]


def zero_loop(n: int, N: int) -> FourierLoop:
    return FourierLoop(n, N, np.zeros(2 * n), np.zeros((2 * N, 2 * n)))


def constant_loop(point, N: int) -> FourierLoop:
    point = np.asarray(point, dtype=float)
    n = point.size // 2
    return FourierLoop(n, N, point, np.zeros((2 * N, 2 * n)))


def single_mode_loop(n: int, N: int, k: int, v, base=None) -> FourierLoop:
    loop = zero_loop(n, N)
    coeffs = loop.coeffs.copy()
    row = loop._row(k)
    coeffs[row] = np.asarray(v, dtype=float)
    b = np.zeros(2 * n) if base is None else np.asarray(base, dtype=float)
    return FourierLoop(n, N, b, coeffs)


def _check_compatible(x: FourierLoop, y: FourierLoop):
    if x.n != y.n or x.N != y.N:
        raise DimensionMismatchError(
            f"loop spaces differ: (n,N)=({x.n},{x.N}) vs ({y.n},{y.N})"
        )


def inner_hs(x: FourierLoop, y: FourierLoop, s: float) -> float:
    """<x,y>_{H^s} = <x0,y0> + sum_k (2 pi |k|)^{2s} <x_k, y_k>.

    Bases enter as raw vectors (tangent data); no torus reduction is applied
    here.  Use loop_distance_hs for distances between loops on the torus.
    """
    _check_compatible(x, y)
    total = float(np.dot(x.base, y.base))
    for k in list(range(1, x.N + 1)) + [-k for k in range(1, x.N + 1)]:
        w = (2.0 * np.pi * abs(k)) ** (2.0 * s)
        total += w * float(np.dot(x.coeff(k), y.coeff(k)))
    return total


def norm_hs(x: FourierLoop, s: float = 0.5) -> float:
    return float(np.sqrt(max(inner_hs(x, x, s), 0.0)))


def project(x: FourierLoop, part: str) -> FourierLoop:
    """Orthogonal projections onto positive/negative frequencies or constants."""
    if part not in ("plus", "minus", "zero"):
        raise ValueError("part must be one of 'plus', 'minus', 'zero'")
    if part == "zero":
        return FourierLoop(x.n, x.N, x.base.copy(), np.zeros_like(x.coeffs))
    coeffs = np.zeros_like(x.coeffs)
    if part == "plus":
        coeffs[: x.N] = x.coeffs[: x.N]
    else:
        coeffs[x.N :] = x.coeffs[x.N :]
    return FourierLoop(x.n, x.N, np.zeros(2 * x.n), coeffs)


def add_loops(x: FourierLoop, y: FourierLoop) -> FourierLoop:
    _check_compatible(x, y)
    return FourierLoop(x.n, x.N, x.base + y.base, x.coeffs + y.coeffs)


def jstar(y: FourierLoop) -> FourierLoop:
    """Adjoint of the inclusion H^{1/2} -> L^2: mode k is scaled by 1/(2 pi |k|)."""
    coeffs = y.coeffs.copy()
    for k in list(range(1, y.N + 1)) + [-k for k in range(1, y.N + 1)]:
        coeffs[y._row(k)] = y.coeff(k) / (2.0 * np.pi * abs(k))
    return FourierLoop(y.n, y.N, y.base.copy(), coeffs)


# -- complexified mode arithmetic -------------------------------------------
#
# With coordinates (a, b) in R^n x R^n and z = a + i b, the block rotation
# e^{2 pi k J0 t} acts as multiplication by e^{-2 pi i k t}.  All sampling
# goes through this identification so the FFT does the heavy lifting.


def _complexify(u: np.ndarray, n: int) -> np.ndarray:
    return u[..., :n] + 1j * u[..., n:]


def _realify(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=-1)


def loop_complex_modes(x: FourierLoop) -> np.ndarray:
    """Complex coefficients indexed by mode position (0, 1..N, -1..-N)."""
    space = x.space
    out = np.zeros((2 * x.N + 1, x.n), dtype=complex)
    out[0] = _complexify(x.base, x.n)
    for k in space.modes()[1:]:
        out[space.mode_position(k)] = _complexify(x.coeff(k), x.n)
    return out


def sample_loop(x: FourierLoop, M: int, lift=None) -> np.ndarray:
    """Sample x at t_j = j/M, j=0..M-1, in the lift with constant part `lift`.

    Returns an (M, 2n) array of points of R^{2n} (not reduced).
    """
    if M < 2 * x.N + 1:
        raise ValueError("need M >= 2N+1 samples for alias-free synthesis")
    base = x.base if lift is None else np.asarray(lift, dtype=float)
    C = np.zeros((M, x.n), dtype=complex)
    C[0] = _complexify(base, x.n)
    for k in range(1, x.N + 1):
        C[k % M] += _complexify(x.coeff(k), x.n)
        C[(-k) % M] += _complexify(x.coeff(-k), x.n)
    samples = np.fft.fft(C, axis=0)
    return _realify(samples)


def loop_from_samples(samples: np.ndarray, N: int) -> FourierLoop:
    """Build the truncated loop from uniform samples of a (lifted) loop."""
    samples = np.asarray(samples, dtype=float)
    M, two_n = samples.shape
    n = two_n // 2
    if M < 2 * N + 1:
        raise ValueError("need at least 2N+1 samples")
    Z = np.fft.ifft(_complexify(samples, n), axis=0)
    coeffs = np.zeros((2 * N, two_n))
    for k in range(1, N + 1):
        coeffs[k - 1] = _realify(Z[k % M])
        coeffs[N + k - 1] = _realify(Z[(-k) % M])
    return FourierLoop(n, N, _realify(Z[0]), coeffs)


def eval_loop(x: FourierLoop, t) -> np.ndarray:
    """Evaluate x at time(s) t, reduced mod Z^{2n}."""
    pt = eval_loop_lifted(x, t)
    return np.mod(pt, 1.0)


def eval_loop_lifted(x: FourierLoop, t, lift=None) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    base = x.base if lift is None else np.asarray(lift, dtype=float)
    z = np.broadcast_to(_complexify(base, x.n), t.shape + (x.n,)).astype(complex).copy()
    for k in list(range(1, x.N + 1)) + [-k for k in range(1, x.N + 1)]:
        ck = _complexify(x.coeff(k), x.n)
        z += np.exp(-2j * np.pi * k * t)[..., None] * ck
    return _realify(z)


# -- dense vector views -------------------------------------------------------


def loop_to_flat(x: FourierLoop, lift=None) -> np.ndarray:
    """Flat coordinate vector (x_0 block first, then modes 1..N, -1..-N)."""
    space = x.space
    v = np.zeros(space.dim_total)
    v[space.block(0)] = x.base if lift is None else np.asarray(lift, dtype=float)
    for k in space.modes()[1:]:
        v[space.block(k)] = x.coeff(k)
    return v


def flat_to_loop(space: GalerkinSpace, v: np.ndarray) -> FourierLoop:
    v = np.asarray(v, dtype=float)
    coeffs = np.zeros((2 * space.N, 2 * space.n))
    for k in space.modes()[1:]:
        row = (k - 1) if k > 0 else (space.N + abs(k) - 1)
        coeffs[row] = v[space.block(k)]
    return FourierLoop(space.n, space.N, v[space.block(0)].copy(), coeffs)


def loop_to_hs(x: FourierLoop, lift=None) -> np.ndarray:
    return loop_to_flat(x, lift) * x.space.hs_scale()


def hs_to_loop(space: GalerkinSpace, v: np.ndarray) -> FourierLoop:
    return flat_to_loop(space, np.asarray(v, dtype=float) / space.hs_scale())


def reduce_mod_half(delta: np.ndarray) -> np.ndarray:
    """Reduce each entry to the representative in (-1/2, 1/2]."""
    r = np.mod(np.asarray(delta, dtype=float), 1.0)
    r[r > 0.5] -= 1.0
    return r


def loop_distance_hs(x: FourierLoop, y: FourierLoop, s: float = 0.5) -> float:
    """H^s distance of loops on the torus.

    The base difference is lifted to its nearest representative in
    (-1/2, 1/2]^{2n}; coefficients subtract directly.
    """
    _check_compatible(x, y)
    db = reduce_mod_half(x.base - y.base)
    total = float(np.dot(db, db))
    for k in list(range(1, x.N + 1)) + [-k for k in range(1, x.N + 1)]:
        w = (2.0 * np.pi * abs(k)) ** (2.0 * s)
        d = x.coeff(k) - y.coeff(k)
        total += w * float(np.dot(d, d))
    return float(np.sqrt(total))


# -- serialization -----------------------------------------------------------


def _fmt(v: float) -> float:
    # round-trip through a 17-significant-digit decimal so artifacts print
    # identically on every run
    return float(f"{float(v):.17g}")


def loop_to_json_dict(x: FourierLoop) -> dict:
    return {
        "n": x.n,
        "N": x.N,
        "base": [_fmt(v) for v in x.base],
        "coeffs": [
            {"k": k, "v": [_fmt(v) for v in x.coeff(k)]}
            for k in list(range(1, x.N + 1)) + [-k for k in range(1, x.N + 1)]
        ],
    }


def loop_to_json(x: FourierLoop) -> str:
    return json.dumps(loop_to_json_dict(x), sort_keys=True)


def loop_from_json_dict(d: dict) -> FourierLoop:
    n, N = int(d["n"]), int(d["N"])
    loop = zero_loop(n, N)
    coeffs = loop.coeffs.copy()
    for entry in d["coeffs"]:
        k = int(entry["k"])
        row = (k - 1) if k > 0 else (N + abs(k) - 1)
        coeffs[row] = np.asarray(entry["v"], dtype=float)
    return FourierLoop(n, N, np.asarray(d["base"], dtype=float), coeffs)


def loop_from_json(text: str) -> FourierLoop:
    return loop_from_json_dict(json.loads(text))
