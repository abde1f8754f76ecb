"""GF(2) linear algebra for graded chain complexes.

Matrices are dense uint8 arrays with XOR row operations; elimination uses
deterministic lowest-index pivoting so every report is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError


class GF2Matrix:
    """Dense matrix over GF(2)."""

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.uint8) % 2
        if arr.ndim != 2:
            raise ValueError("GF2Matrix needs a 2-d array")
        self.data = arr

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "GF2Matrix":
        return cls(np.zeros((rows, cols), dtype=np.uint8))

    @classmethod
    def identity(cls, k: int) -> "GF2Matrix":
        return cls(np.eye(k, dtype=np.uint8))

    @property
    def shape(self):
        return self.data.shape

    def __matmul__(self, other: "GF2Matrix") -> "GF2Matrix":
        return GF2Matrix((self.data.astype(np.uint32) @ other.data) % 2)

    def __add__(self, other: "GF2Matrix") -> "GF2Matrix":
        return GF2Matrix(self.data ^ other.data)

    def __eq__(self, other) -> bool:
        return isinstance(other, GF2Matrix) and np.array_equal(self.data, other.data)

    def is_zero(self) -> bool:
        return not np.any(self.data)

    def rank(self) -> int:
        """GF(2) rank by Gaussian elimination, lowest-index pivots first."""
        R = self.data.copy()
        m, n = R.shape
        row = 0
        for col in range(n):
            pivot = -1
            for r in range(row, m):
                if R[r, col]:
                    pivot = r
                    break
            if pivot < 0:
                continue
            if pivot != row:
                R[[row, pivot]] = R[[pivot, row]]
            hits = np.flatnonzero(R[:, col])
            for r in hits:
                if r != row:
                    R[r] ^= R[row]
            row += 1
            if row == m:
                break
        return row

    def nullity(self) -> int:
        return self.shape[1] - self.rank()

    def __repr__(self):
        return f"GF2Matrix({self.data.tolist()})"


@dataclass(frozen=True)
class Generator:
    gid: int
    degree: int
    action: float
    orbit_id: int


@dataclass
class GradedComplex:
    """Generators per degree with boundary matrices between adjacent degrees.

    ``boundary[k]`` maps degree k to degree k-1 and has shape
    (len(generators[k-1]), len(generators[k])).  Generators within a degree
    are ordered by increasing action, ties broken by orbit id.
    """

    generators: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)

    def degrees(self) -> list[int]:
        return sorted(self.generators)

    def check_shapes(self):
        for k, mat in self.boundary.items():
            rows = len(self.generators.get(k - 1, []))
            cols = len(self.generators.get(k, []))
            if mat.shape != (rows, cols):
                raise StructuralError(
                    f"boundary at degree {k} has shape {mat.shape}, "
                    f"expected ({rows}, {cols})"
                )

    def boundary_or_zero(self, k: int) -> GF2Matrix:
        if k in self.boundary:
            return self.boundary[k]
        rows = len(self.generators.get(k - 1, []))
        cols = len(self.generators.get(k, []))
        return GF2Matrix.zeros(rows, cols)


@dataclass(frozen=True)
class ComplexReport:
    ok: bool
    bad_degree: int | None = None


def verify_complex(C: GradedComplex) -> ComplexReport:
    """Check that consecutive boundaries compose to zero over GF(2)."""
    C.check_shapes()
    for k in C.degrees():
        d_k = C.boundary_or_zero(k)
        d_km1 = C.boundary_or_zero(k - 1)
        if d_k.shape[1] == 0 or d_km1.shape[0] == 0:
            continue
        if not (d_km1 @ d_k).is_zero():
            return ComplexReport(False, bad_degree=k)
    return ComplexReport(True)


def verify_chain_map(phi: dict, CM: GradedComplex, CF: GradedComplex) -> bool:
    """Check phi_{k-1} dM_k = dF_k phi_k in every degree."""
    degrees = sorted(set(CM.generators) | set(CF.generators))
    for k in degrees:
        if len(CM.generators.get(k, [])) != len(CF.generators.get(k, [])):
            raise StructuralError(f"generator counts differ in degree {k}")
    for k in degrees:
        dM = CM.boundary_or_zero(k)
        dF = CF.boundary_or_zero(k)
        pk = phi.get(k, GF2Matrix.identity(len(CM.generators.get(k, []))))
        pkm1 = phi.get(k - 1, GF2Matrix.identity(len(CM.generators.get(k - 1, []))))
        if pk.shape[0] != pk.shape[1]:
            raise StructuralError(f"phi at degree {k} is not square")
        if (pkm1 @ dM) != (dF @ pk):
            return False
    return True


def homology_ranks(C: GradedComplex) -> dict:
    """rank H_k = dim ker d_k - rank d_{k+1}; refuses unverified complexes."""
    report = verify_complex(C)
    if not report.ok:
        raise StructuralError(
            f"boundary squared is nonzero at degree {report.bad_degree}"
        )
    out = {}
    for k in C.degrees():
        d_k = C.boundary_or_zero(k)
        d_kp1 = C.boundary_or_zero(k + 1)
        out[k] = d_k.nullity() - d_kp1.rank()
    return out


def euler_characteristic_consistent(C: GradedComplex) -> bool:
    ranks = homology_ranks(C)
    lhs = sum((-1) ** k * len(C.generators[k]) for k in C.degrees())
    rhs = sum((-1) ** k * ranks[k] for k in C.degrees())
    return lhs == rhs
