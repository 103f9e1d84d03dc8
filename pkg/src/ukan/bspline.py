"""Uniform B-spline segment evaluation in matrix form.

Convention used project-wide: uniform knots t_j = j*delta; basis B_{j,k} is
supported on [t_j, t_{j+K}) with K = k+1. Cell g_id covers
[g_id*delta, (g_id+1)*delta) and consumes the coefficient window
(p_{g_id-k}, ..., p_{g_id}), re-indexed locally as (p_0, ..., p_k). Cells are
half-open, so u = 1 never occurs and a point sitting exactly on a knot
belongs to the cell on its right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError

MAX_DEGREE = 10


def _segment_polynomials(k: int) -> list[list[Fraction]]:
    """Monomial coefficients of B_{j,k}(u) restricted to u in [0,1), for
    j = -k..0, computed by the Cox-de Boor recursion on unit knots.

    Returns one coefficient list (constant term first) per local window slot,
    column j of the basis matrix being the polynomial of B_{j-k,k}.
    """
    # polys[j] holds B_{j,k'} on [0,1); only j in [-k', 0] are nonzero there.
    polys = {0: [Fraction(1)]}
    for kk in range(1, k + 1):
        nxt: dict[int, list[Fraction]] = {}
        for j in range(-kk, 1):
            left = polys.get(j)
            right = polys.get(j + 1)
            coeffs = [Fraction(0)] * (kk + 1)
            if left is not None:
                # (u - j)/kk * left
                for i, c in enumerate(left):
                    coeffs[i + 1] += c / kk
                    coeffs[i] += c * Fraction(-j, kk)
            if right is not None:
                # (j + kk + 1 - u)/kk * right
                for i, c in enumerate(right):
                    coeffs[i] += c * Fraction(j + kk + 1, kk)
                    coeffs[i + 1] -= c / kk
            nxt[j] = coeffs
        polys = nxt
    return [polys[j - k] for j in range(k + 1)]


@dataclass(frozen=True)
class BasisMatrix:
    """Exact K x K matrix mapping a local coefficient window to the segment's
    monomial coefficients: segment(u) = (1, u, ..., u^k) . M . P."""

    degree: int
    rational: tuple  # K rows of K Fractions, row i = coefficient of u^i
    floats: np.ndarray

    @property
    def K(self) -> int:
        return self.degree + 1


_cache: dict[int, BasisMatrix] = {}


def basis_matrix(k: int) -> BasisMatrix:
    if not (0 <= k <= MAX_DEGREE):
        raise DomainError(f"degree must be in [0, {MAX_DEGREE}], got {k}")
    if k not in _cache:
        cols = _segment_polynomials(k)
        rows = tuple(tuple(cols[j][i] for j in range(k + 1)) for i in range(k + 1))
        floats = np.array([[float(c) for c in row] for row in rows], dtype=np.float64)
        floats.setflags(write=False)
        _cache[k] = BasisMatrix(degree=k, rational=rows, floats=floats)
    return _cache[k]


@dataclass(frozen=True)
class SegmentLocation:
    g_id: int
    u: float


def locate(x: float, delta_g: float) -> SegmentLocation:
    """Cell index and fractional position of x on the uniform grid."""
    if not math.isfinite(x):
        raise DomainError(f"non-finite input {x}")
    if not (math.isfinite(delta_g) and delta_g > 0):
        raise DomainError(f"grid spacing must be positive, got {delta_g}")
    s = x / delta_g
    g_id = math.floor(s)
    u = s - g_id
    if u >= 1.0:  # rounding at the upper knot pushes into the next cell
        g_id += 1
        u = 0.0
    return SegmentLocation(g_id=g_id, u=u)


def monomials(u: float, k: int, d: int = 0) -> np.ndarray:
    """The d-th derivative of (1, u, ..., u^k)."""
    out = np.zeros(k + 1)
    for j in range(d, k + 1):
        fall = math.perm(j, d)
        out[j] = fall * u ** (j - d)
    return out


def basis_row(u: float, M: BasisMatrix, d: int = 0) -> np.ndarray:
    if not (0.0 <= u < 1.0):
        raise DomainError(f"u must lie in [0,1), got {u}")
    if d > M.degree:
        return np.zeros(M.K)
    return monomials(u, M.degree, d) @ M.floats


def eval_segment(u: float, coeffs, M: BasisMatrix, d: int = 0) -> float:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (M.K,):
        raise DomainError(f"expected {M.K} coefficients, got shape {coeffs.shape}")
    return float(basis_row(u, M, d) @ coeffs)


def bspline_basis(x: float, j: int, k: int, delta_g: float = 1.0) -> float:
    """B_{j,k}(x) on uniform knots t_i = i*delta_g, by the textbook recursion."""
    if k == 0:
        return 1.0 if j * delta_g <= x < (j + 1) * delta_g else 0.0
    left = (x - j * delta_g) / (k * delta_g) * bspline_basis(x, j, k - 1, delta_g)
    right = ((j + k + 1) * delta_g - x) / (k * delta_g) * bspline_basis(x, j + 1, k - 1, delta_g)
    return left + right


def cox_de_boor_oracle(x: float, delta_g: float, coeffs, k: int) -> float:
    """Slow reference: sum_j p_j B_{j,k}(x) over the K basis functions whose
    support contains x. ``coeffs`` maps basis index j -> coefficient."""
    loc = locate(x, delta_g)
    total = 0.0
    for j in range(loc.g_id - k, loc.g_id + 1):
        try:
            p = coeffs[j]
        except (KeyError, IndexError) as e:
            raise IndexError(f"missing coefficient for basis index {j}") from e
        total += p * bspline_basis(x, j, k, delta_g)
    return total
