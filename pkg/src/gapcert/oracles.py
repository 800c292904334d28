"""Naive brute-force ground truth for tests and acceptance runs.

Nothing here is clever on purpose.  ``dense_gp_solve`` re-derives the GP
posterior with its own kernel formulas and a hand-written Gaussian
elimination so that agreement with :mod:`gapcert.gp` is evidence rather
than a tautology.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .domain import SeededRng, TestDomain
from .errors import BudgetError, NumericalError, ParameterError

DEFAULT_GRID_BUDGET = 1_000_000


@dataclass(frozen=True)
class GridSpec:
    points_per_dim: int
    domain: TestDomain
    budget: int = DEFAULT_GRID_BUDGET

    def __post_init__(self):
        if int(self.points_per_dim) < 2:
            raise ParameterError("points_per_dim must be at least 2")

    @property
    def size(self) -> int:
        return int(self.points_per_dim) ** self.domain.dim

    def axes(self):
        return [
            np.linspace(lo, hi, int(self.points_per_dim))
            for lo, hi in zip(self.domain.lower, self.domain.upper)
        ]

    def points(self) -> np.ndarray:
        """All grid points in lexicographic order, shape (size, dim)."""
        if self.size > self.budget:
            raise BudgetError(f"grid of {self.size} points exceeds budget {self.budget}")
        return np.array(list(itertools.product(*self.axes())), dtype=float)


def grid_optimum(objective, grid: GridSpec, mode: str = "max"):
    """Exhaustive search; returns ``(point, value)``.

    Ties go to the lexicographically smallest point, which is the first one
    in enumeration order, so a strict comparison suffices.
    """
    if mode not in ("min", "max"):
        raise ParameterError(f"mode must be 'min' or 'max', got {mode!r}")
    best_z, best_v = None, None
    for z in grid.points():
        v = float(objective(z))
        if best_v is None or (v > best_v if mode == "max" else v < best_v):
            best_z, best_v = z, v
    return best_z, best_v


def mc_expectation(sampler, M: int, rng: SeededRng):
    """Monte-Carlo mean and standard error of ``sampler(rng_j)`` over M child streams."""
    if M < 2:
        raise ParameterError("mc_expectation needs M >= 2 for a standard error")
    vals = np.array([float(sampler(rng.child(j))) for j in range(M)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(M))


# ---------------------------------------------------------------------------
# reference GP posterior


def _kernel(family: str, lengthscales, variance: float, a, b) -> float:
    r2 = 0.0
    for ai, bi, li in zip(a, b, lengthscales):
        r2 += ((ai - bi) / li) ** 2
    if family == "squared-exponential":
        return variance * math.exp(-0.5 * r2)
    if family == "matern-5/2":
        r = math.sqrt(r2)
        return variance * (1.0 + math.sqrt(5.0) * r + 5.0 * r2 / 3.0) * math.exp(-math.sqrt(5.0) * r)
    raise ParameterError(f"unknown kernel family {family!r}")


def _gauss_solve(A, B):
    """Solve A X = B by Gaussian elimination with partial pivoting."""
    A = [list(map(float, row)) for row in A]
    B = [list(map(float, row)) for row in B]
    n = len(A)
    scale = max((abs(v) for row in A for v in row), default=0.0)
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(A[r][col]))
        if abs(A[piv][col]) <= 1e-14 * max(scale, 1e-300):
            raise NumericalError("matrix is singular to working precision")
        A[col], A[piv] = A[piv], A[col]
        B[col], B[piv] = B[piv], B[col]
        p = A[col][col]
        for r in range(col + 1, n):
            f = A[r][col] / p
            if f == 0.0:
                continue
            for c in range(col, n):
                A[r][c] -= f * A[col][c]
            for c in range(len(B[r])):
                B[r][c] -= f * B[col][c]
    X = [[0.0] * len(B[0]) for _ in range(n)]
    for r in range(n - 1, -1, -1):
        for c in range(len(B[0])):
            acc = B[r][c]
            for j in range(r + 1, n):
                acc -= A[r][j] * X[j][c]
            X[r][c] = acc / A[r][r]
    return X


def dense_gp_solve(data, k, lam: float, z):
    """Reference posterior ``(mean, variance)`` at ``z`` by a direct dense solve.

    ``data`` is a :class:`gapcert.gp.Dataset`, ``k`` a kernel spec; only their
    plain fields are read.
    """
    pts = [list(map(float, p)) for p in np.asarray(data.points)]
    ys = [float(v) for v in np.asarray(data.observations)]
    n = len(pts)
    if n > 200:
        raise ParameterError("dense_gp_solve is limited to 200 points")
    fam, ls, sv = k.family, list(k.lengthscales), float(k.signal_variance)
    zq = list(map(float, np.atleast_1d(z)))
    A = [[_kernel(fam, ls, sv, pts[i], pts[j]) + (lam if i == j else 0.0) for j in range(n)] for i in range(n)]
    kz = [_kernel(fam, ls, sv, zq, p) for p in pts]
    X = _gauss_solve(A, [[ys[i], kz[i]] for i in range(n)])
    mean = sum(kz[i] * X[i][0] for i in range(n))
    var = _kernel(fam, ls, sv, zq, zq) - sum(kz[i] * X[i][1] for i in range(n))
    return mean, var


# ---------------------------------------------------------------------------
# synthetic objectives with a known RKHS norm


@dataclass(frozen=True)
class RkhsFunction:
    """``J(z) = sum_j alpha_j k(z, c_j)``; its RKHS norm is ``sqrt(alpha' K_c alpha)``."""

    family: str
    lengthscales: tuple
    variance: float
    centers: tuple
    alphas: tuple

    def __call__(self, z) -> float:
        zq = list(map(float, np.atleast_1d(z)))
        return sum(a * _kernel(self.family, self.lengthscales, self.variance, zq, c) for a, c in zip(self.alphas, self.centers))

    @property
    def norm(self) -> float:
        q = 0.0
        for ai, ci in zip(self.alphas, self.centers):
            for aj, cj in zip(self.alphas, self.centers):
                q += ai * aj * _kernel(self.family, self.lengthscales, self.variance, ci, cj)
        return math.sqrt(max(q, 0.0))


def random_rkhs_function(k, domain: TestDomain, n_centers: int, rng: SeededRng, scale: float = 1.0) -> RkhsFunction:
    """Centres uniform in ``domain``, weights uniform in ``[-scale, scale]``."""
    g = rng.generator()
    centers = g.uniform(domain.lower, domain.upper, size=(n_centers, domain.dim))
    alphas = g.uniform(-scale, scale, size=n_centers)
    return RkhsFunction(
        k.family,
        tuple(map(float, k.lengthscales)),
        float(k.signal_variance),
        tuple(tuple(map(float, c)) for c in centers),
        tuple(map(float, alphas)),
    )
