"""Gaussian-process regression with fixed kernel hyperparameters.

Posterior mean and variance follow the usual ridge-regularised form

    mu_n(z)    = k_n(z)^T (K_n + lam I)^-1 y
    var_n(z)   = k(z, z) - k_n(z)^T (K_n + lam I)^-1 k_n(z)

and ``posterior_std`` returns ``sqrt(var_n)``, which is what the UCB rule and
the regret bound consume.  Hyperparameters are never learned from data: the
BO certificate is only valid for a kernel fixed in advance.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import DimensionError, NumericalError, ParameterError

SQUARED_EXPONENTIAL = "squared-exponential"
MATERN52 = "matern-5/2"
KERNEL_FAMILIES = (SQUARED_EXPONENTIAL, MATERN52)

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel with per-dimension lengthscales.

    ``signal_variance`` is the value of k(z, z).
    """

    family: str = SQUARED_EXPONENTIAL
    lengthscales: tuple = (1.0,)
    signal_variance: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ParameterError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if not ls or any(not (v > 0 and np.isfinite(v)) for v in ls):
            raise ParameterError(f"lengthscales must be positive, got {ls}")
        object.__setattr__(self, "lengthscales", ls)
        sv = float(self.signal_variance)
        if not sv >= 0:
            raise ParameterError(f"signal variance must be nonnegative, got {sv}")
        object.__setattr__(self, "signal_variance", sv)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def gram(self, A, B=None) -> np.ndarray:
        """Cross-covariance matrix between row-point sets ``A`` (n, d) and ``B`` (m, d)."""
        A = self._rows(A)
        B = A if B is None else self._rows(B)
        ls = np.asarray(self.lengthscales)
        diff = (A[:, None, :] - B[None, :, :]) / ls
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        if self.family == SQUARED_EXPONENTIAL:
            return self.signal_variance * np.exp(-0.5 * r2)
        r = np.sqrt(np.maximum(r2, 0.0))
        s5r = np.sqrt(5.0) * r
        return self.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * np.exp(-s5r)

    def _rows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and X.size % self.dim == 0:
            X = X.reshape(-1, self.dim)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionError(f"points have shape {X.shape}, kernel expects (*, {self.dim})")
        return X

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "lengthscales": list(self.lengthscales),
            "signal_variance": self.signal_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["family"], tuple(d["lengthscales"]), d["signal_variance"])


def kernel_eval(k: KernelSpec, z, z2) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    if z.shape != (k.dim,) or z2.shape != (k.dim,):
        raise DimensionError(f"kernel expects {k.dim}-vectors, got {z.shape} and {z2.shape}")
    return float(k.gram(z[None, :], z2[None, :])[0, 0])


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise ``N(0, lam * nu**2)``."""

    lam: float
    nu: float

    @property
    def variance(self) -> float:
        return self.lam * self.nu**2


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered (point, observation) pairs; points has shape (n, d)."""

    points: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.observations, dtype=float))
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(y.size, -1) if y.size else P.reshape(0, 0)
        if P.ndim != 2 or P.shape[0] != y.shape[0] or y.ndim != 1:
            raise DimensionError(f"points {P.shape} and observations {y.shape} do not pair up")
        P = P.copy()
        y = y.copy()
        P.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "observations", y)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def __len__(self):
        return self.observations.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(self.observations, other.observations)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def append(self, z, y) -> "Dataset":
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if len(self) and z.shape != (self.dim,):
            raise DimensionError(f"point {z.shape} does not match dataset dimension {self.dim}")
        P = np.vstack([self.points.reshape(len(self), z.size), z[None, :]])
        return Dataset(P, np.append(self.observations, float(y)))

    def head(self, n: int) -> "Dataset":
        return Dataset(self.points[:n], self.observations[:n])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"z{j + 1}" for j in range(self.dim)] + ["y"])
        for z, y in zip(self.points, self.observations):
            w.writerow([repr(float(v)) for v in z] + [repr(float(y))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Dataset":
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        header, body = rows[0], rows[1:]
        d = len(header) - 1
        if not body:
            return cls.empty(d)
        data = np.array(body, dtype=float)
        return cls(data[:, :d], data[:, d])


def save_fit_inputs(path, data: Dataset, k: KernelSpec, lam: float) -> None:
    """Write ``<path>.csv`` plus a ``<path>.json`` sidecar sufficient to refit exactly."""
    path = Path(path)
    data.to_csv(path.with_suffix(".csv"))
    path.with_suffix(".json").write_text(json.dumps({"kernel": k.to_dict(), "lambda": lam}, indent=2) + "\n")


def load_fit_inputs(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return Dataset.from_csv(path.with_suffix(".csv")), KernelSpec.from_dict(meta["kernel"]), float(meta["lambda"])


def _cholesky_with_jitter(A: np.ndarray, start: float, scale: float):
    """Lower Cholesky factor of ``A + jitter*I``; jitter escalates x10 up to 1e-4*scale."""
    n = A.shape[0]
    jitter = start
    while True:
        try:
            L = linalg.cholesky(A + jitter * np.eye(n), lower=True, check_finite=True)
            if np.all(np.diag(L) > 0):
                return L, jitter
        except linalg.LinAlgError:
            pass
        jitter = _JITTER_START * scale if jitter == 0 else jitter * 10
        if jitter > _JITTER_MAX * scale * (1 + 1e-9):
            raise NumericalError(
                f"Cholesky factorization failed even with jitter {_JITTER_MAX:g}*trace/n; "
                "kernel matrix is pathologically conditioned"
            )


@dataclass(frozen=True, eq=False)
class GPModel:
    kernel: KernelSpec
    lam: float
    data: Dataset
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def predict(self, Z):
        """Posterior mean and standard deviation at the rows of ``Z``."""
        Z = self.kernel._rows(Z)
        Ks = self.kernel.gram(self.data.points, Z)
        mean = Ks.T @ self.alpha
        v = linalg.solve_triangular(self.chol, Ks, lower=True, check_finite=False)
        var = self.kernel.signal_variance - np.einsum("ij,ij->j", v, v)
        return mean, np.sqrt(np.maximum(var, 0.0))

    def ucb(self, Z, beta: float) -> np.ndarray:
        mean, std = self.predict(Z)
        return mean + beta * std


def fit(data: Dataset, k: KernelSpec, lam: float) -> GPModel:
    if len(data) == 0:
        raise ParameterError("cannot fit a GP to an empty dataset")
    if not lam >= 0:
        raise ParameterError(f"lambda must be nonnegative, got {lam}")
    if data.dim != k.dim:
        raise DimensionError(f"dataset dimension {data.dim} != kernel dimension {k.dim}")
    K = k.gram(data.points)
    n = len(data)
    A = K + lam * np.eye(n)
    # lam > 0 already regularises; pure interpolation starts at the jitter floor
    scale = max(np.trace(K) / n, np.finfo(float).tiny)
    start = 0.0 if lam > 0 else _JITTER_START * scale
    L, jitter = _cholesky_with_jitter(A, start, scale)
    alpha = linalg.cho_solve((L, True), data.observations, check_finite=False)
    L.setflags(write=False)
    alpha.setflags(write=False)
    return GPModel(k, float(lam), data, L, alpha, jitter)


def _query(m: GPModel, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (m.dim,):
        raise DimensionError(f"query point has shape {z.shape}, model expects ({m.dim},)")
    return z[None, :]


def posterior_mean(m: GPModel, z) -> float:
    return float(m.predict(_query(m, z))[0][0])


def posterior_std(m: GPModel, z) -> float:
    return float(m.predict(_query(m, z))[1][0])


def log_det_scaled(m: GPModel, eta: float) -> float:
    """``ln det((1 + eta) I + K)`` for the Gram matrix K of the model's data."""
    if not eta >= 0:
        raise ParameterError(f"eta must be nonnegative, got {eta}")
    K = m.kernel.gram(m.data.points)
    A = K + (1.0 + eta) * np.eye(len(m.data))
    try:
        L = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("factorization of (1+eta)I + K failed") from exc
    return float(2.0 * np.sum(np.log(np.diag(L))))


def mutual_information(data: Dataset, k: KernelSpec, noise: NoiseModel) -> float:
    """Information gain ``0.5 ln det(I + K_A / (lam nu^2))`` of the observed set."""
    s2 = noise.variance
    if not s2 > 0:
        raise ParameterError("mutual information needs a positive noise variance lam*nu^2")
    n = len(data)
    if n == 0:
        return 0.0
    A = np.eye(n) + k.gram(data.points) / s2
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0:
        raise NumericalError("I + K/s2 is not positive definite")
    return 0.5 * float(logdet)
