"""Modified GP-UCB with a stopping rule that yields a probabilistic bound.

Each iteration computes the confidence scale

    beta_i = B + R * sqrt(2 * (0.5 * ln det((1 + 2/i) I + K_i) - ln delta))

maximises the UCB ``mu + beta * std`` over the domain, samples the objective
there, and stops once the simple-regret bound ``F_i = 2 beta_i std(z_i)``
drops to ``epsilon``.  The returned certificate's ``bound`` is the UCB value
at the final query point, computed from the posterior *before* that point was
added.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import gp
from .domain import SeededRng, TestDomain, as_point, clamp
from .errors import NumericalError, ParameterError, UnterminatedError

DEFAULT_MAX_ITERS = 500

# coordinate search: first step is 10% of the box width, halved on failure
_INITIAL_STEP = 0.1
_MIN_STEP = 1e-6
_MAX_SWEEPS = 400


@dataclass(frozen=True)
class BoParams:
    B: float
    R: float
    delta: float
    epsilon: float
    lam: float = 1e-6
    max_iters: int = DEFAULT_MAX_ITERS
    acquisition_restarts: int = 20

    def __post_init__(self):
        if not (0 < self.delta <= 1):
            raise ParameterError(f"delta must lie in (0, 1], got {self.delta}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.B > 0:
            raise ParameterError(f"B must be positive, got {self.B}")
        if not self.R >= 0:
            raise ParameterError(f"R must be nonnegative, got {self.R}")
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be nonnegative, got {self.lam}")
        if int(self.max_iters) < 1 or int(self.acquisition_restarts) < 1:
            raise ParameterError("max_iters and acquisition_restarts must be positive")

    def replace(self, **changes) -> "BoParams":
        d = {**self.__dict__, **changes}
        return BoParams(**d)

    def to_dict(self) -> dict:
        return {
            "B": self.B,
            "R": self.R,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "lambda": self.lam,
            "max_iters": int(self.max_iters),
            "acquisition_restarts": int(self.acquisition_restarts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoParams":
        return cls(
            B=d["B"],
            R=d["R"],
            delta=d["delta"],
            epsilon=d["epsilon"],
            lam=d.get("lambda", 1e-6),
            max_iters=d.get("max_iters", DEFAULT_MAX_ITERS),
            acquisition_restarts=d.get("acquisition_restarts", 20),
        )


@dataclass(frozen=True)
class TraceRecord:
    z: tuple
    y: float
    beta: float
    F: float

    def to_dict(self) -> dict:
        return {"z": list(self.z), "y": self.y, "beta": self.beta, "F": self.F}


@dataclass(frozen=True)
class Objective:
    """Noisy black-box objective: ``sampler(z, rng) -> float`` on ``domain``."""

    sampler: Callable
    domain: TestDomain


@dataclass(frozen=True, eq=False)
class BoundCertificate:
    """Result of a terminated BO run.

    For ``sense == "max"`` the bound is an upper bound on the maximum; for
    ``sense == "min"`` it is a lower bound on the minimum.  Trace and dataset
    always hold the objective's own (un-negated) observations.
    """

    bound: float
    epsilon: float
    delta: float
    iterations: int
    argbest: tuple
    trace: list = field(repr=False)
    final_dataset: gp.Dataset = field(repr=False)
    kernel: gp.KernelSpec = field(repr=False)
    params: BoParams = field(repr=False)
    sense: str = "max"

    def to_dict(self) -> dict:
        return {
            "sense": self.sense,
            "bound": self.bound,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "iterations": self.iterations,
            "argbest": list(self.argbest),
            "trace": [r.to_dict() for r in self.trace],
            "final_dataset": {
                "points": self.final_dataset.points.tolist(),
                "observations": self.final_dataset.observations.tolist(),
            },
            "kernel": self.kernel.to_dict(),
            "params": self.params.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "BoundCertificate":
        ds = d["final_dataset"]
        return cls(
            bound=d["bound"],
            epsilon=d["epsilon"],
            delta=d["delta"],
            iterations=d["iterations"],
            argbest=tuple(d["argbest"]),
            trace=[TraceRecord(tuple(r["z"]), r["y"], r["beta"], r["F"]) for r in d["trace"]],
            final_dataset=gp.Dataset(np.array(ds["points"], dtype=float).reshape(len(ds["observations"]), -1), ds["observations"]),
            kernel=gp.KernelSpec.from_dict(d["kernel"]),
            params=BoParams.from_dict(d["params"]),
            sense=d.get("sense", "max"),
        )

    def trace_csv(self, path=None) -> str:
        """One row per iteration: ``iteration,z1..zd,y,beta,F``."""
        dim = len(self.argbest)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration"] + [f"z{j + 1}" for j in range(dim)] + ["y", "beta", "F"])
        for i, r in enumerate(self.trace, start=1):
            w.writerow([i] + [repr(float(v)) for v in r.z] + [repr(r.y), repr(r.beta), repr(r.F)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def recompute_bound(self) -> float:
        """Rebuild the bound from ``final_dataset`` minus its last point."""
        sgn = 1.0 if self.sense == "max" else -1.0
        prev = self.final_dataset.head(len(self.final_dataset) - 1)
        prev = gp.Dataset(prev.points, sgn * prev.observations)
        model = gp.fit(prev, self.kernel, self.params.lam)
        last = self.trace[-1]
        mu, sd = model.predict(np.asarray(last.z)[None, :])
        return sgn * float(mu[0] + last.beta * sd[0])


def beta(i: int, model: gp.GPModel, p: BoParams) -> float:
    """Confidence scale at iteration ``i``; ``model`` must hold exactly ``i`` points."""
    if i < 1:
        raise ParameterError(f"iteration index must be >= 1, got {i}")
    if len(model.data) != i:
        raise ParameterError(f"beta_{i} needs a model with {i} points, got {len(model.data)}")
    arg = 0.5 * gp.log_det_scaled(model, 2.0 / i) - math.log(p.delta)
    if arg < 0:
        if arg > -1e-12:
            arg = 0.0
        else:
            raise NumericalError(f"negative log argument {arg} in beta; delta must be <= 1")
    return p.B + p.R * math.sqrt(2.0 * arg)


def _latin_seeds(domain: TestDomain, n: int, gen: np.random.Generator) -> np.ndarray:
    """Stratum centres of an n-point Latin hypercube with random column permutations."""
    centres = (np.arange(n) + 0.5) / n
    cols = [centres[gen.permutation(n)] for _ in range(domain.dim)]
    U = np.stack(cols, axis=1)
    return domain.lower + U * domain.width


def _best(points: np.ndarray, values: np.ndarray):
    m = values.max()
    cands = points[values == m]
    order = np.lexsort(cands.T[::-1])
    return cands[order[0]], float(m)


def maximize_ucb(model: gp.GPModel, beta: float, domain: TestDomain, restarts: int, rng: SeededRng) -> np.ndarray:
    """Best-found maximiser of ``mu + beta * std`` over the box.

    Seeds: a Latin grid of ``restarts`` points plus the highest-UCB data
    points.  Each seed is refined by a compass search along the coordinate
    axes (step 10% of the box width, halved when no move improves, stop at
    1e-6).  The best point among *everything evaluated* is returned; exact
    ties go to the lexicographically smallest coordinates.
    """
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    if restarts < 1:
        raise ParameterError("restarts must be >= 1")
    if model.dim != domain.dim:
        raise ParameterError("model and domain dimensions differ")
    gen = rng.generator()
    seeds = [_latin_seeds(domain, int(restarts), gen)]
    data_pts = np.clip(model.data.points, domain.lower, domain.upper)
    if len(data_pts):
        dv = model.ucb(data_pts, beta)
        top = np.argsort(-dv, kind="stable")[: int(restarts)]
        seeds.append(data_pts[top])
    X = np.concatenate(seeds, axis=0)
    vals = model.ucb(X, beta)
    seen_pts, seen_vals = [X.copy()], [vals.copy()]

    width = domain.width
    h = np.full(X.shape[0], _INITIAL_STEP)
    active = np.ones(X.shape[0], dtype=bool)
    for _ in range(_MAX_SWEEPS):
        if not active.any():
            break
        improved = np.zeros(X.shape[0], dtype=bool)
        for j in range(domain.dim):
            for sgn in (1.0, -1.0):
                idx = np.flatnonzero(active)
                cand = X[idx].copy()
                cand[:, j] += sgn * h[idx] * width[j]
                np.clip(cand, domain.lower, domain.upper, out=cand)
                cv = model.ucb(cand, beta)
                seen_pts.append(cand)
                seen_vals.append(cv)
                better = cv > vals[idx]
                X[idx[better]] = cand[better]
                vals[idx[better]] = cv[better]
                improved[idx[better]] = True
        shrink = active & ~improved
        h[shrink] *= 0.5
        active &= h >= _MIN_STEP
    z, _ = _best(np.concatenate(seen_pts), np.concatenate(seen_vals))
    return clamp(domain, z)


def initial_dataset(obj: Objective, rng: SeededRng) -> gp.Dataset:
    """One draw at the domain centre."""
    z = obj.domain.center
    return gp.Dataset(z[None, :], [float(obj.sampler(z, rng))])


def run(obj: Objective, p: BoParams, k: gp.KernelSpec, init: gp.Dataset | None = None, rng: SeededRng | None = None) -> BoundCertificate:
    """Maximise ``obj`` until ``2 beta_i std(z_i) <= epsilon``; return the certificate.

    Raises :class:`UnterminatedError` (with the partial trace attached) after
    ``p.max_iters`` iterations without meeting the tolerance.
    """
    rng = rng if rng is not None else SeededRng(0)
    domain = obj.domain
    if k.dim != domain.dim:
        raise ParameterError(f"kernel dimension {k.dim} != domain dimension {domain.dim}")
    data = init if init is not None else initial_dataset(obj, rng.child("init"))
    if len(data) == 0:
        raise ParameterError("initial dataset must hold at least one sample")
    model = gp.fit(data, k, p.lam)
    trace: list[TraceRecord] = []
    for it in range(1, int(p.max_iters) + 1):
        b = beta(len(data), model, p)
        z = maximize_ucb(model, b, domain, p.acquisition_restarts, rng.child("acq", it))
        mu, sd = model.predict(z[None, :])
        mu, sd = float(mu[0]), float(sd[0])
        y = float(obj.sampler(z, rng.child("obs", it)))
        F = 2.0 * b * sd
        data = data.append(z, y)
        trace.append(TraceRecord(tuple(float(v) for v in z), y, b, F))
        if F <= p.epsilon:
            return BoundCertificate(
                bound=mu + b * sd,
                epsilon=p.epsilon,
                delta=p.delta,
                iterations=it,
                argbest=tuple(float(v) for v in z),
                trace=trace,
                final_dataset=data,
                kernel=k,
                params=p,
                sense="max",
            )
        model = gp.fit(data, k, p.lam)
    raise UnterminatedError(
        f"no termination within {p.max_iters} iterations (last F={trace[-1].F:.4g}, epsilon={p.epsilon:g})",
        trace=trace,
        dataset=data,
    )


def lower_bound_min(obj: Objective, p: BoParams, k: gp.KernelSpec, init: gp.Dataset | None = None, rng: SeededRng | None = None) -> BoundCertificate:
    """Lower-bound ``min obj`` by running :func:`run` on the negated objective."""
    sampler = obj.sampler

    def negated(z, r):
        return -sampler(z, r)

    neg_init = None if init is None else gp.Dataset(init.points, -init.observations)
    try:
        cert = run(Objective(negated, obj.domain), p, k, neg_init, rng)
    except UnterminatedError as exc:
        trace = [TraceRecord(r.z, -r.y, r.beta, r.F) for r in exc.trace]
        ds = exc.dataset
        ds = None if ds is None else gp.Dataset(ds.points, -ds.observations)
        raise UnterminatedError(str(exc), trace=trace, dataset=ds) from None
    return BoundCertificate(
        bound=-cert.bound,
        epsilon=cert.epsilon,
        delta=cert.delta,
        iterations=cert.iterations,
        argbest=cert.argbest,
        trace=[TraceRecord(r.z, -r.y, r.beta, r.F) for r in cert.trace],
        final_dataset=gp.Dataset(cert.final_dataset.points, -cert.final_dataset.observations),
        kernel=k,
        params=p,
        sense="min",
    )


def objective_from_function(f, domain: TestDomain) -> Objective:
    """Wrap a deterministic ``f(z) -> float`` as a noiseless objective."""

    def sampler(z, rng):
        return float(f(as_point(domain, z)))

    return Objective(sampler, domain)
