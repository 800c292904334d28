"""Test spaces, sampled signals and splittable seeded randomness.

Test points are plain 1-D float arrays (anything ``np.asarray`` accepts is
taken as input).  Domains are closed axis-aligned boxes.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, HorizonError, ParameterError

_MASK64 = (1 << 64) - 1


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TestDomain:
    """Closed box ``[lower, upper]`` in R^dim."""

    __test__ = False  # not a pytest class

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise DimensionError(f"lower/upper shapes differ or are empty: {lo.shape} vs {hi.shape}")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ParameterError("domain bounds must be finite")
        if not np.all(lo < hi):
            raise ParameterError(f"degenerate domain: need lower < upper, got {lo} and {hi}")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def __eq__(self, other):
        if not isinstance(other, TestDomain):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper)))

    def __repr__(self):
        return f"TestDomain(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TestDomain":
        return cls(d["lower"], d["upper"])


def as_point(domain: TestDomain, p) -> np.ndarray:
    """Coerce ``p`` to a float vector of the domain's dimension."""
    z = np.atleast_1d(np.asarray(p, dtype=float))
    if z.shape != (domain.dim,):
        raise DimensionError(f"point has shape {z.shape}, domain expects ({domain.dim},)")
    return z


def contains(domain: TestDomain, p) -> bool:
    z = as_point(domain, p)
    return bool(np.all(z >= domain.lower) and np.all(z <= domain.upper))


def clamp(domain: TestDomain, p) -> np.ndarray:
    z = as_point(domain, p)
    return np.minimum(domain.upper, np.maximum(domain.lower, z))


# ---------------------------------------------------------------------------
# randomness


def _mix(stream: int, key) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(stream)).encode())
    h.update(b"/")
    h.update(repr(key).encode())
    return int.from_bytes(h.digest(), "little")


def derive_seed(master_seed: int, *keys) -> int:
    """Deterministic 63-bit seed for task ``keys`` under ``master_seed``."""
    s = int(master_seed) & _MASK64
    for k in keys:
        s = _mix(s, k)
    return s >> 1


@dataclass(frozen=True)
class SeededRng:
    """Immutable handle on a reproducible random stream.

    ``generator()`` builds a fresh :class:`numpy.random.Generator` every call,
    so the same handle always yields the same draws.  ``child(key)`` derives an
    independent stream; streams with distinct ids never overlap (they are
    separate ``SeedSequence`` spawn keys).
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys) -> "SeededRng":
        s = self.stream
        for k in keys:
            s = _mix(s, k)
        return SeededRng(self.seed, s)

    def integer_seed(self) -> int:
        """A 63-bit integer seed, e.g. for handing to an external process."""
        return int(self.generator().integers(0, 2**63 - 1))


# ---------------------------------------------------------------------------
# signals


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled state trajectory; ``samples`` has shape (N, n)."""

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] == 0:
            raise DimensionError(f"samples must be a non-empty (N, n) array, got shape {s.shape}")
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "samples", _frozen(s))

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return (
            self.t0 == other.t0
            and self.dt == other.dt
            and self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def state_dim(self) -> int:
        return self.samples.shape[1]

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def covers(self, t_a: float, t_b: float) -> bool:
        tol = 1e-9 * max(1.0, abs(self.t_end))
        return t_a >= self.t0 - tol and t_b <= self.t_end + tol

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{j + 1}" for j in range(self.state_dim)])
        for t, row in zip(self.times, self.samples):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Signal":
        """Parse a ``t,x1,...,xn`` CSV (path or text); times must have constant step."""
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0].strip() != "t":
            raise ParameterError("signal CSV header must start with 't'")
        data = np.array(body, dtype=float)
        return signal_from_times(data[:, 0], data[:, 1:])


def signal_from_times(times, samples) -> Signal:
    """Build a Signal from explicit times, checking they are uniformly spaced."""
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if times.shape[0] != samples.shape[0]:
        raise DimensionError("times and samples differ in length")
    if times.size == 1:
        return Signal(times[0], 1.0, samples)
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise ParameterError("signal times must be strictly increasing")
    dt = (times[-1] - times[0]) / (times.size - 1)
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise ParameterError("signal times must have a constant step")
    return Signal(times[0], dt, samples)


def _node_index(signal: Signal, t: float):
    """Return (k, frac) with t = t0 + (k + frac)*dt, snapping to nodes."""
    x = (t - signal.t0) / signal.dt
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, abs(x)):
        return int(k), 0.0
    k = int(np.floor(x))
    return k, x - k


def sample_at(signal: Signal, t: float) -> np.ndarray:
    """Linearly interpolated state at time ``t``; exact at sample instants."""
    if not signal.covers(t, t):
        raise HorizonError(f"t={t} outside stored horizon [{signal.t0}, {signal.t_end}]")
    k, frac = _node_index(signal, t)
    k = min(max(k, 0), len(signal) - 1)
    if frac == 0.0 or k == len(signal) - 1:
        return signal.samples[k].copy()
    a, b = signal.samples[k], signal.samples[k + 1]
    return a + frac * (b - a)


def window_states(signal: Signal, t_a: float, t_b: float) -> np.ndarray:
    """States at every sample instant inside ``[t_a, t_b]`` plus both endpoints.

    Endpoints that fall between samples are interpolated.  Used by the
    min-over-window robustness operator.
    """
    if t_b < t_a:
        raise HorizonError(f"empty window [{t_a}, {t_b}]")
    if not signal.covers(t_a, t_b):
        raise HorizonError(f"window [{t_a}, {t_b}] outside stored horizon [{signal.t0}, {signal.t_end}]")
    ka, fa = _node_index(signal, t_a)
    kb, fb = _node_index(signal, t_b)
    first = ka if fa == 0.0 else ka + 1
    last = kb
    first = max(first, 0)
    last = min(last, len(signal) - 1)
    parts = []
    if fa != 0.0:
        parts.append(sample_at(signal, t_a)[None, :])
    if last >= first:
        parts.append(signal.samples[first : last + 1])
    if fb != 0.0:
        parts.append(sample_at(signal, t_b)[None, :])
    return np.concatenate(parts, axis=0)
