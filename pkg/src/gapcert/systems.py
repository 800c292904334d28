"""Systems under test: seeded rollout generators for the true and simulated sides.

Builtin plants integrate their closed-loop dynamics with fixed-step RK4 at
``dt / substeps`` and keep every ``substeps``-th state.  Their random
disturbance is drawn once per rollout from the rollout's own stream, so a
rollout is a pure function of ``(d, rng)``.  Batches of rollouts are
integrated together; row j of a batch is bitwise identical to a single
rollout with the j-th stream.

A builtin adapter may carry an :class:`InjectedGap`.  It is subtracted from
the robustness of that adapter's rollouts, which gives synthetic true/sim
pairs whose Sim2Real gap is known in closed form.
"""

from __future__ import annotations

import json
import math
import os
import selectors
import subprocess
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .domain import SeededRng, Signal, TestDomain, as_point, contains, signal_from_times
from .errors import AdapterError, DimensionError, DomainError, ParameterError, ProtocolError

TRUE_SIDE = "true-system"
SIM_SIDE = "simulator"


@dataclass(frozen=True)
class InjectedGap:
    """Deterministic robustness penalty ``offset + slope * ||d - center||_2``."""

    offset: float = 0.0
    slope: float = 0.0
    center: tuple | None = None

    def __call__(self, d) -> float:
        d = np.atleast_1d(np.asarray(d, dtype=float))
        c = np.zeros_like(d) if self.center is None else np.asarray(self.center, dtype=float)
        return self.offset + self.slope * float(np.sqrt(np.sum((d - c) ** 2)))

    def to_dict(self) -> dict:
        return {"offset": self.offset, "slope": self.slope, "center": None if self.center is None else list(self.center)}


@dataclass(frozen=True)
class RolloutStats:
    mean: float
    count: int
    sample_variance: float

    @property
    def stderr(self) -> float:
        return math.sqrt(self.sample_variance / self.count)


class SystemAdapter:
    """Common interface.  Subclasses implement :meth:`rollout_batch`."""

    kind = "abstract"
    state_dim = 0

    def __init__(self, domain: TestDomain, side: str, horizon: float, dt: float, gap: InjectedGap | None = None):
        if side not in (TRUE_SIDE, SIM_SIDE):
            raise ParameterError(f"side must be {TRUE_SIDE!r} or {SIM_SIDE!r}, got {side!r}")
        if not (dt > 0 and horizon >= dt):
            raise ParameterError(f"need 0 < dt <= horizon, got dt={dt}, horizon={horizon}")
        self.domain = domain
        self.side = side
        self.horizon = float(horizon)
        self.dt = float(dt)
        self.gap = gap

    @property
    def n_samples(self) -> int:
        return int(round(self.horizon / self.dt)) + 1

    def _check_point(self, d) -> np.ndarray:
        z = as_point(self.domain, d)
        if not contains(self.domain, z):
            raise DomainError(f"test point {z.tolist()} outside {self.domain}")
        return z

    def robustness_penalty(self, d) -> float:
        return 0.0 if self.gap is None else self.gap(d)

    def rollout(self, d, rng: SeededRng) -> Signal:
        return self.rollout_batch(d, [rng])[0]

    def rollout_batch(self, d, rngs) -> list:
        raise NotImplementedError

    def close(self):
        pass


def _rk4(deriv, X: np.ndarray, h: float, steps: int, substeps: int) -> np.ndarray:
    """Integrate ``X' = deriv(X)`` and return states at every ``substeps``-th step, shape (steps+1, M, n)."""
    out = np.empty((steps + 1,) + X.shape)
    out[0] = X
    for k in range(steps):
        for _ in range(substeps):
            k1 = deriv(X)
            k2 = deriv(X + 0.5 * h * k1)
            k3 = deriv(X + 0.5 * h * k2)
            k4 = deriv(X + h * k3)
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = X
    return out


# ---------------------------------------------------------------------------
# velocity tracker


@dataclass(frozen=True)
class VelocityTrackerParams:
    """Closed-loop forward-velocity plant.

    order 1: ``v' = clip((u - v) / tau, -rate_limit, rate_limit)``
    order 2: ``v'' = omega^2 (u - v) - 2 zeta omega v'`` (underdamped when zeta < 1)

    Per-rollout disturbance: command ``u = v_d (1 + gain) + bias`` with
    ``gain ~ N(0, gain_std)``, ``bias ~ N(0, bias_std)``, and time scale
    multiplied by ``1 + N(0, tau_std)`` (floored at 0.2).
    """

    order: int = 1
    tau: float = 0.05
    omega: float = 12.0
    zeta: float = 0.6
    rate_limit: float | None = None
    gain_std: float = 0.0
    bias_std: float = 0.0
    tau_std: float = 0.0
    substeps: int = 10

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ParameterError("order must be 1 or 2")
        if not (self.tau > 0 and self.omega > 0 and self.zeta >= 0):
            raise ParameterError("tau, omega must be positive and zeta nonnegative")
        if min(self.gain_std, self.bias_std, self.tau_std) < 0:
            raise ParameterError("noise standard deviations must be nonnegative")


class VelocityTracker(SystemAdapter):
    """State ``(vx, ax)``; the test point's coordinate 0 is the commanded velocity."""

    kind = "builtin-velocity-tracker"
    state_dim = 2

    def __init__(self, params: VelocityTrackerParams, domain: TestDomain, side: str = SIM_SIDE,
                 horizon: float = 1.5, dt: float = 0.01, gap: InjectedGap | None = None):
        super().__init__(domain, side, horizon, dt, gap)
        self.params = params

    def _disturbances(self, rngs):
        p = self.params
        W = np.empty((len(rngs), 3))
        for j, r in enumerate(rngs):
            g = r.generator()
            W[j] = g.standard_normal(3)
        gain = p.gain_std * W[:, 0]
        bias = p.bias_std * W[:, 1]
        scale = np.maximum(1.0 + p.tau_std * W[:, 2], 0.2)
        return gain, bias, scale

    def rollout_batch(self, d, rngs) -> list:
        z = self._check_point(d)
        p = self.params
        v_d = float(z[0])
        gain, bias, scale = self._disturbances(rngs)
        u = v_d * (1.0 + gain) + bias
        M = len(rngs)
        if p.order == 1:
            tau = p.tau * scale
            lim = p.rate_limit

            def deriv(X):
                dv = (u - X[:, 0]) / tau
                if lim is not None:
                    dv = np.clip(dv, -lim, lim)
                return np.stack([dv, np.zeros(M)], axis=1)
        else:
            w = p.omega / scale
            w2 = w * w
            zw2 = 2.0 * p.zeta * w

            def deriv(X):
                return np.stack([X[:, 1], w2 * (u - X[:, 0]) - zw2 * X[:, 1]], axis=1)

        steps = self.n_samples - 1
        h = self.dt / p.substeps
        traj = _rk4(deriv, np.zeros((M, 2)), h, steps, p.substeps)
        if p.order == 1:
            # acceleration channel: the (possibly rate-limited) lag derivative
            v = traj[:, :, 0]
            acc = (u[None, :] - v) / (p.tau * scale)[None, :]
            if p.rate_limit is not None:
                acc = np.clip(acc, -p.rate_limit, p.rate_limit)
            traj[:, :, 1] = acc
        return [Signal(0.0, self.dt, traj[:, j, :]) for j in range(M)]


# ---------------------------------------------------------------------------
# turtlebot


@dataclass(frozen=True)
class TurtlebotParams:
    """Unicycle with a go-to-goal heading controller (obstacle-unaware).

    Speed ``v_max * (1 + speed_noise) * min(1, dist / slow_radius)``; turn rate
    ``k_heading * wrap(bearing - theta) + drift``.  Per-rollout disturbance:
    initial heading error ``N(0, heading_std)``, relative speed error
    ``N(0, speed_std)``, constant turn drift ``N(0, drift_std)``.
    """

    start: tuple = (-0.5, 0.0)
    goal: tuple = (0.5, 0.0)
    v_max: float = 0.5
    k_heading: float = 4.0
    slow_radius: float = 0.2
    heading_std: float = 0.0
    speed_std: float = 0.0
    drift_std: float = 0.0
    substeps: int = 10


class Turtlebot(SystemAdapter):
    """State ``(x, y, theta)``; the test point is the obstacle centre and does not affect motion."""

    kind = "builtin-turtlebot"
    state_dim = 3

    def __init__(self, params: TurtlebotParams, domain: TestDomain, side: str = SIM_SIDE,
                 horizon: float = 4.0, dt: float = 0.02, gap: InjectedGap | None = None):
        super().__init__(domain, side, horizon, dt, gap)
        self.params = params

    def rollout_batch(self, d, rngs) -> list:
        self._check_point(d)
        p = self.params
        M = len(rngs)
        W = np.array([r.generator().standard_normal(3) for r in rngs]).reshape(M, 3)
        heading_err = p.heading_std * W[:, 0]
        speed = p.v_max * (1.0 + p.speed_std * W[:, 1])
        drift = p.drift_std * W[:, 2]
        gx, gy = p.goal
        sx, sy = p.start
        theta0 = math.atan2(gy - sy, gx - sx) + heading_err
        X0 = np.stack([np.full(M, sx), np.full(M, sy), theta0], axis=1)

        def deriv(X):
            dx = gx - X[:, 0]
            dy = gy - X[:, 1]
            dist = np.sqrt(dx * dx + dy * dy)
            v = speed * np.minimum(1.0, dist / p.slow_radius)
            err = np.arctan2(dy, dx) - X[:, 2]
            err = np.arctan2(np.sin(err), np.cos(err))
            return np.stack([v * np.cos(X[:, 2]), v * np.sin(X[:, 2]), p.k_heading * err + drift], axis=1)

        traj = _rk4(deriv, X0, self.dt / p.substeps, self.n_samples - 1, p.substeps)
        return [Signal(0.0, self.dt, traj[:, j, :]) for j in range(M)]


# ---------------------------------------------------------------------------
# external simulators over line-delimited JSON


def _validate_reply_signal(reply: dict, state_dim: int | None, n_expected: int | None) -> Signal:
    try:
        t0 = float(reply["t0"])
        dt = float(reply["dt"])
        samples = reply["samples"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"rollout reply missing or malformed field: {exc}") from None
    if not (math.isfinite(dt) and dt > 0):
        raise ProtocolError(f"non-increasing time axis: dt={dt}")
    if not isinstance(samples, list) or not samples:
        raise ProtocolError("rollout reply has no samples")
    try:
        arr = np.array(samples, dtype=float)
    except (TypeError, ValueError):
        raise ProtocolError("samples are ragged or non-numeric") from None
    if arr.ndim != 2:
        raise ProtocolError("samples must be a list of equal-length state vectors")
    if state_dim is not None and arr.shape[1] != state_dim:
        raise ProtocolError(f"state dimension {arr.shape[1]} != announced {state_dim}")
    if n_expected is not None and arr.shape[0] != n_expected:
        raise ProtocolError(f"got {arr.shape[0]} samples, expected {n_expected}")
    if not np.all(np.isfinite(arr)):
        raise ProtocolError("samples contain non-finite values")
    if "t" in reply:
        t = np.asarray(reply["t"], dtype=float)
        if t.shape != (arr.shape[0],):
            raise ProtocolError("time column length differs from samples")
        if np.any(np.diff(t) <= 0):
            raise ProtocolError("timestamps are not strictly increasing")
        try:
            sig = signal_from_times(t, arr)
        except ParameterError as exc:
            raise ProtocolError(str(exc)) from None
        if abs(sig.dt - dt) > 1e-6 * dt or abs(sig.t0 - t0) > 1e-9:
            raise ProtocolError("explicit timestamps disagree with t0/dt")
    return Signal(t0, dt, arr)


class SubprocessClient:
    """One child process speaking the rollout protocol; requests are serialised."""

    def __init__(self, command, timeout: float = 30.0, env=None):
        if isinstance(command, str):
            command = [command]
        self.command = list(command)
        self.timeout = float(timeout)
        self.env = env
        self._proc = None
        self._buf = b""
        self._lock = threading.Lock()
        self.state_dim = None
        self.d_dim = None

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                bufsize=0,
                env=self.env,
            )
        except OSError as exc:
            raise AdapterError(f"cannot start simulator {self.command}: {exc}") from exc
        self._buf = b""
        hello = self._request({"cmd": "hello"})
        try:
            self.state_dim = int(hello["state_dim"])
            self.d_dim = int(hello["d_dim"])
        except (KeyError, TypeError, ValueError):
            self.close()
            raise ProtocolError(f"bad handshake reply: {hello!r}") from None

    def _readline(self) -> bytes:
        fd = self._proc.stdout.fileno()
        deadline = time.monotonic() + self.timeout
        sel = selectors.DefaultSelector()
        sel.register(fd, selectors.EVENT_READ)
        try:
            while b"\n" not in self._buf:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not sel.select(remaining):
                    raise AdapterError(f"no reply from simulator within {self.timeout:g} s")
                chunk = os.read(fd, 65536)
                if not chunk:
                    if self._buf:
                        raise ProtocolError(f"reply truncated mid-line: {self._buf[:80]!r}")
                    raise AdapterError("simulator closed its output")
                self._buf += chunk
        finally:
            sel.close()
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _request(self, msg: dict) -> dict:
        try:
            self._proc.stdin.write((json.dumps(msg) + "\n").encode("utf-8"))
            self._proc.stdin.flush()
            line = self._readline()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise AdapterError(f"simulator pipe failed: {exc}") from exc
        except AdapterError:
            self.close()
            raise
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self.close()
            raise ProtocolError(f"malformed reply line: {line[:80]!r}") from None
        if not isinstance(reply, dict) or "status" not in reply:
            self.close()
            raise ProtocolError(f"reply lacks a status field: {reply!r}")
        if reply["status"] == "error":
            raise AdapterError(f"simulator error: {reply.get('msg', '')}")
        if reply["status"] != "ok":
            self.close()
            raise ProtocolError(f"unknown status {reply['status']!r}")
        return reply

    def rollout(self, d, seed: int, horizon: float, dt: float) -> Signal:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            d = [float(v) for v in np.atleast_1d(d)]
            if self.d_dim is not None and len(d) != self.d_dim:
                raise DimensionError(f"simulator expects {self.d_dim}-dim test points, got {len(d)}")
            reply = self._request({"cmd": "rollout", "d": d, "seed": int(seed), "horizon": horizon, "dt": dt})
            n_expected = int(round(horizon / dt)) + 1
            try:
                return _validate_reply_signal(reply, self.state_dim, n_expected)
            except ProtocolError:
                self.close()
                raise

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessSystem(SystemAdapter):
    """Adapter delegating rollouts to an external process (see :class:`SubprocessClient`)."""

    kind = "subprocess"

    def __init__(self, command, domain: TestDomain, side: str = SIM_SIDE, horizon: float = 1.5,
                 dt: float = 0.01, timeout: float = 30.0, state_dim: int | None = None):
        super().__init__(domain, side, horizon, dt, None)
        self.command = list(command) if not isinstance(command, str) else [command]
        self.timeout = timeout
        self.state_dim = state_dim
        self._client = None

    @property
    def client(self) -> SubprocessClient:
        if self._client is None:
            self._client = SubprocessClient(self.command, self.timeout)
        return self._client

    def rollout_batch(self, d, rngs) -> list:
        z = self._check_point(d)
        return [self.client.rollout(z, r.integer_seed(), self.horizon, self.dt) for r in rngs]

    def close(self):
        if self._client is not None:
            self._client.close()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_client"] = None
        return state


def subprocess_roundtrip(config: dict, d, seed: int) -> Signal:
    """One handshake plus one rollout against a fresh child process."""
    with SubprocessClient(config["command"], config.get("timeout", 30.0)) as client:
        return client.rollout(d, seed, config.get("horizon", 1.5), config.get("dt", 0.01))


# ---------------------------------------------------------------------------
# pairs and expectations


@dataclass
class SystemPair:
    true_sys: SystemAdapter
    sim_sys: SystemAdapter
    domain: TestDomain = field(default=None)

    def __post_init__(self):
        if self.domain is None:
            self.domain = self.sim_sys.domain
        if self.true_sys.side != TRUE_SIDE or self.sim_sys.side != SIM_SIDE:
            raise ParameterError("pair needs a true-system side and a simulator side")
        if self.true_sys.domain.dim != self.sim_sys.domain.dim or self.domain.dim != self.sim_sys.domain.dim:
            raise DimensionError("both sides must accept the same test-point dimension")
        if self.true_sys.state_dim and self.sim_sys.state_dim and self.true_sys.state_dim != self.sim_sys.state_dim:
            raise DimensionError("both sides must emit the same state dimension")

    @property
    def builtin(self) -> bool:
        return self.true_sys.kind != "subprocess" and self.sim_sys.kind != "subprocess"

    def swapped(self) -> "SystemPair":
        """Same systems with the true/sim labels exchanged."""
        import copy

        t, s = copy.copy(self.sim_sys), copy.copy(self.true_sys)
        t.side, s.side = TRUE_SIDE, SIM_SIDE
        return SystemPair(t, s, self.domain)

    def close(self):
        self.true_sys.close()
        self.sim_sys.close()


def _stats(vals: np.ndarray) -> RolloutStats:
    M = vals.size
    var = float(vals.var(ddof=1)) if M > 1 else 0.0
    return RolloutStats(float(vals.mean()), M, var)


def robustness_values(sys: SystemAdapter, measure, d, M: int, rng: SeededRng) -> np.ndarray:
    """Robustness of M independent rollouts (rollout j uses ``rng.child(j)``)."""
    if M < 1:
        raise ParameterError("M must be >= 1")
    signals = sys.rollout_batch(d, [rng.child(j) for j in range(M)])
    m = measure.bind(d)
    pen = sys.robustness_penalty(d)
    return np.array([m(s) - pen for s in signals])


def expected_robustness(sys: SystemAdapter, measure, d, M: int, rng: SeededRng) -> RolloutStats:
    return _stats(robustness_values(sys, measure, d, M, rng))


def expected_gap(pair: SystemPair, measure, d, M: int, rng: SeededRng) -> RolloutStats:
    """Mean ``|rho(true) - rho(sim)|`` with independent per-side streams."""
    rt = robustness_values(pair.true_sys, measure, d, M, rng.child("true"))
    rs = robustness_values(pair.sim_sys, measure, d, M, rng.child("sim"))
    return _stats(np.abs(rt - rs))


def gap_streams(rng: SeededRng):
    """The two per-side streams :func:`expected_gap` draws from."""
    return rng.child("true"), rng.child("sim")


# ---------------------------------------------------------------------------
# construction from config


def _gap_from_config(cfg):
    if cfg is None:
        return None
    return InjectedGap(cfg.get("offset", 0.0), cfg.get("slope", 0.0), None if cfg.get("center") is None else tuple(cfg["center"]))


def build_adapter(kind: str, side_cfg: dict, domain: TestDomain, side: str, horizon: float, dt: float) -> SystemAdapter:
    side_cfg = dict(side_cfg)
    gap = _gap_from_config(side_cfg.pop("injected_gap", None))
    if kind == VelocityTracker.kind:
        return VelocityTracker(VelocityTrackerParams(**side_cfg), domain, side, horizon, dt, gap)
    if kind == Turtlebot.kind:
        for key in ("start", "goal"):
            if key in side_cfg:
                side_cfg[key] = tuple(side_cfg[key])
        return Turtlebot(TurtlebotParams(**side_cfg), domain, side, horizon, dt, gap)
    if kind == SubprocessSystem.kind:
        if gap is not None:
            raise ParameterError("injected gaps are only supported on builtin adapters")
        return SubprocessSystem(side_cfg["command"], domain, side, horizon, dt, side_cfg.get("timeout", 30.0),
                                side_cfg.get("state_dim"))
    raise ParameterError(f"unknown system kind {kind!r}")


def build_pair(cfg: dict) -> SystemPair:
    """Pair from a ``system`` config block: kind, domain, horizon, dt, sim, true."""
    domain = TestDomain.from_dict(cfg["domain"])
    kind = cfg["kind"]
    horizon, dt = cfg["horizon"], cfg["dt"]
    sim = build_adapter(kind, cfg.get("sim", {}), domain, SIM_SIDE, horizon, dt)
    tru = build_adapter(kind, cfg.get("true", {}), domain, TRUE_SIDE, horizon, dt)
    return SystemPair(tru, sim, domain)
