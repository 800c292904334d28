"""Robustness measures: signal functionals whose sign encodes satisfaction.

A measure is a small composition tree.  Top-level nodes

    {"op": "const", "value": c}
    {"op": "min", "args": [node, ...]}
    {"op": "max", "args": [node, ...]}
    {"op": "min_window", "t_a": a, "t_b": b, "fn": pointwise}

and pointwise functions of the state vector s(t)

    {"op": "affine", "offset": c, "indices": [i, ...], "weights": [w, ...]}
        -> c + sum_k w_k * s_{i_k}
    {"op": "distance", "center": [c, ...], "radius": r, "sign": +1|-1, "indices": [i, ...]}
        -> sign * (||s_I - center||_2 - radius)

Any number may instead be ``{"param": j}``, a placeholder for coordinate j
of the test point; :meth:`RobustnessMeasure.bind` substitutes it.  Time
minima are taken over the sample instants inside the window plus both
window endpoints (interpolated when they fall between samples).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .domain import Signal, window_states
from .errors import DimensionError, HorizonError, ParameterError, SpecError

_TOP_OPS = ("const", "min", "max", "min_window")
_POINTWISE_OPS = ("affine", "distance")


def _dist(states: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = states - center
    return np.sqrt(np.sum(diff * diff, axis=1))


def _is_param(x) -> bool:
    return isinstance(x, dict) and set(x) == {"param"}


def _num(x, where: str) -> float:
    if _is_param(x):
        raise SpecError(f"unbound parameter {x} in {where}; call bind(d) first")
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SpecError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _check_number_or_param(x, where: str):
    if _is_param(x):
        if not isinstance(x["param"], int) or x["param"] < 0:
            raise SpecError(f"{where}: param index must be a nonnegative integer")
        return
    _num(x, where)


def _validate_pointwise(fn, path: str):
    if not isinstance(fn, dict) or fn.get("op") not in _POINTWISE_OPS:
        raise SpecError(f"{path}: pointwise function must have op in {_POINTWISE_OPS}, got {fn!r}")
    op = fn["op"]
    if op == "affine":
        _require(fn, ("op", "offset", "indices", "weights"), path)
        _check_number_or_param(fn["offset"], f"{path}.offset")
        if len(fn["indices"]) != len(fn["weights"]):
            raise SpecError(f"{path}: indices and weights differ in length")
        for w in fn["weights"]:
            _check_number_or_param(w, f"{path}.weights")
    else:
        _require(fn, ("op", "center", "radius", "sign", "indices"), path)
        if len(fn["center"]) != len(fn["indices"]) or not fn["indices"]:
            raise SpecError(f"{path}: center and indices must be non-empty and equally long")
        for c in fn["center"]:
            _check_number_or_param(c, f"{path}.center")
        _check_number_or_param(fn["radius"], f"{path}.radius")
        if fn["sign"] not in (1, -1):
            raise SpecError(f"{path}: sign must be +1 or -1")
    for i in fn["indices"]:
        if isinstance(i, bool) or not isinstance(i, int) or i < 0:
            raise SpecError(f"{path}: state indices must be nonnegative integers")


def _require(node: dict, keys, path: str):
    missing = [k for k in keys if k not in node]
    extra = [k for k in node if k not in keys]
    if missing or extra:
        raise SpecError(f"{path}: missing keys {missing}, unexpected keys {extra}")


def _validate(node, path: str = "$") -> float:
    """Validate a tree; return the horizon (latest time it reads)."""
    if not isinstance(node, dict) or node.get("op") not in _TOP_OPS:
        raise SpecError(f"{path}: node must have op in {_TOP_OPS}, got {node!r}")
    op = node["op"]
    if op == "const":
        _require(node, ("op", "value"), path)
        _check_number_or_param(node["value"], f"{path}.value")
        return 0.0
    if op in ("min", "max"):
        _require(node, ("op", "args"), path)
        if not isinstance(node["args"], list) or not node["args"]:
            raise SpecError(f"{path}: {op} needs a non-empty args list")
        return max(_validate(a, f"{path}.args[{i}]") for i, a in enumerate(node["args"]))
    _require(node, ("op", "t_a", "t_b", "fn"), path)
    t_a, t_b = _num(node["t_a"], f"{path}.t_a"), _num(node["t_b"], f"{path}.t_b")
    if not (0 <= t_a <= t_b):
        raise SpecError(f"{path}: need 0 <= t_a <= t_b, got [{t_a}, {t_b}]")
    _validate_pointwise(node["fn"], f"{path}.fn")
    return t_b


def _bind(x, d: np.ndarray):
    if _is_param(x):
        j = x["param"]
        if j >= d.size:
            raise DimensionError(f"tree references param {j} but test point has {d.size} coordinates")
        return float(d[j])
    if isinstance(x, dict):
        return {k: _bind(v, d) for k, v in x.items()}
    if isinstance(x, list):
        return [_bind(v, d) for v in x]
    return x


def _has_params(x) -> bool:
    if _is_param(x):
        return True
    if isinstance(x, dict):
        return any(_has_params(v) for v in x.values())
    if isinstance(x, list):
        return any(_has_params(v) for v in x)
    return False


def _eval_pointwise(fn: dict, states: np.ndarray) -> np.ndarray:
    idx = fn["indices"]
    if max(idx) >= states.shape[1]:
        raise DimensionError(f"pointwise fn reads state index {max(idx)} of a {states.shape[1]}-dim signal")
    if fn["op"] == "affine":
        out = np.full(states.shape[0], _num(fn["offset"], "affine.offset"))
        for i, w in zip(idx, fn["weights"]):
            out = out + _num(w, "affine.weight") * states[:, i]
        return out
    center = np.array([_num(c, "distance.center") for c in fn["center"]])
    radius = _num(fn["radius"], "distance.radius")
    dist = _dist(states[:, idx], center)
    if fn["sign"] == 1:
        return dist - radius
    return radius - dist


def _eval(node: dict, s: Signal) -> float:
    op = node["op"]
    if op == "const":
        return _num(node["value"], "const")
    if op == "min":
        return min(_eval(a, s) for a in node["args"])
    if op == "max":
        return max(_eval(a, s) for a in node["args"])
    states = window_states(s, float(node["t_a"]), float(node["t_b"]))
    return float(np.min(_eval_pointwise(node["fn"], states)))


@dataclass(frozen=True, eq=False)
class RobustnessMeasure:
    """Validated composition tree.  Immutable; evaluation is pure."""

    tree: dict

    def __post_init__(self):
        # deep copy via JSON so later mutation of the caller's dict has no effect
        tree = json.loads(json.dumps(self.tree))
        horizon = _validate(tree)
        object.__setattr__(self, "tree", tree)
        object.__setattr__(self, "_horizon", horizon)

    @property
    def horizon(self) -> float:
        return self._horizon

    @property
    def parametric(self) -> bool:
        return _has_params(self.tree)

    def bind(self, d) -> "RobustnessMeasure":
        """Substitute ``{"param": j}`` placeholders with coordinates of test point ``d``."""
        if not self.parametric:
            return self
        return RobustnessMeasure(_bind(self.tree, np.atleast_1d(np.asarray(d, dtype=float))))

    def __call__(self, s: Signal) -> float:
        return evaluate(self, s)

    def __eq__(self, other):
        return isinstance(other, RobustnessMeasure) and self.tree == other.tree

    def to_json(self) -> str:
        return json.dumps(self.tree, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RobustnessMeasure":
        return cls(json.loads(text))


def evaluate(measure: RobustnessMeasure, s: Signal) -> float:
    if measure.parametric:
        raise SpecError("measure has unbound parameters; call bind(d) first")
    if not s.covers(0.0, measure.horizon) and measure.horizon > 0:
        raise HorizonError(f"signal ends at {s.t_end}, measure reads up to {measure.horizon}")
    return _eval(measure.tree, s)


# ---------------------------------------------------------------------------
# reach-avoid


@dataclass(frozen=True)
class ReachAvoidSpec:
    """Stay within ``delta_g`` of goal ``g`` and outside radius ``delta_o`` of ``o`` on [0, T]."""

    g: tuple
    delta_g: float
    o: tuple
    delta_o: float
    T: float
    indices: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(float(v) for v in np.atleast_1d(self.g)))
        object.__setattr__(self, "o", tuple(float(v) for v in np.atleast_1d(self.o)))
        if len(self.g) != len(self.o):
            raise DimensionError("goal and obstacle centres differ in dimension")
        if not (self.delta_g > 0 and self.delta_o > 0 and self.T > 0):
            raise ParameterError("delta_g, delta_o and T must be positive")
        idx = tuple(range(len(self.g))) if self.indices is None else tuple(int(i) for i in self.indices)
        if len(idx) != len(self.g):
            raise DimensionError("indices must match the point dimension")
        object.__setattr__(self, "indices", idx)

    def to_measure(self) -> RobustnessMeasure:
        idx = list(self.indices)
        goal = {"op": "distance", "center": list(self.g), "radius": self.delta_g, "sign": -1, "indices": idx}
        avoid = {"op": "distance", "center": list(self.o), "radius": self.delta_o, "sign": 1, "indices": idx}
        return RobustnessMeasure(
            {
                "op": "min",
                "args": [
                    {"op": "min_window", "t_a": 0.0, "t_b": self.T, "fn": goal},
                    {"op": "min_window", "t_a": 0.0, "t_b": self.T, "fn": avoid},
                ],
            }
        )


def eval_reach_avoid(spec: ReachAvoidSpec, s: Signal) -> float:
    if not s.covers(0.0, spec.T):
        raise HorizonError(f"signal ends at {s.t_end}, reach-avoid deadline is {spec.T}")
    idx = list(spec.indices)
    if max(idx) >= s.state_dim:
        raise DimensionError("signal has fewer state coordinates than the spec's points")
    X = window_states(s, 0.0, spec.T)[:, idx]
    goal = spec.delta_g - _dist(X, np.array(spec.g))
    avoid = _dist(X, np.array(spec.o)) - spec.delta_o
    return float(min(np.min(goal), np.min(avoid)))


# ---------------------------------------------------------------------------
# velocity tracking: overshoot on [0, t_rise], settling band on [t_rise, t_end]


@dataclass(frozen=True)
class VelocitySpec:
    v_d: float
    delta_o: float
    delta_s: float
    t_rise: float = 0.5
    t_end: float = 1.5
    vx_index: int = 0

    def __post_init__(self):
        if not (self.delta_o > 0 and self.delta_s > 0):
            raise ParameterError("delta_o and delta_s must be positive")
        if not (0 < self.t_rise < self.t_end):
            raise ParameterError("need 0 < t_rise < t_end")

    def to_measure(self) -> RobustnessMeasure:
        i = int(self.vx_index)
        if self.v_d >= 0:
            over = {"op": "affine", "offset": self.v_d + self.delta_o, "indices": [i], "weights": [-1.0]}
        else:
            # mirror about v_d: s - (v_d - delta_o)
            over = {"op": "affine", "offset": self.delta_o - self.v_d, "indices": [i], "weights": [1.0]}
        settle = {"op": "distance", "center": [self.v_d], "radius": self.delta_s, "sign": -1, "indices": [i]}
        return RobustnessMeasure(
            {
                "op": "min",
                "args": [
                    {"op": "min_window", "t_a": 0.0, "t_b": self.t_rise, "fn": over},
                    {"op": "min_window", "t_a": self.t_rise, "t_b": self.t_end, "fn": settle},
                ],
            }
        )

    def bands(self, t: np.ndarray):
        """Lower/upper admissible velocity at times ``t`` (NaN where unconstrained)."""
        t = np.asarray(t, dtype=float)
        lo = np.full(t.shape, np.nan)
        hi = np.full(t.shape, np.nan)
        rise = t <= self.t_rise
        settle = (t >= self.t_rise) & (t <= self.t_end)
        if self.v_d >= 0:
            hi[rise] = self.v_d + self.delta_o
        else:
            lo[rise] = self.v_d - self.delta_o
        lo[settle] = self.v_d - self.delta_s
        hi[settle] = self.v_d + self.delta_s
        return lo, hi


def eval_velocity_spec(spec: VelocitySpec, s: Signal) -> float:
    if not s.covers(0.0, spec.t_end):
        raise HorizonError(f"signal ends at {s.t_end}, velocity spec reads up to {spec.t_end}")
    if spec.vx_index >= s.state_dim:
        raise DimensionError("vx_index out of range for this signal")
    v_rise = window_states(s, 0.0, spec.t_rise)[:, spec.vx_index]
    v_set = window_states(s, spec.t_rise, spec.t_end)[:, spec.vx_index]
    if spec.v_d >= 0:
        over = (spec.v_d + spec.delta_o) - v_rise
    else:
        over = (spec.delta_o - spec.v_d) + v_rise
    settle = spec.delta_s - np.abs(v_set - spec.v_d)
    return float(min(np.min(over), np.min(settle)))


# ---------------------------------------------------------------------------
# templates: measures whose parameters come from the test point


@dataclass(frozen=True)
class VelocityTemplate:
    """Velocity spec whose desired velocity is coordinate ``vd_param`` of the test point."""

    delta_o: float
    delta_s: float
    t_rise: float = 0.5
    t_end: float = 1.5
    vx_index: int = 0
    vd_param: int = 0

    def spec(self, d) -> VelocitySpec:
        d = np.atleast_1d(np.asarray(d, dtype=float))
        return VelocitySpec(float(d[self.vd_param]), self.delta_o, self.delta_s, self.t_rise, self.t_end, self.vx_index)

    def bind(self, d) -> RobustnessMeasure:
        return self.spec(d).to_measure()

    @property
    def horizon(self) -> float:
        return self.t_end


@dataclass(frozen=True)
class ReachAvoidTemplate:
    """Reach-avoid spec whose obstacle centre is the test point."""

    g: tuple
    delta_g: float
    delta_o: float
    T: float
    indices: tuple | None = None

    def spec(self, d) -> ReachAvoidSpec:
        return ReachAvoidSpec(self.g, self.delta_g, tuple(np.atleast_1d(d)), self.delta_o, self.T, self.indices)

    def bind(self, d) -> RobustnessMeasure:
        return self.spec(d).to_measure()

    @property
    def horizon(self) -> float:
        return self.T


def measure_from_config(cfg: dict):
    """Build a measure or template from its config block (``kind`` selects the form)."""
    kind = cfg.get("kind")
    if kind == "velocity":
        return VelocityTemplate(
            delta_o=cfg["delta_o"],
            delta_s=cfg["delta_s"],
            t_rise=cfg.get("t_rise", 0.5),
            t_end=cfg.get("t_end", 1.5),
            vx_index=cfg.get("vx_index", 0),
            vd_param=cfg.get("vd_param", 0),
        )
    if kind == "reach_avoid":
        return ReachAvoidTemplate(
            g=tuple(cfg["g"]),
            delta_g=cfg["delta_g"],
            delta_o=cfg["delta_o"],
            T=cfg["T"],
            indices=None if cfg.get("indices") is None else tuple(cfg["indices"]),
        )
    if kind == "tree":
        return RobustnessMeasure(cfg["tree"])
    raise SpecError(f"unknown measure kind {kind!r}")

