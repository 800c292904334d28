import numpy as np
import pytest
from _signals import reach_avoid_case, velocity_case
from hypothesis import given, settings
from hypothesis import strategies as st

from gapcert.domain import Signal
from gapcert.errors import DimensionError, HorizonError, ParameterError, SpecError
from gapcert.robustness import (
    ReachAvoidSpec,
    ReachAvoidTemplate,
    RobustnessMeasure,
    VelocitySpec,
    VelocityTemplate,
    eval_reach_avoid,
    eval_velocity_spec,
    evaluate,
    measure_from_config,
)


def const_signal(x, T=1.0, n=11):
    return Signal(0.0, T / (n - 1), np.tile(np.asarray(x, float), (n, 1)))


def test_reach_avoid_examples():
    spec = ReachAvoidSpec((0.0, 0.0), 0.2, (1.0, 0.0), 0.3, 1.0)
    assert eval_reach_avoid(spec, const_signal((0.0, 0.0))) == pytest.approx(0.2, abs=1e-15)
    spec = ReachAvoidSpec((0.0, 0.0), 0.5, (5.0, 0.0), 0.3, 1.0)
    assert eval_reach_avoid(spec, const_signal((0.5, 0.0))) == 0.0
    pts = np.zeros((11, 2))
    pts[4] = (1.0, 0.0)
    spec = ReachAvoidSpec((1.0, 0.0), 0.5, (1.0, 0.0), 0.3, 1.0)
    assert eval_reach_avoid(spec, Signal(0.0, 0.1, pts)) <= -0.3


def test_reach_avoid_horizon_error():
    spec = ReachAvoidSpec((0.0, 0.0), 0.2, (1.0, 0.0), 0.3, 2.0)
    with pytest.raises(HorizonError):
        eval_reach_avoid(spec, const_signal((0.0, 0.0)))
    with pytest.raises(HorizonError):
        spec.to_measure()(const_signal((0.0, 0.0)))


def test_velocity_examples():
    spec = VelocitySpec(0.2, 0.1, 0.03)
    assert eval_velocity_spec(spec, const_signal((0.2, 0.0), T=1.5, n=151)) == pytest.approx(0.03, abs=1e-15)
    t = np.arange(151) * 0.01
    v = np.full(151, 0.3)
    v[20] = 0.45
    s = Signal(0.0, 0.01, np.stack([v, np.zeros(151)], axis=1))
    assert eval_velocity_spec(VelocitySpec(0.3, 0.1, 0.05), s) == pytest.approx(-0.05, abs=1e-12)
    assert t[20] == pytest.approx(0.2)


def test_velocity_negative_target_mirrors_overshoot():
    v = np.full(151, -0.2)
    v[10] = -0.35
    s = Signal(0.0, 0.01, np.stack([v, np.zeros(151)], axis=1))
    spec = VelocitySpec(-0.2, 0.1, 0.03)
    assert eval_velocity_spec(spec, s) == pytest.approx(-0.05, abs=1e-12)
    assert spec.to_measure()(s) == pytest.approx(-0.05, abs=1e-12)


def test_velocity_spec_validation():
    with pytest.raises(ParameterError):
        VelocitySpec(0.1, 0.0, 0.03)
    with pytest.raises(ParameterError):
        VelocitySpec(0.1, 0.1, 0.03, t_rise=2.0, t_end=1.5)


def test_tree_basics():
    s = const_signal((1.0,))
    assert RobustnessMeasure({"op": "const", "value": 2.5})(s) == 2.5
    m = RobustnessMeasure({"op": "min", "args": [{"op": "const", "value": 2}, {"op": "const", "value": -1}]})
    assert m(s) == -1
    m = RobustnessMeasure({"op": "max", "args": [{"op": "const", "value": 2}, {"op": "const", "value": -1}]})
    assert m(s) == 2


@pytest.mark.parametrize(
    "tree",
    [
        {"op": "nope"},
        {"op": "min", "args": []},
        {"op": "const"},
        {"op": "const", "value": 1, "extra": 2},
        {"op": "min_window", "t_a": 1.0, "t_b": 0.5, "fn": {"op": "affine", "offset": 0, "indices": [0], "weights": [1]}},
        {"op": "min_window", "t_a": 0, "t_b": 1, "fn": {"op": "distance", "center": [0], "radius": 1, "sign": 2, "indices": [0]}},
        {"op": "min_window", "t_a": 0, "t_b": 1, "fn": {"op": "affine", "offset": 0, "indices": [0, 1], "weights": [1]}},
    ],
)
def test_malformed_trees(tree):
    with pytest.raises(SpecError):
        RobustnessMeasure(tree)


def test_tree_json_roundtrip_and_horizon():
    m = VelocitySpec(0.1, 0.1, 0.03).to_measure()
    assert RobustnessMeasure.from_json(m.to_json()) == m
    assert m.horizon == 1.5


def test_param_binding():
    tmpl = VelocityTemplate(0.1, 0.03)
    s = const_signal((0.25, 0.0), T=1.5, n=151)
    assert tmpl.bind((0.25,))(s) == pytest.approx(0.03, abs=1e-15)
    tree = {"op": "min_window", "t_a": 0, "t_b": 1, "fn": {"op": "affine", "offset": {"param": 0}, "indices": [0], "weights": [-1.0]}}
    m = RobustnessMeasure(tree)
    assert m.parametric
    with pytest.raises(SpecError):
        evaluate(m, const_signal((1.0,)))
    assert m.bind((3.0,))(const_signal((1.0,))) == 2.0
    with pytest.raises(DimensionError):
        RobustnessMeasure({"op": "const", "value": {"param": 2}}).bind((1.0,))
    ra = ReachAvoidTemplate((0.5, 0.0), 1.2, 0.15, 4.0)
    assert ra.spec((0.0, 0.9)).o == (0.0, 0.9)


def test_measure_from_config_kinds():
    assert isinstance(measure_from_config({"kind": "velocity", "delta_o": 0.1, "delta_s": 0.03}), VelocityTemplate)
    assert isinstance(measure_from_config({"kind": "reach_avoid", "g": [0, 0], "delta_g": 1, "delta_o": 0.1, "T": 1}), ReachAvoidTemplate)
    assert isinstance(measure_from_config({"kind": "tree", "tree": {"op": "const", "value": 0}}), RobustnessMeasure)
    with pytest.raises(SpecError):
        measure_from_config({"kind": "stl"})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_reach_avoid_sign_soundness_and_tree_agreement(seed, satisfy):
    spec, s = reach_avoid_case(np.random.default_rng(seed), satisfy)
    rho = eval_reach_avoid(spec, s)
    assert (rho >= 0) == satisfy
    assert abs(spec.to_measure()(s) - rho) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_velocity_sign_soundness_and_tree_agreement(seed, satisfy):
    spec, s = velocity_case(np.random.default_rng(seed), satisfy)
    rho = eval_velocity_spec(spec, s)
    assert (rho >= 0) == satisfy
    assert abs(spec.to_measure()(s) - rho) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 0.5))
def test_monotone_in_tolerances(seed, extra):
    gen = np.random.default_rng(seed)
    spec, s = reach_avoid_case(gen, bool(seed % 2))
    wider = ReachAvoidSpec(spec.g, spec.delta_g + extra, spec.o, spec.delta_o, spec.T)
    assert eval_reach_avoid(wider, s) >= eval_reach_avoid(spec, s)
    vs, vsig = velocity_case(gen, bool(seed % 3))
    wider_v = VelocitySpec(vs.v_d, vs.delta_o, vs.delta_s + extra)
    assert eval_velocity_spec(wider_v, vsig) >= eval_velocity_spec(vs, vsig)


def test_discretisation_convergence():
    # slope-bounded signal: |v'| <= L
    L = 2.0
    f = lambda t: 0.3 + 0.05 * np.sin(L / 0.05 * t)
    spec = VelocitySpec(0.3, 0.1, 0.06)
    vals = []
    for dt in (0.02, 0.01):
        t = np.arange(int(round(1.5 / dt)) + 1) * dt
        vals.append(eval_velocity_spec(spec, Signal(0.0, dt, np.stack([f(t), np.zeros_like(t)], axis=1))))
    assert abs(vals[0] - vals[1]) <= L * 0.02


def test_dimension_checks():
    spec = ReachAvoidSpec((0.0, 0.0), 0.2, (1.0, 0.0), 0.3, 1.0)
    with pytest.raises(DimensionError):
        eval_reach_avoid(spec, const_signal((0.0,)))
    with pytest.raises(DimensionError):
        ReachAvoidSpec((0.0, 0.0), 0.2, (1.0,), 0.3, 1.0)
