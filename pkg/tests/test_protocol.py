import pickle

import numpy as np
import pytest
from conftest import server_command

from gapcert import systems
from gapcert.domain import SeededRng, TestDomain
from gapcert.errors import AdapterError, DomainError, ProtocolError
from gapcert.robustness import VelocityTemplate
from gapcert.testing.sim_server import FIXTURE

FIX_CFG = {"horizon": 0.2, "dt": 0.1, "timeout": 5.0}


def roundtrip(mode, **kw):
    cfg = {**FIX_CFG, "command": server_command(mode), **kw}
    return systems.subprocess_roundtrip(cfg, (0.1,), 7)


def test_fixture_roundtrip():
    s = roundtrip("fixture")
    assert s.t0 == FIXTURE["t0"] and s.dt == FIXTURE["dt"]
    np.testing.assert_array_equal(s.samples, FIXTURE["samples"])


def test_malformed_reply():
    with pytest.raises(ProtocolError):
        roundtrip("malformed")


def test_truncated_reply():
    with pytest.raises(ProtocolError):
        roundtrip("truncated")


def test_decreasing_timestamps():
    with pytest.raises(ProtocolError):
        roundtrip("decreasing")


def test_timeout():
    with pytest.raises(AdapterError) as exc:
        roundtrip("timeout", timeout=0.5)
    assert not isinstance(exc.value, ProtocolError)


def test_error_status():
    with pytest.raises(AdapterError, match="simulated failure"):
        roundtrip("error")


def test_wrong_sample_count_is_protocol_error():
    cfg = {"command": server_command("fixture"), "horizon": 1.0, "dt": 0.1, "timeout": 5.0}
    with pytest.raises(ProtocolError):
        systems.subprocess_roundtrip(cfg, (0.1,), 0)


def test_missing_executable():
    with pytest.raises(AdapterError):
        systems.subprocess_roundtrip({**FIX_CFG, "command": ["/nonexistent/simulator"]}, (0.1,), 0)


def test_subprocess_adapter_lag_mode():
    dom = TestDomain([-0.2], [0.3])
    sim = systems.SubprocessSystem(server_command("lag"), dom, systems.SIM_SIDE, 1.5, 0.01, timeout=5.0, state_dim=2)
    try:
        a = sim.rollout((0.2,), SeededRng(1))
        b = sim.rollout((0.2,), SeededRng(1))
        assert a == b and len(a) == 151
        assert abs(a.samples[-1, 0] - 0.2) < 0.02
        st = systems.expected_robustness(sim, VelocityTemplate(0.1, 0.03), (0.2,), 3, SeededRng(2))
        assert st.count == 3
        with pytest.raises(DomainError):
            sim.rollout((0.5,), SeededRng(1))
        clone = pickle.loads(pickle.dumps(sim))
        assert clone._client is None
        assert clone.rollout((0.2,), SeededRng(1)) == a
        clone.close()
    finally:
        sim.close()


def test_client_context_manager_restarts_after_failure():
    with systems.SubprocessClient(server_command("error"), 5.0) as c:
        with pytest.raises(AdapterError):
            c.rollout((0.0,), 0, 0.2, 0.1)
        assert c.state_dim == 2
