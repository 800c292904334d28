import math

import numpy as np
import pytest

from gapcert import bo, gp
from gapcert.domain import SeededRng, TestDomain
from gapcert.errors import ParameterError, UnterminatedError
from gapcert.oracles import GridSpec, grid_optimum, random_rkhs_function

SE1 = gp.KernelSpec("squared-exponential", (1.0,), 1.0)
UNIT = TestDomain([0.0], [1.0])


def test_params_validation():
    for bad in (dict(delta=0.0), dict(delta=1.5), dict(epsilon=0.0), dict(B=0.0), dict(R=-1.0), dict(lam=-1.0)):
        kw = dict(B=1.0, R=0.1, delta=0.05, epsilon=0.1)
        kw.update(bad)
        with pytest.raises(ParameterError):
            bo.BoParams(**kw)
    p = bo.BoParams(1.0, 0.1, 0.05, 0.1)
    assert bo.BoParams.from_dict(p.to_dict()) == p


def test_beta_reference_constants():
    m = gp.fit(gp.Dataset([[0.0]], [0.0]), SE1, 1e-6)
    b = bo.beta(1, m, bo.BoParams(B=1.5, R=0.1, delta=1e-6, epsilon=0.003))
    assert b == pytest.approx(2.0386772268905418, abs=1e-12)


def test_beta_degenerate_cases():
    m = gp.fit(gp.Dataset([[0.0], [0.5]], [0.0, 0.0]), SE1, 1e-6)
    assert bo.beta(2, m, bo.BoParams(B=1.3, R=0.0, delta=0.5, epsilon=0.1)) == 1.3
    tiny = gp.KernelSpec("squared-exponential", (1.0,), 1e-14)
    mt = gp.fit(gp.Dataset([[0.0]], [0.0]), tiny, 1e-6)
    # eta_1 = 2 keeps ln(3) in the log term even as K -> 0
    b = bo.beta(1, mt, bo.BoParams(B=1.0, R=0.1, delta=1.0, epsilon=0.1))
    assert b == pytest.approx(1.0 + 0.1 * math.sqrt(math.log(3.0)), abs=1e-9)
    with pytest.raises(ParameterError):
        bo.beta(3, m, bo.BoParams(1.0, 0.1, 0.05, 0.1))


def test_maximize_ucb_mean_peak_at_single_datum():
    m = gp.fit(gp.Dataset([[0.3]], [5.0]), SE1, 0.0)
    z = bo.maximize_ucb(m, 0.0, UNIT, 10, SeededRng(0))
    assert z[0] == pytest.approx(0.3, abs=1e-5)


def test_maximize_ucb_large_beta_goes_to_endpoint():
    m = gp.fit(gp.Dataset([[0.5]], [0.0]), SE1, 0.0)
    z = bo.maximize_ucb(m, 1e6, UNIT, 10, SeededRng(0))
    assert z[0] in (0.0, 1.0)


def test_maximize_ucb_symmetric_values_and_determinism():
    dom = TestDomain([-1.0], [1.0])
    m = gp.fit(gp.Dataset([[-0.5], [0.5]], [1.0, 1.0]), gp.KernelSpec("squared-exponential", (0.3,), 1.0), 1e-4)
    z = bo.maximize_ucb(m, 2.0, dom, 8, SeededRng(1))
    assert m.ucb(z[None, :], 2.0)[0] == pytest.approx(m.ucb(-z[None, :], 2.0)[0], abs=1e-9)
    assert np.array_equal(z, bo.maximize_ucb(m, 2.0, dom, 8, SeededRng(1)))


def test_maximize_ucb_beats_seed_grid():
    rng = np.random.default_rng(0)
    dom = TestDomain([0, 0], [1, 1])
    k = gp.KernelSpec("matern-5/2", (0.2, 0.3), 1.0)
    m = gp.fit(gp.Dataset(rng.uniform(0, 1, (8, 2)), rng.normal(size=8)), k, 1e-4)
    z = bo.maximize_ucb(m, 1.5, dom, 16, SeededRng(4))
    seeds = bo._latin_seeds(dom, 16, SeededRng(4).generator())
    assert m.ucb(z[None, :], 1.5)[0] >= m.ucb(seeds, 1.5).max()
    assert np.all(z >= 0) and np.all(z <= 1)


def test_run_constant_objective():
    c = 0.7
    obj = bo.objective_from_function(lambda z: c, UNIT)
    cert = bo.run(obj, bo.BoParams(B=1.0, R=0.01, delta=0.05, epsilon=0.05, lam=0.0), SE1, None, SeededRng(0))
    assert c <= cert.bound <= c + 0.05
    assert cert.trace[-1].F <= 0.05


def test_run_terminates_immediately_for_loose_epsilon():
    obj = bo.objective_from_function(lambda z: 0.0, UNIT)
    cert = bo.run(obj, bo.BoParams(B=1.0, R=0.1, delta=0.05, epsilon=100.0), SE1, None, SeededRng(0))
    assert cert.iterations == 1


def test_certificate_invariants_and_roundtrip():
    J = random_rkhs_function(gp.KernelSpec("squared-exponential", (0.2,), 1.0), UNIT, 3, SeededRng(7))
    k = gp.KernelSpec("squared-exponential", (0.2,), 1.0)
    p = bo.BoParams(B=1.05 * J.norm, R=0.01, delta=0.05, epsilon=0.05)
    cert = bo.run(bo.objective_from_function(J, UNIT), p, k, None, SeededRng(3))
    assert cert.trace[-1].F <= p.epsilon
    assert all(r.beta >= p.B and r.F >= 0 for r in cert.trace)
    assert cert.recompute_bound() == pytest.approx(cert.bound, abs=1e-12)
    back = bo.BoundCertificate.from_dict(cert.to_dict())
    assert back.bound == cert.bound and back.final_dataset == cert.final_dataset
    assert len(cert.trace_csv().splitlines()) == cert.iterations + 1
    # UCB-maximality of the final query point on 1000 random points
    prev = cert.final_dataset.head(len(cert.final_dataset) - 1)
    m = gp.fit(prev, k, p.lam)
    Z = np.random.default_rng(0).uniform(0, 1, (1000, 1))
    assert m.ucb(Z, cert.trace[-1].beta).max() <= cert.bound + 1e-6


def test_run_is_deterministic():
    J = random_rkhs_function(gp.KernelSpec("squared-exponential", (0.2,), 1.0), UNIT, 3, SeededRng(8))
    k = gp.KernelSpec("squared-exponential", (0.2,), 1.0)
    p = bo.BoParams(B=1.05 * J.norm, R=0.01, delta=0.05, epsilon=0.05)
    a = bo.run(bo.objective_from_function(J, UNIT), p, k, None, SeededRng(5))
    b = bo.run(bo.objective_from_function(J, UNIT), p, k, None, SeededRng(5))
    assert a.to_json() == b.to_json()


def test_lower_bound_min_duality():
    J = random_rkhs_function(gp.KernelSpec("squared-exponential", (0.2,), 1.0), UNIT, 3, SeededRng(9))
    k = gp.KernelSpec("squared-exponential", (0.2,), 1.0)
    p = bo.BoParams(B=1.05 * J.norm, R=0.01, delta=0.05, epsilon=0.05)
    lo = bo.lower_bound_min(bo.objective_from_function(J, UNIT), p, k, None, SeededRng(2))
    hi = bo.run(bo.objective_from_function(lambda z: -J(z), UNIT), p, k, None, SeededRng(2))
    assert lo.bound == -hi.bound
    assert lo.sense == "min"
    assert [r.y for r in lo.trace] == [-r.y for r in hi.trace]
    _, jmin = grid_optimum(J, GridSpec(2001, UNIT), "min")
    assert lo.bound <= jmin and jmin - lo.bound <= p.epsilon + 1e-3
    assert lo.recompute_bound() == pytest.approx(lo.bound, abs=1e-12)


def test_lower_bound_min_constant():
    obj = bo.objective_from_function(lambda z: -0.2, UNIT)
    cert = bo.lower_bound_min(obj, bo.BoParams(B=1.0, R=0.01, delta=0.05, epsilon=0.05), SE1, None, SeededRng(0))
    assert -0.25 <= cert.bound <= -0.2


def test_unterminated_carries_partial_trace():
    obj = bo.Objective(lambda z, r: float(r.generator().standard_normal()), UNIT)
    p = bo.BoParams(B=1.0, R=1.0, delta=0.05, epsilon=1e-6, max_iters=5)
    with pytest.raises(UnterminatedError) as exc:
        bo.lower_bound_min(obj, p, SE1, None, SeededRng(0))
    assert len(exc.value.trace) == 5
    assert len(exc.value.dataset) == 6


def test_user_supplied_initial_dataset():
    obj = bo.objective_from_function(lambda z: float(z[0]), UNIT)
    init = gp.Dataset([[0.1], [0.9]], [0.1, 0.9])
    cert = bo.run(obj, bo.BoParams(B=2.0, R=0.01, delta=0.05, epsilon=0.05), SE1, init, SeededRng(0))
    np.testing.assert_array_equal(cert.final_dataset.points[:2], init.points)
    with pytest.raises(ParameterError):
        bo.run(obj, bo.BoParams(B=2.0, R=0.01, delta=0.05, epsilon=0.05), SE1, gp.Dataset.empty(1), SeededRng(0))
