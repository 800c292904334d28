"""Two BO runs combined into a certified lower bound on true-system robustness.

1. Lower-bound the simulator's minimum expected robustness (``rho_hat_e``).
2. Upper-bound the maximum expected sim-vs-true robustness gap (``e_e``).
3. ``rho_e = rho_hat_e - e_e`` holds below the true system's minimum expected
   robustness with probability at least ``(1 - delta0)(1 - delta1)``, and is
   within ``2 e_e + eps0 + eps1`` of it.

Seeds: every task draws from ``SeededRng(master_seed)`` children keyed by a
fixed name ("rho", "gap", "oracle-true", ...).  Repeated runs use
``derive_seed(master_seed, "repeat", k)`` for run index k (B-major order), and
end-to-end runs use ``derive_seed(master_seed, "e2e", r)``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import bo, gp, systems
from .domain import SeededRng, derive_seed
from .errors import ParameterError, UnterminatedError
from .oracles import GridSpec, grid_optimum

REPORT_SCHEMA_VERSION = 1
DEFAULT_B_VALUES = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5)


@dataclass(frozen=True)
class VerificationConfig:
    pair: systems.SystemPair
    measure: object
    rob_params: bo.BoParams
    gap_params: bo.BoParams
    kernel: gp.KernelSpec
    M: int = 20
    master_seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ParameterError("M must be >= 1")
        if self.kernel.dim != self.pair.domain.dim:
            raise ParameterError("kernel dimension must match the test domain")

    def replace(self, **changes) -> "VerificationConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class VerificationReport:
    rho_hat_e: float
    e_e: float
    rho_e: float
    epsilon: float
    confidence: float
    eps0: float
    eps1: float
    delta0: float
    delta1: float
    rho_certificate: bo.BoundCertificate = field(repr=False)
    gap_certificate: bo.BoundCertificate = field(repr=False)
    provenance: dict = field(default_factory=dict, repr=False)

    @property
    def e_e_floored(self) -> float:
        return max(0.0, self.e_e)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rho_hat_e": self.rho_hat_e,
            "e_e": self.e_e,
            "e_e_floored": self.e_e_floored,
            "rho_e": self.rho_e,
            "epsilon": self.epsilon,
            "confidence": self.confidence,
            "eps0": self.eps0,
            "eps1": self.eps1,
            "delta0": self.delta0,
            "delta1": self.delta1,
            "certified_interval": [self.rho_e, self.rho_e + self.epsilon],
            "acquisition_note": (
                "UCB maximisation is best-found (Latin grid seeds + compass search); "
                "the bounds inherit any gap to the true UCB maximum"
            ),
            "rho_certificate": self.rho_certificate.to_dict(),
            "gap_certificate": self.gap_certificate.to_dict(),
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _rho_sampler(cfg: VerificationConfig):
    sim, measure, M = cfg.pair.sim_sys, cfg.measure, cfg.M

    def sampler(z, rng):
        return systems.expected_robustness(sim, measure, z, M, rng).mean

    return sampler


def _gap_sampler(cfg: VerificationConfig):
    pair, measure, M = cfg.pair, cfg.measure, cfg.M

    def sampler(z, rng):
        return systems.expected_gap(pair, measure, z, M, rng).mean

    return sampler


def bound_sim_robustness(cfg: VerificationConfig) -> bo.BoundCertificate:
    """Certified lower bound on the simulator's minimum expected robustness."""
    obj = bo.Objective(_rho_sampler(cfg), cfg.pair.domain)
    return bo.lower_bound_min(obj, cfg.rob_params, cfg.kernel, None, SeededRng(cfg.master_seed).child("rho"))


def bound_gap(cfg: VerificationConfig) -> bo.BoundCertificate:
    """Certified upper bound on the maximum expected robustness gap."""
    obj = bo.Objective(_gap_sampler(cfg), cfg.pair.domain)
    return bo.run(obj, cfg.gap_params, cfg.kernel, None, SeededRng(cfg.master_seed).child("gap"))


def combine(rho_cert: bo.BoundCertificate, gap_cert: bo.BoundCertificate, provenance: dict | None = None) -> VerificationReport:
    rho_hat_e, e_e = rho_cert.bound, gap_cert.bound
    eps0, eps1 = rho_cert.epsilon, gap_cert.epsilon
    d0, d1 = rho_cert.delta, gap_cert.delta
    return VerificationReport(
        rho_hat_e=rho_hat_e,
        e_e=e_e,
        rho_e=rho_hat_e - e_e,
        epsilon=2 * e_e + eps0 + eps1,
        confidence=(1 - d0) * (1 - d1),
        eps0=eps0,
        eps1=eps1,
        delta0=d0,
        delta1=d1,
        rho_certificate=rho_cert,
        gap_certificate=gap_cert,
        provenance=provenance or {},
    )


def verify(cfg: VerificationConfig, provenance: dict | None = None) -> VerificationReport:
    return combine(bound_sim_robustness(cfg), bound_gap(cfg), provenance)


# ---------------------------------------------------------------------------
# repeatability


@dataclass(frozen=True)
class RepeatRun:
    B: float
    seed: int
    rho_hat_e: float
    iterations: int
    status: str


@dataclass(frozen=True)
class RepeatabilityResult:
    runs: list
    spread: float
    tolerance: float

    @property
    def completed(self) -> list:
        return [r for r in self.runs if r.status == "ok"]

    @property
    def failed(self) -> list:
        return [r for r in self.runs if r.status != "ok"]

    @property
    def passed(self) -> bool:
        return bool(self.completed) and self.spread <= self.tolerance

    def to_csv(self) -> str:
        lines = ["B,seed,rho_hat_e,iterations,status"]
        for r in self.runs:
            lines.append(f"{r.B!r},{r.seed},{r.rho_hat_e!r},{r.iterations},{r.status}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        vals = [r.rho_hat_e for r in self.completed]
        return {
            "runs": len(self.runs),
            "completed": len(self.completed),
            "failed": len(self.failed),
            "spread": self.spread,
            "tolerance": self.tolerance,
            "min_rho_hat_e": min(vals) if vals else None,
            "max_rho_hat_e": max(vals) if vals else None,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def _repeat_task(args):
    cfg, B, seed = args
    run_cfg = cfg.replace(rob_params=cfg.rob_params.replace(B=B), master_seed=seed)
    try:
        cert = bound_sim_robustness(run_cfg)
    except UnterminatedError as exc:
        return RepeatRun(B, seed, math.nan, len(exc.trace), "unterminated")
    return RepeatRun(B, seed, cert.bound, cert.iterations, "ok")


def _map(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def repeatability_study(cfg: VerificationConfig, B_values=DEFAULT_B_VALUES, runs_per_B: int = 20,
                        workers: int = 1, same_seed: bool = False) -> RepeatabilityResult:
    """Run the simulator-robustness bound ``runs_per_B`` times per B value.

    PASS iff the spread (max - min) of the completed ``rho_hat_e`` values is at
    most the robustness tolerance eps0.  Unterminated runs are reported with
    status ``unterminated`` and excluded from the spread.
    """
    if runs_per_B < 2:
        raise ParameterError("runs_per_B must be >= 2 for a spread to be meaningful")
    tasks = []
    for b_idx, B in enumerate(B_values):
        for r in range(runs_per_B):
            k = b_idx * runs_per_B + r
            seed = cfg.master_seed if same_seed else derive_seed(cfg.master_seed, "repeat", k)
            tasks.append((cfg, float(B), seed))
    runs = _map(_repeat_task, tasks, workers)
    vals = [r.rho_hat_e for r in runs if r.status == "ok"]
    spread = (max(vals) - min(vals)) if vals else math.inf
    return RepeatabilityResult(runs, spread, cfg.rob_params.epsilon)


# ---------------------------------------------------------------------------
# brute-force oracles and end-to-end soundness


def oracle_values(cfg: VerificationConfig, points_per_dim: int = 200, rollouts: int = 500,
                  budget: int = 100_000) -> dict:
    """Grid x Monte-Carlo estimates of rho*, rho_hat* and e* for a builtin pair.

    Every grid point reuses the same random streams (common random numbers),
    so differences between grid points are not swamped by sampling noise.
    """
    if not cfg.pair.builtin:
        raise ParameterError("oracle requires a builtin pair")
    grid = GridSpec(points_per_dim, cfg.pair.domain, budget)
    root = SeededRng(cfg.master_seed)
    out = {"grid": {"points_per_dim": int(points_per_dim), "rollouts": int(rollouts), "size": grid.size}}
    M = int(rollouts)

    def stats_fn(kind):
        cache = {}

        def stats(z):
            key = tuple(z)
            if key not in cache:
                if kind == "true":
                    cache[key] = systems.expected_robustness(cfg.pair.true_sys, cfg.measure, z, M, root.child("oracle-true"))
                elif kind == "sim":
                    cache[key] = systems.expected_robustness(cfg.pair.sim_sys, cfg.measure, z, M, root.child("oracle-sim"))
                else:
                    cache[key] = systems.expected_gap(cfg.pair, cfg.measure, z, M, root.child("oracle-gap"))
            return cache[key]

        return stats

    for name, kind, mode in (("rho_star", "true", "min"), ("rho_hat_star", "sim", "min"), ("e_star", "gap", "max")):
        stats = stats_fn(kind)
        z, v = grid_optimum(lambda z: stats(z).mean, grid, mode)
        st = stats(z)
        out[name] = v
        out[f"{name}_arg"] = [float(c) for c in z]
        out[f"{name}_stderr"] = st.stderr if M > 1 else 0.0
    out["stderr"] = max(out["rho_star_stderr"], out["rho_hat_star_stderr"], out["e_star_stderr"])
    return out


def _e2e_task(args):
    cfg, seed = args
    run_cfg = cfg.replace(master_seed=seed)
    try:
        rep = verify(run_cfg)
    except UnterminatedError as exc:
        return {"seed": seed, "status": "unterminated", "message": str(exc)}
    return {
        "seed": seed,
        "status": "ok",
        "rho_hat_e": rep.rho_hat_e,
        "e_e": rep.e_e,
        "rho_e": rep.rho_e,
        "epsilon": rep.epsilon,
    }


def end_to_end_soundness(cfg: VerificationConfig, oracle_budget: dict | None = None, runs: int = 40,
                         workers: int = 1) -> dict:
    """Check ``rho_e <= rho*`` and ``|rho* - rho_e| <= epsilon`` over seeded repetitions.

    ``oracle_budget`` holds ``points_per_dim``, ``rollouts`` and ``budget`` for
    :func:`oracle_values`.  The oracle's standard error is added as slack.
    Failures are data: the return value lists every run and the pass rate.
    """
    ob = {"points_per_dim": 200, "rollouts": 500, "budget": 100_000, **(oracle_budget or {})}
    oracle = oracle_values(cfg, ob["points_per_dim"], ob["rollouts"], ob["budget"])
    rho_star = oracle["rho_star"]
    slack = 2.0 * oracle["rho_star_stderr"]
    tasks = [(cfg, derive_seed(cfg.master_seed, "e2e", r)) for r in range(runs)]
    records = _map(_e2e_task, tasks, workers)
    for rec in records:
        if rec["status"] != "ok":
            rec["passed"] = False
            continue
        below = rec["rho_e"] <= rho_star + slack
        close = abs(rho_star - rec["rho_e"]) <= rec["epsilon"] + slack
        rec["lower_bound_holds"] = bool(below)
        rec["within_epsilon"] = bool(close)
        rec["passed"] = bool(below and close)
    passes = sum(r["passed"] for r in records)
    d0, d1 = cfg.rob_params.delta, cfg.gap_params.delta
    return {
        "oracle": oracle,
        "slack": slack,
        "runs": records,
        "pass_rate": passes / max(len(records), 1),
        "required_rate": (1 - d0) * (1 - d1) - 0.05,
    }


def report_arithmetic_holds(rep: VerificationReport) -> bool:
    return (
        rep.rho_e == rep.rho_hat_e - rep.e_e
        and rep.epsilon == 2 * rep.e_e + rep.eps0 + rep.eps1
        and rep.confidence == (1 - rep.delta0) * (1 - rep.delta1)
    )

