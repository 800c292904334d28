"""Command-line entry point.

    gapcert verify CONFIG --out DIR
    gapcert repeat CONFIG --out DIR [--b-values 1,1.5,...] [--runs-per-b N] [--same-seed]
    gapcert oracle CONFIG --out DIR
    gapcert plotdata RUN_DIR [--out DIR]

Exit codes: 0 success, 2 invalid input, 3 run failure, 4 repeatability FAIL.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import systems, verifier
from .domain import SeededRng
from .errors import BudgetError, ConfigError, GapCertError, ParameterError, UnterminatedError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUN = 3
EXIT_REPEAT_FAIL = 4

RESOLVED_NAME = "config.resolved.json"


class _Usage(Exception):
    pass


def _err(msg: str):
    print(f"gapcert: error: {msg}", file=sys.stderr)


def _out_dir(args, res: dict) -> Path:
    out = args.out or res.get("output_dir")
    if not out:
        raise _Usage("no output directory: pass --out or set output_dir in the config")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str):
    path.write_text(text)


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------------------
# verify


def _summary_verify(rep: verifier.VerificationReport) -> str:
    rc, gc = rep.rho_certificate, rep.gap_certificate
    verdict = "satisfied" if rep.rho_e >= 0 else "not certified (negative bound)"
    lines = [
        "certified robustness bound",
        f"  rho_hat_e (sim min, lower bound) : {_fmt(rep.rho_hat_e)}  [{rc.iterations} iterations, argmin {list(rc.argbest)}]",
        f"  e_e (gap max, upper bound)       : {_fmt(rep.e_e)}  [{gc.iterations} iterations, argmax {list(gc.argbest)}]",
        f"  e_e floored at 0                 : {_fmt(rep.e_e_floored)}",
        f"  rho_e = rho_hat_e - e_e          : {_fmt(rep.rho_e)}",
        f"  epsilon = 2 e_e + eps0 + eps1    : {_fmt(rep.epsilon)}",
        f"  confidence (1-d0)(1-d1)          : {_fmt(rep.confidence)}",
        f"  specification on true system     : {verdict}",
    ]
    return "\n".join(lines) + "\n"


def cmd_verify(args) -> int:
    res = cfgmod.load(args.config)
    cfg = cfgmod.build(res)
    out = _out_dir(args, res)
    _write(out / RESOLVED_NAME, cfgmod.dumps(res))
    prov = cfgmod.provenance(res)
    _write(out / "seeds.json", json.dumps(prov["seeds"], indent=2, sort_keys=True) + "\n")
    try:
        rho_cert = verifier.bound_sim_robustness(cfg)
        rho_cert.trace_csv(out / "rho_trace.csv")
        _write(out / "rho_certificate.json", rho_cert.to_json() + "\n")
        gap_cert = verifier.bound_gap(cfg)
        gap_cert.trace_csv(out / "gap_trace.csv")
        _write(out / "gap_certificate.json", gap_cert.to_json() + "\n")
    except UnterminatedError as exc:
        _err(f"run failed: {exc}")
        _write(out / "failure.txt", f"{exc}\npartial trace length: {len(exc.trace)}\n")
        return EXIT_RUN
    finally:
        cfg.pair.close()
    rep = verifier.combine(rho_cert, gap_cert, prov)
    _write(out / "report.json", rep.to_json())
    summary = _summary_verify(rep)
    _write(out / "summary.txt", summary)
    sys.stdout.write(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# repeat


def _parse_b_values(text: str):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise _Usage(f"--b-values must be a comma-separated list of numbers, got {text!r}") from None
    if not vals or min(vals) <= 0:
        raise _Usage("--b-values needs at least one positive value")
    return vals


def cmd_repeat(args) -> int:
    res = cfgmod.load(args.config)
    if args.b_values is not None:
        res["repeat"]["b_values"] = _parse_b_values(args.b_values)
    if args.runs_per_b is not None:
        res["repeat"]["runs_per_b"] = args.runs_per_b
    if res["repeat"]["runs_per_b"] < 2:
        raise _Usage("--runs-per-b must be >= 2 (a spread needs at least two runs)")
    if args.workers is not None:
        res["workers"] = args.workers
    cfg = cfgmod.build(res)
    out = _out_dir(args, res)
    _write(out / RESOLVED_NAME, cfgmod.dumps(res))
    try:
        result = verifier.repeatability_study(
            cfg, res["repeat"]["b_values"], res["repeat"]["runs_per_b"], res["workers"], args.same_seed
        )
    finally:
        cfg.pair.close()
    _write(out / "repeat.csv", result.to_csv())
    summ = {**result.summary(), "same_seed": bool(args.same_seed), "master_seed": res["master_seed"]}
    _write(out / "repeat_summary.json", json.dumps(summ, indent=2, sort_keys=True) + "\n")
    text = (
        f"repeatability: {summ['completed']}/{summ['runs']} runs completed, "
        f"spread {_fmt(summ['spread'])} vs tolerance {_fmt(summ['tolerance'])} -> {summ['verdict']}\n"
    )
    _write(out / "summary.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if result.passed else EXIT_REPEAT_FAIL


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    res = cfgmod.load(args.config)
    if res["system"]["kind"] == systems.SubprocessSystem.kind:
        raise _Usage("oracle requires builtin pair")
    o = res["oracle"]
    cfg = cfgmod.build(res)
    out = _out_dir(args, res)
    _write(out / RESOLVED_NAME, cfgmod.dumps(res))
    try:
        vals = verifier.oracle_values(cfg, o["points_per_dim"], o["rollouts"], o["budget"])
    except BudgetError as exc:
        raise _Usage(str(exc)) from None
    _write(out / "oracle.json", json.dumps(vals, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(
        f"rho_star {_fmt(vals['rho_star'])} at {vals['rho_star_arg']}, "
        f"e_star {_fmt(vals['e_star'])} at {vals['e_star_arg']}, stderr {_fmt(vals['stderr'])}\n"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# plotdata


def _read_csv(path: Path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _velocity_trace(run_dir: Path):
    """Rollouts at the certified worst-case point, with the velocity spec's bands."""
    res_path, rep_path = run_dir / RESOLVED_NAME, run_dir / "report.json"
    if not (res_path.exists() and rep_path.exists()):
        return None
    res = json.loads(res_path.read_text())
    if res["measure"]["kind"] != "velocity" or res["system"]["kind"] != systems.VelocityTracker.kind:
        return None
    rep = json.loads(rep_path.read_text())
    d = np.asarray(rep["rho_certificate"]["argbest"], dtype=float)
    cfg = cfgmod.build(res)
    template = cfg.measure
    spec = template.spec(d)
    rows = []
    rng = SeededRng(res["master_seed"]).child("plot")
    for name, sys_ in (("simulator", cfg.pair.sim_sys), ("true-system", cfg.pair.true_sys)):
        s = sys_.rollout(d, rng.child(name))
        t = s.times
        lo, hi = spec.bands(t)
        vx = s.samples[:, template.vx_index]
        for ti, vi, li, hi_ in zip(t, vx, lo, hi):
            rows.append([name, repr(float(ti)), repr(float(vi)), "" if np.isnan(li) else repr(float(li)),
                         "" if np.isnan(hi_) else repr(float(hi_))])
    return _csv_text(["side", "t", "vx", "band_lo", "band_hi"], rows)


def cmd_plotdata(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise _Usage(f"run directory {run_dir} does not exist")
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    written = []

    conv = []
    for problem in ("rho", "gap"):
        p = run_dir / f"{problem}_trace.csv"
        if p.exists():
            for r in _read_csv(p):
                conv.append([problem, r["iteration"], r["beta"], r["F"]])
    if conv:
        _write(out / "convergence.csv", _csv_text(["problem", "iteration", "beta", "F"], conv))
        written.append("convergence.csv")

    rp = run_dir / "repeat.csv"
    if rp.exists():
        rows = [[r["B"], r["seed"], r["rho_hat_e"], r["status"]] for r in _read_csv(rp)]
        _write(out / "scatter.csv", _csv_text(["B", "seed", "rho_hat_e", "status"], rows))
        written.append("scatter.csv")

    vt = _velocity_trace(run_dir)
    if vt is not None:
        _write(out / "velocity_trace.csv", vt)
        written.append("velocity_trace.csv")

    if not written:
        raise _Usage(f"no plottable artifacts in {run_dir} (expected traces, repeat.csv or report.json)")
    sys.stdout.write("wrote " + ", ".join(written) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gapcert", description="Certified Sim2Real robustness bounds via modified GP-UCB.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="bound simulator robustness and the gap, then combine")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides output_dir in the config)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("repeat", help="repeatability study over several B values")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--b-values", help="comma-separated RKHS norm bounds")
    p.add_argument("--runs-per-b", type=int)
    p.add_argument("--same-seed", action="store_true", help="reuse master_seed for every run")
    p.add_argument("--workers", type=int, help=f"parallel runs (default: config, then ${cfgmod.WORKERS_ENV}, then 1)")
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("oracle", help="grid x Monte-Carlo ground truth for a builtin pair")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plotdata", help="plot-ready CSVs from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, _Usage) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except ParameterError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except GapCertError as exc:
        _err(f"run failed: {exc}")
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
