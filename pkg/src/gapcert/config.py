"""Experiment config: JSON parsing, schema validation, defaults, object construction.

A config file is one JSON document (see ``schema/config.schema.json``).
:func:`load` validates it, fills in every default and returns the resolved
document; :func:`build` turns a resolved document into a
:class:`gapcert.verifier.VerificationConfig`.  Errors carry ``file:line``.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
from importlib import resources
from pathlib import Path

import jsonschema

from . import bo, gp, robustness, systems, verifier
from .domain import SeededRng, TestDomain
from .errors import ConfigError, GapCertError

SCHEMA_VERSION = 1
WORKERS_ENV = "GAPCERT_WORKERS"

_KIND_DEFAULTS = {
    systems.VelocityTracker.kind: {"horizon": 1.5, "dt": 0.01},
    systems.Turtlebot.kind: {"horizon": 4.0, "dt": 0.02},
    systems.SubprocessSystem.kind: {"horizon": 1.5, "dt": 0.01},
}
_PARAMS = {
    systems.VelocityTracker.kind: systems.VelocityTrackerParams,
    systems.Turtlebot.kind: systems.TurtlebotParams,
}


def schema() -> dict:
    text = resources.files("gapcert").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _line_of(text: str, path) -> int:
    """Best-effort line of the value at JSON ``path`` (keys searched in order)."""
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _fmt_path(path) -> str:
    out = "$"
    for key in path:
        out += f"[{key}]" if isinstance(key, int) else f".{key}"
    return out


def _fail(source: str, text: str, path, msg: str):
    raise ConfigError(f"{source}:{_line_of(text, path)}: {_fmt_path(path)}: {msg}")


def _resolve_side(kind: str, side: dict) -> dict:
    side = dict(side)
    gap = side.pop("injected_gap", None)
    if kind == systems.SubprocessSystem.kind:
        if "command" not in side:
            raise ValueError("subprocess side needs a 'command'")
        if gap is not None:
            raise ValueError("injected gaps are only supported on builtin adapters")
        extra = set(side) - {"command", "timeout", "state_dim"}
        if extra:
            raise ValueError(f"keys not valid for a subprocess side: {sorted(extra)}")
        return {"command": list(side["command"]), "timeout": side.get("timeout", 30.0), "state_dim": side.get("state_dim")}
    cls = _PARAMS[kind]
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(side) - names
    if extra:
        raise ValueError(f"keys not valid for {kind}: {sorted(extra)}")
    params = dataclasses.asdict(cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in side.items()}))
    out = {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}
    if gap is not None:
        out["injected_gap"] = {"offset": gap.get("offset", 0.0), "slope": gap.get("slope", 0.0), "center": gap.get("center")}
    else:
        out["injected_gap"] = None
    return out


def _resolve_measure(m: dict) -> dict:
    kind = m["kind"]
    if kind == "velocity":
        t = robustness.measure_from_config(m)
        return {"kind": kind, **{f.name: getattr(t, f.name) for f in dataclasses.fields(t)}}
    if kind == "reach_avoid":
        t = robustness.measure_from_config(m)
        return {
            "kind": kind,
            "g": list(t.g),
            "delta_g": t.delta_g,
            "delta_o": t.delta_o,
            "T": t.T,
            "indices": None if t.indices is None else list(t.indices),
        }
    robustness.measure_from_config(m)
    return {"kind": kind, "tree": m["tree"]}


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


def resolve(raw: dict, source: str = "<config>", text: str = "") -> dict:
    """Validate ``raw`` against the schema and return it with every default filled in."""
    validator = jsonschema.Draft7Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        if e.validator == "additionalProperties" and isinstance(e.instance, dict):
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            if extra:
                path.append(extra[0])
        _fail(source, text, path, e.message)

    sysc = raw["system"]
    kind = sysc["kind"]
    res = {"schema_version": SCHEMA_VERSION}
    if "description" in raw:
        res["description"] = raw["description"]
    if "output_dir" in raw:
        res["output_dir"] = raw["output_dir"]

    try:
        domain = TestDomain.from_dict(sysc["domain"])
    except GapCertError as exc:
        _fail(source, text, ["system", "domain"], str(exc))
    system = {
        "kind": kind,
        "domain": domain.to_dict(),
        "horizon": sysc.get("horizon", _KIND_DEFAULTS[kind]["horizon"]),
        "dt": sysc.get("dt", _KIND_DEFAULTS[kind]["dt"]),
    }
    for side in ("sim", "true"):
        if kind == systems.SubprocessSystem.kind and side not in sysc:
            _fail(source, text, ["system"], f"subprocess pair needs a '{side}' block")
        try:
            system[side] = _resolve_side(kind, sysc.get(side, {}))
        except (GapCertError, ValueError, TypeError) as exc:
            _fail(source, text, ["system", side], str(exc))
    res["system"] = system

    try:
        res["measure"] = _resolve_measure(raw["measure"])
    except (GapCertError, ValueError, TypeError, KeyError) as exc:
        _fail(source, text, ["measure"], str(exc))

    for key in ("rob_params", "gap_params"):
        try:
            res[key] = bo.BoParams.from_dict(raw[key]).to_dict()
        except GapCertError as exc:
            _fail(source, text, [key], str(exc))

    kc = raw["kernel"]
    if len(kc["lengthscales"]) != domain.dim:
        _fail(source, text, ["kernel", "lengthscales"], f"need {domain.dim} lengthscale(s) to match the test domain")
    res["kernel"] = {"family": kc["family"], "lengthscales": list(kc["lengthscales"]), "signal_variance": kc.get("signal_variance", 1.0)}

    res["M"] = raw.get("M", 20)
    res["master_seed"] = raw.get("master_seed", 0)
    res["workers"] = raw.get("workers", default_workers())
    rep = raw.get("repeat", {})
    res["repeat"] = {
        "b_values": list(rep.get("b_values", verifier.DEFAULT_B_VALUES)),
        "runs_per_b": rep.get("runs_per_b", 20),
    }
    orc = raw.get("oracle", {})
    res["oracle"] = {
        "points_per_dim": orc.get("points_per_dim", 200),
        "rollouts": orc.get("rollouts", 500),
        "budget": orc.get("budget", 100_000),
    }
    return res


def load(path) -> dict:
    """Read, validate and resolve a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from None
    return resolve(raw, str(path), text)


def build(res: dict) -> verifier.VerificationConfig:
    """Construct the runtime objects from a resolved config."""
    try:
        pair = systems.build_pair(res["system"])
        measure = robustness.measure_from_config(res["measure"])
        return verifier.VerificationConfig(
            pair=pair,
            measure=measure,
            rob_params=bo.BoParams.from_dict(res["rob_params"]),
            gap_params=bo.BoParams.from_dict(res["gap_params"]),
            kernel=gp.KernelSpec.from_dict(res["kernel"]),
            M=res["M"],
            master_seed=res["master_seed"],
        )
    except (GapCertError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"config rejected: {exc}") from None


def provenance(res: dict) -> dict:
    """Run-relevant part of a resolved config plus every derived stream seed.

    Output location and parallelism do not affect results and are left out,
    so a replay into a different directory reproduces the report exactly.
    """
    cfg = {k: v for k, v in res.items() if k not in ("output_dir", "workers")}
    root = SeededRng(res["master_seed"])
    return {
        "config": cfg,
        "seeds": {
            "master_seed": res["master_seed"],
            "streams": {name: root.child(name).integer_seed() for name in ("rho", "gap")},
        },
    }


def dumps(res: dict) -> str:
    return json.dumps(res, indent=2, sort_keys=True) + "\n"
