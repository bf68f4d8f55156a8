"""Experiment configuration: strict TOML schema, defaults, canonical form.

The config file is a single TOML document with named sections.  Every key is
validated against the schema below; unknown keys are hard errors (no silent
typos).  The resolved form (defaults applied) has a canonical serialization,
which is what gets hashed and embedded in the run manifest, so feeding the
resolved file back reproduces the run byte for byte.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .analysis import cauchy_scale_oracle, geometric_grid
from .scenery import (DISTRIBUTIONS, ParetoTail, Rademacher, ScenerySpec,
                      StandardGaussian, moment_audit)
from .walk import (WalkModel, custom_lattice_walk, diagonal_walk,
                   heavy_tail_walk, simple_random_walk)


class ConfigError(ValueError):
    """Configuration problem; the message starts with the offending key path."""


_INT, _FLOAT, _STR, _LIST = "int", "float", "str", "list"

_SCHEMA: dict[str, dict[str, str]] = {
    "run": {"master_seed": _INT, "threads": _INT, "output_dir": _STR,
            "horizon_T": _FLOAT},
    "walk": {"kind": _STR, "steps": _LIST, "probs": _LIST, "stride": _INT},
    "scenery": {"distribution": _STR, "chi": _FLOAT, "beta": _FLOAT,
                "skew": _FLOAT},
    "grid": {"b": _FLOAT, "j_values": _LIST},
    "experiments.variance": {"replicas": _INT, "rel_tolerance": _FLOAT,
                             "j_values": _LIST},
    "experiments.normality": {"replicas": _INT, "alpha": _FLOAT,
                              "j_values": _LIST},
    "experiments.covariance": {"replicas": _INT, "time_pairs": _LIST,
                               "ratio_band": _LIST, "j_values": _LIST},
    "experiments.concentration": {"sceneries": _INT, "walks_per_scenery": _INT,
                                  "functional": _STR, "min_sigma_drop": _FLOAT,
                                  "j_values": _LIST},
    "experiments.lemmas": {"pairs": _INT, "exit_replicas": _INT,
                           "exit_j_values": _LIST, "local_time_band": _LIST,
                           "exit_constancy": _FLOAT,
                           "intersection_bound": _FLOAT, "j_values": _LIST},
    "experiments.truncation": {"replicas": _INT, "drift_bound": _FLOAT,
                               "j_values": _LIST},
    "experiments.influence": {"couplings": _INT, "j": _INT},
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {"master_seed": 1, "threads": 0, "output_dir": "runs",
            "horizon_T": 1.0},
    "walk": {"kind": "srw"},
    "scenery": {"distribution": "gaussian", "chi": 1.0},
    "grid": {"b": 2.0, "j_values": [10, 12, 14, 16, 18, 20]},
    "experiments.variance": {"replicas": 5000, "rel_tolerance": 0.20},
    "experiments.normality": {"replicas": 2000, "alpha": 0.01},
    "experiments.covariance": {"replicas": 5000,
                               "time_pairs": [[0.25, 0.5], [0.5, 1.0]],
                               "ratio_band": [0.7, 1.3]},
    "experiments.concentration": {"sceneries": 20, "walks_per_scenery": 2000,
                                  "functional": "endpoint_cos",
                                  "min_sigma_drop": 2.0},
    "experiments.lemmas": {"pairs": 500, "exit_replicas": 2000,
                           "local_time_band": [0.1, 1.0],
                           "exit_constancy": 0.25, "intersection_bound": 2.0},
    "experiments.truncation": {"replicas": 400, "drift_bound": 5.0},
    "experiments.influence": {"couplings": 1000, "j": 12},
}

EXPERIMENT_ORDER = ("variance", "normality", "covariance", "concentration",
                    "lemmas", "truncation", "influence")


def _type_ok(value: Any, kind: str) -> bool:
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == _STR:
        return isinstance(value, str)
    if kind == _LIST:
        return isinstance(value, list)
    return False


def _coerce(value: Any, kind: str) -> Any:
    return float(value) if kind == _FLOAT else value


def _validate_section(path: str, data: dict, schema: dict[str, str]) -> dict:
    out = {}
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"{path}.{key}: unknown key")
        if not _type_ok(value, schema[key]):
            raise ConfigError(
                f"{path}.{key}: expected {schema[key]}, got {type(value).__name__}"
            )
        out[key] = _coerce(value, schema[key])
    return out


def parse_config_text(text: str) -> dict:
    """Parse, validate against the schema and apply defaults."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: invalid TOML ({exc})") from None
    resolved: dict[str, Any] = {}
    for section, data in raw.items():
        if section == "experiments":
            if not isinstance(data, dict):
                raise ConfigError("experiments: expected a table of experiments")
            for name, sub in data.items():
                spath = f"experiments.{name}"
                if spath not in _SCHEMA:
                    raise ConfigError(f"{spath}: unknown experiment")
                if not isinstance(sub, dict):
                    raise ConfigError(f"{spath}: expected a table")
                resolved[spath] = _validate_section(spath, sub, _SCHEMA[spath])
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(data, dict):
            raise ConfigError(f"{section}: expected a table")
        resolved[section] = _validate_section(section, data, _SCHEMA[section])

    for section in ("run", "walk", "scenery", "grid"):
        merged = dict(_DEFAULTS[section])
        merged.update(resolved.get(section, {}))
        resolved[section] = merged
    if not any(k.startswith("experiments.") for k in resolved):
        raise ConfigError("experiments: at least one experiment section required")
    for key in [k for k in resolved if k.startswith("experiments.")]:
        merged = dict(_DEFAULTS[key])
        merged.update(resolved[key])
        resolved[key] = merged
    return resolved


def parse_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def canonical_toml(resolved: dict) -> str:
    """Deterministic serialization: fixed section order, schema key order."""
    sections = ["run", "walk", "scenery", "grid"]
    sections += [f"experiments.{name}" for name in EXPERIMENT_ORDER
                 if f"experiments.{name}" in resolved]
    lines = []
    for section in sections:
        lines.append(f"[{section}]")
        data = resolved[section]
        for key in _SCHEMA[section]:
            if key in data:
                lines.append(f"{key} = {_toml_value(data[key])}")
        lines.append("")
    return "\n".join(lines)


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(canonical_toml(resolved).encode("utf-8")).hexdigest()


@dataclass
class RunPlan:
    """Everything the runner needs, built from a resolved config."""

    resolved: dict
    model: WalkModel
    scenery: ScenerySpec
    experiments: list[str]

    @property
    def master_seed(self) -> int:
        return self.resolved["run"]["master_seed"]


def build_model(resolved: dict) -> WalkModel:
    walk_cfg = resolved["walk"]
    kind = walk_cfg["kind"]
    if kind == "srw":
        model = simple_random_walk()
    elif kind == "diagonal":
        model = diagonal_walk()
    elif kind == "custom2d":
        if "steps" not in walk_cfg or "probs" not in walk_cfg:
            raise ConfigError("walk.steps/walk.probs: required for custom2d")
        try:
            model = custom_lattice_walk(walk_cfg["steps"], walk_cfg["probs"])
        except ValueError as exc:
            raise ConfigError(f"walk: {exc}") from None
    elif kind == "heavy_tail_1d":
        model = heavy_tail_walk(stride=walk_cfg.get("stride", 1))
    else:
        raise ConfigError(f"walk.kind: unknown kind {kind!r}")
    try:
        model.validate()
    except ValueError as exc:
        raise ConfigError(f"walk: {exc}") from None
    if kind == "heavy_tail_1d":
        try:
            model = model.with_cauchy_scale(cauchy_scale_oracle(model.pmf))
        except RuntimeError as exc:
            raise ConfigError(f"walk: {exc}") from None
    return model


def build_scenery(resolved: dict) -> ScenerySpec:
    scen_cfg = resolved["scenery"]
    name = scen_cfg["distribution"]
    if name not in DISTRIBUTIONS:
        raise ConfigError(
            f"scenery.distribution: unknown distribution {name!r}; "
            f"known: {sorted(DISTRIBUTIONS)}"
        )
    try:
        if name == "pareto":
            law = ParetoTail(beta=scen_cfg.get("beta", 3.0),
                             skew=scen_cfg.get("skew", 0.5))
        elif name == "rademacher":
            law = Rademacher()
        else:
            law = StandardGaussian()
        spec = ScenerySpec(law, chi=scen_cfg["chi"], master_seed=0)
        moment_audit(spec)
    except ValueError as exc:
        raise ConfigError(f"scenery: {exc}") from None
    return spec


def build_plan(resolved: dict) -> RunPlan:
    """Validate model and scenery, fix the experiment order."""
    geometric_grid(resolved["grid"]["b"], resolved["grid"]["j_values"])
    model = build_model(resolved)
    scenery = build_scenery(resolved)
    experiments = [name for name in EXPERIMENT_ORDER
                   if f"experiments.{name}" in resolved]
    return RunPlan(resolved, model, scenery, experiments)


def grid_for(resolved: dict, experiment: str) -> tuple[int, ...]:
    exp_cfg = resolved[f"experiments.{experiment}"]
    j_values = exp_cfg.get("j_values", resolved["grid"]["j_values"])
    return geometric_grid(resolved["grid"]["b"], j_values)
