"""Run configuration: a TOML file with sections grid, params, scenario, run, monitors, tracers, output.

Every key has a default (see :data:`DEFAULTS`); unknown keys are rejected so
typos surface at load time.  ``--override section.key=value`` parses
``value`` as a TOML literal and falls back to a bare string.
"""

from __future__ import annotations

import copy
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import lagrangian
from .dynamics import RunConfig
from .fields import GridSpec
from .state import PhysParams, SCENARIOS, Scenario

log = logging.getLogger(__name__)

MONITORS = ("sobolev", "log_gradient", "sup_interpolation", "lame_b6")

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "grid": {"dim": 2, "n": 64, "length": 1.0},
    "params": {"mu": 0.05, "lam": 0.0, "rho_floor": 1e-10, "vacuum_threshold": 1e-8},
    "scenario": {"name": "shear"},
    "run": {
        "t_end": 0.5,
        "cfl": 0.4,
        "dt_min": 1e-9,
        "blowup_factor": 50.0,
        "output_every": 10,
        "snapshot_every": 0,
        "dt_fixed": None,
        "max_steps": None,
    },
    "monitors": {"q_tilde": 4.0, "every": 0, "enabled": list(MONITORS)},
    "tracers": {"count": 0, "layout": "random", "interpolation": "linear", "substeps": 1},
    "output": {"dir": "out", "csv": True, "snapshots": True},
}

SCENARIO_KEYS = {f.name for f in fields(Scenario)} - {"seed"}


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


def parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(tree: Dict[str, Any], assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-table")
    node[parts[-1]] = parse_value(value.strip())


def _merge(base: Dict[str, Any], user: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in user.items():
        where = f"{path}{k}"
        if path == "scenario." and k in SCENARIO_KEYS | {"name"}:
            out[k] = v
            continue
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a table")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


@dataclass
class Config:
    seed: int
    grid: GridSpec
    params: PhysParams
    scenario: Scenario
    run: RunConfig
    q_tilde: float
    monitor_every: int
    monitors: tuple
    tracer_count: int
    tracer_layout: str
    tracer_interpolation: str
    tracer_substeps: int
    output_dir: Path
    write_csv: bool
    write_snapshots: bool
    raw: Dict[str, Any]

    @classmethod
    def from_tree(cls, tree: Dict[str, Any]) -> "Config":
        t = _merge(DEFAULTS, tree)
        try:
            seed = int(t["seed"])
            g = t["grid"]
            length = g["length"]
            grid = GridSpec(int(g["dim"]), int(g["n"]), tuple(length) if isinstance(length, list) else float(length))
            params = PhysParams(**{k: float(v) for k, v in t["params"].items()})
            sc = dict(t["scenario"])
            if sc.get("name") not in SCENARIOS:
                raise ConfigError(f"scenario.name must be one of {sorted(SCENARIOS)}, got {sc.get('name')!r}")
            scenario = Scenario(seed=seed, **sc)
            r = dict(t["run"])
            mon = t["monitors"]
            run = RunConfig(q_tilde=float(mon["q_tilde"]), **r)
            enabled = tuple(mon["enabled"])
            unknown = set(enabled) - set(MONITORS)
            if unknown:
                raise ConfigError(f"unknown monitors {sorted(unknown)}; choose from {MONITORS}")
            tr = t["tracers"]
            if tr["layout"] not in ("random", "lattice"):
                raise ConfigError("tracers.layout must be 'random' or 'lattice'")
            if tr["interpolation"] not in lagrangian.INTERPOLATIONS:
                raise ConfigError(f"tracers.interpolation must be one of {lagrangian.INTERPOLATIONS}")
            if int(tr["count"]) < 0 or int(tr["substeps"]) < 1 or int(mon["every"]) < 0:
                raise ConfigError("tracers.count >= 0, tracers.substeps >= 1 and monitors.every >= 0 required")
            if int(tr["count"]) > 0 and not run.snapshot_every:
                raise ConfigError("tracers need run.snapshot_every > 0")
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        params.warn_if_outside_hypothesis(grid.dim)
        out = t["output"]
        return cls(
            seed=seed,
            grid=grid,
            params=params,
            scenario=scenario,
            run=run,
            q_tilde=run.q_tilde,
            monitor_every=int(mon["every"]),
            monitors=enabled,
            tracer_count=int(tr["count"]),
            tracer_layout=tr["layout"],
            tracer_interpolation=tr["interpolation"],
            tracer_substeps=int(tr["substeps"]),
            output_dir=Path(out["dir"]),
            write_csv=bool(out["csv"]),
            write_snapshots=bool(out["snapshots"]),
            raw=t,
        )


def load_config(path: Optional[Path] = None, overrides: Iterable[str] = (), seed: Optional[int] = None,
                output: Optional[Path] = None) -> Config:
    """Read ``path`` (defaults only when ``None``), then apply overrides, ``seed`` and ``output``.

    Raises:
        ConfigError: on malformed TOML, unknown keys or invalid values.
        OSError: if the file cannot be read.
    """
    tree: Dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                tree = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
    for item in overrides:
        apply_override(tree, item)
    if seed is not None:
        tree["seed"] = seed
    if output is not None:
        tree.setdefault("output", {})["dir"] = str(output)
    return Config.from_tree(tree)


def reference() -> str:
    """Commented TOML listing every key with its default."""
    lines = ["# cnslab configuration reference (all values are defaults)", f"seed = {DEFAULTS['seed']}"]
    for section, table in DEFAULTS.items():
        if not isinstance(table, dict):
            continue
        lines += ["", f"[{section}]"]
        for k, v in table.items():
            lines.append(f"# {k} = (unset)" if v is None else f"{k} = {_toml_literal(v)}")
        if section == "scenario":
            lines.append(f"# name: one of {', '.join(sorted(SCENARIOS))}")
            for f in fields(Scenario):
                if f.name not in ("name", "seed"):
                    lines.append(f"# {f.name} = {_toml_literal(f.default) if f.default is not None else '(unset)'}")
    return "\n".join(lines) + "\n"


def _toml_literal(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_literal(x) for x in v) + "]"
    return repr(v)
