"""Declarative run configuration for the command-line front end.

Two encodings of the same structure are accepted: an INI-style text file
with ``key = value`` lines grouped into ``[section]`` blocks (top-level
keys belong to the implicit ``[run]`` block), or a JSON object whose
members mirror the blocks.  See the README for the full grammar.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config_text"]

_MODELS = ("reqc", "stub")
_TARGETS = ("phase_gate", "identity")
_GRID_PRESETS = ("default_reqc_49",)


class ConfigError(ValueError):
    """Malformed or invalid configuration; carries the offending field."""

    def __init__(self, message: str, fieldname: str | None = None):
        self.fieldname = fieldname
        prefix = f"config field '{fieldname}': " if fieldname else "config: "
        super().__init__(prefix + message)


@dataclass
class RunConfig:
    """Validated description of one optimization or landscape run."""

    model: str = "reqc"
    target: str = "phase_gate"
    output_dir: str = "."
    grid_preset: str | None = "default_reqc_49"
    grid_points: list[tuple[float, float, str]] | None = None
    far_threshold: float = 5.0
    n_harmonics: int = 24
    duration: float = 24.0 * math.pi
    amplitude_bound: float = 1.0
    n_steps: int = 2048
    p_schedule: tuple[float, ...] = (10.0, 100.0, 1000.0, 10000.0)
    tol_g: float = 1e-8
    tol_step: float = 1e-12
    max_iters: int = 400
    seed: int = 0x5EED
    gamma_range: tuple[float, float] = (0.8, 1.2)
    delta_range: tuple[float, float] = (-3.0, 3.0)
    resolution: tuple[int, int] = (41, 41)

    def validate(self) -> "RunConfig":
        if self.model not in _MODELS:
            raise ConfigError(f"must be one of {_MODELS}, got {self.model!r}", "model")
        if self.target not in _TARGETS:
            raise ConfigError(f"must be one of {_TARGETS}, got {self.target!r}", "target")
        if self.grid_preset is not None and self.grid_preset not in _GRID_PRESETS:
            raise ConfigError(
                f"unknown preset {self.grid_preset!r}; known: {_GRID_PRESETS}",
                "grid.preset",
            )
        if self.grid_preset is None and not self.grid_points:
            raise ConfigError("needs either a preset or inline points", "grid")
        if self.duration <= 0:
            raise ConfigError(
                f"must be positive, got {self.duration}", "parametrization.duration"
            )
        if self.n_harmonics < 0:
            raise ConfigError(
                f"must be >= 0, got {self.n_harmonics}", "parametrization.n_harmonics"
            )
        if self.amplitude_bound <= 0:
            raise ConfigError(
                f"must be positive, got {self.amplitude_bound}",
                "parametrization.amplitude_bound",
            )
        if self.n_steps < 1:
            raise ConfigError(
                f"must be >= 1, got {self.n_steps}", "parametrization.n_steps"
            )
        if not self.p_schedule or any(p <= 0 for p in self.p_schedule):
            raise ConfigError(
                f"must be positive values, got {self.p_schedule}",
                "optimizer.p_schedule",
            )
        if self.max_iters < 1:
            raise ConfigError(f"must be >= 1, got {self.max_iters}", "optimizer.max_iters")
        if self.tol_g <= 0 or self.tol_step <= 0:
            raise ConfigError("tolerances must be positive", "optimizer.tol_g")
        if self.grid_points is not None:
            for i, (g, d, t) in enumerate(self.grid_points):
                if g < 0 or not (math.isfinite(g) and math.isfinite(d)):
                    raise ConfigError(
                        f"point {i} has invalid (gamma, delta) = ({g}, {d})",
                        "grid.points",
                    )
                if t not in ("gate", "identity"):
                    raise ConfigError(
                        f"point {i} target must be 'gate' or 'identity', got {t!r}",
                        "grid.points",
                    )
        if any(r < 1 for r in self.resolution):
            raise ConfigError(
                f"must be >= 1 per axis, got {self.resolution}", "landscape.resolution"
            )
        for name, rng in (("gamma_range", self.gamma_range), ("delta_range", self.delta_range)):
            if not all(math.isfinite(v) for v in rng) or rng[1] < rng[0]:
                raise ConfigError(f"invalid range {rng}", f"landscape.{name}")
        return self


def _to_float(value: str, fieldname: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {value!r}", fieldname) from exc


def _to_int(value: str, fieldname: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {value!r}", fieldname) from exc


def _parse_points(raw, fieldname: str) -> list[tuple[float, float, str]]:
    """Accepts 'gamma,delta,target; ...' strings or JSON-style nested lists."""
    points = []
    if isinstance(raw, str):
        entries = [e.strip() for e in raw.split(";") if e.strip()]
        for entry in entries:
            parts = [p.strip() for p in entry.split(",")]
            if len(parts) not in (2, 3):
                raise ConfigError(
                    f"point {entry!r} must be 'gamma,delta[,target]'", fieldname
                )
            target = parts[2] if len(parts) == 3 else "gate"
            points.append(
                (_to_float(parts[0], fieldname), _to_float(parts[1], fieldname), target)
            )
    else:
        for entry in raw:
            entry = list(entry)
            if len(entry) == 2:
                entry.append("gate")
            points.append((float(entry[0]), float(entry[1]), str(entry[2])))
    return points


def _from_mapping(data: dict) -> RunConfig:
    cfg = RunConfig()
    run = data.get("run", {})
    cfg.model = str(run.get("model", cfg.model))
    cfg.target = str(run.get("target", cfg.target))
    cfg.output_dir = str(run.get("output_dir", cfg.output_dir))

    grid = data.get("grid", {})
    if "points" in grid:
        cfg.grid_points = _parse_points(grid["points"], "grid.points")
        cfg.grid_preset = None
    elif "preset" in grid:
        cfg.grid_preset = str(grid["preset"])
    if "far_threshold" in grid:
        cfg.far_threshold = (
            _to_float(grid["far_threshold"], "grid.far_threshold")
            if isinstance(grid["far_threshold"], str)
            else float(grid["far_threshold"])
        )

    par = data.get("parametrization", {})
    conv = {
        "n_harmonics": ("n_harmonics", _to_int),
        "duration": ("duration", _to_float),
        "amplitude_bound": ("amplitude_bound", _to_float),
        "n_steps": ("n_steps", _to_int),
    }
    for key, (attr, fn) in conv.items():
        if key in par:
            value = par[key]
            setattr(
                cfg, attr,
                fn(value, f"parametrization.{key}") if isinstance(value, str) else value,
            )

    opt = data.get("optimizer", {})
    if "p_schedule" in opt:
        raw = opt["p_schedule"]
        if isinstance(raw, str):
            raw = raw.replace(",", " ").split()
            cfg.p_schedule = tuple(
                _to_float(v, "optimizer.p_schedule") for v in raw
            )
        else:
            cfg.p_schedule = tuple(float(v) for v in raw)
    for key, fn in (("tol_g", _to_float), ("tol_step", _to_float),
                    ("max_iters", _to_int), ("seed", _to_int)):
        if key in opt:
            value = opt[key]
            setattr(
                cfg, key, fn(value, f"optimizer.{key}") if isinstance(value, str) else value
            )

    land = data.get("landscape", {})
    for key in ("gamma_range", "delta_range"):
        if key in land:
            raw = land[key]
            if isinstance(raw, str):
                raw = raw.replace(",", " ").split()
            vals = tuple(
                _to_float(v, f"landscape.{key}") if isinstance(v, str) else float(v)
                for v in raw
            )
            if len(vals) != 2:
                raise ConfigError(f"expected two values, got {raw}", f"landscape.{key}")
            setattr(cfg, key, vals)
    if "resolution" in land:
        raw = land["resolution"]
        if isinstance(raw, str):
            raw = raw.replace(",", " ").split()
        if isinstance(raw, (int, float)):
            cfg.resolution = (int(raw), int(raw))
        else:
            vals = [
                _to_int(v, "landscape.resolution") if isinstance(v, str) else int(v)
                for v in raw
            ]
            cfg.resolution = (vals[0], vals[-1]) if len(vals) > 1 else (vals[0], vals[0])

    # Type errors on non-string JSON values surface here.
    cfg.n_harmonics = int(cfg.n_harmonics)
    cfg.duration = float(cfg.duration)
    cfg.amplitude_bound = float(cfg.amplitude_bound)
    cfg.n_steps = int(cfg.n_steps)
    cfg.max_iters = int(cfg.max_iters)
    cfg.seed = int(cfg.seed)
    return cfg.validate()


def parse_config_text(text: str) -> RunConfig:
    """Parse either encoding of a run configuration from a string."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError("top-level JSON value must be an object")
        return _from_mapping(data)

    parser = configparser.ConfigParser()
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        message = str(exc).replace("\n", " ")
        raise ConfigError(f"invalid block syntax: {message}") from exc
    data: dict = {}
    for section in parser.sections():
        data[section] = dict(parser.items(section))
    return _from_mapping(data)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config_text(text)
