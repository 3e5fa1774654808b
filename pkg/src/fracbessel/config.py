"""
INI run configuration.

Sections and keys (every key is optional)::

    [problem]    dim, alpha, p, q, lambda, half_length, points, truncated
    [potentials] b, c (family tag, "constant" or "file:<path.bgs>") plus b.<param> / c.<param>
    [solver]     which, tol, energy_tol, max_iter, seed, starts, radial, nodes
    [outputs]    directory, formats, plots, log_level

``lambda`` is a number or ``<k>x-lambda0`` (a multiple of the computed
threshold). Relative output directories resolve against $FRACBESSEL_OUTPUT_ROOT
when it is set.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .energy import Potential, critical_exponent, make_condition_K_potential
from .errors import ConfigError, ParameterError
from .fieldio import load_field
from .grid import Grid, _is_power_of_two, make_grid

__all__ = ["RunConfig", "load_config", "parse_config", "parse_lambda", "output_root", "DEFAULTS", "COMMAND_DEFAULTS"]

OUTPUT_ROOT_ENV = "FRACBESSEL_OUTPUT_ROOT"

DEFAULTS = {
    "problem": {
        "dim": "1",
        "alpha": "0.5",
        "p": "4",
        "q": "4",
        "lambda": "0",
        "half_length": "",
        "points": "",
        "truncated": "false",
    },
    "potentials": {"b": "constant", "c": "constant"},
    "solver": {
        "which": "M_0",
        "tol": "1e-7",
        "energy_tol": "1e-9",
        "max_iter": "50000",
        "seed": "0",
        "starts": "3",
        "radial": "false",
        "nodes": "33",
    },
    "outputs": {"directory": "runs/run", "formats": "bgs1,csv,json", "plots": "false", "log_level": "WARNING"},
}

COMMAND_DEFAULTS = {
    "groundstate": {"outputs": {"directory": "runs/groundstate"}},
    "solve": {"outputs": {"directory": "runs/solve"}},
    "two-solutions": {
        "problem": {"p": "1.5", "q": "4", "lambda": "0.5x-lambda0", "truncated": "true"},
        "potentials": {"b": "sign-changing-bumps", "c": "sign-changing-bumps"},
        "outputs": {"directory": "runs/two-solutions"},
    },
    "mountain-pass": {
        "problem": {"q": "4", "truncated": "true"},
        "potentials": {"c": "gaussian-decay"},
        "outputs": {"directory": "runs/mountain-pass"},
    },
    "identity-check": {"outputs": {"directory": "runs/identity-check"}},
    "nehari-scan": {
        "problem": {"p": "1.5", "q": "4"},
        "potentials": {"b": "sign-changing-bumps", "c": "sign-changing-bumps"},
        "outputs": {"directory": "runs/nehari-scan"},
    },
}

_LAMBDA_MULTIPLE = re.compile(r"^\s*([0-9.eE+-]+)\s*x-lambda0\s*$")
_WHICH = ("M_0", "M_lambda", "Nplus", "Nminus")


def parse_lambda(text: str) -> tuple[float | None, float | None]:
    """Return (value, multiple_of_lambda0); exactly one is not None."""
    m = _LAMBDA_MULTIPLE.match(str(text))
    if m:
        return None, float(m.group(1))
    return float(text), None


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


def _default_half_length(dim: int) -> float:
    return 20.0 if dim == 1 else 10.0


def _default_points(dim: int) -> int:
    return {1: 2048, 2: 128, 3: 32}[dim]


@dataclass
class PotentialConfig:
    kind: str
    params: dict = field(default_factory=dict)
    path: str | None = None

    def build(self, grid: Grid) -> Potential:
        if self.path is not None:
            u, _ = load_field(self.path)
            if u.grid != grid:
                raise ConfigError(f"potential file {self.path} does not match the problem grid")
            return Potential.sampled(u)
        if self.kind == "constant":
            return Potential.constant(float(self.params.get("value", 1.0)))
        return make_condition_K_potential(self.kind, **self.params)


@dataclass
class RunConfig:
    dim: int
    alpha: float
    p: float
    q: float
    lam_value: float | None
    lam_multiple: float | None
    half_length: float
    points: int
    truncated: bool
    b: PotentialConfig
    c: PotentialConfig
    which: str
    tol: float
    energy_tol: float
    max_iter: int
    seed: int
    starts: int
    radial: bool
    nodes: int
    directory: str
    formats: tuple
    plots: bool
    log_level: str
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> Grid:
        return make_grid(self.dim, self.half_length, self.points)

    @property
    def output_dir(self) -> Path:
        d = Path(self.directory)
        return d if d.is_absolute() else output_root() / d

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, items in self.raw.items():
            cp[section] = items
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)

    def save_resolved(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_ini())
        return path


def _layer(*dicts) -> dict:
    out = {s: {} for s in DEFAULTS}
    for d in dicts:
        for section, items in (d or {}).items():
            out.setdefault(section, {}).update({k: str(v) for k, v in items.items() if v is not None})
    return out


def _read_ini(text: str, source: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column 1: missing section header") from exc
    except configparser.ParsingError as exc:
        where = "; ".join(f"line {ln}, column 1: {line.strip()!r}" for ln, line in exc.errors)
        raise ConfigError(f"{source}: parse error at {where}") from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column 1: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _potential(items: dict, name: str, errors: list) -> PotentialConfig:
    tag = items.get(name, "constant").strip()
    params = {}
    for key, val in items.items():
        if key.startswith(name + "."):
            pname = key[len(name) + 1 :]
            try:
                params[pname] = tuple(float(v) for v in val.split(",")) if "," in val else float(val)
            except ValueError:
                errors.append(f"potentials.{key}: not a number: {val!r}")
    if tag.startswith("file:"):
        path = tag[5:].strip()
        if not Path(path).is_file():
            errors.append(f"potentials.{name}: file not found: {path}")
        return PotentialConfig("file", {}, path)
    if tag == "constant":
        extra = set(params) - {"value"}
        if extra:
            errors.append(f"potentials.{name}: constant takes only 'value', got {sorted(extra)}")
    else:
        try:
            make_condition_K_potential(tag, **params)
        except ParameterError as exc:
            errors.append(f"potentials.{name}: {exc}")
        except TypeError as exc:
            errors.append(f"potentials.{name}: {exc}")
    return PotentialConfig(tag, params)


def parse_config(sections: dict, command: str | None = None) -> RunConfig:
    """Validate layered sections; every violated precondition is reported at once."""
    raw = _layer(DEFAULTS, COMMAND_DEFAULTS.get(command, {}), sections)
    errors = []
    for section, items in raw.items():
        if section not in DEFAULTS:
            errors.append(f"unknown section [{section}]")
            continue
        for key in items:
            if section == "potentials" and re.match(r"^[bc](\.\w+)?$", key):
                continue
            if key not in DEFAULTS[section]:
                errors.append(f"{section}.{key}: unknown key")

    def num(section, key, cast=float):
        text = raw[section].get(key, "")
        try:
            return cast(text)
        except (TypeError, ValueError):
            errors.append(f"{section}.{key}: expected {cast.__name__}, got {text!r}")
            return None

    pr, so, ou = raw["problem"], raw["solver"], raw["outputs"]
    dim = num("problem", "dim", int)
    alpha = num("problem", "alpha")
    p = num("problem", "p")
    q = num("problem", "q")
    if dim is not None and dim not in (1, 2, 3):
        errors.append(f"problem.dim must be 1, 2 or 3, got {dim}")
        dim = None
    if alpha is not None and not (0 < alpha <= 1):
        errors.append(f"problem.alpha must lie in (0, 1], got {alpha}")
    if dim is not None and alpha is not None and 0 < alpha <= 1:
        crit = critical_exponent(dim, alpha)
        for key, val in (("p", p), ("q", q)):
            if val is not None and not (1 < val < crit):
                errors.append(f"problem.{key} must lie in (1, {crit:g}), got {val}")
    lam_value = lam_multiple = None
    try:
        lam_value, lam_multiple = parse_lambda(pr.get("lambda", "0"))
        if (lam_value if lam_value is not None else lam_multiple) < 0:
            errors.append("problem.lambda must be nonnegative")
    except ValueError:
        errors.append(f"problem.lambda: expected a number or '<k>x-lambda0', got {pr.get('lambda')!r}")
    d = dim or 1
    half = num("problem", "half_length") if pr.get("half_length") else _default_half_length(d)
    points = num("problem", "points", int) if pr.get("points") else _default_points(d)
    if half is not None and not (math.isfinite(half) and half > 0):
        errors.append(f"problem.half_length must be positive, got {half}")
    if points is not None and not (points >= 4 and _is_power_of_two(points)):
        errors.append(f"problem.points must be a power of two >= 4, got {points}")
    truncated = radial = plots = False
    for section, key in (("problem", "truncated"), ("solver", "radial"), ("outputs", "plots")):
        try:
            val = _bool(raw[section][key])
        except ValueError as exc:
            errors.append(f"{section}.{key}: {exc}")
            val = False
        if key == "truncated":
            truncated = val
        elif key == "radial":
            radial = val
        else:
            plots = val
    b = _potential(raw["potentials"], "b", errors)
    c = _potential(raw["potentials"], "c", errors)
    which = so.get("which", "M_0")
    if which not in _WHICH:
        errors.append(f"solver.which must be one of {_WHICH}, got {which!r}")
    tol = num("solver", "tol")
    energy_tol = num("solver", "energy_tol")
    max_iter = num("solver", "max_iter", int)
    seed = num("solver", "seed", int)
    starts = num("solver", "starts", int)
    nodes = num("solver", "nodes", int)
    for key, val in (("tol", tol), ("energy_tol", energy_tol), ("max_iter", max_iter), ("starts", starts)):
        if val is not None and not val > 0:
            errors.append(f"solver.{key} must be positive, got {val}")
    if nodes is not None and nodes < 3:
        errors.append(f"solver.nodes must be at least 3, got {nodes}")
    if seed is not None and not (0 <= seed < 2**64):
        errors.append(f"solver.seed must be a 64-bit unsigned integer, got {seed}")
    formats = tuple(f.strip() for f in ou.get("formats", "").split(",") if f.strip())
    for f in formats:
        if f not in ("bgs1", "csv", "json"):
            errors.append(f"outputs.formats: unknown format {f!r}")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))

    raw["problem"]["half_length"] = repr(float(half))
    raw["problem"]["points"] = str(points)
    return RunConfig(
        dim=dim, alpha=alpha, p=p, q=q, lam_value=lam_value, lam_multiple=lam_multiple,
        half_length=float(half), points=int(points), truncated=truncated, b=b, c=c,
        which=which, tol=tol, energy_tol=energy_tol, max_iter=max_iter, seed=seed,
        starts=starts, radial=radial, nodes=nodes, directory=ou.get("directory", "runs/run"),
        formats=formats, plots=plots, log_level=ou.get("log_level", "WARNING"), raw=raw,
    )


def load_config(path=None, overrides: dict | None = None, command: str | None = None) -> RunConfig:
    """Read an INI file (optional), overlay ``overrides`` and validate."""
    sections = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        sections = _read_ini(text, str(path))
    merged = _layer(sections, overrides)
    return parse_config({k: v for k, v in merged.items() if v}, command)
