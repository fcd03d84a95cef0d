"""INI run configuration.

Recognised sections and keys (all optional, unknown keys are rejected)::

    [Problem]
    problem = ocp | shape
    mesh_n = 32

    [OptimizationRoutine]
    algorithm = gd | ncg | lbfgs | newton | pdas
    ncg_variant, rtol, atol, maximum_iterations, lbfgs_memory,
    armijo_epsilon, armijo_beta, pdas_c

    [ShapeGradient]
    shape_bdry_def = [1]
    shape_bdry_fix = []
    mu, lambda, delta

    [Output]
    directory = results
    export_vtk = false
    export_history = false

Keys are case sensitive, ``#`` and ``;`` start comment lines and lists use
the bracketed form ``[1, 2]``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .optim import OptimizerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeGradientConfig:
    shape_bdry_def: tuple[int, ...] = (1,)
    shape_bdry_fix: tuple[int, ...] = ()
    mu: float = 1.0
    lam: float = 0.0
    delta: float = 0.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    export_vtk: bool = False
    export_history: bool = False


@dataclass(frozen=True)
class RunConfig:
    problem: str = "ocp"
    mesh_n: int = 32
    optimization: OptimizerConfig = field(default_factory=OptimizerConfig)
    shape_gradient: ShapeGradientConfig = field(default_factory=ShapeGradientConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


# section -> {ini key: (attribute, converter)}
_OPT_KEYS = {
    "algorithm": ("algorithm", str),
    "ncg_variant": ("ncg_variant", str),
    "rtol": ("rtol", float),
    "atol": ("atol", float),
    "maximum_iterations": ("maximum_iterations", int),
    "lbfgs_memory": ("lbfgs_memory", int),
    "armijo_epsilon": ("armijo_epsilon", float),
    "armijo_beta": ("armijo_beta", float),
    "pdas_c": ("pdas_c", float),
}
_SHAPE_KEYS = {
    "shape_bdry_def": ("shape_bdry_def", "intlist"),
    "shape_bdry_fix": ("shape_bdry_fix", "intlist"),
    "mu": ("mu", float),
    "lambda": ("lam", float),
    "delta": ("delta", float),
}
_PROBLEM_KEYS = {"problem": ("problem", str), "mesh_n": ("mesh_n", int)}
_OUTPUT_KEYS = {
    "directory": ("directory", str),
    "export_vtk": ("export_vtk", bool),
    "export_history": ("export_history", bool),
}
_SECTIONS = {
    "Problem": _PROBLEM_KEYS,
    "OptimizationRoutine": _OPT_KEYS,
    "ShapeGradient": _SHAPE_KEYS,
    "Output": _OUTPUT_KEYS,
}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_intlist(text: str, key: str) -> tuple[int, ...]:
    s = text.strip()
    if not (s.startswith("[") and s.endswith("]")):
        raise ConfigError(f"{key}: expected a list like [1, 2], got {text!r}")
    body = s[1:-1].strip()
    if not body:
        return ()
    try:
        return tuple(int(item) for item in body.split(","))
    except ValueError:
        raise ConfigError(f"{key}: list entries must be integers, got {text!r}") from None


def _convert(raw: str, kind, key: str):
    if kind == "intlist":
        return _parse_intlist(raw, key)
    if kind is bool:
        low = raw.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind is str:
        return raw.strip()
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse an INI document into a validated :class:`RunConfig`."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                       interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep keys case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None

    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        spec = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in spec:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, kind = spec[key]
            values[section][attr] = _convert(raw, kind, key)

    prob = values["Problem"]
    if prob.get("problem", "ocp") not in ("ocp", "shape"):
        raise ConfigError(f"problem: must be 'ocp' or 'shape', got {prob['problem']!r}")
    if prob.get("mesh_n", 1) < 1:
        raise ConfigError("mesh_n: must be a positive integer")
    try:
        opt = OptimizerConfig(**values["OptimizationRoutine"])
    except ValueError as exc:
        raise ConfigError(f"[OptimizationRoutine] {exc}") from None
    shape = ShapeGradientConfig(**values["ShapeGradient"])
    if shape.mu <= 0:
        raise ConfigError("mu: must be positive")
    if shape.lam < 0 or shape.delta < 0:
        raise ConfigError("lambda and delta must be non-negative")
    return RunConfig(optimization=opt, shape_gradient=shape,
                     output=OutputConfig(**values["Output"]), **prob)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "[" + ", ".join(str(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``config``."""
    blocks = {
        "Problem": {"problem": config.problem, "mesh_n": config.mesh_n},
        "OptimizationRoutine": {k: getattr(config.optimization, a) for k, (a, _) in _OPT_KEYS.items()},
        "ShapeGradient": {k: getattr(config.shape_gradient, a) for k, (a, _) in _SHAPE_KEYS.items()},
        "Output": {k: getattr(config.output, a) for k, (a, _) in _OUTPUT_KEYS.items()},
    }
    lines = []
    for section, items in blocks.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_format(v)}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


__all__ = ["ConfigError", "OutputConfig", "RunConfig", "ShapeGradientConfig", "load_config",
           "parse_config", "serialize_config"]
