"""Run configuration: TOML files, named presets and problem construction.

Schema (``version = 1``)::

    version = 1

    [problem]
    model = "building"        # building | compressor | example1 | external
    scale = "desk"            # paper | desk
    saturation = "fit"        # fit | printed (building, compressor)
    path = "my_model.py"      # external only; module exposing problem(scale)

    [problem.overrides]       # keyword overrides for the model constructor
    t_final = 30.0

    [reduction]               # any LocalReductionConfig field
    epsilon = 1e-3
    tol_G = 1e-6

    [validation]
    samples = 1000
    seed = 1
    trajectories = 0          # samples to dump as trajectories (0 = off)

    [output]
    dir = "out"
"""

from __future__ import annotations

import dataclasses
import importlib.util
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ProblemDefinition
from .models import building_problem, compressor_problem, example1_problem
from .reduction import LocalReductionConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "load_preset", "list_presets", "build_problem", "CONFIG_VERSION"]

CONFIG_VERSION = 1
MODELS = ("building", "compressor", "example1", "external")
SCALES = ("paper", "desk")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted key, ``line`` 1-based when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None, source: str | None = None):
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.field, self.line, self.source = field, line, source


@dataclass
class RunConfig:
    model: str = "example1"
    scale: str = "desk"
    saturation: str = "fit"
    path: str | None = None
    overrides: dict = field(default_factory=dict)
    reduction: LocalReductionConfig = field(default_factory=LocalReductionConfig)
    samples: int = 1000
    validation_seed: int = 1
    trajectories: int = 0
    out: str = "out"
    source: str | None = None


_SECTIONS = {
    "problem": {"model", "scale", "saturation", "path", "overrides"},
    "reduction": {f.name for f in dataclasses.fields(LocalReductionConfig)},
    "validation": {"samples", "seed", "trajectories"},
    "output": {"dir"},
}


def _line_of(text: str, table: str | None, key: str) -> int | None:
    """Line of ``key = ...`` inside ``[table]`` (top level if ``table`` is None)."""
    current = None
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"^\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            continue
        if current == table and pattern.match(line):
            return i
    return None


def parse_config(text: str, source: str | None = None, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate TOML text into a :class:`RunConfig`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed TOML ({exc})", line=line, source=source) from None

    def fail(msg, table, key):
        dotted = f"{table}.{key}" if table else key
        raise ConfigError(msg, field=dotted, line=_line_of(text, table, key), source=source)

    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        fail(f"expected version = {CONFIG_VERSION}, got {version!r}", None, "version")
    for name, value in data.items():
        if name not in _SECTIONS:
            fail("unknown section", None, name)
        if not isinstance(value, dict):
            fail("expected a table", None, name)
        for key in value:
            if key not in _SECTIONS[name]:
                fail("unknown key", name, key)

    cfg = RunConfig(source=source)
    prob = data.get("problem", {})
    cfg.model = prob.get("model", cfg.model)
    if cfg.model not in MODELS:
        fail(f"must be one of {', '.join(MODELS)}", "problem", "model")
    cfg.scale = prob.get("scale", cfg.scale)
    if cfg.scale not in SCALES:
        fail(f"must be one of {', '.join(SCALES)}", "problem", "scale")
    cfg.saturation = prob.get("saturation", cfg.saturation)
    if cfg.saturation not in ("fit", "printed"):
        fail("must be 'fit' or 'printed'", "problem", "saturation")
    if "path" in prob:
        p = Path(prob["path"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        cfg.path = str(p)
    if cfg.model == "external" and cfg.path is None:
        fail("external model needs problem.path", "problem", "model")
    cfg.overrides = dict(prob.get("overrides", {}))

    red = data.get("reduction", {})
    defaults = LocalReductionConfig()
    values = {}
    for key, value in red.items():
        expected = type(getattr(defaults, key))
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected) or isinstance(value, bool):
            fail(f"expected {expected.__name__}, got {type(value).__name__}", "reduction", key)
        values[key] = value
    try:
        cfg.reduction = LocalReductionConfig(**values)
    except ValueError as exc:
        key = str(exc).split()[0]
        fail(str(exc), "reduction", key if key in values else next(iter(values), "reduction"))

    val = data.get("validation", {})
    for key, attr in (("samples", "samples"), ("seed", "validation_seed"), ("trajectories", "trajectories")):
        if key in val:
            if not isinstance(val[key], int) or isinstance(val[key], bool) or val[key] < 0:
                fail("expected a nonnegative integer", "validation", key)
            setattr(cfg, attr, val[key])
    if cfg.samples < 1:
        fail("must be at least 1", "validation", "samples")
    out = data.get("output", {})
    if "dir" in out:
        if not isinstance(out["dir"], str):
            fail("expected a string", "output", "dir")
        cfg.out = out["dir"]
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", source=str(path)) from None
    return parse_config(text, source=str(path), base_dir=path.parent)


def list_presets() -> list[str]:
    files = resources.files("robustocp").joinpath("presets").iterdir()
    return sorted(f.name[: -len(".toml")] for f in files if f.name.endswith(".toml"))


def load_preset(name: str) -> RunConfig:
    if name not in list_presets():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    text = resources.files("robustocp").joinpath("presets", f"{name}.toml").read_text()
    return parse_config(text, source=f"preset {name}")


def default_preset(model: str, scale: str) -> str | None:
    """Preset name for a built-in model and scale."""
    if model == "example1":
        return "example1"
    if model in ("building", "compressor"):
        return f"{model}_{scale}"
    return None


def build_problem(cfg: RunConfig) -> ProblemDefinition:
    """Construct the problem selected by ``cfg``."""
    try:
        if cfg.model == "example1":
            return example1_problem(**cfg.overrides)
        if cfg.model == "building":
            return building_problem(cfg.scale, cfg.saturation, **cfg.overrides)
        if cfg.model == "compressor":
            return compressor_problem(cfg.scale, cfg.saturation, **cfg.overrides)
    except TypeError as exc:
        raise ConfigError(f"bad model override ({exc})", field="problem.overrides", source=cfg.source) from None
    return _external_problem(cfg)


def _external_problem(cfg: RunConfig) -> ProblemDefinition:
    path = Path(cfg.path)
    if not path.is_file():
        raise ConfigError(f"external model file {path} not found", field="problem.path", source=cfg.source)
    spec = importlib.util.spec_from_file_location(f"_robustocp_external_{path.stem}", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    factory: Any = getattr(module, "problem", None)
    if not callable(factory):
        raise ConfigError(f"{path} does not define problem(scale)", field="problem.path", source=cfg.source)
    problem = factory(cfg.scale, **cfg.overrides)
    if not isinstance(problem, ProblemDefinition):
        raise ConfigError("problem(scale) must return a ProblemDefinition", field="problem.path", source=cfg.source)
    return problem
