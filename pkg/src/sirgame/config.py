"""Run configuration: a TOML file with sections ``[model]``, ``[solver]``, ``[task]`` and ``[output]``.

Unknown sections or keys are rejected with their line number.  ``[model]``
may name ``example = 1 | 2 | 3`` to start from a worked-example parameter
set; explicit keys override it.  Command-line overrides use
``section.key=value`` (or a bare key when it is unique across sections),
with the value parsed as a TOML literal.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ModelParams, ValidationError, example_params, validate

TASKS = ("simulate", "nash", "gne", "sweep")
MODEL_KEYS = ("example", "r", "T", "I0", "u_m", "u_M", "n1", "n2", "alpha1", "alpha2", "G1", "G2", "s")


class ConfigError(ValueError):
    """Bad configuration; ``field`` names the offending key and ``line`` its location if known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field + ': ' if field else ''}{message}{where}")


@dataclass(frozen=True)
class SolverSettings:
    steps: int = 5000
    resolution: int = 400
    eq_tol: float = 1e-6
    gne_grid: int = 81
    probes: int = 201
    rho_grid: int = 21
    tol_K: float = 1e-6
    tol_V: float = 1e-7
    threads: int = 1


@dataclass(frozen=True)
class TaskSettings:
    name: str = "nash"
    # simulate: a two-point profile, or a Dirac pair when u1/u2 are given
    tilde_u1: float = 0.0
    tilde_u2: float = 0.0
    u1: float | None = None
    u2: float | None = None
    C: float = 0.1
    C_values: tuple[float, ...] = ()
    sweep_parameter: str = "G1"
    sweep_values: tuple[float, ...] = ()
    G_ratio: float | None = None


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "out"
    prefix: str = ""


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    solver: SolverSettings = field(default_factory=SolverSettings)
    task: TaskSettings = field(default_factory=TaskSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def to_dict(self) -> dict:
        d = {"model": asdict(self.model), "solver": asdict(self.solver),
             "task": asdict(self.task), "output": asdict(self.output)}
        d["model"]["s"] = [list(row) for row in self.model.s]
        for k in ("C_values", "sweep_values"):
            d["task"][k] = list(d["task"][k])
        return d

    def hash(self) -> str:
        """Digest of the resolved configuration (output location excluded)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_SECTIONS = {
    "model": MODEL_KEYS,
    "solver": tuple(f.name for f in fields(SolverSettings)),
    "task": tuple(f.name for f in fields(TaskSettings)),
    "output": tuple(f.name for f in fields(OutputSettings)),
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[\s*([A-Za-z0-9_]+)\s*\]", s)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", s):
            return no
    return None


def parse_value(raw: str):
    """Parse a TOML literal; unquoted words fall back to plain strings."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(data: dict, overrides) -> dict:
    data = {k: dict(v) for k, v in data.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", item)
        key, raw = (x.strip() for x in item.split("=", 1))
        if "." in key:
            section, name = key.split(".", 1)
        else:
            owners = [s for s, keys in _SECTIONS.items() if key in keys]
            if len(owners) != 1:
                raise ConfigError("unknown or ambiguous key; use section.key", key)
            section, name = owners[0], key
        if section not in _SECTIONS or name not in _SECTIONS[section]:
            raise ConfigError("unknown key", key)
        data.setdefault(section, {})[name] = parse_value(raw)
    return data


def _build(cls, section: str, values: dict, text: str):
    out = {}
    for f in fields(cls):
        if f.name not in values:
            continue
        v = values[f.name]
        line = _line_of(text, section, f.name)
        where = f"{section}.{f.name}"
        default = f.default
        try:
            if f.name in ("C_values", "sweep_values"):
                if not isinstance(v, list):
                    raise TypeError
                v = tuple(float(x) for x in v)
            elif isinstance(default, bool):
                raise TypeError
            elif isinstance(default, int) and not isinstance(default, bool):
                if isinstance(v, bool) or not isinstance(v, int):
                    raise TypeError
            elif isinstance(default, float) or f.name in ("u1", "u2", "G_ratio"):
                if v is not None:
                    if isinstance(v, bool) or not isinstance(v, (int, float)):
                        raise TypeError
                    v = float(v)
            elif isinstance(default, str) and not isinstance(v, str):
                raise TypeError
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {v!r}", where, line) from None
        out[f.name] = v
    return cls(**out)


def _model(values: dict, text: str) -> ModelParams:
    which = values.get("example", 1)
    if which not in (1, 2, 3):
        raise ConfigError("must be 1, 2 or 3", "model.example", _line_of(text, "model", "example"))
    base = asdict(example_params(which, values.get("G1"), values.get("G2")))
    for k, v in values.items():
        if k == "example":
            continue
        if k == "s":
            ok = (isinstance(v, list) and len(v) == 2
                  and all(isinstance(r, list) and len(r) == 2 for r in v)
                  and all(isinstance(x, (int, float)) and not isinstance(x, bool) for r in v for x in r))
            if not ok:
                raise ConfigError("must be a 2x2 numeric array", "model.s", _line_of(text, "model", "s"))
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"bad value {v!r}", f"model.{k}", _line_of(text, "model", k))
        base[k] = v
    params = ModelParams(**base)
    try:
        validate(params)
    except ValidationError as e:
        # point at a key the user actually wrote; u_M > u_m may break via u_m
        names = [v.field.split("[")[0] for v in e.violations]
        if "u_M" in names:
            names.append("u_m")
        if "G2" in names:
            names.append("G1")
        located = [(n, _line_of(text, "model", n)) for n in names]
        name, line = next(((n, ln) for n, ln in located if ln is not None), located[0])
        raise ConfigError(str(e), f"model.{name}", line) from e
    return params


def _check_settings(cfg: RunConfig, text: str) -> None:
    s, t = cfg.solver, cfg.task
    for name in ("steps", "resolution", "gne_grid", "probes", "rho_grid"):
        if getattr(s, name) < 2:
            raise ConfigError("must be >= 2", f"solver.{name}", _line_of(text, "solver", name))
    if s.steps < 10:
        raise ConfigError("must be >= 10", "solver.steps", _line_of(text, "solver", "steps"))
    for name in ("eq_tol", "tol_K", "tol_V"):
        if not getattr(s, name) > 0:
            raise ConfigError("must be positive", f"solver.{name}", _line_of(text, "solver", name))
    if s.threads < 1:
        raise ConfigError("must be >= 1", "solver.threads", _line_of(text, "solver", "threads"))
    if t.name not in TASKS:
        raise ConfigError(f"must be one of {', '.join(TASKS)}", "task.name", _line_of(text, "task", "name"))
    if t.sweep_parameter not in ("G1", "C"):
        raise ConfigError("must be G1 or C", "task.sweep_parameter", _line_of(text, "task", "sweep_parameter"))
    if not t.C > 0:
        raise ConfigError("must be positive", "task.C", _line_of(text, "task", "C"))
    for name in ("tilde_u1", "tilde_u2"):
        if not 0.0 <= getattr(t, name) <= 1.0:
            raise ConfigError("must lie in [0, 1]", f"task.{name}", _line_of(text, "task", name))


def load_config(text: str = "", overrides=(), task: str | None = None) -> RunConfig:
    """Parse TOML text, apply overrides and validate everything.

    Raises:
        ConfigError: on syntax errors, unknown keys, bad values or invalid parameters.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError(f"syntax error: {e}", None, int(m.group(1)) if m else None) from None
    for section, body in data.items():
        if section not in _SECTIONS or not isinstance(body, dict):
            raise ConfigError("unknown section", section, _line_of(text, section))
        for key in body:
            if key not in _SECTIONS[section]:
                raise ConfigError("unknown key", f"{section}.{key}", _line_of(text, section, key))
    data = apply_overrides(data, overrides)
    if task is not None:
        data.setdefault("task", {})["name"] = task
    cfg = RunConfig(
        _model(data.get("model", {}), text),
        _build(SolverSettings, "solver", data.get("solver", {}), text),
        _build(TaskSettings, "task", data.get("task", {}), text),
        _build(OutputSettings, "output", data.get("output", {}), text),
    )
    _check_settings(cfg, text)
    return cfg


def load_config_file(path, overrides=(), task: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    return load_config(text, overrides, task)


def with_solver(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, solver=replace(cfg.solver, **changes))
