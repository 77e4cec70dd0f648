"""Run configuration: flat ``key = value`` files merged with command-line flags."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .field_scan import GridSpec
from .integrators import IntegratorConfig
from .models import make_model
from .tangent import FdConfig

MODES = ("full", "reduced", "trace", "diag", "bench")

# per-model horizon and step used when neither file nor flags set them
MODEL_DEFAULTS = {
    "abc": {"T": 8.0, "dt": 0.01, "dimension": 3},
    "cdv": {"T": 30.0, "dt": 0.4, "dimension": 6},
    "linear": {"T": 5.0, "dt": 0.001, "dimension": None},
}
FLAG_KEYS = {"strict", "cdv_as_printed", "raw"}


@dataclass
class RunConfig:
    command: str
    model: str = "abc"
    params: dict = field(default_factory=dict)
    mode: str = "full"
    method: str = "variational"
    grid: GridSpec | None = None
    z0: tuple | None = None
    r: tuple = (2,)
    t0: float = 0.0
    T: float = 8.0
    dt: float = 0.01
    h: float = 1e-8
    output: str | None = None
    workers: int = 1
    strict: bool = False
    raw: bool = False
    cdv_as_printed: bool = False
    matrix: str | None = None
    n_list: tuple = (50, 100, 200, 400)
    threshold: float = 0.05
    repeats: int = 3

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, T=self.T, t0=self.t0)

    @property
    def fd(self) -> FdConfig:
        return FdConfig(self.h)

    def build_model(self):
        kw = dict(self.params)
        if self.model == "cdv":
            kw["cdv_as_printed"] = self.cdv_as_printed
        if self.model == "linear":
            kw["matrix"] = parse_matrix(self.matrix)
        return make_model(self.model, **kw)

    def resolved(self) -> dict:
        """Every effective setting as strings, for output headers."""
        out = {"command": self.command, "model": self.model}
        out.update({f"param.{k}": repr(v) for k, v in sorted(self.params.items())})
        if self.model == "cdv":
            out["cdv_as_printed"] = str(self.cdv_as_printed).lower()
        if self.matrix is not None:
            out["matrix"] = self.matrix
        if self.command == "bench":
            out.update(
                r=str(self.r[0]),
                n_list=",".join(map(str, self.n_list)),
                repeats=str(self.repeats),
            )
        else:
            out["mode"] = self.mode
            if self.mode == "full":
                out["method"] = self.method
                if self.method == "fd":
                    out["h"] = repr(self.h)
            else:
                out["r"] = ",".join(map(str, self.r))
                out["threshold"] = repr(self.threshold)
            if self.grid is not None:
                out["grid"] = self.grid.describe()
            if self.z0 is not None:
                out["z0"] = ",".join(repr(float(v)) for v in self.z0)
        out.update(t0=repr(self.t0), T=repr(self.T), dt=repr(self.dt))
        return out


# ---------------------------------------------------------------- parsing


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key.startswith("param."):
            out.setdefault("param", []).append(f"{key[6:]}={value}")
        elif key == "fix":
            out.setdefault("fix", []).extend(value.split())
        else:
            out[key] = value
    return out


def _float(name, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite, got {value!r}")
    return v


def _int(name, value) -> int:
    try:
        return int(str(value))
    except ValueError:
        raise ConfigError(f"{name}: expected an integer, got {value!r}") from None


def _bool(name, value) -> bool:
    if isinstance(value, bool):
        return value
    s = str(value).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected true/false, got {value!r}")


def _floats(name, value) -> tuple:
    parts = [p for p in str(value).replace(" ", "").split(",") if p]
    return tuple(_float(name, p) for p in parts)


def parse_range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid: range must be min:max:count, got {text!r}")
    lo, hi = _float("grid", parts[0]), _float("grid", parts[1])
    return lo, hi, _int("grid", parts[2])


def _axis_index(name: str) -> int:
    s = name.strip().lower()
    if not (s.startswith("z") and s[1:].isdigit() and int(s[1:]) >= 1):
        raise ConfigError(f"grid: axis names look like z1, z2, ...; got {name!r}")
    return int(s[1:]) - 1


def parse_grid(spec, fixes, n: int) -> GridSpec:
    """``spec`` is ``"z1,z2 lo:hi:count [lo:hi:count]"`` or its token list."""
    tokens = spec.split() if isinstance(spec, str) else list(spec)
    if len(tokens) not in (2, 3):
        raise ConfigError("grid: expected AXES RANGE [RANGE2], e.g. z1,z2 0:6.2832:51")
    axes = tuple(_axis_index(a) for a in tokens[0].split(","))
    if len(axes) != 2:
        raise ConfigError(f"grid: need exactly two axes, got {tokens[0]!r}")
    ranges = [parse_range(t) for t in tokens[1:]]
    if len(ranges) == 1:
        ranges *= 2
    if max(axes) >= n:
        raise ConfigError(f"grid: axis z{max(axes) + 1} does not exist for n={n}")
    fixed = {}
    for item in fixes or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"fix: expected zK=value, got {item!r}")
        fixed[_axis_index(name)] = _float("fix", value)
    others = [i for i in range(n) if i not in axes]
    missing = [f"z{i + 1}" for i in others if i not in fixed]
    extra = [f"z{i + 1}" for i in fixed if i not in others]
    if missing:
        raise ConfigError(f"fix: no value for {', '.join(missing)}")
    if extra:
        raise ConfigError(f"fix: {', '.join(extra)} is a grid axis or out of range")
    return GridSpec(axes, tuple(ranges), tuple(fixed[i] for i in others))


def parse_matrix(text) -> np.ndarray:
    """``diag:a,b,...`` or ``rows:a,b;c,d`` (rows separated by ``;``)."""
    if text is None:
        raise ConfigError("matrix: the linear model requires --matrix")
    kind, sep, body = str(text).partition(":")
    if not sep:
        raise ConfigError(f"matrix: expected diag:... or rows:..., got {text!r}")
    if kind == "diag":
        return np.diag(_floats("matrix", body))
    if kind == "rows":
        rows = [_floats("matrix", r) for r in body.split(";")]
        if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
            raise ConfigError("matrix: rows must form a square matrix")
        return np.array(rows)
    raise ConfigError(f"matrix: unknown form {kind!r}; use diag or rows")


def build_config(command: str, values: dict) -> RunConfig:
    """Validate merged settings (file keys overridden by flags) into a RunConfig.

    Raises
    ------
    ConfigError
        Naming the offending field.
    """
    v = {k: val for k, val in values.items() if val is not None}
    model = v.get("model", "abc")
    if model not in MODEL_DEFAULTS:
        make_model(model)  # raises with the list of known models
    defaults = MODEL_DEFAULTS[model]
    cfg = RunConfig(command=command, model=model)

    params = {}
    for item in v.get("param", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"param: expected name=value, got {item!r}")
        params[key.strip()] = _float(f"param.{key.strip()}", value)
    cfg.params = params
    for key in FLAG_KEYS:
        if key in v:
            setattr(cfg, key, _bool(key, v[key]))
    cfg.matrix = v.get("matrix")
    if model == "linear" and cfg.matrix is None:
        raise ConfigError("matrix: the linear model requires --matrix")
    if model != "linear" and cfg.matrix is not None:
        raise ConfigError("matrix: only valid with --model linear")

    cfg.T = _float("T", v.get("T", defaults["T"]))
    cfg.dt = _float("dt", v.get("dt", defaults["dt"]))
    cfg.t0 = _float("t0", v.get("t0", 0.0))
    cfg.h = _float("h", v.get("h", 1e-8))
    cfg.threshold = _float("threshold", v.get("threshold", 0.05))
    cfg.output = v.get("output")
    cfg.workers = _int("workers", v.get("workers", 1))
    if cfg.workers < 1:
        raise ConfigError(f"workers: must be >= 1, got {cfg.workers}")
    cfg.repeats = _int("repeats", v.get("repeats", 3))
    if cfg.repeats < 1:
        raise ConfigError("repeats: must be >= 1")
    if "r" in v:
        cfg.r = tuple(_int("r", p) for p in str(v["r"]).split(",") if p)
    elif command == "trace":
        cfg.r = (1, 2)
    if not cfg.r or min(cfg.r) < 1:
        raise ConfigError(f"r: must be >= 1, got {v.get('r')}")
    cfg.integrator  # validates dt, T
    cfg.fd

    if command == "bench":
        cfg.mode = "bench"
        if "n_list" in v:
            cfg.n_list = tuple(_int("n_list", p) for p in str(v["n_list"]).split(",") if p)
        if not cfg.n_list or min(cfg.n_list) < max(cfg.r):
            raise ConfigError("n_list: every n must be >= r")
        if "T" not in v:
            cfg.T = 0.5
        if "dt" not in v:
            cfg.dt = 0.01
        cfg.integrator
    else:
        sys = cfg.build_model()
        n = sys.dimension
        if max(cfg.r) > n:
            raise ConfigError(f"r: must be <= n = {n}, got {max(cfg.r)}")
        if command == "field":
            cfg.mode = v.get("mode", "full")
            if cfg.mode not in ("full", "reduced"):
                raise ConfigError(f"mode: field needs full or reduced, got {cfg.mode!r}")
            if len(cfg.r) != 1:
                raise ConfigError("r: field takes a single r")
            if "grid" not in v:
                raise ConfigError("grid: field requires --grid AXES RANGE [RANGE2]")
            cfg.grid = parse_grid(v["grid"], v.get("fix"), n)
        else:
            cfg.mode = command
            if "z0" not in v:
                raise ConfigError(f"z0: {command} requires an initial point --z0")
            cfg.z0 = _floats("z0", v["z0"])
            if len(cfg.z0) != n:
                raise ConfigError(f"z0: need {n} values for {model}, got {len(cfg.z0)}")
        cfg.method = v.get("method", "variational")
        if cfg.method not in ("variational", "fd"):
            raise ConfigError(f"method: expected variational or fd, got {cfg.method!r}")
    if cfg.output is None:
        raise ConfigError("output: an output path is required (-o PATH)")
    return cfg
