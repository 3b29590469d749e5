"""Experiment configuration: one JSON document, individual fields overridable."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError
from ..profile import PROFILE_KINDS
from ..sampler import LAWS

EXPERIMENTS = ("kernel-mc", "functional", "mde-check", "f-operator", "linearization", "gap",
               "decay", "hermitian-decay", "autocorr", "accept-all")

# fields that change where or how fast results are produced, never what they are
NON_NUMERIC_FIELDS = ("out_dir", "workers")

# per-experiment starting points; CLI flags and config files override these
EXPERIMENT_DEFAULTS = {
    "kernel-mc": {"n": 400, "samples": 50},
    "functional": {"n": 200, "samples": 3, "power": 3},
    "mde-check": {"n": 10, "samples": 0},
    "f-operator": {"n": 10, "samples": 0},
    "linearization": {"n": 50, "samples": 10, "alpha": 1e-2},
    "gap": {"n": 400, "samples": 20},
    "decay": {"n": 1000, "samples": 1, "g": 1.0,
              "grid": {"kind": "linear", "start": 10.0, "stop": 60.0, "step": 1.0},
              "window": [10.0, 60.0]},
    "hermitian-decay": {"n": 2000, "samples": 1,
                        "grid": {"kind": "linear", "start": 10.0, "stop": 50.0, "step": 1.0},
                        "window": [10.0, 50.0]},
    "autocorr": {"n": 400, "samples": 1, "g": 0.5,
                 "grid": {"kind": "linear", "start": 0.0, "stop": 5.0, "step": 0.25}},
    "accept-all": {},
}


@dataclass
class ExperimentConfig:
    experiment: str
    n: int = 100
    samples: int = 1
    seed: int = 0
    profile: dict = field(default_factory=lambda: {"kind": "constant"})
    law: str = "complex-gaussian"
    g: float = 1.0
    zeta1: complex = 1.5
    zeta2: complex = 1.5
    alpha: float = 0.0
    power: int = 2
    contour: dict = field(default_factory=lambda: {"radius": 1.5, "nodes": 256})
    grid: dict = field(default_factory=lambda: {"kind": "geometric", "start": 0.1,
                                                "stop": 60.0, "per_decade": 40})
    window: list | None = None
    workers: int = 1
    out_dir: str | None = None

    def numeric_dict(self) -> dict:
        d = asdict(self)
        for k in NON_NUMERIC_FIELDS:
            d.pop(k)
        for k in ("zeta1", "zeta2"):
            z = complex(d[k])
            d[k] = [z.real, z.imag]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.numeric_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = asdict(self)
        d.update(changes)
        return make_config(d, validate=True)


def _parse_complex(v, name):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    try:
        return complex(str(v).replace(" ", "").replace("i", "j")) if isinstance(v, str) \
            else complex(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot read {v!r} as a complex number") from exc


def _profile_spec(v):
    if isinstance(v, str):
        return {"kind": v}
    if isinstance(v, dict) and "kind" in v:
        return copy.deepcopy(v)
    raise ConfigError(f"profile must be a kind name or an object with 'kind', got {v!r}")


def make_config(raw: dict, validate: bool = True) -> ExperimentConfig:
    """Build a config from a mapping, filling per-experiment defaults."""
    if "experiment" not in raw:
        raise ConfigError("config needs an 'experiment' field")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; expected one of {EXPERIMENTS}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    merged = {**EXPERIMENT_DEFAULTS[exp], **{k: v for k, v in raw.items() if v is not None}}
    if exp == "decay" and merged.get("samples") == 0 and raw.get("grid") is None:
        # prediction only: no dense exponentials, so reach the asymptotic regime
        merged["grid"] = {"kind": "geometric", "start": 1.0, "stop": 200.0, "per_decade": 40}
        if raw.get("window") is None:
            merged["window"] = [50.0, 200.0]
    try:
        cfg = ExperimentConfig(**copy.deepcopy(merged))
        cfg.zeta1 = _parse_complex(cfg.zeta1, "zeta1")
        cfg.zeta2 = _parse_complex(cfg.zeta2, "zeta2")
        cfg.profile = _profile_spec(cfg.profile)
        for name in ("n", "samples", "seed", "power", "workers"):
            val = getattr(cfg, name)
            if isinstance(val, bool) or int(val) != val:
                raise ConfigError(f"{name} must be an integer, got {val!r}")
            setattr(cfg, name, int(val))
        cfg.g = float(cfg.g)
        cfg.alpha = float(cfg.alpha)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if validate:
        validate_config(cfg)
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return make_config(raw)


def time_grid(spec: dict):
    import numpy as np

    from ..dynamics import geometric_grid
    kind = spec.get("kind", "geometric")
    start, stop = float(spec["start"]), float(spec["stop"])
    if kind == "geometric":
        grid = geometric_grid(start, stop, int(spec.get("per_decade", 40)))
    elif kind == "linear":
        step = float(spec["step"])
        count = int(round((stop - start) / step)) + 1
        grid = start + step * np.arange(count)
    else:
        raise ConfigError(f"unknown grid kind {kind!r}")
    if spec.get("include_zero") and grid[0] > 0:
        grid = np.concatenate([[0.0], grid])
    return grid


def validate_config(cfg: ExperimentConfig) -> None:
    """Reject configurations the chosen experiment cannot run, before any compute."""
    exp = cfg.experiment
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if exp == "accept-all":
        return
    if cfg.n < 2:
        raise ConfigError(f"n must be >= 2, got {cfg.n}")
    if cfg.samples < 0:
        raise ConfigError("samples must be >= 0")
    if cfg.profile["kind"] not in PROFILE_KINDS:
        raise ConfigError(f"unknown profile kind {cfg.profile['kind']!r}")
    if cfg.profile["kind"] == "from-file" and "path" not in cfg.profile:
        raise ConfigError("from-file profile needs a 'path'")
    if cfg.law not in LAWS:
        raise ConfigError(f"unknown law {cfg.law!r}; expected one of {LAWS}")
    if exp in ("kernel-mc", "mde-check", "f-operator", "linearization", "gap"):
        if min(abs(cfg.zeta1), abs(cfg.zeta2)) <= 1:
            raise ConfigError("need |zeta1|, |zeta2| > 1")
    if exp == "linearization" and cfg.alpha <= 0:
        raise ConfigError("linearization needs alpha > 0")
    if exp in ("gap", "mde-check") and cfg.alpha < 0:
        raise ConfigError("alpha must be >= 0")
    if exp == "functional":
        if cfg.power < 0:
            raise ConfigError("power must be >= 0")
        radius = float(cfg.contour.get("radius", 1.5))
        nodes = int(cfg.contour.get("nodes", 256))
        if radius <= 1 or nodes < 8 or nodes % 2:
            raise ConfigError("contour needs radius > 1 and an even node count >= 8")
    if exp == "decay" and not 0 < cfg.g <= 1:
        raise ConfigError("decay needs 0 < g <= 1")
    if exp == "autocorr" and not 0 < cfg.g < 1:
        raise ConfigError("autocorr needs 0 < g < 1")
    if exp in ("decay", "hermitian-decay", "autocorr"):
        try:
            grid = time_grid(cfg.grid)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid spec {cfg.grid!r}: {exc}") from exc
        if grid.size < 2 or grid[0] < 0 or (grid[1:] <= grid[:-1]).any():
            raise ConfigError("grid must be nonnegative and strictly increasing")
        if cfg.window is not None:
            lo, hi = cfg.window
            if not (grid[0] <= lo < hi <= grid[-1]):
                raise ConfigError(f"window {cfg.window} outside grid [{grid[0]}, {grid[-1]}]")
    if exp == "hermitian-decay" and cfg.n < 2:
        raise ConfigError("hermitian-decay needs n >= 2")
