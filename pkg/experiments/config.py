"""
Experiment configuration: defaults < flat key=value file < CLI flags.
"""

import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Tuple

from engine.errors import ConfigurationError
from engine.steppers import SCHEMES

log = logging.getLogger(__name__)

EXPERIMENTS = (
    "poisson_virus",
    "rd_peanut_convergence",
    "rd_peanut_stability",
    "rd_peanut_efficiency",
    "stefan_square",
)

MIN_NODES = 8

# Per-experiment defaults
DEFAULTS = {
    "poisson_virus": {
        "n": 91,
        "sweep": (51, 91, 171, 331),
    },
    "rd_peanut_convergence": {
        "n": 81,
        "t_end": 0.1,
        "scheme": "etd2",
        "sweep": (81, 161, 321, 641),
        "schemes": ("cn", "etd2", "etd2rk"),
    },
    "rd_peanut_stability": {
        "n": 201,
        "t_end": 0.2,
        "scheme": "etd2",
        "dts": (1e-4, 1e-3, 1e-2, 0.05, 0.1),
        "schemes": ("rk4", "etd2", "etd2rk", "cn"),
    },
    "rd_peanut_efficiency": {
        "n": 501,
        "dt": 1e-4,
        "t_end": 1e-2,
        "schemes": ("cn", "etd2", "etd2rk"),
    },
    "stefan_square": {
        "n": 201,
        "dt": 1e-3,
        "t_end": 1.0,
        "scheme": "etd2",
        "dump_every": 100,
    },
}

TUPLE_FIELDS = {"sweep": int, "dts": float, "schemes": str}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int = 81
    dt: float = 1e-3
    t_end: float = 0.1
    scheme: str = "etd2"
    krylov_tol: float = 1e-8
    cg_tol: float = 1e-10
    out_dir: str = "out"
    dump_every: int = 0

    sweep: Tuple[int, ...] = ()
    dts: Tuple[float, ...] = ()
    schemes: Tuple[str, ...] = ()
    workers: int = 1

    # Stefan model: u_t = D lap u + u (a - b u), front speed -mu grad u
    diffusion: float = 1.5
    mu: float = 1.0
    growth: float = 1.0
    crowding: float = 1.0
    box_half_width: float = 2.0
    reinit_iterations: int = 10
    extension_iterations: int = 20
    band_width: float = 8.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment '{self.experiment}', expected one of {', '.join(EXPERIMENTS)}")
        if self.n < MIN_NODES:
            raise ConfigurationError(f"n must be at least {MIN_NODES}, got {self.n}")
        if not self.dt > 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise ConfigurationError(f"t_end ({self.t_end}) must be at least dt ({self.dt})")
        for scheme in (self.scheme,) + tuple(self.schemes):
            if scheme not in SCHEMES:
                raise ConfigurationError(f"unknown scheme '{scheme}', expected one of {', '.join(SCHEMES)}")
        if not (self.krylov_tol > 0.0 and self.cg_tol > 0.0):
            raise ConfigurationError("tolerances must be positive")
        if self.dump_every < 0 or self.workers < 1:
            raise ConfigurationError("dump_every must be >= 0 and workers >= 1")
        if any(n < MIN_NODES for n in self.sweep):
            raise ConfigurationError(f"sweep resolutions must be at least {MIN_NODES}")
        if any(dt <= 0.0 for dt in self.dts):
            raise ConfigurationError("sweep time steps must be positive")

    @property
    def n_steps(self):
        """Steps of size dt to reach t_end (last step lands on t_end within rounding)"""
        return max(1, int(round(self.t_end / self.dt)))

    def ensure_out_dir(self):
        os.makedirs(self.out_dir, exist_ok=True)
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigurationError(f"output directory '{self.out_dir}' is not writable")
        return self.out_dir

    def with_overrides(self, **overrides):
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, raw):
    key = key.strip().replace("-", "_")
    if key not in FIELD_TYPES:
        raise ConfigurationError(f"unknown configuration key '{key}'")
    value = raw.strip() if isinstance(raw, str) else raw
    try:
        if key in TUPLE_FIELDS:
            cast = TUPLE_FIELDS[key]
            if isinstance(value, str):
                items = [v for v in value.replace(";", ",").split(",") if v.strip()]
            else:
                items = list(value)
            return key, tuple(cast(v.strip() if isinstance(v, str) else v) for v in items)
        if key in ("n", "dump_every", "workers", "reinit_iterations", "extension_iterations"):
            return key, int(value)
        if key in ("experiment", "scheme", "out_dir"):
            return key, str(value)
        return key, float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"cannot parse value '{raw}' for '{key}'") from None


def parse_config_text(text):
    """Flat key=value lines; '#' starts a comment"""
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}: expected key=value, got '{line}'")
        key, raw = line.split("=", 1)
        key, value = _coerce(key, raw)
        values[key] = value
    return values


def load_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file '{path}': {exc.strerror}") from exc
    return parse_config_text(text)


def build_config(experiment, file_values=None, overrides=None):
    """Resolve defaults, then file values, then explicit overrides"""
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(
            f"unknown experiment '{experiment}', expected one of {', '.join(EXPERIMENTS)}")
    values = dict(DEFAULTS[experiment])
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            key, value = _coerce(key, raw)
            values[key] = value
    if values.pop("experiment", experiment) != experiment:
        raise ConfigurationError("config file names a different experiment than the command")
    cfg = ExperimentConfig(experiment=experiment, **values)
    log.debug("Resolved configuration: %s", cfg)
    return cfg
