"""Experiment configuration: bracketed sections with ``key = value`` lines.

    [physics]       m, p, eps, delta
    [soliton]       omega, theta, xi, u           (vectors as "x, y, z")
    [grid]          L, n, cfl_safety, scheme, time_step   (time_step 0: derive from the CFL bound)
    [run]           t_end, snapshot_every, diag_every, keep_last
    [perturbation]  seed, amplitude, profile      (profile: gaussian | none)
    [diagnostics]   R0, u0, track               (track: fit the modulation curve)
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, replace

from .errors import ConfigInvalid
from .soliton import SolitonParams

REQUIRED = ("physics", "soliton", "grid", "run")


def _vec(text: str, key: str) -> tuple:
    parts = [c for c in text.replace("(", " ").replace(")", " ").replace(",", " ").split()]
    if len(parts) != 3:
        raise ConfigInvalid(f"{key} needs three components, got {text!r}")
    try:
        return tuple(float(c) for c in parts)
    except ValueError as exc:
        raise ConfigInvalid(f"{key}: {exc}") from exc


@dataclass
class ExperimentConfig:
    m: float = 1.0
    p: float = 2.0
    eps: float = 0.0
    delta: float = 0.0
    omega: float = 0.8
    theta: float = 0.0
    xi: tuple = (0.0, 0.0, 0.0)
    u: tuple = (0.0, 0.0, 0.0)
    L: float = 16.0
    n: int = 64
    cfl_safety: float = 0.4
    scheme: str = "spectral"
    time_step: float = 0.0
    t_end: float = 20.0
    snapshot_every: float = 5.0
    diag_every: float = 0.5
    keep_last: int = 4
    seed: int = 0
    amplitude: float = 0.0
    profile: str = "none"
    R0: float = 4.0
    u0: tuple = (0.0, 0.0, 0.0)
    track: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def lam0(self) -> SolitonParams:
        return SolitonParams(self.omega, self.theta, self.xi, self.u)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dt(self) -> float:
        """time_step if set, else the largest step not above cfl_safety * h / sqrt(3) dividing diag_every."""
        if self.time_step > 0:
            return self.time_step
        target = self.cfl_safety * self.h / math.sqrt(3.0)
        k = max(1, math.ceil(self.diag_every / target - 1e-9))
        return self.diag_every / k

    def with_value(self, key: str, value) -> "ExperimentConfig":
        if key == "h":
            n = int(round(2.0 * self.L / float(value)))
            # refine space and time together
            return replace(self, n=n, time_step=self.dt * self.n / n)
        if not hasattr(self, key):
            raise ConfigInvalid(f"unknown parameter {key!r}")
        current = getattr(self, key)
        if isinstance(current, tuple):
            value = _vec(value, key) if isinstance(value, str) else tuple(float(c) for c in value)
        else:
            value = type(current)(value)
        return replace(self, **{key: value})

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        problems = []
        if self.m <= 0:
            problems.append("physics.m must be positive")
        if not 1.0 < self.p < 5.0:
            problems.append("physics.p must lie in (1, 5)")
        if self.eps < 0 or self.delta < 0:
            problems.append("physics.eps and physics.delta must be non-negative")
        if not 0 <= self.omega < self.m:
            problems.append("soliton.omega must satisfy 0 <= omega < m")
        if sum(c * c for c in self.u) >= 1.0:
            problems.append("soliton.u must have |u| < 1")
        if self.L <= 0 or self.n < 8 or self.n % 2:
            problems.append("grid.L must be positive and grid.n even and at least 8")
        if not 0 < self.cfl_safety <= 1:
            problems.append("grid.cfl_safety must lie in (0, 1]")
        if self.time_step < 0:
            problems.append("grid.time_step must be non-negative")
        elif self.time_step > 0:
            k = self.diag_every / self.time_step
            if abs(k - round(k)) > 1e-9 * k:
                problems.append("grid.time_step must divide run.diag_every")
            if self.time_step > self.cfl_safety * self.h / math.sqrt(3.0) * (1 + 1e-12):
                problems.append("grid.time_step exceeds cfl_safety * h / sqrt(3)")
        if self.scheme not in ("spectral", "fd"):
            problems.append("grid.scheme must be spectral or fd")
        if self.t_end <= 0 or self.diag_every <= 0 or self.snapshot_every <= 0:
            problems.append("run times must be positive")
        if self.keep_last < 0:
            problems.append("run.keep_last must be non-negative")
        if self.profile not in ("none", "gaussian"):
            problems.append("perturbation.profile must be none or gaussian")
        if self.amplitude < 0:
            problems.append("perturbation.amplitude must be non-negative")
        if problems:
            raise ConfigInvalid("; ".join(problems))
        return self


_KEYS = {
    "physics": {"m": float, "p": float, "eps": float, "delta": float},
    "soliton": {"omega": float, "theta": float, "xi": "vec", "u": "vec"},
    "grid": {"L": float, "n": int, "cfl_safety": float, "scheme": str, "time_step": float},
    "run": {"t_end": float, "snapshot_every": float, "diag_every": float, "keep_last": int},
    "perturbation": {"seed": int, "amplitude": float, "profile": str},
    "diagnostics": {"R0": float, "u0": "vec", "track": "bool"},
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep "L" and "R0" as written
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid(f"unreadable config: {exc}") from exc
    for sec in REQUIRED:
        if not cp.has_section(sec):
            raise ConfigInvalid(f"missing [{sec}] section")
    values = {}
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigInvalid(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            kind = _KEYS[sec].get(key)
            if kind is None:
                raise ConfigInvalid(f"unknown key {sec}.{key}")
            try:
                if kind == "vec":
                    values[key] = _vec(raw, f"{sec}.{key}")
                elif kind == "bool":
                    values[key] = cp.getboolean(sec, key)
                else:
                    values[key] = kind(raw.strip())
            except ValueError as exc:
                raise ConfigInvalid(f"{sec}.{key}: {exc}") from exc
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: ExperimentConfig) -> str:
    def vec(v):
        return ", ".join(repr(float(c)) for c in v)

    lines = []
    for sec, keys in _KEYS.items():
        lines.append(f"[{sec}]")
        for key, kind in keys.items():
            val = getattr(cfg, key)
            if kind == "vec":
                val = vec(val)
            elif kind == "bool":
                val = "true" if val else "false"
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
