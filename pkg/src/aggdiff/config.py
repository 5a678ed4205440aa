"""Plain-text key=value experiment configs with dotted sections.

Lines are `key = value`; `#` starts a comment; unknown keys are rejected with
their line number. The format round-trips losslessly through ExperimentConfig.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# every key the runner understands, with its parser
_SCALAR_KEYS: dict[str, type] = {
    "experiment": str,
    "seed": int,
    "out": str,
    "params.m": float,
    "params.d": int,
    "mass": float,
    "init": str,
    "init.mass": float,
    "kernel.kind": str,
    "kernel.h.shape": str,
    "kernel.h.width": float,
    "kernel.table.path": str,
    "solver.t_end": float,
    "solver.dr": float,
    "solver.domain_radius": float,
    "solver.n": int,
    "solver.cfl_diffusion": float,
    "solver.cfl_advection": float,
    "solver.blowup_sup_threshold": float,
    "solver.snapshots": str,       # comma-separated times
    "solver.diag_samples": int,
    "cartesian.n": int,
    "cartesian.box": float,
    "envelope.kind": str,
    "envelope.frame": str,
    "envelope.k0": float,
    "envelope.coeff": float,
    "tolerance.factor": float,
    "jobs": int,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class ExperimentConfig:
    """A flat mapping of dotted keys to typed values."""

    entries: dict[str, object] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.entries[key]

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    def require(self, key: str):
        if key not in self.entries:
            raise ConfigError(f"missing required config key {key!r}")
        return self.entries[key]

    def set(self, key: str, value) -> None:
        if key not in _SCALAR_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        self.entries[key] = _SCALAR_KEYS[key](value)

    def snapshot_times(self) -> tuple[float, ...]:
        raw = self.get("solver.snapshots", "")
        if not raw:
            return ()
        return tuple(float(x) for x in str(raw).split(",") if x.strip())

    def dump(self) -> str:
        lines = []
        for key in sorted(self.entries):
            val = self.entries[key]
            if isinstance(val, float):
                lines.append(f"{key} = {val!r}")
            else:
                lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dump())


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCALAR_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in cfg.entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        caster = _SCALAR_KEYS[key]
        try:
            cfg.entries[key] = caster(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return cfg


def read_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))
