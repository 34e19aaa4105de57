"""Experiment configuration files.

A config is an INI file. Only keys that are set are stored, so writing and
re-reading a config reproduces it field for field; defaults are applied when
the experiment is built. Unknown sections or keys are errors.

    [experiment]
    name = tri_qa_T1000
    algorithm = qa
    seed = 0

    [model]
    kind = tri

    [anneal]
    T = 1000
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ALGORITHMS = ("qa", "sqa", "qite", "vqite", "diag-vqite", "vqe", "spectrum", "oracle")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA: dict[str, dict[str, type]] = {
    "experiment": {"name": str, "algorithm": str, "seed": int, "repeats": int},
    "model": {"kind": str, "Lx": int, "Ly": int, "Jx": float, "Jwedge": float, "J": float, "K": float,
              "Kp": float},
    "anneal": {"T": float, "delta_t": float, "record_every": int, "tol": float, "method": str,
               "use_symmetry": bool},
    "sweep": {"h_max": float, "s_max": float, "edge_axis": str, "edge_count": int, "creation_steps": int},
    "qite": {"delta_tau": float, "total_tau": float, "record_every": int},
    "vqite": {"delta_t": float, "epsilon": float, "total_t": float, "record_every": int,
              "max_halvings": int, "stop_on_convergence": bool, "snapshot_every": int},
    "vqe": {"eta": float, "max_iters": int, "record_every": int, "stop_on_convergence": bool,
            "snapshot_every": int},
    "spectrum": {"k": int, "s_points": int, "refine": int, "tol": float, "sector": int},
}

_PARSERS = {str: str, int: int, float: float, bool: _bool}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    sections: dict[str, dict] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        typ = _key_type(section, key)
        if isinstance(value, str) and typ is not str:
            value = _parse_value(section, key, value)
        elif typ is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif not isinstance(value, typ):
            raise ConfigError(f"{section}.{key} expects {typ.__name__}, got {value!r}")
        self.sections.setdefault(section, {})[key] = value

    @property
    def name(self) -> str:
        return self.get("experiment", "name") or f"{self.model_kind}_{self.algorithm}"

    @property
    def algorithm(self) -> str:
        return self.get("experiment", "algorithm")

    @property
    def seed(self) -> int:
        return self.get("experiment", "seed", 0)

    @property
    def repeats(self) -> int:
        return self.get("experiment", "repeats", 1)

    @property
    def model_kind(self) -> str:
        return self.get("model", "kind")

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def validate(self) -> ExperimentConfig:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"experiment.algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.model_kind:
            raise ConfigError("model.kind is required")
        if self.repeats < 1:
            raise ConfigError("experiment.repeats must be positive")
        return self

    def to_string(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec in SCHEMA:
            if sec in self.sections and self.sections[sec]:
                cp[sec] = {k: _format_value(v) for k, v in self.sections[sec].items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue().rstrip("\n") + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_string())

    def copy(self) -> ExperimentConfig:
        return ExperimentConfig({k: dict(v) for k, v in self.sections.items()})


def _key_type(section: str, key: str) -> type:
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    return SCHEMA[section][key]


def _parse_value(section: str, key: str, text: str):
    typ = _key_type(section, key)
    try:
        return _PARSERS[typ](text.strip())
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {text!r} as {typ.__name__}") from exc


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = ExperimentConfig()
    for sec in cp.sections():
        for key, raw in cp[sec].items():
            try:
                cfg.sections.setdefault(sec, {})[key] = _parse_value(sec, key, raw)
            except ConfigError as exc:
                raise ConfigError(f"{source}: {exc}") from exc
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def apply_override(cfg: ExperimentConfig, assignment: str) -> None:
    """Apply ``section.key=value``."""
    if "=" not in assignment or "." not in assignment.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    lhs, value = assignment.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    cfg.set(section, key, value)


def derive_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for a named component of one experiment."""
    key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
