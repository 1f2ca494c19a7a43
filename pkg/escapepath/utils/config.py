"""
Run configuration
-----------------
Flat INI files with one section per pipeline stage. Unknown sections and keys
are rejected; every effective value can be echoed back through
``RunConfig.resolved_lines``.
"""
import configparser
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigError


@dataclass
class BvpConfig:
    """
    Numerical knobs of the connecting-orbit solver.

    ``bc_offset`` is only the displacement along the saddle's unstable
    eigenvector used to seed shooting; the truncated problem itself is pinned
    by a phase condition (anchor on cold starts, integral during
    continuation), not by an offset at the left end.
    """
    T: float = 20.0
    mesh: int = 400
    newton_tol: float = 1e-10
    bc_offset: float = 1e-4
    max_newton: int = 25
    degree: int = 3
    max_T: float = 80.0
    endpoint_tol: float = 1e-6
    hyperbolicity_tol: float = 1e-8
    cond_warn: float = 1e12


@dataclass
class MelnikovConfig:
    """First-order correction settings"""
    fd_mu: float = 1e-4


@dataclass
class SdeConfig:
    """Monte Carlo escape simulation settings"""
    eps: float = 0.25
    mu: float = 0.0
    dt: float = 1e-3
    t_max: float = 5e3
    n_paths: int = 500
    seed: int = 20240601
    exit_rule: str = "hyperplane"
    exit_normal: str = "1,0"
    exit_offset: float = 0.0
    exit_center: str = "0,0"
    exit_radius: float = 0.1
    eta: float = 0.1
    n_anchor: int = 101
    block_steps: int = 1000


@dataclass
class SweepConfig:
    """Parameter sweep settings for the second-order remainder law"""
    mu_list: str = "0.001,0.002,0.005,0.01"

    @property
    def mus(self) -> List[float]:
        return parse_float_list(self.mu_list)


@dataclass
class RunConfig:
    """Complete configuration of one command-line run"""
    model: str = "double_well"
    out: str = "results"
    threads: int = 1
    bvp: BvpConfig = field(default_factory=BvpConfig)
    melnikov: MelnikovConfig = field(default_factory=MelnikovConfig)
    sde: SdeConfig = field(default_factory=SdeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def resolved_lines(self) -> List[str]:
        """Every effective value, grouped by section, in file order."""
        lines = ["[run]"]
        for key in ("model", "out", "threads"):
            lines.append(f"{key} = {getattr(self, key)}")
        for section in SECTIONS:
            lines.append("")
            lines.append(f"[{section}]")
            block = getattr(self, section)
            for f in fields(block):
                lines.append(f"{f.name} = {_format_value(getattr(block, f.name))}")
        return lines


SECTIONS = ("bvp", "melnikov", "sde", "sweep")


def parse_float_list(text: str) -> List[float]:
    """Parse a comma separated list of floats."""
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as error:
        raise ConfigError(f"Cannot parse float list {text!r}: {error}") from error


def parse_vector(text: str) -> Tuple[float, ...]:
    return tuple(parse_float_list(text))


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _unquote(value: str) -> str:
    """Strip surrounding whitespace and one pair of matching quotes."""
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _coerce(value: str, target_type: Any, key: str) -> Any:
    value = _unquote(value)
    try:
        if target_type in (int, 'int'):
            return int(value)
        if target_type in (float, 'float'):
            return float(value)
        return value
    except ValueError as error:
        raise ConfigError(f"Invalid value for '{key}': {value!r}") from error


def _apply_section(block: Any, items: Dict[str, str], section: str) -> None:
    known = {f.name: f for f in fields(block)}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"Unknown key '{key}' in section [{section}]")
        setattr(block, key, _coerce(raw, known[key].type, f"{section}.{key}"))


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    Load a run configuration.

    Args:
        path: INI file. When omitted, ``ESCAPEPATH_CONFIG`` from the
            environment (or ``.env``) is used; without either, defaults apply.

    Returns:
        RunConfig with file values applied over the defaults
    """
    load_dotenv()
    config = RunConfig()
    threads = os.getenv("ESCAPEPATH_THREADS")
    if threads:
        config.threads = _coerce(threads, int, "ESCAPEPATH_THREADS")

    path = path or os.getenv("ESCAPEPATH_CONFIG")
    if not path:
        return config
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")

    # optionxform keeps keys case sensitive (T vs t)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as error:
        raise ConfigError(f"Malformed config file {path}: {error}") from error

    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "run":
            for key, raw in items.items():
                if key == "model" or key == "out":
                    setattr(config, key, _coerce(raw, str, f"run.{key}"))
                elif key == "threads":
                    config.threads = _coerce(raw, int, "run.threads")
                else:
                    raise ConfigError(f"Unknown key '{key}' in section [run]")
        elif section in SECTIONS:
            _apply_section(getattr(config, section), items, section)
        else:
            raise ConfigError(f"Unknown config section [{section}]")
    return config
