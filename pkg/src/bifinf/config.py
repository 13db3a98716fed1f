"""Scenario configuration: flat INI-style key/value sections.

Sections: run, domain, potential, nonlinearity, spectral, solver,
bifurcation.  Unknown sections or keys are schema violations; every value is
validated with a dotted field path in the error message so the CLI can exit
with a precise diagnosis.  All defaults live here and are recorded into the
run report for provenance.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError

__all__ = ["ScenarioConfig", "load_config", "bundled_config_path"]

_SECTIONS = {
    "run": {"seed", "label"},
    "domain": {"half_width", "nodes"},
    "potential": {"kind", "depth", "asymptote", "separation", "level", "path"},
    "nonlinearity": {"kind", "amplitude", "level", "path", "f_plus", "f_minus"},
    "spectral": {"eigen_count", "target_index", "alpha", "beta_fraction", "cluster_tol"},
    "solver": {
        "mu_fraction",
        "time_step",
        "horizon",
        "tolerance",
        "max_sweeps",
        "tail_tolerance",
    },
    "bifurcation": {
        "lambda_offsets",
        "branch_min_offset",
        "branch_max_offset",
        "branch_points",
        "index_offset",
        "annulus_samples",
    },
}

_POTENTIAL_KINDS = ("poschl_teller", "double_well", "constant", "tabulated")
_NONLINEARITY_KINDS = ("tanh_sech", "constant", "zero", "tabulated")


@dataclass
class ScenarioConfig:
    # run
    seed: int = 0
    label: str = "scenario"
    # domain
    half_width: float = 16.0
    nodes: int = 257
    # potential
    potential_kind: str = "poschl_teller"
    potential_depth: float = 2.0
    potential_asymptote: float = 3.0
    potential_separation: float = 6.0
    potential_level: float = 3.0
    potential_path: str = ""
    # nonlinearity
    nonlinearity_kind: str = "tanh_sech"
    amplitude: float = 0.1
    level: float = 0.1
    nonlinearity_path: str = ""
    f_plus: float = 0.0
    f_minus: float = 0.0
    # spectral
    eigen_count: int = 8
    target_index: int = 0
    alpha: float = 0.5
    beta_fraction: float = 0.8
    cluster_tol: float = 1e-6
    # solver
    mu_fraction: float = 0.5
    time_step: float = 0.05
    horizon: float | None = None
    tolerance: float = 1e-9
    max_sweeps: int = 120
    tail_tolerance: float = 1e-3
    # bifurcation
    lambda_offsets: tuple[float, ...] = (0.02, 0.01, 0.005)
    branch_min_offset: float = 0.003
    branch_max_offset: float = 0.03
    branch_points: int = 7
    index_offset: float = 0.15
    annulus_samples: int = 200

    def provenance(self) -> dict:
        """Flat dict of every effective setting, for the run report."""
        out = {}
        for key, value in self.__dict__.items():
            if isinstance(value, tuple):
                out[key] = list(value)
            else:
                out[key] = value
        return out


def bundled_config_path(name: str) -> Path | None:
    """Path of a config shipped with the package, or None."""
    base = resources.files("bifinf") / "configs" / f"{name}.cfg"
    try:
        if base.is_file():
            return Path(str(base))
    except OSError:  # pragma: no cover
        return None
    return None


def _field(section: str, key: str) -> str:
    return f"{section}.{key}"


def _get_float(parser, section, key, default, lo=None, hi=None, lo_strict=False):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got '{raw}'", _field(section, key)) from None
    if lo is not None and (val <= lo if lo_strict else val < lo):
        cmp = ">" if lo_strict else ">="
        raise ConfigError(f"must be {cmp} {lo}, got {val}", _field(section, key))
    if hi is not None and val > hi:
        raise ConfigError(f"must be <= {hi}, got {val}", _field(section, key))
    return val


def _get_int(parser, section, key, default, lo=None):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"expected an integer, got '{raw}'", _field(section, key)) from None
    if lo is not None and val < lo:
        raise ConfigError(f"must be >= {lo}, got {val}", _field(section, key))
    return val


def _get_choice(parser, section, key, default, choices):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).strip()
    if raw not in choices:
        raise ConfigError(f"must be one of {choices}, got '{raw}'", _field(section, key))
    return raw


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file (or a bundled config name)."""
    p = Path(path)
    if not p.is_file():
        bundled = bundled_config_path(str(path))
        if bundled is None:
            raise ConfigError(f"config file not found: {path}", "config")
        p = bundled
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(p)
    except configparser.Error as exc:
        raise ConfigError(f"parse failure: {exc}", "config") from None
    if not read:
        raise ConfigError(f"unreadable config file: {p}", "config")
    if not parser.sections():
        raise ConfigError("config file has no sections", "config")

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", section)
        for key in parser.options(section):
            if key not in _SECTIONS[section]:
                raise ConfigError("unknown key", _field(section, key))

    cfg = ScenarioConfig()
    cfg.seed = _get_int(parser, "run", "seed", cfg.seed, lo=0)
    if parser.has_option("run", "label"):
        cfg.label = parser.get("run", "label").strip()

    cfg.half_width = _get_float(parser, "domain", "half_width", cfg.half_width, lo=0.0, lo_strict=True)
    cfg.nodes = _get_int(parser, "domain", "nodes", cfg.nodes, lo=3)

    cfg.potential_kind = _get_choice(parser, "potential", "kind", cfg.potential_kind, _POTENTIAL_KINDS)
    cfg.potential_depth = _get_float(parser, "potential", "depth", cfg.potential_depth, lo=0.0, lo_strict=True)
    cfg.potential_asymptote = _get_float(parser, "potential", "asymptote", cfg.potential_asymptote, lo=0.0, lo_strict=True)
    cfg.potential_separation = _get_float(parser, "potential", "separation", cfg.potential_separation, lo=0.0, lo_strict=True)
    cfg.potential_level = _get_float(parser, "potential", "level", cfg.potential_level, lo=0.0, lo_strict=True)
    if parser.has_option("potential", "path"):
        cfg.potential_path = parser.get("potential", "path").strip()
    if cfg.potential_kind == "tabulated" and not cfg.potential_path:
        raise ConfigError("tabulated potential needs a path", "potential.path")

    cfg.nonlinearity_kind = _get_choice(
        parser, "nonlinearity", "kind", cfg.nonlinearity_kind, _NONLINEARITY_KINDS
    )
    cfg.amplitude = _get_float(parser, "nonlinearity", "amplitude", cfg.amplitude, lo=0.0)
    cfg.level = _get_float(parser, "nonlinearity", "level", cfg.level)
    if parser.has_option("nonlinearity", "path"):
        cfg.nonlinearity_path = parser.get("nonlinearity", "path").strip()
    cfg.f_plus = _get_float(parser, "nonlinearity", "f_plus", cfg.f_plus)
    cfg.f_minus = _get_float(parser, "nonlinearity", "f_minus", cfg.f_minus)
    if cfg.nonlinearity_kind == "tabulated":
        if not cfg.nonlinearity_path:
            raise ConfigError("tabulated nonlinearity needs a path", "nonlinearity.path")
        if cfg.f_plus <= 0 or cfg.f_minus <= 0:
            raise ConfigError(
                "tabulated nonlinearity needs declared positive f_plus and f_minus",
                "nonlinearity.f_plus",
            )

    cfg.eigen_count = _get_int(parser, "spectral", "eigen_count", cfg.eigen_count, lo=1)
    cfg.target_index = _get_int(parser, "spectral", "target_index", cfg.target_index, lo=0)
    cfg.alpha = _get_float(parser, "spectral", "alpha", cfg.alpha, lo=0.0)
    if cfg.alpha >= 1.0:
        raise ConfigError(f"must be < 1, got {cfg.alpha}", "spectral.alpha")
    cfg.beta_fraction = _get_float(parser, "spectral", "beta_fraction", cfg.beta_fraction, lo=0.0, lo_strict=True)
    if cfg.beta_fraction >= 1.0:
        raise ConfigError(f"must be < 1, got {cfg.beta_fraction}", "spectral.beta_fraction")
    cfg.cluster_tol = _get_float(parser, "spectral", "cluster_tol", cfg.cluster_tol, lo=0.0, lo_strict=True)

    cfg.mu_fraction = _get_float(parser, "solver", "mu_fraction", cfg.mu_fraction)
    if not 0.25 < cfg.mu_fraction < 0.75:
        raise ConfigError(
            f"must lie strictly between 0.25 and 0.75, got {cfg.mu_fraction}",
            "solver.mu_fraction",
        )
    cfg.time_step = _get_float(parser, "solver", "time_step", cfg.time_step, lo=0.0, lo_strict=True)
    if parser.has_option("solver", "horizon"):
        raw = parser.get("solver", "horizon").strip()
        if raw != "auto":
            try:
                cfg.horizon = float(raw)
            except ValueError:
                raise ConfigError(
                    f"expected a number or 'auto', got '{raw}'", "solver.horizon"
                ) from None
            if cfg.horizon <= 0:
                raise ConfigError(f"must be > 0, got {cfg.horizon}", "solver.horizon")
    cfg.tolerance = _get_float(parser, "solver", "tolerance", cfg.tolerance, lo=0.0, lo_strict=True)
    cfg.max_sweeps = _get_int(parser, "solver", "max_sweeps", cfg.max_sweeps, lo=1)
    cfg.tail_tolerance = _get_float(parser, "solver", "tail_tolerance", cfg.tail_tolerance, lo=0.0, lo_strict=True)

    if parser.has_option("bifurcation", "lambda_offsets"):
        raw = parser.get("bifurcation", "lambda_offsets")
        try:
            offsets = tuple(float(tok) for tok in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(
                f"expected comma-separated numbers, got '{raw}'",
                "bifurcation.lambda_offsets",
            ) from None
        if not offsets or any(o <= 0 for o in offsets):
            raise ConfigError("offsets must be positive", "bifurcation.lambda_offsets")
        cfg.lambda_offsets = offsets
    cfg.branch_min_offset = _get_float(parser, "bifurcation", "branch_min_offset", cfg.branch_min_offset, lo=0.0, lo_strict=True)
    cfg.branch_max_offset = _get_float(parser, "bifurcation", "branch_max_offset", cfg.branch_max_offset, lo=0.0, lo_strict=True)
    if cfg.branch_min_offset >= cfg.branch_max_offset:
        raise ConfigError(
            f"branch_min_offset {cfg.branch_min_offset} must be below branch_max_offset "
            f"{cfg.branch_max_offset}",
            "bifurcation.branch_min_offset",
        )
    cfg.branch_points = _get_int(parser, "bifurcation", "branch_points", cfg.branch_points, lo=2)
    cfg.index_offset = _get_float(parser, "bifurcation", "index_offset", cfg.index_offset, lo=0.0, lo_strict=True)
    cfg.annulus_samples = _get_int(parser, "bifurcation", "annulus_samples", cfg.annulus_samples, lo=1)
    return cfg
