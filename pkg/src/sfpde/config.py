"""Flat key-value experiment configuration: strict parsing, validation,
serialization, and a generated reference of all keys and defaults.

Format: one `key = value` per line, `#` starts a comment, blank lines
ignored.  Unknown or duplicate keys are errors with line numbers (silent
typos poison long stochastic studies).  Intervals use `[lo, hi]`;
integer lists are comma-separated with optional brackets; switches take
on/off (or true/false).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields as dataclass_fields

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "serialize_config",
    "config_reference",
    "config_sha256",
    "CASES",
    "SWEEPABLE",
]

CASES = ("ivp_power", "pde_onesided", "noise_driven")
OPERATOR_MODES = ("two_sided", "left_only")
SWEEPABLE = ("n_time", "m_space", "samples", "smolyak_w", "tensor_orders")


class ConfigError(ValueError):
    """Configuration text failed to parse or validate."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str | None = None
    case: str = "ivp_power"
    alpha: float | None = None
    alpha_interval: tuple[float, float] | None = None
    beta: float | None = None
    beta_interval: tuple[float, float] | None = None
    diffusivity: float = 1.0
    gamma: float = 0.0
    operator_mode: str = "left_only"
    n_time: int = 4
    m_space: int = 8
    tau: float | None = None
    t_end: float = 1.0
    x_lo: float = -1.0
    x_hi: float = 1.0
    noise_modes: int = 0
    noise_amplitude: float = 1.0
    noise_corr_window: float = 0.5
    samples: int = 1000
    seed: int = 15
    tensor_orders: tuple[int, ...] | None = None
    smolyak_w: int | None = None
    sweep_parameter: str | None = None
    sweep_values: tuple[int, ...] | None = None
    obs_times: int = 25
    obs_points: int = 21
    out_dir: str = "."
    plots: bool = True
    cache: bool = True
    threads: int = 1
    quadrature_boost: int = 50

    @property
    def alpha_point(self) -> float:
        return 0.5 if self.alpha is None else self.alpha

    @property
    def beta_point(self) -> float:
        return 1.5 if self.beta is None else self.beta

    @property
    def has_space_dim(self) -> bool:
        return self.case in ("pde_onesided", "noise_driven")


# key -> (kind, doc); defaults live on the dataclass
_KEYS: dict[str, tuple[str, str]] = {
    "experiment": ("str", "declared subcommand; must match the one invoked"),
    "case": ("str", "problem family: ivp_power | pde_onesided | noise_driven"),
    "alpha": ("float", "temporal order as a point value (exclusive with alpha_interval)"),
    "alpha_interval": ("interval", "temporal-order range [lo, hi] for stochastic runs"),
    "beta": ("float", "spatial order as a point value (exclusive with beta_interval)"),
    "beta_interval": ("interval", "spatial-order range [lo, hi] for stochastic runs"),
    "diffusivity": ("float", "diffusion coefficient k (positive)"),
    "gamma": ("float", "reaction coefficient (nonnegative)"),
    "operator_mode": ("str", "spatial operator: two_sided | left_only"),
    "n_time": ("int", "temporal modes N"),
    "m_space": ("int", "spatial modes M per dimension"),
    "tau": ("float", "temporal tuning parameter; defaults to alpha/2"),
    "t_end": ("float", "final time T"),
    "x_lo": ("float", "left end of the spatial interval"),
    "x_hi": ("float", "right end of the spatial interval"),
    "noise_modes": ("int", "number of random noise modes (0 disables noise)"),
    "noise_amplitude": ("float", "noise amplitude epsilon"),
    "noise_corr_window": ("float", "correlation-window fraction A of the horizon"),
    "samples": ("int", "Monte Carlo sample count K"),
    "seed": ("int", "base random seed"),
    "tensor_orders": ("ints", "collocation points per dimension (full tensor rule)"),
    "smolyak_w": ("int", "sparse-grid level w (exclusive with tensor_orders)"),
    "sweep_parameter": ("str", "convergence sweep target: " + " | ".join(SWEEPABLE)),
    "sweep_values": ("ints", "convergence sweep values, e.g. 2,3,4"),
    "obs_times": ("int", "observation grid: number of time points"),
    "obs_points": ("int", "observation grid: number of space points per dimension"),
    "out_dir": ("str", "output directory (CLI --out and the environment override win)"),
    "plots": ("bool", "render figures next to the CSV output"),
    "cache": ("bool", "reuse cached deterministic solutions by fingerprint"),
    "threads": ("int", "worker threads for sample solves"),
    "quadrature_boost": ("int", "extra quadrature points for assembly"),
}


def _parse_scalar(kind: str, text: str, where: str):
    if kind == "str":
        return text
    if kind == "bool":
        word = text.lower()
        if word in ("on", "true", "yes", "1"):
            return True
        if word in ("off", "false", "no", "0"):
            return False
        raise ConfigError(f"{where}: expected on/off, got {text!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: expected {kind}, got {text!r}") from exc
    if kind in ("interval", "ints"):
        inner = text.strip()
        if inner.startswith("[") and inner.endswith("]"):
            inner = inner[1:-1]
        parts = [p.strip() for p in inner.split(",") if p.strip()]
        if kind == "interval":
            if len(parts) != 2:
                raise ConfigError(f"{where}: expected [lo, hi], got {text!r}")
            try:
                return (float(parts[0]), float(parts[1]))
            except ValueError as exc:
                raise ConfigError(f"{where}: expected numbers in {text!r}") from exc
        try:
            values = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected integers in {text!r}") from exc
        if not values:
            raise ConfigError(f"{where}: empty list")
        return values
    raise ConfigError(f"{where}: unhandled kind {kind}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document (strict mode)."""
    assignments: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in assignments:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        kind = _KEYS[key][0]
        assignments[key] = _parse_scalar(kind, value, f"line {lineno}")
    config = ExperimentConfig(**assignments)
    _validate(config)
    return config


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _validate(cfg: ExperimentConfig) -> None:
    _require(cfg.case in CASES, f"case must be one of {CASES}, got {cfg.case!r}")
    _require(cfg.operator_mode in OPERATOR_MODES,
             f"operator_mode must be one of {OPERATOR_MODES}")
    _require(not (cfg.alpha is not None and cfg.alpha_interval is not None),
             "alpha and alpha_interval are mutually exclusive")
    _require(not (cfg.beta is not None and cfg.beta_interval is not None),
             "beta and beta_interval are mutually exclusive")
    _require(0.0 < cfg.alpha_point < 1.0, "alpha must lie in (0, 1)")
    if cfg.alpha_interval is not None:
        lo, hi = cfg.alpha_interval
        _require(0.0 < lo <= hi < 1.0, "alpha_interval must satisfy 0 < lo <= hi < 1")
    _require(1.0 < cfg.beta_point < 2.0, "beta must lie in (1, 2)")
    if cfg.beta_interval is not None:
        lo, hi = cfg.beta_interval
        _require(1.0 < lo <= hi < 2.0, "beta_interval must satisfy 1 < lo <= hi < 2")
    if cfg.case == "pde_onesided":
        _require(cfg.operator_mode == "left_only",
                 "case pde_onesided requires operator_mode = left_only")
    if cfg.case == "ivp_power":
        _require(cfg.beta is None and cfg.beta_interval is None,
                 "case ivp_power has no spatial dimension; beta keys do not apply")
    _require(cfg.diffusivity > 0.0, "diffusivity must be positive")
    _require(cfg.gamma >= 0.0, "gamma must be nonnegative")
    _require(cfg.n_time >= 1, "n_time must be >= 1")
    _require(cfg.m_space >= 1, "m_space must be >= 1")
    if cfg.tau is not None:
        _require(0.0 < cfg.tau < 1.0, "tau must lie in (0, 1)")
        _require(cfg.case == "noise_driven",
                 "manufactured cases fix tau = alpha/2; tau applies to noise_driven only")
    _require(cfg.t_end > 0.0, "t_end must be positive")
    _require(cfg.x_hi > cfg.x_lo, "x_hi must exceed x_lo")
    _require(cfg.noise_modes >= 0, "noise_modes must be >= 0")
    _require(cfg.noise_amplitude >= 0.0, "noise_amplitude must be >= 0")
    _require(cfg.noise_corr_window > 0.0, "noise_corr_window must be positive")
    _require(cfg.samples >= 2, "samples must be >= 2")
    _require(not (cfg.tensor_orders is not None and cfg.smolyak_w is not None),
             "conflicting sampling strategy: smolyak_w and tensor_orders are exclusive")
    if cfg.tensor_orders is not None:
        _require(all(v >= 1 for v in cfg.tensor_orders),
                 "tensor_orders entries must be >= 1")
    if cfg.smolyak_w is not None:
        _require(cfg.smolyak_w >= 0, "smolyak_w must be >= 0")
    _require((cfg.sweep_parameter is None) == (cfg.sweep_values is None),
             "sweep_parameter and sweep_values must be given together")
    if cfg.sweep_parameter is not None:
        _require(cfg.sweep_parameter in SWEEPABLE,
                 f"sweep_parameter must be one of {SWEEPABLE}")
        _require(len(cfg.sweep_values) >= 1, "sweep_values must be nonempty")
        floor = 2 if cfg.sweep_parameter == "samples" else 1
        if cfg.sweep_parameter == "smolyak_w":
            floor = 0
        _require(all(v >= floor for v in cfg.sweep_values),
                 f"sweep_values for {cfg.sweep_parameter} must be >= {floor}")
        if cfg.sweep_parameter == "m_space":
            _require(cfg.case != "ivp_power",
                     "cannot sweep m_space for the time-only ivp_power case")
    _require(cfg.obs_times >= 1, "obs_times must be >= 1")
    _require(cfg.obs_points >= 2, "obs_points must be >= 2")
    _require(cfg.threads >= 1, "threads must be >= 1")
    _require(cfg.quadrature_boost >= 0, "quadrature_boost must be >= 0")


def _format(kind: str, value) -> str:
    if kind == "bool":
        return "on" if value else "off"
    if kind == "interval":
        return f"[{value[0]!r}, {value[1]!r}]"
    if kind == "ints":
        return ",".join(str(v) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(parse(t))) == parse(t)."""
    lines = []
    for f in dataclass_fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        kind = _KEYS[f.name][0]
        lines.append(f"{f.name} = {_format(kind, value)}")
    return "\n".join(lines) + "\n"


def config_reference() -> str:
    """Human-readable reference: every key, its type, default, and meaning."""
    defaults = ExperimentConfig()
    lines = ["# Configuration reference (flat key = value lines; '#' comments)", ""]
    for f in dataclass_fields(ExperimentConfig):
        kind, doc = _KEYS[f.name]
        default = getattr(defaults, f.name)
        shown = "unset" if default is None else _format(kind, default)
        lines.append(f"{f.name} ({kind}, default {shown})")
        lines.append(f"    {doc}")
    return "\n".join(lines) + "\n"


def config_sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
