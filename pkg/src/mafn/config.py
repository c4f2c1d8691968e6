"""Training configuration: every hyperparameter the model leaves open.

Configs serialize to a flat ``key = value`` text file (one key per line,
``#`` comments, comma-separated lists).  Environment variables prefixed
``MAFN_`` override file values, e.g. ``MAFN_SEED=7`` beats ``seed = 7``.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Tuple

from .errors import ContractError, DataError

ENV_PREFIX = "MAFN_"


@dataclass
class TrainConfig:
    # windowing
    window: int = 30                   # input window length T_w
    horizon: int = 5                   # forecast horizon H
    stride: int = 1
    rul_cap: float = 125.0
    # state identification
    k_states: int = 6
    cluster_features: str = "settings"  # "settings" | "sensors"
    cluster_restarts: int = 10
    cluster_max_iter: int = 100
    cluster_tol: float = 1e-8
    # architecture
    embedding_dim: int = 8
    kernel_size: int = 3
    n_filters: int = 16
    lstm_hidden: int = 24
    trend_dim: int = 4
    fusion_widths: Tuple[int, ...] = (32, 16)
    rul_widths: Tuple[int, ...] = (32, 16)
    # loss weighting
    w_state: float = 0.5
    w_degradation: float = 0.3
    w_forecast: float = 1.0
    w_rul: float = 1.0
    lambda_smooth: float = 0.1
    lambda_late: float = 2.0
    lambda_early: float = 1.0
    # optimization
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.2
    # misc
    pad_short: bool = False            # left-pad too-short inference histories
    seed: int = 0

    def validate(self) -> "TrainConfig":
        positive = [
            "window", "horizon", "stride", "rul_cap", "k_states", "embedding_dim",
            "kernel_size", "n_filters", "lstm_hidden", "trend_dim", "learning_rate",
            "batch_size", "max_epochs", "cluster_restarts", "cluster_max_iter",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ContractError(f"config field {name} must be positive, got {getattr(self, name)}")
        if self.patience < 0:
            raise ContractError("patience must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ContractError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if not self.lambda_late > self.lambda_early:
            raise ContractError("lambda_late must exceed lambda_early")
        if min(self.w_state, self.w_degradation, self.w_forecast, self.w_rul) < 0:
            raise ContractError("loss weights must be nonnegative")
        if max(self.w_state, self.w_degradation, self.w_forecast, self.w_rul) == 0:
            raise ContractError("at least one loss weight must be positive")
        if self.cluster_features not in ("settings", "sensors"):
            raise ContractError(f"cluster_features must be 'settings' or 'sensors', got {self.cluster_features!r}")
        if not all(w > 0 for w in self.fusion_widths) or not self.fusion_widths:
            raise ContractError("fusion_widths must be a nonempty list of positive ints")
        if len(self.rul_widths) != 2 or not all(w > 0 for w in self.rul_widths):
            raise ContractError("rul_widths must be two positive ints")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["fusion_widths"] = list(self.fusion_widths)
        out["rul_widths"] = list(self.rul_widths)
        return out


_FIELD_COMMENTS = {
    "window": "input window length in cycles",
    "horizon": "forecast horizon in cycles",
    "rul_cap": "cap applied to RUL targets and predictions",
    "k_states": "number of discrete operational states",
    "cluster_features": "columns to cluster: settings | sensors",
    "fusion_widths": "hidden widths of the fusion stack, comma-separated",
    "rul_widths": "hidden widths of the two RUL head layers",
    "pad_short": "left-pad histories shorter than the window at inference",
}


def default_config_text() -> str:
    """The full default config as a flat key = value file with comments."""
    lines = ["# mafn configuration: flat key = value, '#' starts a comment"]
    for f in dataclasses.fields(TrainConfig):
        value = getattr(TrainConfig(), f.name)
        comment = _FIELD_COMMENTS.get(f.name)
        rendered = _render_value(value)
        lines.append(f"{f.name} = {rendered}" + (f"  # {comment}" if comment else ""))
    return "\n".join(lines) + "\n"


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(name: str, raw: str, py_type):
    raw = raw.strip()
    try:
        if py_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if py_type is int:
            return int(raw)
        if py_type is float:
            return float(raw)
        if py_type is str:
            return raw
        # tuple of ints
        return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as e:
        raise DataError(f"config field {name}: {e}") from None


def _field_types():
    hints = {}
    for f in dataclasses.fields(TrainConfig):
        default = getattr(TrainConfig(), f.name)
        hints[f.name] = bool if isinstance(default, bool) else type(default)
    return hints


def parse_config_text(text: str, path: str = "<string>") -> TrainConfig:
    types = _field_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in types:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw, types[key])
    return TrainConfig(**values)


def load_config(path, apply_env: bool = True) -> TrainConfig:
    with open(path) as fh:
        cfg = parse_config_text(fh.read(), path=str(path))
    if apply_env:
        cfg = apply_env_overrides(cfg)
    return cfg.validate()


def apply_env_overrides(cfg: TrainConfig, environ=None) -> TrainConfig:
    environ = os.environ if environ is None else environ
    types = _field_types()
    updates = {}
    for name, py_type in types.items():
        key = ENV_PREFIX + name.upper()
        if key in environ:
            updates[name] = _parse_value(name, environ[key], py_type)
    return dataclasses.replace(cfg, **updates) if updates else cfg
