"""Run configuration: tolerances and decision thresholds."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

ENV_VAR = "GRIDSEG_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # tolerances
    pf_tol: float = 1e-8
    pf_max_iter: int = 30
    eig_residual_tol: float = 1e-8
    zero_flow_eps: float = 1e-6
    tie_tol: float = 1e-12
    # mode-shape / path thresholds (pu, degrees)
    shape_magnitude: float = 0.1
    group_phase_deg: float = 45.0
    opposing_phase_deg: float = 90.0
    # electromechanical mode filter
    em_freq_min_hz: float = 0.1
    em_freq_max_hz: float = 3.0
    em_min_abs_lambda: float = 0.01
    em_speed_participation: float = 0.3
    # post-segmentation verdict
    suppression_damping: float = 0.15
    suppression_window_hz: float = 0.15
    # output
    out_dir: str = "."
    verbosity: int = 0

    def __post_init__(self) -> None:
        for name in ("pf_tol", "eig_residual_tol", "zero_flow_eps", "tie_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.pf_max_iter < 1:
            raise ConfigError("pf_max_iter must be >= 1")
        if not 0 < self.shape_magnitude < 1:
            raise ConfigError("shape_magnitude must lie in (0, 1)")
        if not 0 < self.group_phase_deg <= self.opposing_phase_deg <= 180:
            raise ConfigError("need 0 < group_phase_deg <= opposing_phase_deg <= 180")
        if not 0 <= self.em_freq_min_hz < self.em_freq_max_hz:
            raise ConfigError("electromechanical band is empty")
        if not 0 < self.em_speed_participation <= 1:
            raise ConfigError("em_speed_participation must lie in (0, 1]")
        if not 0 < self.suppression_damping < 1:
            raise ConfigError("suppression_damping must lie in (0, 1)")
        if not self.suppression_window_hz > 0:
            raise ConfigError("suppression_window_hz must be > 0")

    def overrides(self) -> dict:
        """Fields that differ from the defaults (echoed into output metadata)."""
        default = RunConfig()
        return {k: v for k, v in asdict(self).items() if getattr(default, k) != v and k != "out_dir"}

    def with_overrides(self, values: dict) -> "RunConfig":
        known = {f.name: f.type for f in fields(self)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return replace(self, **values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Config from ``path``, else from ``$GRIDSEG_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return RunConfig().with_overrides(doc)
