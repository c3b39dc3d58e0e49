"""Platform configuration: JSON file plus HCTI_-prefixed env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import ValidationError
from ..risk.forest import Hyperparams
from ..scenarios import IMPACT_WEIGHTS, ImpactCategory, ScenarioClass

# Flat keys overridable via environment as HCTI_<UPPERCASED KEY>.
_ENV_KEYS = {
    "data_dir": str,
    "feed_manifest": str,
    "org_mapping": str,
    "policy_dir": str,
    "ea_dir": str,
    "listen_host": str,
    "listen_port": int,
    "auth_token": str,
    "countermeasure_cap": float,
    "sector": str,
}


@dataclass
class PlatformConfig:
    data_dir: Path
    feed_manifest: Optional[Path] = None
    org_mapping: Optional[Path] = None
    policy_dir: Optional[Path] = None
    ea_dir: Optional[Path] = None
    listen_host: str = "127.0.0.1"
    listen_port: int = 8400
    auth_token: str = ""
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    impact_weights: dict = field(
        default_factory=lambda: dict(IMPACT_WEIGHTS))
    countermeasure_cap: float = 3.0
    scenario_map_overrides: dict = field(default_factory=dict)
    sector: str = "healthcare"

    def validate(self):
        if not 1 <= self.listen_port <= 65535:
            raise ValidationError("listen_port", "outside 1..65535")
        if self.countermeasure_cap <= 0:
            raise ValidationError("countermeasure_cap", "must be positive")
        for category, weight in self.impact_weights.items():
            if not 0.0 < weight <= 1.0:
                raise ValidationError("impact_weights",
                                      f"{category}: {weight} outside (0,1]")
        for category, scenarios in self.scenario_map_overrides.items():
            for name in scenarios:
                try:
                    ScenarioClass(name)
                except ValueError:
                    raise ValidationError(
                        "scenario_map_overrides",
                        f"{category}: unknown scenario {name!r}") from None
        for name in ("feed_manifest", "org_mapping", "policy_dir", "ea_dir"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ValidationError(name, f"path does not exist: {path}")


def load_config(path: Optional[Path] = None,
                env: Optional[dict] = None) -> PlatformConfig:
    """Read the JSON config file, then apply HCTI_ environment overrides."""
    env = os.environ if env is None else env
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValidationError("config", "top-level value must be an object")

    for key, cast in _ENV_KEYS.items():
        env_key = "HCTI_" + key.upper()
        if env_key in env:
            value = env[env_key]
            try:
                raw[key] = cast(value)
            except ValueError:
                raise ValidationError(key,
                                      f"bad env override {value!r}") from None

    if "data_dir" not in raw:
        raise ValidationError("data_dir", "missing from config")

    data_dir = Path(raw["data_dir"])
    data_dir.mkdir(parents=True, exist_ok=True)
    ea_dir = raw.get("ea_dir")
    if ea_dir is None and (data_dir / "ea").is_dir():
        ea_dir = data_dir / "ea"

    impact_weights = dict(IMPACT_WEIGHTS)
    for name, value in raw.get("impact_weights", {}).items():
        impact_weights[ImpactCategory(name)] = float(value)

    config = PlatformConfig(
        data_dir=data_dir,
        feed_manifest=_opt_path(raw.get("feed_manifest")),
        org_mapping=_opt_path(raw.get("org_mapping")),
        policy_dir=_opt_path(raw.get("policy_dir")),
        ea_dir=_opt_path(ea_dir),
        listen_host=raw.get("listen_host", "127.0.0.1"),
        listen_port=int(raw.get("listen_port", 8400)),
        auth_token=raw.get("auth_token", ""),
        hyperparams=Hyperparams.from_dict(raw.get("hyperparams", {})),
        impact_weights=impact_weights,
        countermeasure_cap=float(raw.get("countermeasure_cap", 3.0)),
        scenario_map_overrides=raw.get("scenario_map_overrides", {}),
        sector=raw.get("sector", "healthcare"),
    )
    config.validate()
    return config


def _opt_path(value) -> Optional[Path]:
    return Path(value) if value else None
