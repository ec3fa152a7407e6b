"""Service configuration: auth thresholds, device roster, admin bootstrap.

Loaded from a JSON file; the CLI can override listen address, data dir,
seed and auth mode. Every knob has a working default so `hearthd demo`
runs with no file at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .auth import (DEFAULT_EMBEDDING_DIM, DEFAULT_MATCH_THRESHOLD,
                   DEFAULT_MIN_FRAMES, DEFAULT_MOTION_EPSILON, AuthMode)
from .things import DeviceKind, DeviceSpec

DEFAULT_ROOMS: dict[str, list[str]] = {
    "$Room1": ["lounge", "living room", "sitting room"],
    "$Room2": ["bedroom", "master bedroom"],
    "$Room3": ["kitchen"],
}

DEFAULT_DEVICES: list[dict] = [
    {"device_id": "temp-lounge", "room": "$Room1", "kind": "temperature_sensor",
     "initial_value": 22.5},
    {"device_id": "hum-lounge", "room": "$Room1", "kind": "humidity_sensor",
     "initial_value": 45.0},
    {"device_id": "light-lounge", "room": "$Room1", "kind": "light",
     "initial_value": False},
    {"device_id": "thermostat-lounge", "room": "$Room1", "kind": "thermostat",
     "initial_value": 21.0},
    {"device_id": "temp-bedroom", "room": "$Room2", "kind": "temperature_sensor",
     "initial_value": 19.5},
    {"device_id": "light-bedroom", "room": "$Room2", "kind": "light",
     "initial_value": False},
    {"device_id": "temp-kitchen", "room": "$Room3", "kind": "temperature_sensor",
     "initial_value": 23.0},
    {"device_id": "hum-kitchen", "room": "$Room3", "kind": "humidity_sensor",
     "initial_value": 50.0},
]


class ConfigError(ValueError):
    pass


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8765"
    mode: AuthMode = AuthMode.MFA
    liveness_min_frames: int = DEFAULT_MIN_FRAMES
    liveness_epsilon: float = DEFAULT_MOTION_EPSILON
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    match_threshold: float = DEFAULT_MATCH_THRESHOLD
    data_dir: Optional[Path] = None
    seed: int = 42
    tick_period: float = 2.0
    command_timeout: float = 2.0
    session_ttl_hours: float = 12.0
    admin_username: str = "admin"
    admin_password: str = "admin"
    rooms: dict[str, list[str]] = field(default_factory=lambda: dict(DEFAULT_ROOMS))
    devices: list[dict] = field(default_factory=lambda: [dict(d) for d in DEFAULT_DEVICES])
    chat_table: Optional[Path] = None
    ui_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        self.mode = AuthMode(self.mode)
        if self.liveness_min_frames < 1:
            raise ConfigError("liveness_min_frames must be >= 1")
        for name in ("liveness_epsilon", "embedding_dim", "match_threshold",
                     "session_ttl_hours", "command_timeout"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.tick_period < 0:
            raise ConfigError("tick_period must be >= 0 (0 disables the ticker)")
        if not self.admin_username or not self.admin_password:
            raise ConfigError("bootstrap admin credentials must be set")
        if self.data_dir is not None:
            self.data_dir = Path(self.data_dir)
        if self.chat_table is not None:
            self.chat_table = Path(self.chat_table)
        if self.ui_dir is not None:
            self.ui_dir = Path(self.ui_dir)

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        try:
            return int(self.listen.rsplit(":", 1)[1])
        except (IndexError, ValueError):
            raise ConfigError(f"listen must be host:port, got {self.listen!r}")

    def device_specs(self) -> list[DeviceSpec]:
        specs = []
        for entry in self.devices:
            try:
                specs.append(DeviceSpec(
                    device_id=entry["device_id"],
                    room=entry["room"],
                    kind=DeviceKind(entry["kind"]),
                    initial_value=entry["initial_value"],
                    report_period=float(entry.get("report_period", self.tick_period or 2.0)),
                ))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad device entry {entry!r}: {exc}") from exc
        return specs

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ServiceConfig":
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)
