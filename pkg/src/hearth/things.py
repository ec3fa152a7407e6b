"""Things manager: routes interpreted chat intents onto broker topics and
hosts the simulated sensor/actuator farm behind them.

Topic layout (rooms use their keyword slot minus the '$'):
    sensors   report on   home/<room>/<measurement>          (retained)
              answer      home/<room>/<measurement>/get      requests
    actuators listen on   home/<room>/<device_id>/set
              echo state  home/<room>/<device_id>/state      (retained)

Sensors advance a seeded, clamped random walk on every simulator tick, so
a fixed seed reproduces the exact reading sequence. Actuators never
drift; their state changes only through /set commands.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass
from enum import Enum
from random import Random
from typing import Optional, Union

from .broker import Broker, Message
from .chatbot import AccessClass, ChatAction, ChatIntent

DEFAULT_COMMAND_TIMEOUT = 2.0

TEMPERATURE_RANGE = (-40.0, 60.0)
HUMIDITY_RANGE = (0.0, 100.0)
TEMPERATURE_STEP = 0.2
HUMIDITY_STEP = 0.5


class DeviceKind(str, Enum):
    TEMPERATURE_SENSOR = "temperature_sensor"
    HUMIDITY_SENSOR = "humidity_sensor"
    LIGHT = "light"
    THERMOSTAT = "thermostat"


SENSOR_KINDS = frozenset({DeviceKind.TEMPERATURE_SENSOR, DeviceKind.HUMIDITY_SENSOR})
ACTUATOR_KINDS = frozenset({DeviceKind.LIGHT, DeviceKind.THERMOSTAT})

MEASUREMENT = {
    DeviceKind.TEMPERATURE_SENSOR: "temperature",
    DeviceKind.HUMIDITY_SENSOR: "humidity",
}

ACTION_KIND = {
    ChatAction.GET_TEMPERATURE: DeviceKind.TEMPERATURE_SENSOR,
    ChatAction.GET_HUMIDITY: DeviceKind.HUMIDITY_SENSOR,
    ChatAction.GET_LIGHT_STATE: DeviceKind.LIGHT,
    ChatAction.SET_LIGHT: DeviceKind.LIGHT,
    ChatAction.SET_THERMOSTAT: DeviceKind.THERMOSTAT,
}


class DispatchError(RuntimeError):
    pass


class PermissionDeniedError(DispatchError):
    pass


class UnknownRoomError(DispatchError):
    pass


class UnknownDeviceError(DispatchError):
    pass


class DeviceTimeoutError(DispatchError):
    pass


class DuplicateDeviceError(ValueError):
    pass


def room_segment(room: str) -> str:
    return room[1:] if room.startswith("$") else room


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    room: str  # canonical room slot, e.g. "$Room1"
    kind: DeviceKind
    initial_value: Union[float, bool]
    report_period: float = 2.0

    @property
    def is_sensor(self) -> bool:
        return self.kind in SENSOR_KINDS

    def reading_topic(self) -> str:
        seg = room_segment(self.room)
        if self.is_sensor:
            return f"home/{seg}/{MEASUREMENT[self.kind]}"
        return f"home/{seg}/{self.device_id}/state"

    def command_topic(self) -> str:
        return f"home/{room_segment(self.room)}/{self.device_id}/set"

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "room": self.room,
            "kind": self.kind.value,
            "initial_value": self.initial_value,
            "report_period": self.report_period,
        }


@dataclass(frozen=True)
class DeviceReading:
    device_id: str
    room: str
    kind: DeviceKind
    value: Union[float, bool]
    sampled_at: int  # simulation tick

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "room": self.room,
            "kind": self.kind.value,
            "value": self.value,
            "sampled_at": self.sampled_at,
        }


@dataclass(frozen=True)
class Acknowledgment:
    device_id: str
    room: str
    value: Union[float, bool]

    def to_dict(self) -> dict:
        return {"device_id": self.device_id, "room": self.room, "value": self.value}


class _SimulatedDevice:
    """Sequential actor for one device: keeps its value, answers /get
    requests (sensors) or /set commands (actuators) via broker callbacks."""

    def __init__(self, spec: DeviceSpec, broker: Broker) -> None:
        self.spec = spec
        self.broker = broker
        self.value = spec.initial_value
        self.sampled_at = 0
        self._lock = threading.Lock()
        if spec.is_sensor:
            self._sub = broker.subscribe(spec.reading_topic() + "/get",
                                         callback=self._on_get)
        else:
            self._sub = broker.subscribe(spec.command_topic(),
                                         callback=self._on_command)

    def publish_reading(self) -> None:
        reading = DeviceReading(device_id=self.spec.device_id, room=self.spec.room,
                                kind=self.spec.kind, value=self.value,
                                sampled_at=self.sampled_at)
        self.broker.publish(self.spec.reading_topic(),
                            json.dumps(reading.to_dict()).encode("utf-8"),
                            retained=True)

    def step(self, rng: Random, tick: int) -> None:
        """Advance the random walk (sensors only) and publish."""
        with self._lock:
            self.sampled_at = tick
            if self.spec.kind is DeviceKind.TEMPERATURE_SENSOR:
                lo, hi = TEMPERATURE_RANGE
                self.value = round(min(hi, max(lo, self.value +
                                               rng.uniform(-TEMPERATURE_STEP,
                                                           TEMPERATURE_STEP))), 2)
            elif self.spec.kind is DeviceKind.HUMIDITY_SENSOR:
                lo, hi = HUMIDITY_RANGE
                self.value = round(min(hi, max(lo, self.value +
                                               rng.uniform(-HUMIDITY_STEP,
                                                           HUMIDITY_STEP))), 2)
            self.publish_reading()

    def _on_get(self, _msg: Message) -> None:
        with self._lock:
            self.publish_reading()

    def _on_command(self, msg: Message) -> None:
        try:
            value = json.loads(msg.payload.decode("utf-8"))["value"]
        except (ValueError, KeyError):
            return  # malformed command: ignored, no state change
        with self._lock:
            if self.spec.kind is DeviceKind.LIGHT:
                self.value = bool(value)
            else:
                self.value = float(value)
            self.publish_reading()

    def detach(self) -> None:
        self.broker.unsubscribe(self._sub)


class ThingsManager:
    """Device roster, simulator clock, and the intent dispatcher."""

    def __init__(self, broker: Broker, seed: int = 0,
                 command_timeout: float = DEFAULT_COMMAND_TIMEOUT) -> None:
        self.broker = broker
        self.command_timeout = command_timeout
        self._rng = Random(seed)
        self._devices: dict[str, _SimulatedDevice] = {}
        self._order: list[str] = []
        self._tick = 0
        self._lock = threading.RLock()

    def register_device(self, spec: DeviceSpec) -> None:
        """Attach a device and publish its first retained reading."""
        with self._lock:
            if spec.device_id in self._devices:
                raise DuplicateDeviceError(spec.device_id)
            device = _SimulatedDevice(spec, self.broker)
            self._devices[spec.device_id] = device
            self._order.append(spec.device_id)
            device.publish_reading()

    def rooms(self) -> list[str]:
        with self._lock:
            return sorted({d.spec.room for d in self._devices.values()})

    def roster(self) -> list[dict]:
        """Specs plus live values, in registration order (for the API)."""
        with self._lock:
            out = []
            for device_id in self._order:
                device = self._devices[device_id]
                entry = device.spec.to_dict()
                entry["value"] = device.value
                entry["sampled_at"] = device.sampled_at
                out.append(entry)
            return out

    def device(self, device_id: str) -> DeviceSpec:
        with self._lock:
            device = self._devices.get(device_id)
        if device is None:
            raise UnknownDeviceError(device_id)
        return device.spec

    def tick(self) -> int:
        """Advance every sensor one step; returns the new tick index."""
        with self._lock:
            self._tick += 1
            for device_id in self._order:
                device = self._devices[device_id]
                if device.spec.is_sensor:
                    device.step(self._rng, self._tick)
            return self._tick

    def dispatch(self, intent: ChatIntent, permission) -> Union[DeviceReading,
                                                                Acknowledgment]:
        """Execute a chat intent under the session's permission.

        Reads answer from the retained reading (falling back to a /get
        round-trip); writes publish the command and wait for the state
        echo. Permission is checked before anything touches the broker.
        """
        if intent.action not in ACTION_KIND:
            raise DispatchError(f"not dispatchable: {intent.action.value}")
        self._require_permission(intent.access_class, permission)
        spec = self._resolve(intent)
        if intent.access_class is AccessClass.READ:
            return self._read(spec)
        return self._write(spec, self._command_value(intent))

    def _require_permission(self, access: AccessClass, permission) -> None:
        value = getattr(permission, "value", permission)
        allowed = {
            AccessClass.READ: ("read", "read_write"),
            AccessClass.WRITE: ("write", "read_write"),
            AccessClass.NONE: ("none", "read", "write", "read_write"),
        }[access]
        if value not in allowed:
            raise PermissionDeniedError(
                f"{access.value} access requires one of {allowed}, have {value}")

    def _resolve(self, intent: ChatIntent) -> DeviceSpec:
        room = intent.entities.get("$room")
        if room is None:
            raise UnknownRoomError("no room in intent")
        kind = ACTION_KIND[intent.action]
        with self._lock:
            known_rooms = {d.spec.room for d in self._devices.values()}
            if room not in known_rooms:
                raise UnknownRoomError(room)
            for device_id in self._order:
                spec = self._devices[device_id].spec
                if spec.room == room and spec.kind is kind:
                    return spec
        raise UnknownDeviceError(f"no {kind.value} in {room}")

    def _read(self, spec: DeviceSpec) -> DeviceReading:
        topic = spec.reading_topic()
        retained = self.broker.retained_message(topic)
        if retained is None:
            sub = self.broker.subscribe(topic)
            try:
                self.broker.publish(topic + "/get", b"")
                try:
                    retained = sub.get(timeout=self.command_timeout)
                except queue.Empty:
                    raise DeviceTimeoutError(topic) from None
            finally:
                self.broker.unsubscribe(sub)
        return self._parse_reading(retained)

    def _write(self, spec: DeviceSpec, value) -> Acknowledgment:
        state_topic = spec.reading_topic()
        sub = self.broker.subscribe(state_topic)
        sub.drain()  # only the fresh echo matters, not the retained state
        try:
            self.broker.publish(spec.command_topic(),
                                json.dumps({"value": value}).encode("utf-8"))
            deadline = time.monotonic() + self.command_timeout
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise DeviceTimeoutError(spec.command_topic())
                try:
                    msg = sub.get(timeout=remaining)
                except queue.Empty:
                    raise DeviceTimeoutError(spec.command_topic()) from None
                echoed = self._parse_reading(msg)
                if echoed.value == value:
                    return Acknowledgment(device_id=spec.device_id,
                                          room=spec.room, value=echoed.value)
        finally:
            self.broker.unsubscribe(sub)

    def _command_value(self, intent: ChatIntent) -> Union[float, bool]:
        if intent.action is ChatAction.SET_LIGHT:
            return intent.entities.get("$state") == "on"
        return float(intent.entities["$number"])

    @staticmethod
    def _parse_reading(msg: Message) -> DeviceReading:
        data = json.loads(msg.payload.decode("utf-8"))
        return DeviceReading(device_id=data["device_id"], room=data["room"],
                             kind=DeviceKind(data["kind"]), value=data["value"],
                             sampled_at=data["sampled_at"])
