"""In-process publish/subscribe broker with MQTT-style topic semantics.

Topics are slash-separated hierarchies ("home/lounge/temperature").
Subscriptions take filters where `+` matches exactly one level and a
trailing `#` matches the named level plus any number of deeper levels.
Retained messages are replayed to new subscribers. There is no wire
protocol: everything runs inside the hosting process.
"""

from __future__ import annotations

import itertools
import queue
import threading
from dataclasses import dataclass
from typing import Callable, Optional


class TopicError(ValueError):
    """Raised for a malformed topic or topic filter."""


def validate_topic(topic: str) -> list[str]:
    """Split and validate a concrete topic. Wildcards are not allowed here."""
    levels = topic.split("/")
    if not topic or any(level == "" for level in levels):
        raise TopicError(f"topic has empty level: {topic!r}")
    for level in levels:
        if "+" in level or "#" in level:
            raise TopicError(f"wildcard not allowed in topic: {topic!r}")
    return levels


def validate_filter(topic_filter: str) -> list[str]:
    """Split and validate a subscription filter.

    `+` must stand alone in its level; `#` must stand alone and be last.
    """
    levels = topic_filter.split("/")
    if not topic_filter or any(level == "" for level in levels):
        raise TopicError(f"filter has empty level: {topic_filter!r}")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#" or i != len(levels) - 1:
                raise TopicError(f"'#' must be the final level: {topic_filter!r}")
        elif "+" in level and level != "+":
            raise TopicError(f"'+' must occupy a whole level: {topic_filter!r}")
    return levels


def topic_matches(topic_filter: str, topic: str) -> bool:
    """Decide whether `topic` is covered by `topic_filter`.

    Literal levels compare exactly, `+` consumes exactly one level and a
    trailing `#` also matches its parent ("home/#" matches "home").
    """
    flevels = validate_filter(topic_filter)
    tlevels = validate_topic(topic)
    i = 0
    while i < len(flevels):
        f = flevels[i]
        if f == "#":
            return True
        if i >= len(tlevels):
            return False
        if f != "+" and f != tlevels[i]:
            return False
        i += 1
    return i == len(tlevels)


@dataclass(frozen=True)
class Message:
    topic: str
    payload: bytes
    retained: bool
    publish_seq: int


@dataclass
class Subscription:
    """Handle returned by Broker.subscribe.

    Queue-backed by default: consume with get()/try_get(). When created
    with a callback the broker invokes it inline on every match instead.
    """

    topic_filter: str
    _queue: Optional[queue.SimpleQueue] = None
    _callback: Optional[Callable[[Message], None]] = None
    _sub_id: int = -1
    active: bool = True

    def get(self, timeout: Optional[float] = None) -> Message:
        """Block for the next message; raises queue.Empty on timeout."""
        if self._queue is None:
            raise RuntimeError("callback subscription has no queue")
        return self._queue.get(timeout=timeout)

    def try_get(self) -> Optional[Message]:
        if self._queue is None:
            raise RuntimeError("callback subscription has no queue")
        try:
            return self._queue.get_nowait()
        except queue.Empty:
            return None

    def drain(self) -> list[Message]:
        out = []
        while True:
            msg = self.try_get()
            if msg is None:
                return out
            out.append(msg)


class Broker:
    """Thread-safe embedded broker.

    A re-entrant lock is held across delivery, so messages reach every
    subscriber in publish_seq order and callbacks may publish again from
    within delivery (that is how simulated devices echo their state).
    """

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._seq = itertools.count(1)
        self._subs: dict[int, Subscription] = {}
        self._sub_ids = itertools.count(1)
        self._retained: dict[str, Message] = {}

    def publish(self, topic: str, payload: bytes, retained: bool = False) -> int:
        """Publish payload to every matching subscription.

        Returns the number of deliveries. A retained publish replaces the
        topic's stored message; a retained publish with an empty payload
        clears it (and is still delivered live).
        """
        validate_topic(topic)
        with self._lock:
            msg = Message(topic=topic, payload=payload, retained=retained,
                          publish_seq=next(self._seq))
            if retained:
                if payload:
                    self._retained[topic] = msg
                else:
                    self._retained.pop(topic, None)
            delivered = 0
            for sub in list(self._subs.values()):
                if not sub.active or not topic_matches(sub.topic_filter, topic):
                    continue
                self._deliver(sub, msg)
                delivered += 1
            return delivered

    def subscribe(self, topic_filter: str,
                  callback: Optional[Callable[[Message], None]] = None) -> Subscription:
        """Register a subscription and replay matching retained messages."""
        validate_filter(topic_filter)
        with self._lock:
            sub = Subscription(
                topic_filter=topic_filter,
                _queue=None if callback else queue.SimpleQueue(),
                _callback=callback,
                _sub_id=next(self._sub_ids),
            )
            self._subs[sub._sub_id] = sub
            retained = sorted(
                (m for t, m in self._retained.items() if topic_matches(topic_filter, t)),
                key=lambda m: m.publish_seq,
            )
            for msg in retained:
                self._deliver(sub, msg)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        """Stop deliveries to this handle. Idempotent."""
        with self._lock:
            sub.active = False
            self._subs.pop(sub._sub_id, None)

    def retained_message(self, topic: str) -> Optional[Message]:
        validate_topic(topic)
        with self._lock:
            return self._retained.get(topic)

    def _deliver(self, sub: Subscription, msg: Message) -> None:
        if sub._callback is not None:
            sub._callback(msg)
        else:
            sub._queue.put(msg)
