"""Admin-directed security notifications: persisted log plus live streams.

Every suspicious registration or log-in attempt lands here with the
captured image, as does the approval request for a fresh registration.
Admin consoles either poll list() or hold a subscription; a subscriber
that falls too far behind gets its buffer collapsed into a gap marker so
it knows to resynchronize by id.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .store import CorruptJournalError, Journal, StoreError, decode_image, encode_image

DEFAULT_STREAM_BUFFER = 256


class NotificationKind(str, Enum):
    APPROVAL_REQUEST = "approval_request"
    SPOOFING_ATTACK = "spoofing_attack"
    WRONG_PASSWORD = "wrong_password"
    UNRECOGNIZED_FACE = "unrecognized_face"


class UnknownNotificationError(KeyError):
    pass


@dataclass
class Notification:
    id: int
    kind: NotificationKind
    username: Optional[str]
    image: bytes
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc))
    acknowledged: bool = False
    persisted: bool = True

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "username": self.username,
            "image": encode_image(self.image),
            "created_at": self.created_at.isoformat(),
            "acknowledged": self.acknowledged,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Notification":
        return cls(
            id=int(record["id"]),
            kind=NotificationKind(record["kind"]),
            username=record.get("username"),
            image=decode_image(record.get("image", "")),
            created_at=datetime.fromisoformat(record["created_at"]),
            acknowledged=bool(record.get("acknowledged", False)),
        )


@dataclass(frozen=True)
class GapMarker:
    """Placed in a stream after its buffer overflowed; events up to
    latest_id may have been dropped and should be refetched."""

    latest_id: int


StreamItem = Union[Notification, GapMarker]


class NotificationStream:
    """Single-consumer view of the log: bounded buffer, gap on overflow."""

    def __init__(self, max_buffer: int = DEFAULT_STREAM_BUFFER) -> None:
        self._items: deque[StreamItem] = deque()
        self._cond = threading.Condition()
        self._max = max_buffer
        self.closed = False

    def _push(self, item: StreamItem) -> None:
        with self._cond:
            if self.closed:
                return
            if len(self._items) >= self._max:
                latest = item.id if isinstance(item, Notification) else item.latest_id
                self._items.clear()
                self._items.append(GapMarker(latest_id=latest))
            else:
                self._items.append(item)
            self._cond.notify()

    def get(self, timeout: Optional[float] = None) -> Optional[StreamItem]:
        """Next item, or None on timeout / after close."""
        with self._cond:
            if not self._items:
                self._cond.wait(timeout=timeout)
            if not self._items:
                return None
            return self._items.popleft()

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()


class NotificationLog:
    """Ordered, journal-backed notification log with live fan-out.

    Ids increase strictly in emission order. If the journal write fails
    the event is still pushed to live streams (flagged unpersisted) and
    the error propagates to the emitter.
    """

    def __init__(self, journal_path: Optional[Path] = None) -> None:
        self._journal = Journal(journal_path)
        self._lock = threading.RLock()
        self._by_id: dict[int, Notification] = {}
        self._streams: list[NotificationStream] = []
        for record in self._journal.replay():
            try:
                notification = Notification.from_record(record)
            except (KeyError, ValueError) as exc:
                raise CorruptJournalError(
                    f"{journal_path}: unusable notification record: {exc}") from exc
            self._by_id[notification.id] = notification
        self._next_id = max(self._by_id, default=0) + 1

    def emit(self, kind: Union[NotificationKind, str],
             username: Optional[str], image: bytes) -> Notification:
        kind = NotificationKind(kind)
        if kind is NotificationKind.APPROVAL_REQUEST and not username:
            raise ValueError("approval_request requires a username")
        with self._lock:
            notification = Notification(
                id=self._next_id, kind=kind, username=username, image=image)
            self._next_id += 1
            persist_error: Optional[Exception] = None
            try:
                self._journal.append(notification.to_record())
            except StoreError as exc:
                notification.persisted = False
                persist_error = exc
            self._by_id[notification.id] = notification
            for stream in self._streams:
                stream._push(notification)
        if persist_error is not None:
            raise persist_error
        return notification

    def list(self, kind: Optional[Union[NotificationKind, str]] = None,
             since_id: Optional[int] = None) -> list[Notification]:
        kind = NotificationKind(kind) if kind is not None else None
        with self._lock:
            rows = [n for n in self._by_id.values()
                    if (kind is None or n.kind is kind)
                    and (since_id is None or n.id > since_id)]
        return sorted(rows, key=lambda n: n.id)

    def acknowledge(self, notification_id: int) -> Notification:
        """Mark as acknowledged. Idempotent; unknown ids are an error."""
        with self._lock:
            notification = self._by_id.get(notification_id)
            if notification is None:
                raise UnknownNotificationError(notification_id)
            if not notification.acknowledged:
                notification.acknowledged = True
                self._journal.append(notification.to_record())
            return notification

    def subscribe(self, since_id: Optional[int] = None,
                  max_buffer: int = DEFAULT_STREAM_BUFFER) -> NotificationStream:
        """Live stream, primed with persisted events newer than since_id."""
        with self._lock:
            stream = NotificationStream(max_buffer=max_buffer)
            for notification in self.list(since_id=since_id):
                stream._push(notification)
            self._streams.append(stream)
            return stream

    def unsubscribe(self, stream: NotificationStream) -> None:
        with self._lock:
            stream.close()
            if stream in self._streams:
                self._streams.remove(stream)

    def latest_id(self) -> int:
        with self._lock:
            return self._next_id - 1

    def export_state(self) -> list[dict]:
        with self._lock:
            return [self._by_id[i].to_record() for i in sorted(self._by_id)]
