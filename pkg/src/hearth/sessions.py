"""Bearer-token sessions. Tokens are 32 random bytes, hex-encoded; the
permission attached to a session is always resolved live from the account
store at authorization time, never cached here."""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from typing import Optional

DEFAULT_TTL_HOURS = 12.0


@dataclass(frozen=True)
class Session:
    token: str
    username: str
    is_admin: bool
    issued_at: float
    expires_at: float

    def expired(self, now: Optional[float] = None) -> bool:
        return (now if now is not None else time.time()) >= self.expires_at


class SessionStore:
    def __init__(self, ttl_hours: float = DEFAULT_TTL_HOURS) -> None:
        self._ttl = ttl_hours * 3600.0
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}

    def create(self, username: str, is_admin: bool = False) -> Session:
        now = time.time()
        session = Session(token=secrets.token_hex(32), username=username,
                          is_admin=is_admin, issued_at=now,
                          expires_at=now + self._ttl)
        with self._lock:
            self._sessions[session.token] = session
        return session

    def get(self, token: Optional[str]) -> Optional[Session]:
        """Live, unexpired session for this token, else None."""
        if not token:
            return None
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                return None
            if session.expired():
                del self._sessions[token]
                return None
            return session

    def adopt(self, session: Session) -> None:
        """Register a session minted elsewhere (the log-in flow)."""
        with self._lock:
            self._sessions[session.token] = session
