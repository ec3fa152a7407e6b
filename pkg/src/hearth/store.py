"""Append-only persistence and the account store.

State lives in newline-delimited JSON journals, one record per version of
an entity. Writes go to the journal before they touch memory; loading
replays the journal so the latest version of each entity wins. A journal
path of None keeps everything in memory (handy for tests and embedding).
"""

from __future__ import annotations

import base64
import json
import threading
from datetime import datetime
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .auth import AccountStatus, Permission, UserAccount


class StoreError(RuntimeError):
    """Persistence failed; in-memory state was not changed."""


class CorruptJournalError(RuntimeError):
    """A journal line failed to parse. The message names the line."""


class DuplicateUsernameError(KeyError):
    pass


class UnknownUsernameError(KeyError):
    pass


class Journal:
    """One JSONL file, append-only, flushed per record."""

    def __init__(self, path: Optional[Path]) -> None:
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        if self.path is None:
            return
        line = json.dumps(record, separators=(",", ":"))
        try:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(line + "\n")
                f.flush()
        except OSError as exc:
            raise StoreError(f"cannot append to {self.path}: {exc}") from exc

    def replay(self) -> Iterator[dict]:
        if self.path is None or not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    record = json.loads(stripped)
                except json.JSONDecodeError as exc:
                    raise CorruptJournalError(
                        f"{self.path}: line {lineno}: malformed record "
                        f"({exc.msg})") from exc
                if not isinstance(record, dict):
                    raise CorruptJournalError(
                        f"{self.path}: line {lineno}: record is not an object")
                yield record


def account_to_record(account: UserAccount) -> dict:
    return {
        "username": account.username,
        "salt": account.salt.hex(),
        "password_digest": account.password_digest.hex(),
        "face_template": [float(x) for x in account.face_template],
        "status": account.status.value,
        "permission": account.permission.value,
        "created_at": account.created_at.isoformat(),
    }


def account_from_record(record: dict) -> UserAccount:
    return UserAccount(
        username=record["username"],
        salt=bytes.fromhex(record["salt"]),
        password_digest=bytes.fromhex(record["password_digest"]),
        face_template=np.asarray(record["face_template"], dtype=float),
        status=AccountStatus(record["status"]),
        permission=Permission(record["permission"]),
        created_at=datetime.fromisoformat(record["created_at"]),
    )


def encode_image(image: bytes) -> str:
    return base64.b64encode(image).decode("ascii")


def decode_image(data: str) -> bytes:
    return base64.b64decode(data.encode("ascii"))


class AccountStore:
    """Username-keyed account records, journal-backed.

    Mutations take the store lock and hit the journal before memory, so a
    failed write leaves both the file and the in-memory view untouched.
    """

    def __init__(self, journal_path: Optional[Path] = None) -> None:
        self._journal = Journal(journal_path)
        self._lock = threading.RLock()
        self._accounts: dict[str, UserAccount] = {}
        for record in self._journal.replay():
            try:
                account = account_from_record(record)
            except (KeyError, ValueError) as exc:
                raise CorruptJournalError(
                    f"{journal_path}: unusable account record for "
                    f"{record.get('username')!r}: {exc}") from exc
            self._accounts[account.username] = account

    def exists(self, username: str) -> bool:
        with self._lock:
            return username in self._accounts

    def get(self, username: str) -> Optional[UserAccount]:
        with self._lock:
            return self._accounts.get(username)

    def create(self, account: UserAccount) -> None:
        if not account.username:
            raise ValueError("username must be non-empty")
        with self._lock:
            if account.username in self._accounts:
                raise DuplicateUsernameError(account.username)
            self._journal.append(account_to_record(account))
            self._accounts[account.username] = account

    def update_approval(self, username: str, status: AccountStatus,
                        permission: Permission) -> UserAccount:
        with self._lock:
            current = self._accounts.get(username)
            if current is None:
                raise UnknownUsernameError(username)
            updated = UserAccount(
                username=current.username,
                salt=current.salt,
                password_digest=current.password_digest,
                face_template=current.face_template,
                status=status,
                permission=permission,
                created_at=current.created_at,
            )
            self._journal.append(account_to_record(updated))
            self._accounts[username] = updated
            return updated

    def pending(self) -> list[UserAccount]:
        with self._lock:
            rows = [a for a in self._accounts.values()
                    if a.status is AccountStatus.PENDING]
        return sorted(rows, key=lambda a: (a.created_at, a.username))

    def all_accounts(self) -> list[UserAccount]:
        with self._lock:
            return list(self._accounts.values())

    def export_state(self) -> list[dict]:
        """Serializable snapshot, ordered by username, for equality checks."""
        with self._lock:
            return [account_to_record(self._accounts[u])
                    for u in sorted(self._accounts)]
