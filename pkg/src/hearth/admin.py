"""Admin manager: review pending registrations, activate or disable
accounts, and assign device permissions.

Permissions are literal grants: read covers sensor queries, write covers
actuator commands, read_write covers both. The three retrieval/approval
functions below are the whole admin surface; sensitive credential fields
never leave the store through them.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Union

from .auth import AccountStatus, Permission, UserAccount
from .store import AccountStore, UnknownUsernameError


class InvalidDecisionError(ValueError):
    """The status/permission combination is not allowed."""


@dataclass(frozen=True)
class ApprovalDecision:
    username: str
    status: AccountStatus
    permission: Permission

    def __post_init__(self) -> None:
        if self.status not in (AccountStatus.ACTIVE, AccountStatus.DISABLED):
            raise InvalidDecisionError(
                f"decision status must be active or disabled, got {self.status.value}")
        if self.status is AccountStatus.ACTIVE and self.permission is Permission.NONE:
            raise InvalidDecisionError(
                "an active account needs at least one permission grant")


@dataclass(frozen=True)
class AccountSummary:
    """Redacted account view: no salt, digest or face template."""

    username: str
    status: AccountStatus
    permission: Permission
    created_at: datetime

    @classmethod
    def of(cls, account: UserAccount) -> "AccountSummary":
        return cls(username=account.username, status=account.status,
                   permission=account.permission, created_at=account.created_at)

    def to_dict(self) -> dict:
        return {
            "username": self.username,
            "status": self.status.value,
            "permission": self.permission.value,
            "created_at": self.created_at.isoformat(),
        }


class AdminManager:
    def __init__(self, accounts: AccountStore) -> None:
        self.accounts = accounts

    def list_pending(self) -> list[AccountSummary]:
        """Accounts awaiting a decision, oldest registration first."""
        return [AccountSummary.of(a) for a in self.accounts.pending()]

    def get_user_approval(self, username: str) -> tuple[AccountStatus, Permission]:
        account = self.accounts.get(username)
        if account is None:
            raise UnknownUsernameError(username)
        return account.status, account.permission

    def set_user_approval(
            self, decision: Union[ApprovalDecision, None] = None, *,
            username: str = "", status: Union[AccountStatus, str, None] = None,
            permission: Union[Permission, str, None] = None) -> AccountSummary:
        """Apply a decision atomically; takes effect on the next
        authorization check without re-login."""
        if decision is None:
            decision = ApprovalDecision(username=username,
                                        status=AccountStatus(status),
                                        permission=Permission(permission))
        updated = self.accounts.update_approval(
            decision.username, decision.status, decision.permission)
        return AccountSummary.of(updated)
