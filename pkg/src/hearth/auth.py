"""Login manager: password hashing, face liveness, template matching and
the registration / log-in flows, wired to the admin notification log.

Face input arrives as an ordered sequence of embedding vectors (one per
captured frame). Liveness is a motion check over those frames: a replayed
still photo produces identical frames and is rejected. Both the liveness
check and the feature extractor are injectable so a real detector can
replace the reference ones.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_EMBEDDING_DIM = 128
DEFAULT_MIN_FRAMES = 3
DEFAULT_MOTION_EPSILON = 1e-6
DEFAULT_MATCH_THRESHOLD = 0.8

SALT_BYTES = 16


class MalformedInputError(ValueError):
    """Input violates a structural contract (dimensions, finiteness)."""


class DegenerateCaptureError(ValueError):
    """Frames average to the zero vector; no template can be extracted."""


class AccountStatus(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    DISABLED = "disabled"


class Permission(str, Enum):
    NONE = "none"
    READ = "read"
    WRITE = "write"
    READ_WRITE = "read_write"


class AuthMode(str, Enum):
    MFA = "mfa"
    FACE_ONLY = "face_only"
    PASSWORD_ONLY = "password_only"


class OutcomeKind(str, Enum):
    OK = "ok"
    EMPTY_USERNAME = "empty_username"
    USERNAME_EXISTS = "username_exists"
    USERNAME_UNKNOWN = "username_unknown"
    EMPTY_PASSWORD = "empty_password"
    WRONG_PASSWORD = "wrong_password"
    SPOOFING_DETECTED = "spoofing_detected"
    UNRECOGNIZED_FACE = "unrecognized_face"
    ACCOUNT_NOT_ACTIVE = "account_not_active"
    PASSWORD_FALLBACK_AVAILABLE = "password_fallback_available"


READ_CAPABLE = frozenset({Permission.READ, Permission.READ_WRITE})
WRITE_CAPABLE = frozenset({Permission.WRITE, Permission.READ_WRITE})


@dataclass(frozen=True)
class AuthOutcome:
    kind: OutcomeKind
    session_token: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.kind is OutcomeKind.OK


@dataclass
class UserAccount:
    """Stored credential record. The plaintext password never lives here."""

    username: str
    salt: bytes
    password_digest: bytes
    face_template: np.ndarray
    status: AccountStatus = AccountStatus.PENDING
    permission: Permission = Permission.NONE
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc))


class FaceFrames:
    """Ordered embedding frames standing in for a live camera stream.

    `capture_image` is an opaque representative raw frame forwarded to the
    admin inside security notifications; it may be empty.
    """

    def __init__(self, frames: Sequence[Sequence[float]] | np.ndarray,
                 capture_image: bytes = b"") -> None:
        arr = np.asarray(frames, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise MalformedInputError(
                "frames must be a non-empty list of equal-length vectors")
        if not np.isfinite(arr).all():
            raise MalformedInputError("frame values must be finite")
        self.frames = arr
        self.capture_image = capture_image

    @property
    def count(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def hash_password(password: str, salt: bytes) -> bytes:
    """SHA-256 over salt followed by the UTF-8 password. 32-byte digest."""
    return hashlib.sha256(salt + password.encode("utf-8")).digest()


def check_liveness(frames: Optional[FaceFrames],
                   min_frames: int = DEFAULT_MIN_FRAMES,
                   motion_epsilon: float = DEFAULT_MOTION_EPSILON) -> bool:
    """Motion-analysis liveness: true iff enough frames arrived and the mean
    squared distance between consecutive frames exceeds the motion floor.

    A replayed still produces identical frames, zero motion, and fails.
    """
    if frames is None or frames.count < min_frames:
        return False
    diffs = np.diff(frames.frames, axis=0)
    mean_motion = float(np.mean(np.sum(diffs * diffs, axis=1)))
    return mean_motion > motion_epsilon


def extract_template(frames: FaceFrames) -> np.ndarray:
    """Reference feature extractor: mean of the frames, unit-normalized."""
    mean = frames.frames.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        raise DegenerateCaptureError("frames average to the zero vector")
    return mean / norm


def verify_match(candidate: np.ndarray, template: np.ndarray,
                 threshold: float = DEFAULT_MATCH_THRESHOLD) -> tuple[bool, float]:
    """Cosine similarity match. The threshold boundary is inclusive."""
    candidate = np.asarray(candidate, dtype=float)
    template = np.asarray(template, dtype=float)
    if candidate.shape != template.shape or candidate.ndim != 1:
        raise MalformedInputError(
            f"embedding shapes differ: {candidate.shape} vs {template.shape}")
    denom = float(np.linalg.norm(candidate) * np.linalg.norm(template))
    if denom < 1e-24:
        raise MalformedInputError("zero-norm embedding")
    similarity = float(np.dot(candidate, template) / denom)
    return similarity >= threshold, similarity


class Authenticator:
    """Runs the registration and log-in flows against an account store,
    emitting admin notifications on the designated failure paths.

    `notifier` needs an emit(kind, username, image) method; `mint_token`
    produces a fresh session token for a confirmed log-in.
    """

    def __init__(self, accounts, notifier,
                 embedding_dim: int = DEFAULT_EMBEDDING_DIM,
                 min_frames: int = DEFAULT_MIN_FRAMES,
                 motion_epsilon: float = DEFAULT_MOTION_EPSILON,
                 match_threshold: float = DEFAULT_MATCH_THRESHOLD,
                 liveness_check: Optional[Callable[[Optional[FaceFrames]], bool]] = None,
                 feature_extractor: Optional[Callable[[FaceFrames], np.ndarray]] = None,
                 mint_token: Optional[Callable[[str], str]] = None) -> None:
        self.accounts = accounts
        self.notifier = notifier
        self.embedding_dim = embedding_dim
        self.match_threshold = match_threshold
        self._liveness = liveness_check or (
            lambda f: check_liveness(f, min_frames, motion_epsilon))
        self._extract = feature_extractor or extract_template
        self._mint_token = mint_token or (lambda username: secrets.token_hex(32))

    def register(self, username: str, password: str,
                 frames: Optional[FaceFrames]) -> AuthOutcome:
        """Create a pending account after the password and face checks.

        Check order is fixed: empty username, existing username, empty
        password, then liveness. A spoofed capture notifies the admin
        without a username (no account exists yet); a successful
        registration stores a pending account and notifies the admin with
        an approval request. Every failure leaves the store untouched.
        """
        if username == "":
            return AuthOutcome(OutcomeKind.EMPTY_USERNAME)
        if self.accounts.exists(username):
            return AuthOutcome(OutcomeKind.USERNAME_EXISTS)
        if not password:
            return AuthOutcome(OutcomeKind.EMPTY_PASSWORD)
        salt = secrets.token_bytes(SALT_BYTES)
        digest = hash_password(password, salt)
        self._require_dim(frames)
        capture = frames.capture_image if frames is not None else b""
        if not self._liveness(frames):
            self.notifier.emit("spoofing_attack", username=None, image=capture)
            return AuthOutcome(OutcomeKind.SPOOFING_DETECTED)
        template = self._extract(frames)
        account = UserAccount(username=username, salt=salt,
                              password_digest=digest, face_template=template)
        try:
            self.accounts.create(account)
        except KeyError:
            # lost a registration race for the same username
            return AuthOutcome(OutcomeKind.USERNAME_EXISTS)
        self.notifier.emit("approval_request", username=username, image=capture)
        return AuthOutcome(OutcomeKind.OK)

    def login(self, username: str, password: Optional[str],
              frames: Optional[FaceFrames],
              mode: AuthMode = AuthMode.MFA) -> AuthOutcome:
        """Run the log-in flow for the given auth mode.

        mfa checks username, password, liveness and face match in that
        order. password_only stops after the password. face_only skips the
        password and, when the face does not match, reports that password
        entry is available as a fallback (the unrecognized-face
        notification still fires). A fully verified but not-yet-activated
        account is refused last, so the biometric notifications above keep
        firing exactly as designed.
        """
        if username == "":
            return AuthOutcome(OutcomeKind.EMPTY_USERNAME)
        account = self.accounts.get(username)
        if account is None:
            return AuthOutcome(OutcomeKind.USERNAME_UNKNOWN)
        capture = frames.capture_image if frames is not None else b""

        if mode is not AuthMode.FACE_ONLY:
            if not password:
                return AuthOutcome(OutcomeKind.EMPTY_PASSWORD)
            digest = hash_password(password, account.salt)
            if not hmac.compare_digest(digest, account.password_digest):
                self.notifier.emit("wrong_password", username=username, image=capture)
                return AuthOutcome(OutcomeKind.WRONG_PASSWORD)

        if mode is not AuthMode.PASSWORD_ONLY:
            self._require_dim(frames)
            if not self._liveness(frames):
                self.notifier.emit("spoofing_attack", username=username, image=capture)
                return AuthOutcome(OutcomeKind.SPOOFING_DETECTED)
            candidate = self._extract(frames)
            matched, _similarity = verify_match(
                candidate, account.face_template, self.match_threshold)
            if not matched:
                self.notifier.emit("unrecognized_face", username=username, image=capture)
                if mode is AuthMode.FACE_ONLY:
                    return AuthOutcome(OutcomeKind.PASSWORD_FALLBACK_AVAILABLE)
                return AuthOutcome(OutcomeKind.UNRECOGNIZED_FACE)

        if account.status is not AccountStatus.ACTIVE:
            return AuthOutcome(OutcomeKind.ACCOUNT_NOT_ACTIVE)
        return AuthOutcome(OutcomeKind.OK, session_token=self._mint_token(username))

    def _require_dim(self, frames: Optional[FaceFrames]) -> None:
        if frames is not None and frames.dim != self.embedding_dim:
            raise MalformedInputError(
                f"expected {self.embedding_dim}-dimensional frames, "
                f"got {frames.dim}")
