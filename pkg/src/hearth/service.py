"""HTTP+JSON service tying every subsystem together: registration and
log-in, chat, device control, admin review, and the server-sent event
streams the web console listens on.

The process hosts everything in-memory (broker, simulator, chatbot);
accounts and notifications persist as JSONL journals under the data dir,
so a restart replays to the same observable state.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import queue
import threading
from contextlib import asynccontextmanager
from typing import Optional, Union

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .admin import AdminManager, InvalidDecisionError
from .auth import (AccountStatus, Authenticator, AuthMode, AuthOutcome,
                   DegenerateCaptureError, FaceFrames, MalformedInputError,
                   OutcomeKind, Permission, READ_CAPABLE, WRITE_CAPABLE)
from .broker import Broker
from .chatbot import AccessClass, ChatAction, Chatbot, EntityLexicon, TrainedTable
from .config import ServiceConfig
from .notifications import (GapMarker, Notification, NotificationLog,
                            UnknownNotificationError)
from .sessions import Session, SessionStore
from .store import AccountStore, UnknownUsernameError, decode_image, encode_image
from .things import (DeviceTimeoutError, DispatchError, PermissionDeniedError,
                     ThingsManager, UnknownDeviceError, UnknownRoomError)

log = logging.getLogger("hearth")

OUTCOME_HTTP = {
    OutcomeKind.OK: 200,
    OutcomeKind.EMPTY_USERNAME: 400,
    OutcomeKind.EMPTY_PASSWORD: 400,
    OutcomeKind.USERNAME_EXISTS: 409,
    OutcomeKind.USERNAME_UNKNOWN: 401,
    OutcomeKind.WRONG_PASSWORD: 401,
    OutcomeKind.SPOOFING_DETECTED: 401,
    OutcomeKind.UNRECOGNIZED_FACE: 401,
    OutcomeKind.ACCOUNT_NOT_ACTIVE: 423,
    OutcomeKind.PASSWORD_FALLBACK_AVAILABLE: 428,
}

SSE_POLL_SECONDS = 0.25


class UnauthorizedError(RuntimeError):
    pass


class ForbiddenError(RuntimeError):
    pass


class _Ticker(threading.Thread):
    def __init__(self, things: ThingsManager, period: float) -> None:
        super().__init__(name="hearth-ticker", daemon=True)
        self._things = things
        self._period = period
        self._stop = threading.Event()

    def run(self) -> None:
        while not self._stop.wait(self._period):
            self._things.tick()

    def stop(self) -> None:
        self._stop.set()


class ServiceContext:
    """Everything the endpoints need, built once per service instance."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        accounts_path = notifications_path = None
        if config.data_dir is not None:
            config.data_dir.mkdir(parents=True, exist_ok=True)
            accounts_path = config.data_dir / "accounts.jsonl"
            notifications_path = config.data_dir / "notifications.jsonl"
        self.accounts = AccountStore(accounts_path)
        self.notifications = NotificationLog(notifications_path)
        self.sessions = SessionStore(ttl_hours=config.session_ttl_hours)
        self.broker = Broker()
        self.things = ThingsManager(self.broker, seed=config.seed,
                                    command_timeout=config.command_timeout)
        for spec in config.device_specs():
            self.things.register_device(spec)
        table = (TrainedTable.from_file(config.chat_table)
                 if config.chat_table else TrainedTable.default())
        self.chatbot = Chatbot(lexicon=EntityLexicon.with_rooms(config.rooms),
                               table=table)
        self.authenticator = Authenticator(
            self.accounts, self.notifications,
            embedding_dim=config.embedding_dim,
            min_frames=config.liveness_min_frames,
            motion_epsilon=config.liveness_epsilon,
            match_threshold=config.match_threshold,
            mint_token=lambda username: self.sessions.create(username).token,
        )
        self.admin = AdminManager(self.accounts)
        self._ticker: Optional[_Ticker] = None

    # -- lifecycle ---------------------------------------------------------

    def start_ticker(self) -> None:
        if self.config.tick_period > 0 and self._ticker is None:
            self._ticker = _Ticker(self.things, self.config.tick_period)
            self._ticker.start()

    def stop_ticker(self) -> None:
        if self._ticker is not None:
            self._ticker.stop()
            self._ticker = None

    # -- authorization -----------------------------------------------------

    def login(self, username: str, password: Optional[str],
              frames: Optional[FaceFrames], mode: AuthMode) -> AuthOutcome:
        """Full log-in: the bootstrap admin short-circuits to a
        password-only check against the service config."""
        if username == self.config.admin_username:
            if not password:
                return AuthOutcome(OutcomeKind.EMPTY_PASSWORD)
            if not hmac.compare_digest(
                    hashlib.sha256(password.encode()).digest(),
                    hashlib.sha256(self.config.admin_password.encode()).digest()):
                return AuthOutcome(OutcomeKind.WRONG_PASSWORD)
            session = self.sessions.create(username, is_admin=True)
            return AuthOutcome(OutcomeKind.OK, session_token=session.token)
        return self.authenticator.login(username, password, frames, mode)

    def session_for(self, token: Optional[str]) -> Session:
        session = self.sessions.get(token)
        if session is None:
            raise UnauthorizedError("missing, unknown or expired token")
        return session

    def authorize(self, token: Optional[str],
                  access: Optional[AccessClass] = None,
                  admin: bool = False) -> tuple[str, Permission]:
        """Resolve a bearer token to (username, live permission).

        Denies with UnauthorizedError when the token or account is no
        longer valid, ForbiddenError when the live permission does not
        cover the required access class.
        """
        session = self.session_for(token)
        if session.is_admin:
            return session.username, Permission.READ_WRITE
        if admin:
            raise ForbiddenError("admin access required")
        account = self.accounts.get(session.username)
        if account is None or account.status is not AccountStatus.ACTIVE:
            raise UnauthorizedError("account is no longer active")
        permission = account.permission
        if access is AccessClass.READ and permission not in READ_CAPABLE:
            raise ForbiddenError("read permission required")
        if access is AccessClass.WRITE and permission not in WRITE_CAPABLE:
            raise ForbiddenError("write permission required")
        return session.username, permission

    def export_state(self) -> dict:
        """Observable persisted state, for restart-equivalence checks."""
        return {
            "accounts": self.accounts.export_state(),
            "notifications": self.notifications.export_state(),
        }


# -- request bodies ----------------------------------------------------------


class RegisterRequest(BaseModel):
    username: str = ""
    password: str = ""
    frames: Optional[list[list[float]]] = None
    image_b64: str = ""


class LoginRequest(BaseModel):
    username: str = ""
    password: Optional[str] = None
    frames: Optional[list[list[float]]] = None
    image_b64: str = ""
    mode: Optional[str] = None


class ChatRequest(BaseModel):
    utterance: str = ""


class CommandRequest(BaseModel):
    value: Union[float, bool]


class ApprovalRequest(BaseModel):
    username: str
    status: str
    permission: str


def _frames_from(frames: Optional[list[list[float]]],
                 image_b64: str) -> Optional[FaceFrames]:
    if not frames:
        return None
    try:
        image = decode_image(image_b64) if image_b64 else b""
    except Exception as exc:
        raise MalformedInputError(f"image_b64 is not valid base64: {exc}")
    return FaceFrames(frames, capture_image=image)


def _notification_json(n: Notification) -> dict:
    return {
        "id": n.id,
        "kind": n.kind.value,
        "username": n.username,
        "image_b64": encode_image(n.image),
        "created_at": n.created_at.isoformat(),
        "acknowledged": n.acknowledged,
    }


def _intent_json(intent) -> dict:
    return {
        "action": intent.action.value,
        "entities": dict(intent.entities),
        "access_class": intent.access_class.value,
    }


def _bearer_token(request: Request) -> Optional[str]:
    header = request.headers.get("authorization", "")
    if header.lower().startswith("bearer "):
        return header[7:].strip()
    return None


def _sse_event(data: dict, event: Optional[str] = None,
               event_id: Optional[int] = None) -> str:
    out = []
    if event_id is not None:
        out.append(f"id: {event_id}")
    if event:
        out.append(f"event: {event}")
    out.append(f"data: {json.dumps(data)}")
    return "\n".join(out) + "\n\n"


def create_app(context: ServiceContext) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        context.start_ticker()
        yield
        context.stop_ticker()

    app = FastAPI(title="hearth", lifespan=lifespan)
    app.state.context = context
    ctx = context

    @app.exception_handler(UnauthorizedError)
    async def _unauthorized(_req, exc):
        return JSONResponse({"kind": "unauthorized", "detail": str(exc)}, 401)

    @app.exception_handler(ForbiddenError)
    async def _forbidden(_req, exc):
        return JSONResponse({"kind": "forbidden", "detail": str(exc)}, 403)

    @app.exception_handler(MalformedInputError)
    async def _malformed(_req, exc):
        return JSONResponse({"kind": "validation", "detail": str(exc)}, 400)

    @app.exception_handler(DegenerateCaptureError)
    async def _degenerate(_req, exc):
        return JSONResponse({"kind": "validation", "detail": str(exc)}, 400)

    @app.get("/api/health")
    def health():
        return {"status": "ok", "mode": ctx.config.mode.value}

    # -- authentication ----------------------------------------------------

    @app.post("/api/register")
    def register(body: RegisterRequest):
        frames = _frames_from(body.frames, body.image_b64)
        outcome = ctx.authenticator.register(body.username, body.password, frames)
        return JSONResponse({"kind": outcome.kind.value},
                            OUTCOME_HTTP[outcome.kind])

    @app.post("/api/login")
    def login(body: LoginRequest):
        mode = ctx.config.mode
        if body.mode is not None and body.mode != mode.value:
            # the one sanctioned switch: password entry when face-only
            # recognition is not working out
            if mode is AuthMode.FACE_ONLY and body.mode == AuthMode.PASSWORD_ONLY.value:
                mode = AuthMode.PASSWORD_ONLY
            else:
                return JSONResponse(
                    {"kind": "validation",
                     "detail": f"mode override {body.mode!r} not allowed"}, 400)
        frames = _frames_from(body.frames, body.image_b64)
        outcome = ctx.login(body.username, body.password, frames, mode)
        payload = {"kind": outcome.kind.value}
        if outcome.ok:
            payload["token"] = outcome.session_token
            payload["username"] = body.username
        return JSONResponse(payload, OUTCOME_HTTP[outcome.kind])

    # -- chatbot -----------------------------------------------------------

    @app.post("/api/chat")
    def chat(body: ChatRequest, request: Request):
        token = _bearer_token(request)
        session = ctx.session_for(token)
        intent = ctx.chatbot.interpret(body.utterance)
        base = {"intent": _intent_json(intent)}
        if intent.action in (ChatAction.UNKNOWN, ChatAction.CLARIFY_ROOM):
            return {**base, "response": ctx.chatbot.respond(intent)}
        if intent.action is ChatAction.LIST_ROOMS:
            rooms = ctx.things.rooms()
            return {**base, "response": ctx.chatbot.respond(intent, rooms)}
        _username, permission = ctx.authorize(token)
        try:
            result = ctx.things.dispatch(intent, permission)
        except PermissionDeniedError as exc:
            return JSONResponse(
                {**base, "kind": "forbidden",
                 "response": f"You do not have permission to do that ({exc})."}, 403)
        except (UnknownRoomError, UnknownDeviceError) as exc:
            return JSONResponse(
                {**base, "kind": "validation",
                 "response": f"I cannot find that device ({exc})."}, 400)
        except DeviceTimeoutError as exc:
            return JSONResponse(
                {**base, "kind": "device_timeout",
                 "response": f"The device did not answer in time ({exc})."}, 504)
        return {**base, "response": ctx.chatbot.respond(intent, result.value),
                "data": result.to_dict()}

    # -- devices -----------------------------------------------------------

    @app.get("/api/devices")
    def devices(request: Request):
        ctx.authorize(_bearer_token(request), AccessClass.READ)
        return {"devices": ctx.things.roster(), "rooms": ctx.things.rooms()}

    @app.post("/api/devices/{device_id}/command")
    def device_command(device_id: str, body: CommandRequest, request: Request):
        _username, permission = ctx.authorize(_bearer_token(request),
                                              AccessClass.WRITE)
        try:
            ack = ctx.things.command(device_id, body.value, permission)
        except UnknownDeviceError as exc:
            return JSONResponse({"kind": "validation",
                                 "detail": f"unknown device: {exc}"}, 400)
        except DispatchError as exc:
            if isinstance(exc, DeviceTimeoutError):
                return JSONResponse({"kind": "device_timeout",
                                     "detail": str(exc)}, 504)
            return JSONResponse({"kind": "validation", "detail": str(exc)}, 400)
        return {"ack": ack.to_dict()}

    # -- admin -------------------------------------------------------------

    @app.get("/api/admin/pending")
    def admin_pending(request: Request):
        ctx.authorize(_bearer_token(request), admin=True)
        return {"pending": [s.to_dict() for s in ctx.admin.list_pending()]}

    @app.get("/api/admin/notifications")
    def admin_notifications(request: Request, since_id: Optional[int] = None,
                            kind: Optional[str] = None):
        ctx.authorize(_bearer_token(request), admin=True)
        try:
            rows = ctx.notifications.list(kind=kind, since_id=since_id)
        except ValueError as exc:
            return JSONResponse({"kind": "validation", "detail": str(exc)}, 400)
        return {"notifications": [_notification_json(n) for n in rows]}

    @app.get("/api/admin/user/{username}")
    def admin_user(username: str, request: Request):
        ctx.authorize(_bearer_token(request), admin=True)
        try:
            status, permission = ctx.admin.get_user_approval(username)
        except UnknownUsernameError:
            return JSONResponse({"kind": "validation",
                                 "detail": f"unknown username: {username}"}, 400)
        return {"username": username, "status": status.value,
                "permission": permission.value}

    @app.post("/api/admin/approval")
    def admin_approval(body: ApprovalRequest, request: Request):
        ctx.authorize(_bearer_token(request), admin=True)
        try:
            summary = ctx.admin.set_user_approval(
                username=body.username, status=body.status,
                permission=body.permission)
        except UnknownUsernameError:
            return JSONResponse({"kind": "validation",
                                 "detail": f"unknown username: {body.username}"}, 400)
        except (InvalidDecisionError, ValueError) as exc:
            return JSONResponse({"kind": "validation", "detail": str(exc)}, 400)
        return {"account": summary.to_dict()}

    @app.post("/api/admin/ack/{notification_id}")
    def admin_ack(notification_id: int, request: Request):
        ctx.authorize(_bearer_token(request), admin=True)
        try:
            n = ctx.notifications.acknowledge(notification_id)
        except UnknownNotificationError:
            return JSONResponse({"kind": "validation",
                                 "detail": f"unknown notification id: "
                                           f"{notification_id}"}, 400)
        return {"notification": _notification_json(n)}

    # -- event streams -----------------------------------------------------

    @app.get("/api/admin/events")
    def admin_events(request: Request, since_id: Optional[int] = None,
                     limit: Optional[int] = None):
        ctx.authorize(_bearer_token(request), admin=True)
        if since_id is None:
            last_event_id = request.headers.get("last-event-id")
            if last_event_id and last_event_id.isdigit():
                since_id = int(last_event_id)

        def stream():
            subscription = ctx.notifications.subscribe(since_id=since_id)
            sent = 0
            try:
                while limit is None or sent < limit:
                    item = subscription.get(timeout=SSE_POLL_SECONDS)
                    if item is None:
                        yield ": keepalive\n\n"
                        continue
                    if isinstance(item, GapMarker):
                        yield _sse_event({"latest_id": item.latest_id}, event="gap")
                        continue
                    yield _sse_event(_notification_json(item),
                                     event="notification", event_id=item.id)
                    sent += 1
            finally:
                ctx.notifications.unsubscribe(subscription)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/events")
    def device_events(request: Request, limit: Optional[int] = None):
        ctx.authorize(_bearer_token(request), AccessClass.READ)

        def stream():
            subscription = ctx.broker.subscribe("home/#")
            sent = 0
            try:
                while limit is None or sent < limit:
                    try:
                        msg = subscription.get(timeout=SSE_POLL_SECONDS)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    if msg.topic.endswith("/set") or msg.topic.endswith("/get"):
                        continue
                    try:
                        reading = json.loads(msg.payload.decode("utf-8"))
                    except ValueError:
                        continue
                    yield _sse_event({"topic": msg.topic, "reading": reading},
                                     event="reading")
                    sent += 1
            finally:
                ctx.broker.unsubscribe(subscription)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ctx.config.ui_dir is not None and ctx.config.ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ctx.config.ui_dir), html=True),
                  name="ui")

    return app


def build_service(config: ServiceConfig) -> tuple[ServiceContext, FastAPI]:
    context = ServiceContext(config)
    return context, create_app(context)
