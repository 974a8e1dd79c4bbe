"""HTTP surface: JSON API, metrics exposition, and static web assets.

Every route authorizes against the minimum role it declares, errors are
structured ``{code, reasons[], remaining_quota?}`` bodies, and the request id
header is echoed on every response for traceability.
"""

from __future__ import annotations

import uuid
from pathlib import Path

from fastapi import Depends, FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .errors import Forbidden, InvalidToken, SocError
from .ids import Role, parse_ts_ms
from .service import TutorService

REQUEST_ID_HEADER = "X-Request-Id"


class RegisterBody(BaseModel):
    handle: str
    password: str
    role: str = "student"


class LoginBody(BaseModel):
    handle: str
    password: str


class IntakeBody(BaseModel):
    text: str


class QueryBody(BaseModel):
    approach: str | None = None
    attempts: str | None = None
    concept: str | None = None
    code_excerpt: str | None = None
    assignment_tag: str | None = None


class ReflectionBody(BaseModel):
    learned: str = ""
    unclear: str = ""
    next_steps: str = ""


class EscalateBody(BaseModel):
    note: str = ""


class TagBody(BaseModel):
    tag: str


class DocumentBody(BaseModel):
    title: str
    body: str
    kind: str = "other"
    doc_id: str | None = None


class CorpusBody(BaseModel):
    documents: list[DocumentBody]


def _bearer_token(request: Request) -> str:
    header = request.headers.get("Authorization", "")
    if not header.startswith("Bearer "):
        raise InvalidToken("expected an Authorization: Bearer header")
    return header[len("Bearer ") :].strip()


def create_app(service: TutorService, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="soctutor", docs_url=None, redoc_url=None)

    def require(minimum_role: Role):
        def dependency(request: Request) -> dict:
            return service.auth.authorize(_bearer_token(request), minimum_role)

        return Depends(dependency)

    @app.middleware("http")
    async def request_id_and_snapshot(request: Request, call_next):
        request_id = request.headers.get(REQUEST_ID_HEADER) or uuid.uuid4().hex
        response = await call_next(request)
        response.headers[REQUEST_ID_HEADER] = request_id
        service.maybe_snapshot()
        return response

    @app.exception_handler(SocError)
    async def soc_error_handler(request: Request, exc: SocError):
        body = {"code": exc.code, "reasons": exc.details.get("reasons", [])}
        if "remaining_quota" in exc.details:
            body["remaining_quota"] = exc.details["remaining_quota"]
        return JSONResponse(status_code=exc.http_status, content=body)

    # --- auth ---------------------------------------------------------------

    @app.post("/api/auth/register", status_code=201)
    def register(body: RegisterBody, request: Request):
        actor = None
        if request.headers.get("Authorization", "").startswith("Bearer "):
            actor = _bearer_token(request)
        return service.auth.register(body.handle, body.password, Role(body.role), actor)

    @app.post("/api/auth/login")
    def login(body: LoginBody):
        return service.auth.login(body.handle, body.password)

    # --- student flow ---------------------------------------------------------

    @app.get("/api/quota")
    def quota(account: dict = require(Role.STUDENT)):
        return service.quota_status(account)

    @app.post("/api/conversations", status_code=201)
    def start_conversation(account: dict = require(Role.STUDENT)):
        return service.start_conversation(account)

    @app.get("/api/conversations/{conversation_id}")
    def get_conversation(conversation_id: str, account: dict = require(Role.STUDENT)):
        conv = service.conversations.get(conversation_id)
        # owners always; instructors and admins may read any for triage
        if (
            conv["student_id"] != account["id"]
            and Role(account["role"]).rank < Role.INSTRUCTOR.rank
        ):
            raise Forbidden("not your conversation")
        return service.conversation_snapshot(conv)

    @app.post("/api/conversations/{conversation_id}/intake")
    def intake(
        conversation_id: str, body: IntakeBody, account: dict = require(Role.STUDENT)
    ):
        return service.submit_intake(account, conversation_id, body.text)

    @app.post("/api/conversations/{conversation_id}/query")
    def query(
        conversation_id: str, body: QueryBody, account: dict = require(Role.STUDENT)
    ):
        return service.run_query(account, conversation_id, body.model_dump())

    @app.post("/api/conversations/{conversation_id}/reflection-prompts")
    def reflection_prompts(conversation_id: str, account: dict = require(Role.STUDENT)):
        return service.reflection_prompts(account, conversation_id)

    @app.post("/api/conversations/{conversation_id}/reflection")
    def reflection(
        conversation_id: str,
        body: ReflectionBody,
        account: dict = require(Role.STUDENT),
    ):
        return service.submit_reflection(
            account, conversation_id, body.learned, body.unclear, body.next_steps
        )

    @app.post("/api/conversations/{conversation_id}/escalate", status_code=201)
    def escalate(
        conversation_id: str,
        body: EscalateBody,
        account: dict = require(Role.STUDENT),
    ):
        return service.escalate(account, conversation_id, body.note)

    # --- instructor flow -------------------------------------------------------

    @app.post("/api/conversations/{conversation_id}/tags", status_code=201)
    def apply_tag(
        conversation_id: str, body: TagBody, account: dict = require(Role.INSTRUCTOR)
    ):
        return service.apply_tag(account, conversation_id, body.tag)

    @app.get("/api/instructor/escalations")
    def escalations(
        status: str | None = Query(default=None),
        account: dict = require(Role.INSTRUCTOR),
    ):
        return {"escalations": service.instructor_queue(status)}

    @app.get("/api/instructor/escalations/{escalation_id}")
    def escalation_detail(
        escalation_id: str, account: dict = require(Role.INSTRUCTOR)
    ):
        return service.escalation_detail(escalation_id)

    @app.post("/api/instructor/escalations/{escalation_id}/claim")
    def claim(escalation_id: str, account: dict = require(Role.INSTRUCTOR)):
        return service.claim_escalation(account, escalation_id)

    @app.post("/api/instructor/escalations/{escalation_id}/resolve")
    def resolve(escalation_id: str, account: dict = require(Role.INSTRUCTOR)):
        return service.resolve_escalation(account, escalation_id)

    @app.get("/api/instructor/dashboard")
    def dashboard(
        from_: str | None = Query(default=None, alias="from"),
        to: str | None = Query(default=None),
        account: dict = require(Role.INSTRUCTOR),
    ):
        from_ms = parse_ts_ms(from_) if from_ else None
        to_ms = parse_ts_ms(to) if to else None
        return service.dashboard(from_ms, to_ms)

    # --- admin flow --------------------------------------------------------------

    @app.post("/api/admin/corpus/documents", status_code=201)
    def ingest(body: CorpusBody, account: dict = require(Role.ADMIN)):
        return service.ingest_documents([d.model_dump() for d in body.documents])

    # --- operational -------------------------------------------------------------

    @app.get("/metrics")
    def metrics() -> Response:
        return PlainTextResponse(service.metrics.render_exposition())

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "last_seq": service.store.last_seq}

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=static_dir, html=True), name="app")

    return app


def create_metrics_app(service: TutorService) -> FastAPI:
    """Standalone exposition app for a separate SOC_METRICS_ADDR bind."""
    app = FastAPI(title="soctutor-metrics", docs_url=None, redoc_url=None)

    @app.get("/metrics")
    def metrics() -> Response:
        return PlainTextResponse(service.metrics.render_exposition())

    return app
