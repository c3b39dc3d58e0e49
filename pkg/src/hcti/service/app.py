"""HTTP API over the platform state.

Every response body is canonical JSON (sorted keys, compact separators), so
fixture responses are byte-stable across restarts.  Non-success responses
carry the four-field error envelope: status, machine-readable code, human
message, correlation id.  Mutating endpoints require the static bearer token
when one is configured.
"""

from __future__ import annotations

import uuid
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.staticfiles import StaticFiles

from ..errors import HctiError, NotFoundError, ParseError, ValidationError
from ..ingest import FormatHint, RawDocument
from ..model import SourceClass, SourceDescriptor
from ..textintel import Relation
from ..util import canonical_json, parse_ts, utcnow
from .state import PlatformState, REMEDIATIONS, finding_department

_STATUS_BY_CODE = {
    "invalid_value": 422,
    "parse_error": 422,
    "not_found": 404,
    "corrupt_event_log": 500,
}


def _json(payload, status_code: int = 200) -> Response:
    return Response(content=canonical_json(payload) + "\n",
                    status_code=status_code,
                    media_type="application/json")


def _error(status: int, code: str, message: str) -> Response:
    return _json({
        "status": status,
        "code": code,
        "message": message,
        "correlation_id": uuid.uuid4().hex,
    }, status_code=status)


class AuthError(Exception):
    pass


def create_app(state: PlatformState) -> FastAPI:
    app = FastAPI(title="hcti", docs_url=None, redoc_url=None)
    token = state.config.auth_token

    def require_auth(request: Request):
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise AuthError()

    @app.exception_handler(AuthError)
    async def _auth_error(request, exc):
        return _error(401, "unauthorized", "missing or invalid bearer token")

    @app.exception_handler(HctiError)
    async def _hcti_error(request, exc: HctiError):
        status = _STATUS_BY_CODE.get(exc.code, 500)
        return _error(status, exc.code, str(exc))

    @app.exception_handler(Exception)
    async def _unhandled(request, exc):
        return _error(500, "internal_error", str(exc))

    async def _body_json(request: Request) -> dict:
        try:
            data = await request.json()
        except Exception:
            raise ValidationError("body", "request body is not valid JSON")
        if not isinstance(data, dict):
            raise ValidationError("body", "request body must be a JSON object")
        return data

    @app.post("/api/ingest/cti")
    async def ingest_cti(request: Request):
        require_auth(request)
        body = await _body_json(request)
        content = body.get("content")
        if content is None:
            raise ValidationError("content", "missing")
        if isinstance(content, (dict, list)):
            data = canonical_json(content).encode("utf-8")
        else:
            data = str(content).encode("utf-8")
        hint = FormatHint(body.get("format_hint", "unknown"))
        source = SourceDescriptor(
            source_id=body.get("source_id", "api"),
            source_class=SourceClass(body.get("source_class",
                                              "prestructured_feed")))
        fetched_at = (parse_ts(body["fetched_at"]) if body.get("fetched_at")
                      else utcnow())
        doc = RawDocument(format_hint=hint, data=data, fetched_from=source,
                          fetched_at=fetched_at)
        return _json(state.ingest_cti(doc))

    @app.post("/api/ingest/scan")
    async def ingest_scan(request: Request):
        require_auth(request)
        body = await _body_json(request)
        content = body.get("content")
        if not isinstance(content, str) or not content.strip():
            raise ValidationError("content", "missing scan export text")
        return _json(state.ingest_scan(content,
                                       interactive=bool(body.get("interactive"))))

    @app.post("/api/ingest/brief")
    async def ingest_brief(request: Request):
        require_auth(request)
        body = await _body_json(request)
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ValidationError("text", "missing brief text")
        published = (parse_ts(body["published_at"])
                     if body.get("published_at") else None)
        return _json(state.ingest_brief(
            text, source_id=body.get("source_id", "api"),
            link=bool(body.get("link", True)),
            html=bool(body.get("html", False)),
            published_at=published))

    @app.get("/api/orgs")
    async def orgs():
        return _json({"orgs": state.org_ids()})

    @app.get("/api/orgs/{org_id}/findings")
    async def findings(org_id: str):
        rows = []
        for finding in state.findings_for(org_id):
            rows.append({
                **finding.to_dict(),
                "department": finding_department(finding),
                "remediation": REMEDIATIONS[finding.category.value],
            })
        return _json({"org_id": org_id, "findings": rows})

    @app.get("/api/orgs/{org_id}/assessment")
    async def assessment(org_id: str):
        if not state.known_org(org_id):
            raise NotFoundError("org", org_id)
        latest = state.latest_assessment(org_id)
        if latest is None:
            return _error(404, "no_assessment",
                          f"no assessment persisted for {org_id}")
        return _json(latest)

    @app.post("/api/orgs/{org_id}/what-if")
    async def what_if_endpoint(org_id: str, request: Request):
        require_auth(request)
        body = await _body_json(request)
        overrides = body.get("overrides", [])
        if not isinstance(overrides, list):
            raise ValidationError("overrides", "must be a list")
        as_of = parse_ts(body["as_of"]) if body.get("as_of") else None
        result = state.run_what_if(org_id, overrides, as_of=as_of)
        return _json(result.to_dict())

    @app.post("/api/orgs/{org_id}/verdict")
    async def post_verdict(org_id: str, request: Request):
        require_auth(request)
        body = await _body_json(request)
        state.add_verdict(org_id, body)
        return _json({"org_id": org_id, "stored": True}, status_code=201)

    @app.get("/api/orgs/{org_id}/verdicts")
    async def get_verdicts(org_id: str):
        return _json({"org_id": org_id, "verdicts": state.verdicts(org_id)})

    @app.get("/api/orgs/{org_id}/ea")
    async def ea_view(org_id: str):
        return _json(state.ea_view(org_id))

    @app.get("/api/kg/nodes/{node_id:path}/neighbors")
    async def neighbors(node_id: str, relation: Optional[str] = None):
        rel = Relation(relation) if relation else None
        return _json({
            "node_id": node_id,
            "relation": relation,
            "neighbors": sorted(state.kg.neighbors(node_id, rel)),
        })

    @app.get("/api/metrics/evaluation")
    async def evaluation():
        report = state.latest_metrics()
        if report is None:
            return _error(404, "no_evaluation", "no evaluation has been run")
        return _json(report)

    ui_dir = _ui_dir()
    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")

    return app


def _ui_dir() -> Optional[Path]:
    for candidate in (Path(__file__).resolve().parents[3] / "frontend" / "dist",
                      Path("frontend/dist")):
        if candidate.is_dir():
            return candidate
    return None


def serve(config_path: Optional[Path], host_override: Optional[str] = None,
          port_override: Optional[int] = None) -> None:
    """Replay state from the event logs, then serve until interrupted."""
    import uvicorn

    from .config import load_config

    config = load_config(config_path)
    state = PlatformState(config)
    counts = state.replay()
    print("state restored:", canonical_json(counts))
    app = create_app(state)
    uvicorn.run(app,
                host=host_override or config.listen_host,
                port=port_override or config.listen_port,
                log_level="info")
