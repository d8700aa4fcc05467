"""HTTP surface of the Command Centre.

Endpoints (JSON unless noted):
  POST /patients                    enroll
  GET  /q/{token}                   questionnaire definition (HTML form with Accept: text/html)
  POST /q/{token}                   submit a report
  GET  /patients                    dashboard rows (category, overdue, needs_action, search, cursor)
  GET  /patients/{id}               timeline detail
  POST /actions/{id}                acknowledge / resolve an action
  GET  /stats                       centre statistics
  GET  /updates?since={seq}         NDJSON server-push stream of feed items
  POST /patients/{id}/contact       patient-initiated emergency contact
  POST /tick                        advance the injected clock (driver/simulator)
  GET  /dead-letters                undeliverable messages
Errors use the envelope {"code": ..., "message": ...}.
"""
from __future__ import annotations

import html
import json
from datetime import datetime, timezone
from typing import Optional

from fastapi import FastAPI, Header, Query, Request
from fastapi.responses import HTMLResponse, JSONResponse, StreamingResponse

from .model import ValidationError
from .notifier import NotifyError
from .service import CommandCentre, ServiceError
from .tokens import TokenError


def _parse_now(raw: Optional[str]) -> datetime:
    if raw is None:
        return datetime.now(timezone.utc)
    ts = datetime.fromisoformat(raw)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


_TOKEN_STATUS = {
    "token_unknown": 404,
    "token_expired": 410,
    "token_consumed": 409,
    "patient_not_monitoring": 409,
}


def create_app(centre: CommandCentre) -> FastAPI:
    app = FastAPI(title="Command Centre", version="0.1.0")
    operator_token = centre.config.operator_token

    def check_operator(header_value: Optional[str]) -> Optional[JSONResponse]:
        if operator_token and header_value != operator_token:
            return _error(401, "unauthorized", "missing or wrong operator token")
        return None

    @app.exception_handler(ServiceError)
    async def service_error(_req: Request, exc: ServiceError):
        return _error(exc.http_status, exc.code, str(exc))

    @app.exception_handler(TokenError)
    async def token_error(_req: Request, exc: TokenError):
        return _error(_TOKEN_STATUS.get(exc.code, 400), exc.code, str(exc) or exc.code)

    @app.exception_handler(ValidationError)
    async def validation_error(_req: Request, exc: ValidationError):
        return _error(422, exc.code, str(exc))

    @app.exception_handler(NotifyError)
    async def notify_error(_req: Request, exc: NotifyError):
        return _error(400, exc.code, str(exc))

    @app.post("/patients", status_code=201)
    async def enroll(body: dict, x_operator_token: Optional[str] = Header(None)):
        if (resp := check_operator(x_operator_token)) is not None:
            return resp
        now = _parse_now(body.get("now"))
        patient_id = centre.enroll(body, now)
        return {"patient_id": patient_id}

    @app.get("/q/{token}")
    async def questionnaire(token: str, request: Request, now: Optional[str] = None):
        definition = centre.questionnaire_for(token, _parse_now(now))
        if "text/html" in request.headers.get("accept", ""):
            return HTMLResponse(_render_form(token, definition))
        return definition

    @app.post("/q/{token}")
    async def submit(token: str, body: dict):
        now = _parse_now(body.get("now"))
        result = centre.submit_report(token, body.get("answers", {}), now)
        return {
            "category": result.category.name,
            "message_to_patient": result.message_to_patient,
        }

    @app.get("/patients")
    async def list_patients(
        category: Optional[str] = None,
        overdue: Optional[bool] = None,
        needs_action: Optional[bool] = None,
        search: Optional[str] = None,
        cursor: Optional[str] = None,
        x_operator_token: Optional[str] = Header(None),
    ):
        if (resp := check_operator(x_operator_token)) is not None:
            return resp
        return centre.list_patients(
            category=category,
            overdue=overdue,
            needs_action=needs_action,
            search=search,
            cursor=cursor,
        )

    @app.get("/patients/{patient_id}")
    async def patient_detail(patient_id: str,
                             x_operator_token: Optional[str] = Header(None)):
        if (resp := check_operator(x_operator_token)) is not None:
            return resp
        return centre.patient_detail(patient_id)

    @app.post("/actions/{action_id}")
    async def act(action_id: str, body: dict,
                  x_operator_token: Optional[str] = Header(None)):
        if (resp := check_operator(x_operator_token)) is not None:
            return resp
        return centre.act(
            action_id,
            body.get("transition", ""),
            _parse_now(body.get("now")),
            kind=body.get("kind"),
            note=body.get("note"),
        )

    @app.post("/patients/{patient_id}/contact", status_code=201)
    async def contact(patient_id: str, body: Optional[dict] = None):
        now = _parse_now((body or {}).get("now"))
        action_id = centre.patient_contact(patient_id, now)
        return {"action_id": action_id}

    @app.get("/stats")
    async def stats():
        return centre.centre_stats()

    @app.get("/dead-letters")
    async def dead_letters(x_operator_token: Optional[str] = Header(None)):
        if (resp := check_operator(x_operator_token)) is not None:
            return resp
        return {"dead_letters": centre.dead_letters()}

    @app.post("/tick")
    async def tick(body: dict):
        return centre.tick(_parse_now(body.get("now")))

    @app.get("/updates")
    async def updates(
        since: int = Query(0),
        max_items: Optional[int] = Query(None, alias="max"),
        wait_s: float = Query(0.0),
    ):
        """NDJSON feed. With `max` the stream ends once that many items are
        sent (or the wait budget runs out), which keeps clients testable;
        otherwise it serves what is currently available and closes."""

        def generate():
            sent = 0
            cursor = since
            items = (
                centre.wait_for_updates(cursor, timeout=wait_s)
                if wait_s > 0
                else centre.updates_since(cursor)
            )
            while True:
                for item in items:
                    yield json.dumps(item) + "\n"
                    cursor = item["seq"]
                    sent += 1
                    if max_items is not None and sent >= max_items:
                        return
                if max_items is None or wait_s <= 0:
                    return
                items = centre.wait_for_updates(cursor, timeout=wait_s)
                if not items:
                    return

        return StreamingResponse(generate(), media_type="application/x-ndjson")

    return app


def _render_form(token: str, definition: dict) -> str:
    rows = []
    for item in definition["items"]:
        key = html.escape(item["key"])
        label = html.escape(item.get("label", key))
        if item["kind"] == "boolean":
            control = f'<input type="checkbox" name="{key}">'
        elif item["kind"] == "scale_0_10":
            control = f'<input type="number" name="{key}" min="0" max="10" step="1">'
        else:
            control = (
                f'<input type="number" name="{key}" min="{item.get("min", "")}" '
                f'max="{item.get("max", "")}" step="0.1">'
            )
        rows.append(f"<label>{label} {control}</label><br>")
    return (
        "<!doctype html><html><head><meta charset='utf-8'>"
        "<title>Daily health check</title></head><body>"
        "<h1>Daily health check</h1>"
        f"<form method='post' action='/q/{html.escape(token)}' id='q'>"
        + "".join(rows)
        + "<button type='submit'>Send</button></form>"
        "<script>"
        "document.getElementById('q').addEventListener('submit', async (e) => {"
        "  e.preventDefault();"
        "  const data = {};"
        "  for (const el of e.target.elements) {"
        "    if (!el.name) continue;"
        "    data[el.name] = el.type === 'checkbox' ? el.checked : parseFloat(el.value);"
        "  }"
        "  const r = await fetch(location.pathname, {method: 'POST',"
        "    headers: {'Content-Type': 'application/json'},"
        "    body: JSON.stringify({answers: data})});"
        "  const out = await r.json();"
        "  document.body.innerHTML = '<p>' + (out.message_to_patient || out.message) + '</p>';"
        "});"
        "</script></body></html>"
    )
