import json
import re
from datetime import timedelta

import pytest
from fastapi.testclient import TestClient

from telemon.api import create_app
from telemon.config import load_config
from telemon.service import CommandCentre

from conftest import ELIGIBLE, FLOOR_ANSWERS, T0, enrollment_form

LINK = re.compile(r"/q/([\w\-]+)")


def iso(dt):
    return dt.isoformat()


@pytest.fixture
def centre():
    return CommandCentre(load_config())


@pytest.fixture
def client(centre):
    return TestClient(create_app(centre), raise_server_exceptions=False)


def enroll(client, **overrides):
    body = enrollment_form(**overrides)
    body["now"] = iso(T0)
    resp = client.post("/patients", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()["patient_id"]


def dispatch_token(client, centre, at=None):
    resp = client.post("/tick", json={"now": iso(at or T0 + timedelta(hours=8))})
    assert resp.status_code == 200
    bodies = [m.body for m in centre.gateway.messages if "/q/" in m.body]
    return LINK.search(bodies[-1]).group(1)


def submit(client, token, answers=None, at=None, **extra):
    payload = dict(FLOOR_ANSWERS)
    payload.update(answers or {})
    payload.update(extra)
    return client.post(
        f"/q/{token}",
        json={"answers": payload, "now": iso(at or T0 + timedelta(hours=9))},
    )


class TestEnrollEndpoint:
    def test_enroll_created(self, client):
        pid = enroll(client)
        assert pid == "P000001"

    def test_duplicate_conflict(self, client):
        enroll(client)
        body = enrollment_form()
        body["now"] = iso(T0)
        resp = client.post("/patients", json=body)
        assert resp.status_code == 409
        assert set(resp.json()) == {"code", "message"}
        assert resp.json()["code"] == "duplicate_patient"

    def test_not_eligible_envelope(self, client):
        body = enrollment_form()
        body["eligibility"] = dict(ELIGIBLE, consent=False)
        body["now"] = iso(T0)
        resp = client.post("/patients", json=body)
        assert resp.status_code == 422
        assert "consent" in resp.json()["message"]


class TestQuestionnaireEndpoints:
    def test_get_returns_items(self, client, centre):
        enroll(client)
        token = dispatch_token(client, centre)
        resp = client.get(f"/q/{token}", params={"now": iso(T0 + timedelta(hours=9))})
        assert resp.status_code == 200
        keys = [item["key"] for item in resp.json()["items"]]
        assert "temperature_c" in keys and "dyspnea" in keys

    def test_get_html_form(self, client, centre):
        enroll(client)
        token = dispatch_token(client, centre)
        resp = client.get(
            f"/q/{token}",
            params={"now": iso(T0 + timedelta(hours=9))},
            headers={"Accept": "text/html"},
        )
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("text/html")
        assert "temperature_c" in resp.text

    def test_submit_green(self, client, centre):
        enroll(client)
        token = dispatch_token(client, centre)
        resp = submit(client, token)
        assert resp.status_code == 200
        data = resp.json()
        assert data["category"] == "Green"
        assert data["message_to_patient"]

    def test_unknown_token_404(self, client):
        resp = submit(client, "nope")
        assert resp.status_code == 404
        assert resp.json()["code"] == "token_unknown"

    def test_expired_token_410(self, client, centre):
        enroll(client)
        token = dispatch_token(client, centre)
        resp = submit(client, token, at=T0 + timedelta(hours=40))
        assert resp.status_code == 410

    def test_consumed_token_409(self, client, centre):
        enroll(client)
        token = dispatch_token(client, centre)
        assert submit(client, token).status_code == 200
        resp = submit(client, token, at=T0 + timedelta(hours=10))
        assert resp.status_code == 409

    def test_invalid_answers_422(self, client, centre):
        enroll(client)
        token = dispatch_token(client, centre)
        resp = submit(client, token, {"dyspnea": 99})
        assert resp.status_code == 422
        assert "dyspnea" in resp.json()["message"]


class TestBoardEndpoints:
    def _seed(self, client, centre):
        for i in range(3):
            enroll(client, ref=f"ext-{i}", phone=f"ph_{i}")
        client.post("/tick", json={"now": iso(T0 + timedelta(hours=8))})
        tokens = [
            LINK.search(m.body).group(1)
            for m in centre.gateway.messages
            if "/q/" in m.body
        ]
        submit(client, tokens[0], {"dyspnea": 8})
        submit(client, tokens[1])

    def test_list_and_filter(self, client, centre):
        self._seed(client, centre)
        resp = client.get("/patients")
        assert resp.status_code == 200
        assert resp.json()["total"] == 3
        red = client.get("/patients", params={"category": "Red"}).json()
        assert len(red["rows"]) == 1

    def test_detail_and_404(self, client, centre):
        self._seed(client, centre)
        resp = client.get("/patients/P000001")
        assert resp.status_code == 200
        assert resp.json()["timeline"]
        assert client.get("/patients/P009999").status_code == 404

    def test_stats(self, client, centre):
        self._seed(client, centre)
        stats = client.get("/stats").json()
        assert stats["categories"]["Red"] == 1
        assert stats["open_actions"] == 1

    def test_action_transitions(self, client, centre):
        self._seed(client, centre)
        action_id = next(iter(centre.state.actions))
        ok = client.post(f"/actions/{action_id}",
                         json={"transition": "acknowledge", "now": iso(T0)})
        assert ok.status_code == 200
        bad = client.post(f"/actions/{action_id}",
                          json={"transition": "acknowledge", "now": iso(T0)})
        assert bad.status_code == 409
        done = client.post(
            f"/actions/{action_id}",
            json={"transition": "resolve", "kind": "Call", "note": "ok", "now": iso(T0)},
        )
        assert done.status_code == 200 and done.json()["status"] == "Resolved"

    def test_contact_endpoint(self, client, centre):
        enroll(client)
        resp = client.post("/patients/P000001/contact", json={"now": iso(T0)})
        assert resp.status_code == 201
        assert resp.json()["action_id"].startswith("A")

    def test_dead_letters_empty(self, client):
        assert client.get("/dead-letters").json() == {"dead_letters": []}


class TestUpdatesFeed:
    def test_ndjson_stream_and_resume(self, client, centre):
        enroll(client)
        dispatch_token(client, centre)
        resp = client.get("/updates", params={"since": 0, "wait_s": 0})
        assert resp.headers["content-type"].startswith("application/x-ndjson")
        items = [json.loads(line) for line in resp.text.splitlines()]
        assert [i["seq"] for i in items] == list(range(1, len(items) + 1))
        resumed = client.get("/updates", params={"since": items[1]["seq"], "wait_s": 0})
        tail = [json.loads(line) for line in resumed.text.splitlines()]
        assert [i["seq"] for i in tail] == [i["seq"] for i in items[2:]]

    def test_no_pii_in_feed(self, client, centre):
        enroll(client, phone="ph_secret_1")
        token = dispatch_token(client, centre)
        submit(client, token)
        text = client.get("/updates", params={"since": 0, "wait_s": 0}).text
        assert "ph_secret_1" not in text
        assert token not in text


class TestOperatorToken:
    def test_required_when_configured(self):
        import dataclasses
        config = dataclasses.replace(load_config(), operator_token="hunter2")
        centre = CommandCentre(config)
        client = TestClient(create_app(centre), raise_server_exceptions=False)
        assert client.get("/patients").status_code == 401
        ok = client.get("/patients", headers={"X-Operator-Token": "hunter2"})
        assert ok.status_code == 200
        # questionnaire links stay public for patients
        body = enrollment_form()
        body["now"] = iso(T0)
        assert client.post("/patients", json=body,
                           headers={"X-Operator-Token": "hunter2"}).status_code == 201
        assert client.get("/q/sometoken").status_code == 404
