import os

import pytest
from fastapi.testclient import TestClient

from main.app import BatchRequest, app, verify_batch

DATA = os.path.join(os.path.dirname(__file__), "..", "data")

DUAL = """EGS-DUAL v1
N 10
t 5
W 2 1/2
W 3 1/2
W 5 1
W 7 1
V 9
"""


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


@pytest.fixture(scope="module")
def t9_text():
    with open(os.path.join(DATA, "certificates", "t9_lower.cert"), "r") as handle:
        return handle.read()


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_verify_primal(client, t9_text):
    response = client.post("/verify", json={"certificate": t9_text})
    assert response.status_code == 200
    body = response.json()
    assert body["accepted"] is True
    assert body["bound_implied"] == "t(9) >= 3"


def test_verify_dual(client):
    response = client.post("/verify", json={"certificate": DUAL})
    assert response.status_code == 200
    body = response.json()
    assert body["kind"] == "dual"
    assert body["accepted"] is True
    assert body["bound_implied"] == "M(10,5) <= 9; t(10) < 5"


def test_malformed_certificate_is_bad_request(client):
    response = client.post("/verify", json={"certificate": "EGS-CERT v1\nN nine\n"})
    assert response.status_code == 400
    assert "line 2" in response.json()["detail"]


def test_batch_counts_accepted(client, t9_text):
    short = "EGS-CERT v1\nN 20\nt 11\nF 1 11\nF 1 12\nF 1 13\nF 1 14\n"
    response = client.post("/verify-batch", json={"certificates": [t9_text, DUAL, short]})
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "partial"
    assert body["message"].startswith("2 of 3 certificates accepted")
    assert [r["accepted"] for r in body["reports"]] == [True, True, False]


def test_bounds_small_n(client):
    response = client.get("/bounds/9")
    assert response.status_code == 200
    body = response.json()
    assert body["lower"] == 3
    assert body["upper"] == 3


def test_bounds_rejects_zero(client):
    assert client.get("/bounds/0").status_code == 400


def test_repair_rejected_range(client):
    response = client.post("/repair", json={"N_lo": "1e6", "N_hi": "1e7"})
    assert response.status_code == 200
    assert response.json()["status"] == "rejected"


def test_repair_bad_l(client):
    response = client.post("/repair", json={"L": "four and a half"})
    assert response.status_code == 400


def test_verify_dual_endpoint(client, t9_text):
    assert client.post("/verify-dual", json={"certificate": DUAL}).json()["accepted"] is True
    assert client.post("/verify-dual", json={"certificate": t9_text}).status_code == 400


@pytest.mark.asyncio
async def test_batch_handler_directly(t9_text):
    response = await verify_batch(BatchRequest(certificates=[t9_text, t9_text]))
    assert response.status == "success"
    assert all(r.bound_implied == "t(9) >= 3" for r in response.reports)
