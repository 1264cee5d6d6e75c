import pytest
from fastapi.testclient import TestClient

from app.config import settings
from app.main import app


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy", "database": "ok", "storage": "ok"}


def test_api_info(client):
    body = client.get("/api/info").json()
    assert body["garside_cap"] == settings.GARSIDE_CAP
    assert body["threads"] >= 1


def test_analyze_family(client):
    response = client.post("/api/monoid/analyze", json={"family": "braid:3"})
    assert response.status_code == 200
    body = response.json()
    assert body["simples"] == 6
    assert body["delta"] == "aba"
    assert body["p0"] == pytest.approx(0.6180339887498949, abs=1e-12)
    assert body["perron_case"] == "B"


def test_analyze_spec_text(client, a2_tilde_spec):
    body = client.post("/api/monoid/analyze", json={"spec": a2_tilde_spec}).json()
    assert body["simples"] == 16
    assert body["fc"] is False
    assert body["charney_strongly_connected"] is True


def test_normal_form(client, a2_tilde_spec):
    response = client.post("/api/monoid/normal-form", json={"spec": a2_tilde_spec, "word": "abc"})
    assert response.status_code == 200
    assert response.json()["normal_form"] == "ab | c"
    assert response.json()["blocks"] == ["ab", "c"]


def test_garside_dump(client):
    body = client.post("/api/monoid/garside", json={"family": "dual-a:3"}).json()
    assert len(body["simples"]) == 5
    assert body["delta"] == "s12.s23"
    s12 = next(s for s in body["simples"] if s["word"] == "s12")
    assert s12["d_set"] == ["s23"]


def test_mobius(client):
    body = client.post("/api/monoid/mobius", json={"family": "braid:3", "k_max": 6}).json()
    assert body["coefficients"] == ["1", "-2", "0", "1"]
    assert body["growth"] == ["1", "2", "4", "7", "12", "20", "33"]


def test_measure(client):
    body = client.post(
        "/api/monoid/measure", json={"family": "braid:3", "prefix": 2, "count": 4, "seed": 1}
    ).json()
    assert len(body["prefixes"]) == 4
    assert body["kappa"] == pytest.approx(1.381966011250105, abs=1e-9)


def test_stats_run_is_recorded(client):
    response = client.post(
        "/api/monoid/stats", json={"family": "braid:3", "length": 10, "count": 20, "seed": 501}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["report"]["count"] == 20
    assert body["delta_method"] is not None
    assert body["csv_path"] == f"reports/{body['run_id']}.csv"
    assert (settings.STORAGE_PATH / body["csv_path"]).exists()
    assert (settings.STORAGE_PATH / body["csv_path"]).with_suffix(".jsonl").exists()

    run = client.get(f"/api/monoid/runs/{body['run_id']}").json()
    assert run["status"] == "completed"
    assert run["seed"] == 501
    assert run["csv_path"] == body["csv_path"]


def test_failed_stats_run(client):
    response = client.post("/api/monoid/stats", json={"family": "heap:a-b", "length": 5, "count": 5})
    assert response.status_code == 409
    assert response.json()["error"] == "IrreducibilityRequiredError"


@pytest.mark.parametrize(
    "payload, status, error",
    [
        ({"family": "cube:3"}, 422, "PresentationValueError"),
        ({}, 422, "PresentationValueError"),
        ({"spec": "generators: a b\nm: a b 3\n"}, 422, "PresentationSyntaxError"),
        ({"family": "braid:4", "garside_cap": 5}, 409, "GarsideSetTooLargeError"),
    ],
)
def test_typed_errors(client, payload, status, error):
    response = client.post("/api/monoid/analyze", json=payload)
    assert response.status_code == status
    assert response.json()["error"] == error


def test_request_validation(client):
    response = client.post("/api/monoid/stats", json={"family": "braid:3", "length": 0, "count": 5})
    assert response.status_code == 422


def test_upload(client, a2_tilde_spec):
    response = client.post(
        "/api/monoid/upload",
        files={"file": ("a2_tilde.monoid", a2_tilde_spec.encode(), "text/plain")},
    )
    assert response.status_code == 200
    assert response.json()["monoid"] == "a2_tilde"
    assert response.json()["simples"] == 16


def test_upload_must_be_text(client):
    response = client.post(
        "/api/monoid/upload",
        files={"file": ("bad.monoid", b"\xff\xfe\x00", "application/octet-stream")},
    )
    assert response.status_code == 400


def test_unknown_run(client):
    assert client.get("/api/monoid/runs/does-not-exist").status_code == 404
