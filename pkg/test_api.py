import json

import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from db.connection import get_db, init_db
from db.models import RunRecord
from main import app

client = TestClient(app)


def test_curves():
    response = client.get("/curves/", params={"nt": 1, "nr": 1, "delay": 2, "step": 0.05})
    assert response.status_code == 200
    rows = response.json()
    assert len(rows) == 21
    middle = next(row for row in rows if abs(row["r"] - 0.5) < 1e-9)
    assert middle["d_T"] == pytest.approx(1.0)
    assert middle["prop1"] == pytest.approx(0.75)


def test_curves_mimo_has_blank_siso_columns():
    rows = client.get("/curves/", params={"nt": 2, "nr": 2, "step": 0.5}).json()
    assert [row["r"] for row in rows] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert all(row["prop1"] is None for row in rows)


def test_curves_rejects_bad_input():
    assert client.get("/curves/", params={"nt": 0}).status_code == 400
    assert client.get("/curves/", params={"step": 0}).status_code == 400


def test_breakpoints():
    body = client.get("/curves/breakpoints", params={"nt": 2, "nr": 2}).json()
    assert body["breakpoints"] == [[0.0, 4.0], [1.0, 1.0], [2.0, 0.0]]


def test_audit_threshold():
    body = client.get("/audit/threshold", params={"T": 2, "r": 0.5, "delta": 0.1}).json()
    assert body["N_star"] == 11
    assert body["bracket"] == pytest.approx(0.0222, abs=1e-4)
    assert client.get("/audit/threshold", params={"r": 0.5, "delta": 0.6}).status_code == 400


def test_audit_budget_envelope_multicast_fano():
    assert client.get("/audit/budget", params={"N": 5}).json()["contradiction"] is True
    assert client.get("/audit/budget", params={"N": 4}).json()["contradiction"] is False
    assert client.get("/audit/envelope", params={"r": 0.5}).json() == {
        "envelope": pytest.approx(1.5), "argmin_N": 0}
    body = client.get("/audit/multicast", params={"rho_db": 60, "N": 100}).json()
    assert body["bracket"] == pytest.approx(0.0906, abs=1e-4)
    assert body["N_min_positive"] == 10
    assert client.get("/audit/fano", params={"N": 11}).json()["positive"] is True
    assert client.get("/audit/fano", params={"N": 2}).status_code == 400


def test_audit_trace():
    body = client.post("/audit/trace", json={"r": 0.5, "delta": 0.1, "rho_db": 20,
                                             "gains": [0.01, 0.02, 0.03]}).json()
    assert body["ok"] is True
    assert len(body["steps"]) == 2
    assert "effective gains" in body["table"]

    body = client.post("/audit/trace", json={"r": 0.5, "delta": 0.1, "rho_db": 20,
                                             "gains": [0.01, 0.5]}).json()
    assert body["offending_block"] == 1
    assert client.post("/audit/trace", json={"r": 0.5, "delta": 0.1, "rho_db": 20,
                                             "gains": [0.01], "T": 3}).status_code == 400


@pytest.fixture
def registry(tmp_path):
    engine = create_engine(f"sqlite:///{tmp_path / 'api.db'}", connect_args={"check_same_thread": False})
    init_db(engine)
    factory = sessionmaker(bind=engine)

    def override():
        db = factory()
        try:
            yield db
        finally:
            db.close()

    app.dependency_overrides[get_db] = override
    yield factory
    app.dependency_overrides.clear()


def test_runs_listing(registry):
    db = registry()
    db.add(RunRecord(run_id="abc", subcommand="curves", seed=1, version="0.1.0",
                     wall_time_s=0.5, out_dir="runs", config_json=json.dumps({"nt": 1})))
    db.commit()
    db.close()

    runs = client.get("/runs/").json()
    assert [run["run_id"] for run in runs] == ["abc"]
    assert client.get("/runs/", params={"subcommand": "outage"}).json() == []
    assert client.get("/runs/abc").json()["subcommand"] == "curves"
    assert client.get("/runs/missing").status_code == 404
