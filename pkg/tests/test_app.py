import datetime
import json
import threading

import pytest
from fastapi.testclient import TestClient
from unittest.mock import patch

from calibration_session import CalibrationSession
from tests.conftest import MUMBAI_CSV, FOUR_QUBIT_JSON

# Mock asyncio.create_task BEFORE the app is imported
with patch('asyncio.create_task'):
    from app import app, sessions, _clean_sessions_once

CHAIN_3 = "qubits 3\ncx 0 1\ncx 1 2\nmeasure\n"


# Use a client that handles the lifespan context
@pytest.fixture
def client():
    sessions.clear()
    # Using the 'with' statement ensures that startup and shutdown events are run
    with TestClient(app) as test_client:
        yield test_client
    sessions.clear()


@pytest.fixture
def model_id(client):
    response = client.post("/models", json=json.loads(FOUR_QUBIT_JSON.read_text()))
    return response.json()["model_id"]


def test_upload_calibration_csv(client):
    """Tests uploading a per-qubit calibration CSV as a multipart file."""
    response = client.post(
        "/models",
        files={"file": (MUMBAI_CSV.name, MUMBAI_CSV.read_bytes(), "text/csv")},
    )
    assert response.status_code == 200
    data = response.json()
    assert data["num_qubits"] == 27
    assert data["num_edges"] == 28
    assert data["backend"] == "ibmq_mumbai"
    assert isinstance(sessions[data["model_id"]], CalibrationSession)


def test_upload_calibration_json(client):
    response = client.post("/models", json=json.loads(FOUR_QUBIT_JSON.read_text()))
    assert response.status_code == 200
    assert response.json()["num_qubits"] == 4
    assert response.json()["backend"] == "four_qubit_device"


def test_upload_errors(client):
    """Tests that malformed calibration data and empty bodies are rejected."""
    broken = client.post("/models", files={"file": ("broken.csv", b"Name,Other\n1,2\n", "text/csv")})
    assert broken.status_code == 400
    assert "Qubit" in broken.json()["detail"]

    empty = client.post("/models")
    assert empty.status_code == 400
    assert not sessions


def test_model_status(client, model_id):
    status = client.get(f"/models/{model_id}/status").json()
    assert status["active"] is True
    assert status["remaining_minutes"] > 0

    missing = client.get("/models/nonexistent/status").json()
    assert missing["active"] is False
    assert missing.get("remaining_minutes") is None

# --- Tests for folding ---

def test_fold_noise_aware(client, model_id):
    """Tests that λ=4 folds pair 0-1 once and leaves the costlier pair 0-2 alone."""
    response = client.post(f"/models/{model_id}/fold", json={"circuit": CHAIN_3, "scale": 4})
    assert response.status_code == 200
    data = response.json()
    assert data["pair_folds"] == {"0_1": 1, "0_2": 0}
    assert data["inserted"] == 2
    assert data["gate_count"] == 4
    assert data["layout"] == [[0, 1], [1, 0], [2, 2]]
    assert data["swap_count"] == 0
    assert data["circuit"].startswith("qubits 4\n")


def test_fold_scale_one_inserts_nothing(client, model_id):
    data = client.post(f"/models/{model_id}/fold", json={"circuit": CHAIN_3, "scale": 1}).json()
    assert data["inserted"] == 0
    assert data["gate_count"] == 2


def test_fold_global(client, model_id):
    response = client.post(f"/models/{model_id}/fold", json={"circuit": CHAIN_3, "method": "global", "scale": 3})
    assert response.status_code == 200
    assert response.json()["gate_count"] == 6
    assert response.json()["pair_folds"] == {}


def test_fold_errors(client, model_id):
    bad_circuit = client.post(f"/models/{model_id}/fold", json={"circuit": "qubits 2\nfoo 0\n"})
    assert bad_circuit.status_code == 400
    assert "line 2" in bad_circuit.json()["detail"]

    bad_method = client.post(f"/models/{model_id}/fold", json={"circuit": CHAIN_3, "method": "sideways"})
    assert bad_method.status_code == 400

    missing = client.post("/models/nonexistent/fold", json={"circuit": CHAIN_3})
    assert missing.status_code == 404

# --- Tests for runs ---

def test_run_and_fetch(client, model_id):
    """Tests that a finished run is stored on the model session."""
    config = {"circuit": "cnot-chain:2", "shots": 100, "reps": 1, "method": "left"}
    response = client.post(f"/models/{model_id}/runs", json=config)
    assert response.status_code == 200
    data = response.json()
    run_id = data["run_id"]
    assert data["result"]["method"] == "left"
    assert data["result"]["backend"] == "four_qubit_device"
    assert sessions[model_id].get_run(run_id) is not None

    fetched = client.get(f"/models/{model_id}/runs/{run_id}")
    assert fetched.status_code == 200
    assert fetched.json()["config_hash"] == data["result"]["config_hash"]

    assert client.get(f"/models/{model_id}/runs/unknown").status_code == 404


def test_run_stage_errors(client, model_id):
    too_wide = client.post(f"/models/{model_id}/runs", json={"circuit": "cnot-chain:9", "shots": 10, "reps": 1})
    assert too_wide.status_code == 422
    assert "[layout]" in too_wide.json()["detail"]

    bad_secret = client.post(f"/models/{model_id}/runs", json={"circuit": "bv:12", "shots": 10, "reps": 1})
    assert bad_secret.status_code == 400
    assert "[parse]" in bad_secret.json()["detail"]


def test_run_config_validation(client, model_id):
    response = client.post(f"/models/{model_id}/runs", json={"circuit": "cnot-chain:2", "scales": [0.5, 1]})
    assert response.status_code == 422


def test_run_timeout(client, model_id, mocker):
    """Tests that a run exceeding the time limit answers 504 and is told to stop."""
    stopped = threading.Event()

    def run_until_cancelled(config, model, cancel):
        if cancel.wait(timeout=5):
            stopped.set()

    mocker.patch("app.RUN_TIMEOUT_SECONDS", 0.01)
    mocker.patch("app.run", side_effect=run_until_cancelled)
    response = client.post(f"/models/{model_id}/runs", json={"circuit": "cnot-chain:2"})
    assert response.status_code == 504
    assert stopped.wait(timeout=5)


def test_stored_runs_are_capped(client, mocker):
    """Tests that a model keeps only its most recent runs."""
    mocker.patch("app.MAX_RUNS_PER_MODEL", 2)
    model_id = client.post("/models", json=json.loads(FOUR_QUBIT_JSON.read_text())).json()["model_id"]
    config = {"circuit": "cnot-chain:2", "shots": 10, "reps": 1}
    run_ids = [client.post(f"/models/{model_id}/runs", json=config).json()["run_id"] for _ in range(3)]

    assert client.get(f"/models/{model_id}/runs/{run_ids[0]}").status_code == 404
    for run_id in run_ids[1:]:
        assert client.get(f"/models/{model_id}/runs/{run_id}").status_code == 200

# --- Tests for session lifetime ---

def test_delete_model(client, model_id):
    response_delete = client.delete(f"/models/{model_id}")
    assert response_delete.status_code == 204
    assert model_id not in sessions

    assert client.get(f"/models/{model_id}/status").json()["active"] is False
    assert client.delete(f"/models/{model_id}").status_code == 404


def test_expired_model_status(client, model_id):
    sessions[model_id].last_accessed = datetime.datetime.now() - datetime.timedelta(minutes=60)
    assert client.get(f"/models/{model_id}/status").json()["active"] is False


def test_session_cleanup_logic(four_qubit_model):
    """Tests the single-pass cleanup logic directly."""
    sessions.clear()

    sessions["fresh_session"] = CalibrationSession(four_qubit_model)
    expired_session = CalibrationSession(four_qubit_model)
    expired_session.last_accessed = datetime.datetime.now() - datetime.timedelta(minutes=60)
    sessions["expired_session"] = expired_session

    _clean_sessions_once()

    assert "fresh_session" in sessions
    assert "expired_session" not in sessions

    sessions.clear()


def test_session_evicts_oldest_run(four_qubit_model):
    session = CalibrationSession(four_qubit_model, max_runs=2)
    for run_id in ("a", "b", "c"):
        session.add_run(run_id, run_id.upper())
    assert list(session.runs) == ["b", "c"]
    assert session.get_run("a") is None
    assert session.get_run("c") == "C"

    with pytest.raises(ValueError):
        CalibrationSession(four_qubit_model, max_runs=0)
