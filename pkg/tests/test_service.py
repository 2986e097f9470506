import json
import threading

import pytest
from fastapi.testclient import TestClient

from cogproto.protocol import default_protocol_config
from cogproto.sessionlog import replay_records
from cogproto.service import create_app


@pytest.fixture
def data_dir(tmp_path):
    return tmp_path / "sessions"


@pytest.fixture
def client(data_dir):
    return TestClient(create_app(data_dir=data_dir))


def _drive_to_stop(client, session_id):
    while True:
        response = client.post(f"/api/sessions/{session_id}/words",
                               json={"actions": "a" * 10})
        if response.status_code != 200:
            return response
        if response.json()["stop"]["stopped"]:
            return response


# -- session lifecycle -----------------------------------------------------------

def test_create_session(client):
    response = client.post("/api/sessions", json={"hypothesis": "h"})
    assert response.status_code == 201
    body = response.json()
    assert body["hypothesis"] == "h"
    assert body["current_test"] == "A_h"
    assert body["steps"] == [] and body["class_trace"] == []
    assert not body["stop"]["stopped"]
    assert body["created"] and body["updated"]


def test_create_rejects_unknown_class(client):
    response = client.post("/api/sessions", json={"hypothesis": "x"})
    assert response.status_code == 400
    assert response.json()["code"] == "unknown_class"


def test_create_sessions_have_distinct_ids(client):
    first = client.post("/api/sessions", json={"hypothesis": "m"}).json()["id"]
    second = client.post("/api/sessions", json={"hypothesis": "m"}).json()["id"]
    assert first != second


def test_post_word_reference_values(client):
    session = client.post("/api/sessions", json={"hypothesis": "M"}).json()
    response = client.post(f"/api/sessions/{session['id']}/words",
                           json={"actions": "aaaaaaaaaa"})
    assert response.status_code == 200
    body = response.json()
    step = body["steps"][-1]
    assert step["delta"] == 0.0
    assert step["beliefs"]["h"] == pytest.approx(0.75, abs=0.005)
    assert step["chosen"] == "h"
    assert body["current_test"] == "A_h"
    assert body["class_trace"] == ["h"]


def test_unknown_session_404(client):
    assert client.get("/api/sessions/nope").status_code == 404
    assert client.post("/api/sessions/nope/words",
                       json={"actions": "a"}).status_code == 404


def test_invalid_word_422(client):
    session = client.post("/api/sessions", json={"hypothesis": "h"}).json()
    response = client.post(f"/api/sessions/{session['id']}/words",
                           json={"actions": "abq"})
    assert response.status_code == 422
    assert response.json()["code"] == "invalid_word"
    response = client.post(f"/api/sessions/{session['id']}/words",
                           json={"actions": ""})
    assert response.status_code == 422


def test_malformed_body_422(client):
    response = client.post("/api/sessions", json={"nope": 1})
    assert response.status_code == 422
    assert response.json()["code"] == "invalid_request"


def test_posting_to_stopped_session_409(client):
    session = client.post("/api/sessions", json={"hypothesis": "h"}).json()
    final = _drive_to_stop(client, session["id"])
    assert final.status_code == 200
    assert final.json()["stop"]["reason"] == "steady_state"
    response = client.post(f"/api/sessions/{session['id']}/words",
                           json={"actions": "a"})
    assert response.status_code == 409
    assert response.json()["code"] == "session_stopped"


def test_busy_session_409_with_retry_hint(client):
    session = client.post("/api/sessions", json={"hypothesis": "h"}).json()
    store = client.app.state.store
    entry = store.get(session["id"])
    assert entry.lock.acquire(blocking=False)
    try:
        response = client.post(f"/api/sessions/{session['id']}/words",
                               json={"actions": "a" * 10})
        assert response.status_code == 409
        body = response.json()
        assert body["code"] == "session_busy"
        assert "retry" in body["detail"]
    finally:
        entry.lock.release()
    # after release the word goes through
    assert client.post(f"/api/sessions/{session['id']}/words",
                       json={"actions": "a" * 10}).status_code == 200


def test_concurrent_posts_lose_no_steps(data_dir):
    client = TestClient(create_app(data_dir=data_dir))
    session = client.post("/api/sessions", json={"hypothesis": "M"}).json()
    statuses = []
    barrier = threading.Barrier(4)

    def fire():
        barrier.wait()
        response = client.post(f"/api/sessions/{session['id']}/words",
                               json={"actions": "ababab"})
        statuses.append(response.status_code)

    threads = [threading.Thread(target=fire) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert set(statuses) <= {200, 409}
    current = client.get(f"/api/sessions/{session['id']}").json()
    assert len(current["steps"]) == statuses.count(200)


# -- persistence -------------------------------------------------------------------

def test_sessions_survive_restart(data_dir):
    client = TestClient(create_app(data_dir=data_dir))
    session = client.post("/api/sessions", json={"hypothesis": "m"}).json()
    for word in ("ababababab", "ababab"):
        assert client.post(f"/api/sessions/{session['id']}/words",
                           json={"actions": word}).status_code == 200
    before = client.get(f"/api/sessions/{session['id']}").json()

    restarted = TestClient(create_app(data_dir=data_dir))
    after = restarted.get(f"/api/sessions/{session['id']}").json()
    assert after["steps"] == before["steps"]
    assert after["class_trace"] == before["class_trace"]
    assert after["stop"] == before["stop"]
    assert after["created"] == before["created"]


def test_fresh_sessions_survive_restart(data_dir):
    client = TestClient(create_app(data_dir=data_dir))
    session = client.post("/api/sessions", json={"hypothesis": "M"}).json()
    restarted = TestClient(create_app(data_dir=data_dir))
    body = restarted.get(f"/api/sessions/{session['id']}").json()
    assert body["current_test"] == "A_M" and body["steps"] == []


def test_corrupt_log_skipped_on_recovery(data_dir):
    client = TestClient(create_app(data_dir=data_dir))
    session = client.post("/api/sessions", json={"hypothesis": "m"}).json()
    path = data_dir / f"{session['id']}.jsonl"
    path.write_text("this is not json\n")
    restarted = TestClient(create_app(data_dir=data_dir))
    assert restarted.get(f"/api/sessions/{session['id']}").status_code == 404


def test_served_words_replay_bit_exactly(client):
    session = client.post("/api/sessions", json={"hypothesis": "M"}).json()
    for word in ("aaaaaaaaaa", "ababababab", "aaaaaaaaaa"):
        client.post(f"/api/sessions/{session['id']}/words", json={"actions": word})
    resource = client.get(f"/api/sessions/{session['id']}").json()

    config = default_protocol_config()
    records = [
        {"meta_state": step["meta_state"], "word": step["word"]}
        for step in resource["steps"]
    ]
    replayed = replay_records(records, config, verify=False)
    assert [c.code for c in replayed.class_trace] == resource["class_trace"]
    assert replayed.stop.to_dict() == resource["stop"]
    for served, step in zip(resource["steps"], replayed.steps):
        # the service rounds to 9 significant decimals on the way out
        assert served["beliefs"]["h"] == float(f"{step.beliefs.healthy:.9g}")
        assert served["delta"] == float(f"{step.delta:.9g}")


# -- curves and models ----------------------------------------------------------------

def test_curves_endpoint_reference_value(client):
    response = client.get("/api/curves/A_m", params={"step": 0.5})
    assert response.status_code == 200
    body = response.json()
    row = next(r for r in body["rows"] if r["delta"] == 5.0)
    assert row["m"] == pytest.approx(0.8765, abs=0.002)
    assert body["test"] == "A_m"


def test_curves_endpoint_validation(client):
    assert client.get("/api/curves/A_x").status_code == 404
    assert client.get("/api/curves/A_m", params={"step": 0}).status_code == 422
    assert client.get("/api/curves/A_m", params={"step": 99}).status_code == 422


def test_models_endpoint_echoes_parameters(client):
    body = client.get("/api/models").json()
    assert body["classes"]["h"] == {
        "alpha": 0.84, "beta": 0.11, "gamma": 0.0499, "theta": 0.0001,
    }
    assert body["classes"]["M"]["theta"] == 0.01
    assert body["shape"] == {"rounds": 10, "step_cap": 60}


def test_numbers_limited_to_nine_significant_decimals(client):
    session = client.post("/api/sessions", json={"hypothesis": "m"}).json()
    response = client.post(f"/api/sessions/{session['id']}/words",
                           json={"actions": "abgab"})
    text = json.dumps(response.json())
    for token in text.replace("{", " ").replace("}", " ").replace(",", " ").split():
        try:
            value = float(token)
        except ValueError:
            continue
        assert value == float(f"{value:.9g}")


def test_list_sessions(client):
    ids = {client.post("/api/sessions", json={"hypothesis": "h"}).json()["id"]
           for _ in range(2)}
    listed = set(client.get("/api/sessions").json()["sessions"])
    assert ids <= listed
