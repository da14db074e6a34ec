import numpy as np
import pytest
from fastapi.testclient import TestClient

from fedtab import eventlog
from fedtab.coordinator import Coordinator, CoordinatorConfig, create_app
from fedtab.data import select_features
from fedtab.fedcore import ConvergenceCriterion, FedConfig, round_seed
from fedtab.models import (
    LOGISTIC,
    ModelSpec,
    ParameterVector,
    TrainConfig,
    decode_values,
    encode_values,
    layout_size,
    train_local,
)
from fedtab.synthetic import generate_synthetic_city, write_city

from util import tiny_gen


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    root = tmp_path_factory.mktemp("city")
    cohorts, test, schema = generate_synthetic_city(tiny_gen(), seed=21)
    write_city(root, cohorts, test, schema)
    return {"dir": root, "cohorts": cohorts, "test": test, "schema": schema}


def make_coordinator(city, tmp_path, quorum=2, max_rounds=10, timeout_ms=600_000):
    config = CoordinatorConfig(
        model=ModelSpec(kind=LOGISTIC, input_dim=city["schema"].input_dim),
        fed=FedConfig(
            min_clients=quorum,
            criterion=ConvergenceCriterion(max_rounds=max_rounds),
        ),
        round_timeout_ms=timeout_ms,
        schema_path=str(city["dir"] / "schema.json"),
        test_path=str(city["dir"] / "test.csv"),
        event_log_path=str(tmp_path / "events.jsonl"),
    )
    return Coordinator(config)


@pytest.fixture()
def coord(city, tmp_path):
    return make_coordinator(city, tmp_path)


@pytest.fixture()
def client(coord):
    return TestClient(create_app(coord, run_driver=False))


def stats_for(city, idx):
    return city["cohorts"][idx].stats()


def register(client, city, cid="hosp_1", idx=0):
    resp = client.post(
        "/v1/register",
        json={
            "client_id": cid,
            "declared_n_samples": stats_for(city, idx)["n"],
            "cohort_stats": stats_for(city, idx),
        },
    )
    assert resp.status_code == 200
    return resp.json()


def auth(token):
    return {"Authorization": f"Bearer {token}"}


def trained_weights(coord, city, cid, rnd, model_weights):
    spec = coord.spec
    cohort = next(c for c in city["cohorts"] if c.hospital_id == cid)
    from fedtab.client import local_pipeline

    x, y, _ = local_pipeline(cohort)
    w = ParameterVector(decode_values(model_weights), spec.layout())
    out = train_local(
        w,
        spec,
        TrainConfig(learning_rate=0.1, local_epochs=1, batch_size=32),
        x,
        y,
        rng_seed=round_seed(0, rnd, cid),
    )
    return encode_values(out.values), len(y)


def submit(client, token, cid, rnd, weights, n, **extra):
    body = {
        "client_id": cid,
        "round": rnd,
        "weights": weights,
        "n_samples": n,
        "local_epochs_used": 1,
        **extra,
    }
    return client.post("/v1/update", json=body, headers=auth(token))


# ------------------------------------------------------------------ basics


def test_healthz_and_idle_state(client):
    resp = client.get("/v1/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "round": 0, "phase": "idle"}
    assert client.get("/v1/model").status_code == 409


def test_register_returns_token_schema_and_model(client, coord, city):
    reg = register(client, city)
    assert reg["schema_digest"] == city["schema"].digest()
    assert reg["model"]["kind"] == LOGISTIC
    assert reg["round"] == 0
    assert reg["phase"] == "idle"
    assert len(reg["token"]) == 32


def test_register_validation_rejects_garbage(client):
    resp = client.post("/v1/register", json={"client_id": "x"})
    assert resp.status_code == 422
    resp = client.post(
        "/v1/register",
        json={
            "client_id": "bad id!",
            "declared_n_samples": 5,
            "cohort_stats": {
                "n": 1, "n_pos": 1, "n_neg": 0, "n_male": 1, "n_female": 0,
                "age_hist": [1] + [0] * 11,
            },
        },
    )
    assert resp.status_code == 422


def test_reregistration_rotates_token(client, city):
    first = register(client, city)
    second = register(client, city)
    assert first["token"] != second["token"]
    client.post("/v1/control", json={"action": "start"})
    ok = client.get("/v1/model", headers=auth(second["token"]))
    assert ok.status_code == 200


def test_control_transitions(client):
    assert client.post("/v1/control", json={"action": "pause"}).status_code == 409
    start = client.post("/v1/control", json={"action": "start"})
    assert start.status_code == 200
    assert start.json()["phase"] == "running"
    assert client.post("/v1/control", json={"action": "start"}).status_code == 409
    assert client.post("/v1/control", json={"action": "resume"}).status_code == 409
    pause = client.post("/v1/control", json={"action": "pause"})
    assert pause.json()["phase"] == "paused"
    resume = client.post("/v1/control", json={"action": "resume"})
    assert resume.json()["phase"] == "running"
    stop = client.post("/v1/control", json={"action": "stop"})
    assert stop.json()["phase"] == "finished"
    assert client.post("/v1/control", json={"action": "start"}).status_code == 409


def test_update_auth_required(client, city):
    reg = register(client, city)
    client.post("/v1/control", json={"action": "start"})
    model = client.get("/v1/model").json()
    resp = client.post(
        "/v1/update",
        json={
            "client_id": "hosp_1",
            "round": 0,
            "weights": model["weights"],
            "n_samples": 5,
            "local_epochs_used": 1,
        },
    )
    assert resp.status_code == 401
    bad = submit(client, "f" * 32, "hosp_1", 0, model["weights"], 5)
    assert bad.status_code == 401
    mismatched = submit(client, reg["token"], "hosp_9", 0, model["weights"], 5)
    assert mismatched.status_code == 403


def test_update_rejects_wrong_vector_length(client, city):
    reg = register(client, city)
    client.post("/v1/control", json={"action": "start"})
    resp = submit(client, reg["token"], "hosp_1", 0, ["0.5", "0.5"], 5)
    assert resp.status_code == 422


def test_update_while_idle_conflicts(client, coord, city):
    reg = register(client, city)
    size = layout_size(coord.spec.layout())
    resp = submit(client, reg["token"], "hosp_1", 0, ["0.0"] * size, 5)
    assert resp.status_code == 409


# --------------------------------------------------------------- round flow


def test_full_round_flow_with_metrics(client, coord, city):
    reg1 = register(client, city, "hosp_1", 0)
    reg2 = register(client, city, "hosp_2", 1)
    client.post("/v1/control", json={"action": "start"})

    current = client.get("/v1/metrics").json()
    assert current["round"] == 0
    assert current["global_auc"] is None
    assert set(current["cohort_stats"]) == {"hosp_1", "hosp_2"}
    assert client.get("/v1/metrics/history").json()["snapshots"] == []

    model = client.get("/v1/model").json()
    assert model["round"] == 0 and model["phase"] == "running"

    w1, n1 = trained_weights(coord, city, "hosp_1", 0, model["weights"])
    w2, n2 = trained_weights(coord, city, "hosp_2", 0, model["weights"])
    r1 = submit(client, reg1["token"], "hosp_1", 0, w1, n1,
                eval_round=0, eval_auc=0.5, local_auc=0.61)
    assert r1.json() == {"status": "accepted", "round": 0}
    assert not coord.tick()  # quorum 2 not met with one update
    r2 = submit(client, reg2["token"], "hosp_2", 0, w2, n2, local_auc=0.57)
    assert r2.json()["status"] == "accepted"

    assert coord.tick()
    model2 = client.get("/v1/model").json()
    assert model2["round"] == 1
    history = client.get("/v1/metrics/history").json()["snapshots"]
    assert len(history) == 1
    snap = history[0]
    assert snap["round"] == 1
    assert 0.0 <= snap["global_auc"] <= 1.0
    assert snap["client_aucs"] == {"hosp_1": 0.61, "hosp_2": 0.57}
    assert snap["n_updates"] == 2
    assert snap["stale_count"] == 0
    assert snap["feature_dim"] == city["schema"].input_dim

    # the aggregated weights differ from the broadcast ones
    assert model2["weights"] != model["weights"]


def test_stale_update_counted_not_aggregated(client, coord, city):
    reg1 = register(client, city, "hosp_1", 0)
    reg2 = register(client, city, "hosp_2", 1)
    client.post("/v1/control", json={"action": "start"})
    model = client.get("/v1/model").json()
    w1, n1 = trained_weights(coord, city, "hosp_1", 0, model["weights"])
    w2, n2 = trained_weights(coord, city, "hosp_2", 0, model["weights"])
    submit(client, reg1["token"], "hosp_1", 0, w1, n1)
    submit(client, reg2["token"], "hosp_2", 0, w2, n2)
    assert coord.tick()
    late = submit(client, reg1["token"], "hosp_1", 0, w1, n1)
    assert late.json() == {"status": "stale", "round": 1}
    assert client.get("/v1/metrics").json()["stale_count"] == 1


def test_pause_blocks_advance_and_resume_continues_same_round(client, coord, city):
    reg1 = register(client, city, "hosp_1", 0)
    reg2 = register(client, city, "hosp_2", 1)
    client.post("/v1/control", json={"action": "start"})
    model = client.get("/v1/model").json()
    client.post("/v1/control", json={"action": "pause"})

    paused_model = client.get("/v1/model").json()
    assert paused_model["phase"] == "paused"
    assert paused_model["round"] == 0

    w1, n1 = trained_weights(coord, city, "hosp_1", 0, model["weights"])
    w2, n2 = trained_weights(coord, city, "hosp_2", 0, model["weights"])
    assert submit(client, reg1["token"], "hosp_1", 0, w1, n1).json()["status"] == "accepted"
    assert submit(client, reg2["token"], "hosp_2", 0, w2, n2).json()["status"] == "accepted"
    assert not coord.tick()  # paused: quorum met but no advancement
    assert client.get("/v1/model").json()["round"] == 0

    client.post("/v1/control", json={"action": "resume"})
    assert coord.tick()  # buffered updates drive the round forward
    assert client.get("/v1/model").json()["round"] == 1


def test_finished_run_answers_stale(client, coord, city):
    reg1 = register(client, city, "hosp_1", 0)
    client.post("/v1/control", json={"action": "start"})
    model = client.get("/v1/model").json()
    client.post("/v1/control", json={"action": "stop"})
    assert client.get("/v1/model").json()["phase"] == "finished"
    w1, n1 = trained_weights(coord, city, "hosp_1", 0, model["weights"])
    resp = submit(client, reg1["token"], "hosp_1", 0, w1, n1)
    assert resp.json()["status"] == "stale"
    assert not coord.tick()


def test_deadline_forces_advance_with_partial_quorum(city, tmp_path):
    coord = make_coordinator(city, tmp_path, quorum=2, timeout_ms=50)
    client = TestClient(create_app(coord, run_driver=False))
    reg1 = register(client, city, "hosp_1", 0)
    client.post("/v1/control", json={"action": "start"})
    model = client.get("/v1/model").json()

    # deadline passes with zero updates: round extends, nothing advances
    assert not coord.tick(now=coord._round_opened + 1.0)
    assert client.get("/v1/model").json()["round"] == 0

    w1, n1 = trained_weights(coord, city, "hosp_1", 0, model["weights"])
    submit(client, reg1["token"], "hosp_1", 0, w1, n1)
    assert not coord.tick(now=coord._round_opened + 0.01)  # before deadline
    assert coord.tick(now=coord._round_opened + 1.0)  # forced at deadline
    history = client.get("/v1/metrics/history").json()["snapshots"]
    assert history[-1]["n_updates"] == 1


def test_convergence_finishes_run(city, tmp_path):
    coord = make_coordinator(city, tmp_path, quorum=1, max_rounds=2)
    client = TestClient(create_app(coord, run_driver=False))
    reg = register(client, city, "hosp_1", 0)
    client.post("/v1/control", json={"action": "start"})
    for rnd in range(2):
        model = client.get("/v1/model").json()
        w, n = trained_weights(coord, city, "hosp_1", rnd, model["weights"])
        submit(client, reg["token"], "hosp_1", rnd, w, n)
        assert coord.tick()
    assert client.get("/v1/metrics").json()["phase"] == "finished"
    assert len(client.get("/v1/metrics/history").json()["snapshots"]) == 2


def test_event_log_replays_to_live_state(client, coord, city):
    reg1 = register(client, city, "hosp_1", 0)
    reg2 = register(client, city, "hosp_2", 1)
    client.post("/v1/control", json={"action": "start"})
    for rnd in range(3):
        model = client.get("/v1/model").json()
        w1, n1 = trained_weights(coord, city, "hosp_1", rnd, model["weights"])
        w2, n2 = trained_weights(coord, city, "hosp_2", rnd, model["weights"])
        submit(client, reg1["token"], "hosp_1", rnd, w1, n1)
        submit(client, reg2["token"], "hosp_2", rnd, w2, n2)
        assert coord.tick()
    coord.close()
    events = eventlog.read_events(coord.config.event_log_path)
    replayed = eventlog.replay_round_state(events)
    assert replayed.round == coord.state.round == 3
    np.testing.assert_array_equal(
        replayed.global_weights.values, coord.state.global_weights.values
    )


def test_metrics_current_includes_phase(client, city):
    register(client, city)
    body = client.get("/v1/metrics").json()
    assert body["phase"] == "idle"
    assert body["n_updates"] == 0
    assert body["cohort_stats"]["hosp_1"]["n"] == stats_for(city, 0)["n"]
