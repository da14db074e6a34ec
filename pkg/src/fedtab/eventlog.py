"""Append-only JSON-lines event log and deterministic replay.

One event per line: {"ts": float, "kind": str, "payload": {...}}.  The log
captures everything that feeds the round state machine (initial weights,
admitted updates, advancement decisions), so replaying it through fed-core
reconstructs the coordinator's RoundState exactly after a crash.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from . import fedcore
from .models import ModelSpec, ParameterVector, decode_values, encode_values

INIT = "init"
REGISTER = "register"
UPDATE = "update"
ADVANCE = "advance"
CONTROL = "control"


class EventLog:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")

    def append(self, kind: str, payload: dict) -> None:
        self._fh.write(
            json.dumps({"ts": time.time(), "kind": kind, "payload": payload}) + "\n"
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_events(path) -> list[dict]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def update_from_payload(payload: dict, layout) -> fedcore.ModelUpdate:
    return fedcore.ModelUpdate(
        client_id=payload["client_id"],
        round=int(payload["round"]),
        weights=ParameterVector(decode_values(payload["weights"]), layout),
        n_samples=int(payload["n_samples"]),
        local_epochs_used=int(payload.get("local_epochs_used", 1)),
    )


def update_payload(update: fedcore.ModelUpdate) -> dict:
    return {
        "client_id": update.client_id,
        "round": update.round,
        "weights": encode_values(update.weights.values),
        "n_samples": update.n_samples,
        "local_epochs_used": update.local_epochs_used,
    }


def replay_round_state(events: list[dict]) -> fedcore.RoundState:
    """Rebuild the RoundState by feeding logged updates and advancement
    decisions back through fed-core.  The first event must be an init."""
    if not events or events[0]["kind"] != INIT:
        raise ValueError("event log must start with an init event")
    init = events[0]["payload"]
    spec = ModelSpec.from_dict(init["model"])
    layout = spec.layout()
    weights = ParameterVector(decode_values(init["weights"]), layout)
    state = fedcore.initial_state(
        weights,
        min_clients=int(init["min_clients"]),
        staleness_window=int(init["staleness_window"]),
    )
    criterion = fedcore.ConvergenceCriterion.from_dict(init["criterion"])
    mode = init["aggregation"]
    for event in events[1:]:
        kind = event["kind"]
        if kind == UPDATE:
            state = fedcore.accept_update(
                state, update_from_payload(event["payload"], layout)
            )
        elif kind == ADVANCE:
            state, advanced, _ = fedcore.try_advance(
                state, mode, criterion, force=bool(event["payload"].get("force"))
            )
            if not advanced or state.round != int(event["payload"]["round"]):
                raise ValueError(
                    f"replay diverged at advance to round {event['payload']['round']}"
                )
            logged = event["payload"].get("digest")
            if logged and logged != fedcore.weights_digest(state.global_weights):
                raise ValueError(
                    f"replay diverged: weight digest mismatch at round {state.round}"
                )
    return state
