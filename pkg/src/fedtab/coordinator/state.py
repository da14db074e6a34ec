"""Coordinator state: sessions, run control, round advancement, telemetry.

All mutations go through one re-entrant lock, so the fed-core state machine
only ever sees a serialized event stream no matter how many clients are
connected.  The tick() method is the round driver; the service calls it from
a background thread, tests call it directly.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import eventlog, fedcore, metrics
from ..data import FeatureSchema, ingest_csv, select_features
from ..exceptions import AggregationError
from ..models import ModelSpec, ParameterVector, decode_values, encode_values, init_model, predict_batch

log = logging.getLogger("fedtab.coordinator")

IDLE = "idle"
RUNNING = "running"
PAUSED = "paused"
FINISHED = "finished"

_TRANSITIONS = {
    ("idle", "start"): RUNNING,
    ("running", "pause"): PAUSED,
    ("paused", "resume"): RUNNING,
    ("running", "stop"): FINISHED,
    ("paused", "stop"): FINISHED,
}


class ApiError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


@dataclass
class ClientSession:
    client_id: str
    token: str
    registered_at: float
    last_seen: float
    declared_n_samples: int
    cohort_stats: dict

    def status(self, now: float, timeout: float) -> str:
        return "active" if now - self.last_seen <= timeout else "lapsed"


@dataclass
class CoordinatorConfig:
    model: ModelSpec
    fed: fedcore.FedConfig = field(default_factory=fedcore.FedConfig)
    host: str = "127.0.0.1"
    port: int = 8099
    round_timeout_ms: int = 30_000
    heartbeat_timeout_s: float = 30.0
    tick_ms: int = 100
    schema_path: str | None = None
    test_path: str | None = None
    event_log_path: str | None = None
    ui_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "CoordinatorConfig":
        fed = fedcore.FedConfig(
            aggregation=d.get("aggregation", fedcore.PLAIN_MEAN),
            min_clients=int(d.get("quorum", 1)),
            staleness_window=int(d.get("staleness_window", 0)),
            criterion=fedcore.ConvergenceCriterion.from_dict(
                d.get("convergence", {"max_rounds": 30})
            ),
        )
        return cls(
            model=ModelSpec.from_dict(d["model"]),
            fed=fed,
            host=d.get("host", "127.0.0.1"),
            port=int(d.get("port", 8099)),
            round_timeout_ms=int(d.get("round_timeout_ms", 30_000)),
            heartbeat_timeout_s=float(d.get("heartbeat_timeout_s", 30.0)),
            tick_ms=int(d.get("tick_ms", 100)),
            schema_path=d.get("schema_path"),
            test_path=d.get("test_path"),
            event_log_path=d.get("event_log_path"),
            ui_dir=d.get("ui_dir"),
        )

    @classmethod
    def from_json(cls, path) -> "CoordinatorConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


class Coordinator:
    def __init__(self, config: CoordinatorConfig):
        self.config = config
        self.spec = config.model
        self._lock = threading.RLock()
        self.state = fedcore.initial_state(
            init_model(self.spec),
            min_clients=config.fed.min_clients,
            staleness_window=config.fed.staleness_window,
        )
        self.phase = IDLE
        self.started_at: float | None = None
        self.sessions: dict[str, ClientSession] = {}
        self.history: list[dict] = []
        self.client_aucs: dict[str, float] = {}
        self.reported_global: dict[int, float] = {}
        self._round_opened = time.monotonic()

        self.schema: FeatureSchema | None = None
        if config.schema_path:
            self.schema = FeatureSchema.load(config.schema_path)
        self.test_xy = None
        if config.test_path:
            if self.schema is None:
                raise ApiError(500, "test_path requires schema_path")
            cohort = ingest_csv(config.test_path, self.schema)
            self.test_xy = (select_features(cohort), cohort.labels())

        self.log: eventlog.EventLog | None = None
        if config.event_log_path:
            self.log = eventlog.EventLog(config.event_log_path)
            self.log.append(
                eventlog.INIT,
                {
                    "model": self.spec.to_dict(),
                    "weights": encode_values(self.state.global_weights.values),
                    "min_clients": config.fed.min_clients,
                    "staleness_window": config.fed.staleness_window,
                    "aggregation": config.fed.aggregation,
                    "criterion": config.fed.criterion.to_dict(),
                },
            )

    # ------------------------------------------------------------- endpoints

    def register(self, client_id: str, declared_n_samples: int, cohort_stats: dict) -> dict:
        now = time.time()
        with self._lock:
            token = secrets.token_hex(16)
            existing = self.sessions.get(client_id)
            self.sessions[client_id] = ClientSession(
                client_id=client_id,
                token=token,
                registered_at=existing.registered_at if existing else now,
                last_seen=now,
                declared_n_samples=declared_n_samples,
                cohort_stats=cohort_stats,
            )
            if self.log:
                self.log.append(
                    eventlog.REGISTER,
                    {"client_id": client_id, "n_samples": declared_n_samples},
                )
            return {
                "token": token,
                "schema_digest": self.schema.digest() if self.schema else "",
                "model": self.spec.to_dict(),
                "round": self.state.round,
                "phase": self.phase,
            }

    def authenticate(self, token: str | None) -> ClientSession:
        with self._lock:
            for session in self.sessions.values():
                if token and secrets.compare_digest(session.token, token):
                    session.last_seen = time.time()
                    return session
        raise ApiError(401, "unknown or missing session token")

    def get_model(self, token: str | None = None) -> dict:
        if token:
            try:
                self.authenticate(token)
            except ApiError:
                pass  # model reads are public; token only refreshes liveness
        with self._lock:
            if self.phase == IDLE:
                raise ApiError(409, "run not started")
            return {
                "round": self.state.round,
                "weights": encode_values(self.state.global_weights.values),
                "phase": self.phase,
            }

    def submit_update(self, token: str | None, body) -> dict:
        session = self.authenticate(token)
        if session.client_id != body.client_id:
            raise ApiError(403, "token does not match client_id")
        values = decode_values(body.weights)
        layout = self.spec.layout()
        try:
            weights = ParameterVector(values, layout)
        except Exception as exc:
            raise ApiError(422, f"weight vector rejected: {exc}") from exc
        update = fedcore.ModelUpdate(
            client_id=body.client_id,
            round=body.round,
            weights=weights,
            n_samples=body.n_samples,
            local_epochs_used=body.local_epochs_used,
        )
        with self._lock:
            if self.phase == IDLE:
                raise ApiError(409, "run not started")
            if self.phase == FINISHED:
                return {"status": "stale", "round": self.state.round}
            if body.eval_auc is not None and body.eval_round is not None:
                self.reported_global[body.eval_round] = body.eval_auc
            if body.local_auc is not None:
                self.client_aucs[body.client_id] = body.local_auc
            before = self.state.stale_count
            try:
                self.state = fedcore.accept_update(self.state, update)
            except AggregationError as exc:
                raise ApiError(422, str(exc)) from exc
            if self.log:
                self.log.append(eventlog.UPDATE, eventlog.update_payload(update))
            stale = self.state.stale_count > before
            return {
                "status": "stale" if stale else "accepted",
                "round": self.state.round,
            }

    def control(self, action: str) -> dict:
        with self._lock:
            new_phase = _TRANSITIONS.get((self.phase, action))
            if new_phase is None:
                raise ApiError(409, f"cannot {action} while {self.phase}")
            self.phase = new_phase
            if action == "start":
                self.started_at = time.time()
                self._round_opened = time.monotonic()
            if action == "resume":
                self._round_opened = time.monotonic()
            if self.log:
                self.log.append(eventlog.CONTROL, {"action": action, "phase": new_phase})
            return self.run_control()

    def run_control(self) -> dict:
        return {
            "phase": self.phase,
            "round": self.state.round,
            "started_at": self.started_at,
        }

    def metrics_current(self) -> dict:
        with self._lock:
            snap = self._snapshot(n_updates=len(self.state.received))
            snap["phase"] = self.phase
            return snap

    def metrics_history(self) -> dict:
        with self._lock:
            return {"snapshots": list(self.history)}

    def health(self) -> dict:
        with self._lock:
            return {"status": "ok", "round": self.state.round, "phase": self.phase}

    # ------------------------------------------------------------ round loop

    def _snapshot(self, n_updates: int) -> dict:
        global_auc = None
        if self.state.round == 0:
            pass  # nothing aggregated yet; stats-only snapshot
        elif self.test_xy is not None:
            scores = predict_batch(self.state.global_weights, self.spec, self.test_xy[0])
            try:
                global_auc = metrics.auc(scores, self.test_xy[1])
            except Exception:
                global_auc = None
        elif self.reported_global:
            global_auc = self.reported_global[max(self.reported_global)]
        return {
            "round": self.state.round,
            "global_auc": global_auc,
            "client_aucs": dict(sorted(self.client_aucs.items())),
            "cohort_stats": {
                cid: dict(s.cohort_stats) for cid, s in sorted(self.sessions.items())
            },
            "feature_dim": self.spec.input_dim,
            "stale_count": self.state.stale_count,
            "n_updates": n_updates,
        }

    def tick(self, now: float | None = None) -> bool:
        """Advance the round if quorum is met, or on deadline with >= 1
        update.  Returns True when a round completed."""
        now = time.monotonic() if now is None else now
        with self._lock:
            if self.phase != RUNNING:
                return False
            m = len(self.state.received)
            deadline = self._round_opened + self.config.round_timeout_ms / 1000.0
            force = False
            if m >= self.state.min_clients:
                pass
            elif now >= deadline:
                if m == 0:
                    self._round_opened = now  # extend empty round
                    log.warning(
                        "round %d deadline passed with no updates; extending",
                        self.state.round,
                    )
                    return False
                force = True
            else:
                return False
            self.state, advanced, converged = fedcore.try_advance(
                self.state, self.config.fed.aggregation, self.config.fed.criterion, force=force
            )
            if not advanced:
                return False
            self._round_opened = now
            if self.log:
                self.log.append(
                    eventlog.ADVANCE,
                    {
                        "round": self.state.round,
                        "force": force,
                        "n_updates": m,
                        "digest": fedcore.weights_digest(self.state.global_weights),
                    },
                )
            self.history.append(self._snapshot(n_updates=m))
            if converged:
                self.phase = FINISHED
                if self.log:
                    self.log.append(
                        eventlog.CONTROL, {"action": "converged", "phase": FINISHED}
                    )
                log.info("converged at round %d", self.state.round)
            return True

    def close(self) -> None:
        if self.log:
            self.log.close()


class RoundDriver(threading.Thread):
    """Background thread that calls tick() until stopped."""

    def __init__(self, coordinator: Coordinator):
        super().__init__(daemon=True, name="fedtab-round-driver")
        self.coordinator = coordinator
        self._stop = threading.Event()

    def run(self) -> None:
        interval = self.coordinator.config.tick_ms / 1000.0
        while not self._stop.is_set():
            try:
                self.coordinator.tick()
            except Exception:
                log.exception("round driver tick failed")
            self._stop.wait(interval)

    def stop(self) -> None:
        self._stop.set()
