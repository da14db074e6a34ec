"""Wire schemas for the coordinator protocol.

Every request and response body is a pydantic model with extra fields
forbidden, so the set of models below doubles as the privacy whitelist:
only weights (decimal strings), counts, aggregate statistics, and control
fields can cross the wire.  `validate_message` checks a recorded message
against the schema for its endpoint and additionally rejects any nested
field name that suggests row-level data.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .data import AGE_BINS
from .exceptions import ProtocolError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CohortStatsMsg(_Strict):
    n: int = Field(ge=0)
    n_pos: int = Field(ge=0)
    n_neg: int = Field(ge=0)
    n_male: int = Field(ge=0)
    n_female: int = Field(ge=0)
    age_hist: list[int]

    @model_validator(mode="after")
    def _consistent(self):
        if self.n_pos + self.n_neg != self.n:
            raise ValueError("n_pos + n_neg must equal n")
        if self.n_male + self.n_female != self.n:
            raise ValueError("n_male + n_female must equal n")
        if len(self.age_hist) != AGE_BINS or any(b < 0 for b in self.age_hist):
            raise ValueError(f"age_hist must be {AGE_BINS} non-negative bins")
        if sum(self.age_hist) != self.n:
            raise ValueError("age_hist bins must sum to n")
        return self


class ModelSpecMsg(_Strict):
    kind: Literal["logistic-regression", "mlp3"]
    input_dim: int = Field(ge=1)
    hidden_dims: list[int]
    seed: int


class RegisterRequest(_Strict):
    client_id: str = Field(min_length=1, max_length=128, pattern=r"^[A-Za-z0-9_.-]+$")
    declared_n_samples: int = Field(ge=1)
    cohort_stats: CohortStatsMsg


class RegisterResponse(_Strict):
    token: str
    schema_digest: str
    model: ModelSpecMsg
    round: int
    phase: str


class ModelResponse(_Strict):
    round: int
    weights: list[str]
    phase: str


class UpdateRequest(_Strict):
    client_id: str = Field(min_length=1, max_length=128)
    round: int = Field(ge=0)
    weights: list[str]
    n_samples: int = Field(ge=1)
    local_epochs_used: int = Field(ge=1)
    # AUC of the fetched global model on the shared test set, reported with
    # the next submission (eval_round identifies which global model it rates).
    eval_round: int | None = None
    eval_auc: float | None = None
    # AUC of this client's own submitted model on the shared test set; feeds
    # the per-client comparison series in metrics snapshots.
    local_auc: float | None = None


class UpdateResponse(_Strict):
    status: Literal["accepted", "stale"]
    round: int


class ControlRequest(_Strict):
    action: Literal["start", "pause", "resume", "stop"]


class RunControlMsg(_Strict):
    phase: Literal["idle", "running", "paused", "finished"]
    round: int
    started_at: float | None = None


ControlResponse = RunControlMsg


class MetricsSnapshotMsg(_Strict):
    round: int
    global_auc: float | None
    client_aucs: dict[str, float]
    cohort_stats: dict[str, CohortStatsMsg]
    feature_dim: int
    stale_count: int
    n_updates: int


class MetricsResponse(MetricsSnapshotMsg):
    phase: str


class HistoryResponse(_Strict):
    snapshots: list[MetricsSnapshotMsg]


class HealthResponse(_Strict):
    status: Literal["ok"]
    round: int
    phase: str


class ErrorResponse(_Strict):
    detail: str


# endpoint -> (request model, response model); None means no body.
MESSAGE_SCHEMAS: dict[tuple[str, str], tuple[type | None, type]] = {
    ("POST", "/v1/register"): (RegisterRequest, RegisterResponse),
    ("GET", "/v1/model"): (None, ModelResponse),
    ("POST", "/v1/update"): (UpdateRequest, UpdateResponse),
    ("GET", "/v1/metrics"): (None, MetricsResponse),
    ("GET", "/v1/metrics/history"): (None, HistoryResponse),
    ("POST", "/v1/control"): (ControlRequest, ControlResponse),
    ("GET", "/v1/healthz"): (None, HealthResponse),
}

# Field names that would indicate row-level patient data leaking through.
FORBIDDEN_FIELDS = frozenset(
    {
        "records",
        "record",
        "rows",
        "row",
        "patients",
        "patient",
        "features",
        "feature_matrix",
        "matrix",
        "x",
        "y",
        "data",
        "values",
        "label",
        "labels",
    }
)


def _scan_keys(obj, path: str) -> None:
    if isinstance(obj, dict):
        for key, val in obj.items():
            if isinstance(key, str) and key.lower() in FORBIDDEN_FIELDS:
                raise ProtocolError(f"forbidden field {key!r} at {path}")
            _scan_keys(val, f"{path}.{key}")
    elif isinstance(obj, list):
        for i, val in enumerate(obj):
            _scan_keys(val, f"{path}[{i}]")


def validate_message(method: str, path: str, direction: str, body, status: int = 200):
    """Validate one recorded protocol message against the whitelist.

    direction is "request" or "response".  Error responses must carry only a
    detail string.  Raises ProtocolError on any violation."""
    key = (method.upper(), path)
    if key not in MESSAGE_SCHEMAS:
        raise ProtocolError(f"unknown endpoint {method} {path}")
    _scan_keys(body, f"{method} {path} {direction}")
    req_model, resp_model = MESSAGE_SCHEMAS[key]
    if direction == "request":
        model = req_model
        if model is None:
            if body not in (None, b"", ""):
                raise ProtocolError(f"{method} {path} takes no request body")
            return None
    elif direction == "response":
        model = ErrorResponse if status >= 400 else resp_model
    else:
        raise ValueError(f"direction must be request or response, got {direction!r}")
    try:
        return model.model_validate(body)
    except Exception as exc:
        raise ProtocolError(f"{method} {path} {direction} violates schema: {exc}") from exc
