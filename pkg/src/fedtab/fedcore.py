"""Pure federated-averaging logic: aggregation, round bookkeeping, and the
single-process simulation loop.

Everything here is a deterministic state machine (state in, new state out),
so the same code backs both in-process simulation and the network
coordinator, and replaying an event log reconstructs identical states.

Aggregation sums in extended precision over updates sorted by client id:
the result is independent of arrival order, the plain mean of m identical
vectors returns them bit for bit, and sample weighting with equal counts
reduces to exactly the plain-mean code path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import metrics
from .exceptions import AggregationError
from .models import (
    ModelSpec,
    ParameterVector,
    TrainConfig,
    encode_values,
    predict_batch,
    train_local,
)
from .rng import Stream, fnv1a64

PLAIN_MEAN = "plain-mean"
SAMPLE_WEIGHTED = "sample-weighted"

COLLECTING = "collecting"
AGGREGATED = "aggregated"


@dataclass(frozen=True)
class ModelUpdate:
    client_id: str
    round: int
    weights: ParameterVector
    n_samples: int
    local_epochs_used: int = 1

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.local_epochs_used < 1:
            raise ValueError("local_epochs_used must be >= 1")


@dataclass(frozen=True)
class ConvergenceCriterion:
    max_rounds: int
    weight_delta_tol: float = 0.0
    patience: int = 1

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.weight_delta_tol < 0:
            raise ValueError("weight_delta_tol must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_rounds": self.max_rounds,
            "weight_delta_tol": self.weight_delta_tol,
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceCriterion":
        return cls(
            max_rounds=int(d["max_rounds"]),
            weight_delta_tol=float(d.get("weight_delta_tol", 0.0)),
            patience=int(d.get("patience", 1)),
        )


@dataclass(frozen=True)
class RoundState:
    """Coordinator view of round `round`: current global weights plus the
    updates admitted so far.  `received` maps client_id to its latest update
    (latest wins within a round); `calm_rounds` counts consecutive advances
    whose weight delta stayed under tolerance."""

    round: int
    global_weights: ParameterVector
    received: Mapping[str, ModelUpdate] = field(default_factory=dict)
    status: str = COLLECTING
    min_clients: int = 1
    staleness_window: int = 0
    stale_count: int = 0
    calm_rounds: int = 0


def initial_state(
    weights: ParameterVector, min_clients: int = 1, staleness_window: int = 0
) -> RoundState:
    if min_clients < 1:
        raise ValueError("min_clients must be >= 1")
    if staleness_window < 0:
        raise ValueError("staleness_window must be >= 0")
    return RoundState(
        round=0,
        global_weights=weights,
        received={},
        min_clients=min_clients,
        staleness_window=staleness_window,
    )


def accept_update(state: RoundState, update: ModelUpdate) -> RoundState:
    """Admit an update into the current round, or count it as stale.

    Stale means older than round - staleness_window; it is telemetry, not an
    error.  A second update from the same client replaces the first."""
    if update.weights.layout != state.global_weights.layout:
        raise AggregationError(
            f"update from {update.client_id!r} has an incompatible weight layout"
        )
    if update.round < state.round - state.staleness_window:
        return replace(state, stale_count=state.stale_count + 1)
    received = dict(state.received)
    received[update.client_id] = update
    return replace(state, received=received)


def aggregate(updates: Iterable[ModelUpdate], mode: str = PLAIN_MEAN) -> ParameterVector:
    """Average the update weights.

    plain-mean: elementwise (1/m) * sum; sample-weighted: sum(n_i * w_i) /
    sum(n_i) with counts reduced by their gcd.  Both paths accumulate in
    extended precision over client_id-sorted updates.
    """
    ups = sorted(updates, key=lambda u: u.client_id)
    if not ups:
        raise ValueError("aggregate needs at least one update")
    layout = ups[0].weights.layout
    for u in ups[1:]:
        if u.weights.layout != layout:
            raise AggregationError(
                f"updates from {ups[0].client_id!r} and {u.client_id!r} "
                "have incompatible layouts"
            )
    if mode == PLAIN_MEAN:
        coeffs = [1] * len(ups)
    elif mode == SAMPLE_WEIGHTED:
        g = math.gcd(*(u.n_samples for u in ups))
        coeffs = [u.n_samples // g for u in ups]
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    stack = np.stack([u.weights.values for u in ups]).astype(np.longdouble)
    scaled = stack * np.asarray(coeffs, dtype=np.longdouble)[:, None]
    mean = scaled.sum(axis=0) / np.longdouble(sum(coeffs))
    return ParameterVector(mean.astype(np.float64), layout)


def try_advance(
    state: RoundState,
    mode: str,
    criterion: ConvergenceCriterion,
    force: bool = False,
) -> tuple[RoundState, bool, bool]:
    """Aggregate and start the next round if the quorum is met (or `force`
    with at least one update, for deadline-driven advancement).

    Returns (new state, advanced, converged).  Converged when the L-inf
    weight delta stayed under tolerance for `patience` consecutive rounds or
    the round cap is reached; a converged state is terminal."""
    if state.status == AGGREGATED:
        return state, False, True
    m = len(state.received)
    if m < state.min_clients and not (force and m >= 1):
        return state, False, False
    new_weights = aggregate(state.received.values(), mode)
    delta = float(np.max(np.abs(new_weights.values - state.global_weights.values)))
    calm = state.calm_rounds + 1 if delta < criterion.weight_delta_tol else 0
    new_round = state.round + 1
    converged = calm >= criterion.patience or new_round >= criterion.max_rounds
    new_state = replace(
        state,
        round=new_round,
        global_weights=new_weights,
        received={},
        status=AGGREGATED if converged else COLLECTING,
        calm_rounds=calm,
    )
    return new_state, True, converged


def round_seed(seed: int, round_index: int, client_id: str) -> int:
    """Seed for one client's local training in one round; shared by the
    simulation loop and the network client so both produce identical runs."""
    return Stream(seed).derive("round", round_index, client_id).key


def weights_digest(weights: ParameterVector) -> str:
    """FNV-1a 64 over the comma-joined decimal wire encoding of the vector."""
    payload = ",".join(encode_values(weights.values)).encode("ascii")
    return format(fnv1a64(payload), "016x")


@dataclass(frozen=True)
class FedConfig:
    aggregation: str = PLAIN_MEAN
    min_clients: int = 1
    staleness_window: int = 0
    criterion: ConvergenceCriterion = ConvergenceCriterion(max_rounds=30)

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "min_clients": self.min_clients,
            "staleness_window": self.staleness_window,
            "criterion": self.criterion.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FedConfig":
        return cls(
            aggregation=d.get("aggregation", PLAIN_MEAN),
            min_clients=int(d.get("min_clients", 1)),
            staleness_window=int(d.get("staleness_window", 0)),
            criterion=ConvergenceCriterion.from_dict(
                d.get("criterion", {"max_rounds": 30})
            ),
        )


def simulate(
    shards: Sequence[tuple[str, np.ndarray, np.ndarray]],
    test: tuple[np.ndarray, np.ndarray],
    spec: ModelSpec,
    train_config: TrainConfig,
    fed_config: FedConfig,
    seed: int,
    initial: ParameterVector | None = None,
) -> tuple[list[dict], ParameterVector]:
    """Single-process federated run over (client_id, X, y) shards.

    Each round broadcasts the global weights, trains every client locally
    with its round seed, admits all updates, and advances.  Returns the
    per-round trace and the final global weights; deterministic per seed.
    """
    if not shards:
        raise ValueError("simulate needs at least one shard")
    from .models import init_model  # local import to keep module load light

    weights = initial if initial is not None else init_model(spec)
    state = initial_state(
        weights,
        min_clients=min(fed_config.min_clients, len(shards)),
        staleness_window=fed_config.staleness_window,
    )
    test_x, test_y = test
    trace: list[dict] = []
    converged = False
    while not converged:
        t = state.round
        for client_id, x, y in shards:
            local = train_local(
                state.global_weights,
                spec,
                train_config,
                x,
                y,
                rng_seed=round_seed(seed, t, client_id),
            )
            state = accept_update(
                state,
                ModelUpdate(
                    client_id=client_id,
                    round=t,
                    weights=local,
                    n_samples=x.shape[0],
                    local_epochs_used=train_config.local_epochs,
                ),
            )
        n_updates = len(state.received)
        state, advanced, converged = try_advance(
            state, fed_config.aggregation, fed_config.criterion
        )
        if not advanced:
            raise AggregationError("simulation stalled: quorum exceeds client count")
        scores = predict_batch(state.global_weights, spec, test_x)
        trace.append(
            {
                "round": state.round,
                "global_weights_digest": weights_digest(state.global_weights),
                "test_auc": metrics.auc(scores, test_y),
                "n_updates": n_updates,
                "n_stale": state.stale_count,
            }
        )
    return trace, state.global_weights


def write_trace(trace: list[dict], path) -> None:
    """Trace export: JSON lines, one object per round."""
    with open(path, "w") as fh:
        for row in trace:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
