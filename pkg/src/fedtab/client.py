"""Hospital client daemon.

Runs next to a hospital's CSV extract, prepares the local training matrix,
and participates in the federated run: fetch global weights, train locally,
submit the updated weights plus telemetry.  Raw records never leave the
process; only weight vectors, counts, and AUC numbers go on the wire.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from . import metrics
from .data import (
    MEAN,
    Cohort,
    FeatureSchema,
    ImputePolicy,
    apply_impute,
    fit_impute,
    ingest_csv,
    select_features,
)
from .exceptions import ConfigError
from .fedcore import round_seed
from .models import (
    ModelSpec,
    ParameterVector,
    TrainConfig,
    decode_values,
    encode_values,
    predict_batch,
    train_local,
)

log = logging.getLogger("fedtab.client")


@dataclass
class ClientConfig:
    client_id: str
    coordinator_url: str
    data_path: str
    schema_path: str
    impute_strategy: str = MEAN
    train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.05))
    heartbeat_interval_s: float = 1.0
    test_path: str | None = None
    seed: int = 0
    max_backoff_s: float = 30.0

    @classmethod
    def from_dict(cls, d: dict) -> "ClientConfig":
        try:
            return cls(
                client_id=d["client_id"],
                coordinator_url=d["coordinator_url"].rstrip("/"),
                data_path=d["data_path"],
                schema_path=d["schema_path"],
                impute_strategy=d.get("impute_strategy", MEAN),
                train=TrainConfig.from_dict(d.get("train", {"learning_rate": 0.05})),
                heartbeat_interval_s=float(d.get("heartbeat_interval_s", 1.0)),
                test_path=d.get("test_path"),
                seed=int(d.get("seed", 0)),
                max_backoff_s=float(d.get("max_backoff_s", 30.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"client config missing required key {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "ClientConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def local_pipeline(
    cohort: Cohort, strategy: str | dict = MEAN
) -> tuple[np.ndarray, np.ndarray, ImputePolicy]:
    """Fit imputation on the local cohort, apply it, and produce the
    training matrix.  Both the client daemon and the in-process experiment
    runner use this, so the two paths prepare bitwise-identical data."""
    policy = fit_impute(cohort, strategy)
    completed = apply_impute(cohort, policy)
    return select_features(completed), completed.labels(), policy


class ClientRunner:
    def __init__(self, config: ClientConfig):
        self.config = config
        self.schema = FeatureSchema.load(config.schema_path)
        self.cohort = ingest_csv(config.data_path, self.schema, hospital_id=config.client_id)
        self.x, self.y, self.policy = local_pipeline(self.cohort, config.impute_strategy)
        self.test_xy: tuple[np.ndarray, np.ndarray] | None = None
        if config.test_path:
            test = ingest_csv(config.test_path, self.schema)
            completed = apply_impute(test, self.policy)
            self.test_xy = (select_features(completed), completed.labels())
        self.spec: ModelSpec | None = None
        self.token: str | None = None

    # --------------------------------------------------------------- wire IO

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.token}"} if self.token else {}

    def _register(self, http: httpx.Client) -> dict:
        body = {
            "client_id": self.config.client_id,
            "declared_n_samples": len(self.cohort.records),
            "cohort_stats": self.cohort.stats(),
        }
        resp = http.post(f"{self.config.coordinator_url}/v1/register", json=body)
        resp.raise_for_status()
        return resp.json()

    def _fetch_model(self, http: httpx.Client) -> dict | None:
        resp = http.get(f"{self.config.coordinator_url}/v1/model", headers=self._headers())
        if resp.status_code == 409:  # run not started yet
            return None
        resp.raise_for_status()
        return resp.json()

    def _submit(self, http: httpx.Client, body: dict) -> dict:
        resp = http.post(
            f"{self.config.coordinator_url}/v1/update",
            json=body,
            headers=self._headers(),
        )
        resp.raise_for_status()
        return resp.json()

    # ------------------------------------------------------------- main loop

    def _auc_on_test(self, weights: ParameterVector) -> float | None:
        if self.test_xy is None:
            return None
        scores = predict_batch(weights, self.spec, self.test_xy[0])
        try:
            return metrics.auc(scores, self.test_xy[1])
        except Exception:
            return None

    def run(self) -> int:
        cfg = self.config
        backoff = 0.5
        last_trained_round = -1
        with httpx.Client(timeout=30.0) as http:
            while True:
                try:
                    reg = self._register(http)
                    break
                except httpx.TransportError:
                    log.info("coordinator unreachable; retrying in %.1fs", backoff)
                    time.sleep(backoff)
                    backoff = min(backoff * 2, cfg.max_backoff_s)
            self.token = reg["token"]
            self.spec = ModelSpec.from_dict(reg["model"])
            if self.spec.input_dim != self.x.shape[1]:
                log.error(
                    "model expects %d features but local matrix has %d",
                    self.spec.input_dim,
                    self.x.shape[1],
                )
                return 2
            if reg["schema_digest"] and reg["schema_digest"] != self.schema.digest():
                log.error(
                    "schema digest mismatch: coordinator=%s local=%s",
                    reg["schema_digest"],
                    self.schema.digest(),
                )
                return 2
            log.info("registered as %s at round %d", cfg.client_id, reg["round"])

            backoff = 0.5
            while True:
                try:
                    model = self._fetch_model(http)
                except httpx.TransportError:
                    log.info("fetch failed; retrying in %.1fs", backoff)
                    time.sleep(backoff)
                    backoff = min(backoff * 2, cfg.max_backoff_s)
                    continue
                backoff = 0.5
                if model is None:
                    time.sleep(cfg.heartbeat_interval_s)
                    continue
                if model["phase"] == "finished":
                    log.info("run finished at round %d", model["round"])
                    return 0
                rnd = model["round"]
                if model["phase"] != "running" or rnd <= last_trained_round:
                    time.sleep(cfg.heartbeat_interval_s)
                    continue

                layout = self.spec.layout()
                global_w = ParameterVector(decode_values(model["weights"]), layout)
                trained = train_local(
                    global_w,
                    self.spec,
                    cfg.train,
                    self.x,
                    self.y,
                    rng_seed=round_seed(cfg.seed, rnd, cfg.client_id),
                )
                body = {
                    "client_id": cfg.client_id,
                    "round": rnd,
                    "weights": encode_values(trained.values),
                    "n_samples": len(self.y),
                    "local_epochs_used": cfg.train.local_epochs,
                    "eval_round": rnd,
                    "eval_auc": self._auc_on_test(global_w),
                    "local_auc": self._auc_on_test(trained),
                }
                try:
                    result = self._submit(http, body)
                except httpx.TransportError:
                    log.info("submit failed; will refetch and retry")
                    time.sleep(backoff)
                    backoff = min(backoff * 2, cfg.max_backoff_s)
                    continue
                last_trained_round = rnd
                log.info("round %d update %s", rnd, result["status"])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedtab-client",
        description="Hospital client daemon for federated training.",
    )
    parser.add_argument("--config", required=True, help="path to client JSON config")
    args = parser.parse_args(argv)
    level = os.environ.get("FEDTAB_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    config = ClientConfig.from_json(args.config)
    return ClientRunner(config).run()


if __name__ == "__main__":
    raise SystemExit(main())
