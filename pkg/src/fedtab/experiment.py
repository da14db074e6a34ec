"""Experiment harness: local baselines, federated run, centralized run.

`fedtab-exp run` executes a plan over several seeds and writes a report
with one row per setting — each hospital trained alone, all hospitals
federated, and all data pooled centrally — every setting evaluated on the
same fixed test cohort.  The federated setting can run fully in-process
("simulated") or over HTTP with one coordinator and one client process per
hospital ("networked"); both paths share the same aggregation core and the
same per-round seeds, so a given plan and seed produce the same model either
way.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import socket
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from . import fedcore, metrics
from .client import local_pipeline
from .data import MEAN, Cohort, FeatureSchema, select_features
from .exceptions import ConfigError, ExperimentError
from .fedcore import ConvergenceCriterion, FedConfig
from .models import MLP3, ModelSpec, TrainConfig, predict_batch
from .synthetic import GenConfig, generate_synthetic_city, load_city, write_city

log = logging.getLogger("fedtab.experiment")

FEDERATED = "Federated Training"
CENTRALIZED = "Centralized Training"


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run: data source, model, training budget, seeds."""

    model: dict
    train: TrainConfig
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    gen: GenConfig | None = None
    data_dir: str | None = None
    rounds: int = 20
    aggregation: str = fedcore.PLAIN_MEAN
    weight_delta_tol: float = 0.0
    patience: int = 1
    impute_strategy: str = MEAN
    name: str = "default"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("plan needs at least one seed")
        if (self.gen is None) == (self.data_dir is None):
            raise ConfigError("plan needs exactly one of 'gen' or 'data_dir'")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        return cls(
            model=dict(d["model"]),
            train=TrainConfig.from_dict(d["train"]),
            seeds=tuple(int(s) for s in d.get("seeds", (0, 1, 2, 3, 4))),
            gen=GenConfig.from_dict(d["gen"]) if "gen" in d else None,
            data_dir=d.get("data_dir"),
            rounds=int(d.get("rounds", 20)),
            aggregation=d.get("aggregation", fedcore.PLAIN_MEAN),
            weight_delta_tol=float(d.get("weight_delta_tol", 0.0)),
            patience=int(d.get("patience", 1)),
            impute_strategy=d.get("impute_strategy", MEAN),
            name=d.get("name", "default"),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def fed_config(self, n_clients: int) -> FedConfig:
        return FedConfig(
            aggregation=self.aggregation,
            min_clients=n_clients,
            staleness_window=0,
            criterion=ConvergenceCriterion(
                max_rounds=self.rounds,
                weight_delta_tol=self.weight_delta_tol,
                patience=self.patience,
            ),
        )

    def model_spec(self, schema: FeatureSchema, seed: int) -> ModelSpec:
        d = dict(self.model)
        d.setdefault("input_dim", schema.input_dim)
        base = ModelSpec.from_dict(d)
        return dataclasses.replace(base, seed=base.seed + seed)


def default_plan(**overrides) -> ExperimentPlan:
    """Five synthetic hospitals, a 3-weight-layer MLP, five seeds."""
    params = dict(
        model={"kind": MLP3, "hidden_dims": [32, 16]},
        train=TrainConfig(learning_rate=0.05, local_epochs=1, batch_size=64),
        gen=GenConfig(),
        rounds=20,
    )
    params.update(overrides)
    return ExperimentPlan(**params)


def _display_name(hospital_id: str) -> str:
    return f"{hospital_id.replace('_', ' ').title()} Local Training"


def _pretty_city(cohorts: list[Cohort]) -> list[Cohort]:
    return sorted(cohorts, key=lambda c: c.hospital_id)


def _run_seed(
    plan: ExperimentPlan, mode: str, city_dir: Path, seed: int, scratch: Path
) -> dict[str, dict]:
    """All settings for one seed → {setting: {auc, n_train, n_pos}}."""
    cohorts, test, schema = load_city(city_dir)
    cohorts = _pretty_city(cohorts)
    spec = plan.model_spec(schema, seed)
    test_xy = (select_features(test, schema), test.labels())
    fed_single = plan.fed_config(1)

    shards = {}
    for cohort in cohorts:
        x, y, _ = local_pipeline(cohort, plan.impute_strategy)
        shards[cohort.hospital_id] = (x, y)

    results: dict[str, dict] = {}

    def run_setting(name, fn):
        try:
            results[name] = fn()
        except Exception as exc:
            raise ExperimentError(f"setting '{name}' failed: {exc}") from exc

    for cohort in cohorts:
        hid = cohort.hospital_id
        x, y = shards[hid]

        def run_local(x=x, y=y, hid=hid):
            trace, _ = fedcore.simulate(
                [(hid, x, y)], test_xy, spec, plan.train, fed_single, seed
            )
            return {"auc": trace[-1]["test_auc"], "n_train": len(y), "n_pos": int(y.sum())}

        run_setting(_display_name(hid), run_local)

    def run_federated():
        ordered = [(hid, x, y) for hid, (x, y) in sorted(shards.items())]
        n_train = sum(len(y) for _, _, y in ordered)
        n_pos = int(sum(y.sum() for _, _, y in ordered))
        if mode == "simulated":
            trace, _ = fedcore.simulate(
                ordered, test_xy, spec, plan.train, plan.fed_config(len(ordered)), seed
            )
            auc = trace[-1]["test_auc"]
        else:
            auc = _run_networked(plan, spec, schema, city_dir, seed, scratch)
        return {"auc": auc, "n_train": n_train, "n_pos": n_pos}

    run_setting(FEDERATED, run_federated)

    def run_centralized():
        records = [r for cohort in cohorts for r in cohort.records]
        pooled = Cohort(hospital_id="pooled", records=records, schema=schema)
        x, y, _ = local_pipeline(pooled, plan.impute_strategy)
        trace, _ = fedcore.simulate(
            [("pooled", x, y)], test_xy, spec, plan.train, fed_single, seed
        )
        return {"auc": trace[-1]["test_auc"], "n_train": len(y), "n_pos": int(y.sum())}

    run_setting(CENTRALIZED, run_centralized)
    return results


# ----------------------------------------------------------------- networked


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for(predicate, timeout: float, interval: float = 0.1, what: str = "condition"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = predicate()
        if value is not None:
            return value
        time.sleep(interval)
    raise ExperimentError(f"timed out after {timeout:.0f}s waiting for {what}")


def _spawn(args: list[str], log_path: Path) -> subprocess.Popen:
    fh = open(log_path, "w")
    return subprocess.Popen(args, stdout=fh, stderr=subprocess.STDOUT)


def _run_networked(
    plan: ExperimentPlan,
    spec: ModelSpec,
    schema: FeatureSchema,
    city_dir: Path,
    seed: int,
    scratch: Path,
    timeout: float = 420.0,
) -> float:
    """Federated run over HTTP: coordinator + one client process per
    hospital.  Returns the final global-model AUC archived by the
    coordinator."""
    scratch.mkdir(parents=True, exist_ok=True)
    schema_path = city_dir / "schema.json"
    test_path = city_dir / "test.csv"
    hospital_csvs = sorted(
        p for p in city_dir.glob("*.csv") if p.name != "test.csv"
    )
    if not hospital_csvs:
        raise ExperimentError(f"no hospital CSVs under {city_dir}")
    port = _free_port()
    base = f"http://127.0.0.1:{port}"

    coord_cfg = {
        "host": "127.0.0.1",
        "port": port,
        "model": spec.to_dict(),
        "quorum": len(hospital_csvs),
        "staleness_window": 0,
        "aggregation": plan.aggregation,
        "round_timeout_ms": 600_000,
        "heartbeat_timeout_s": 120.0,
        "tick_ms": 20,
        "convergence": {
            "max_rounds": plan.rounds,
            "weight_delta_tol": plan.weight_delta_tol,
            "patience": plan.patience,
        },
        "schema_path": str(schema_path),
        "test_path": str(test_path),
        "event_log_path": str(scratch / "events.jsonl"),
    }
    coord_path = scratch / "coordinator.json"
    coord_path.write_text(json.dumps(coord_cfg, indent=2, sort_keys=True))

    procs: list[subprocess.Popen] = []
    try:
        procs.append(
            _spawn(
                [sys.executable, "-m", "fedtab.coordinator.main", "--config", str(coord_path)],
                scratch / "coordinator.log",
            )
        )
        with httpx.Client(timeout=10.0) as http:

            def healthy():
                try:
                    r = http.get(f"{base}/v1/healthz")
                    return True if r.status_code == 200 else None
                except httpx.TransportError:
                    return None

            _wait_for(healthy, 30.0, what="coordinator startup")

            for path in hospital_csvs:
                hid = path.stem
                client_cfg = {
                    "client_id": hid,
                    "coordinator_url": base,
                    "data_path": str(path),
                    "schema_path": str(schema_path),
                    "impute_strategy": plan.impute_strategy,
                    "train": plan.train.to_dict(),
                    "heartbeat_interval_s": 0.05,
                    "test_path": str(test_path),
                    "seed": seed,
                }
                cfg_path = scratch / f"client_{hid}.json"
                cfg_path.write_text(json.dumps(client_cfg, indent=2, sort_keys=True))
                procs.append(
                    _spawn(
                        [sys.executable, "-m", "fedtab.client", "--config", str(cfg_path)],
                        scratch / f"client_{hid}.log",
                    )
                )

            def all_registered():
                r = http.get(f"{base}/v1/metrics")
                stats = r.json()["cohort_stats"]
                return True if len(stats) == len(hospital_csvs) else None

            _wait_for(all_registered, 60.0, what="client registration")
            http.post(f"{base}/v1/control", json={"action": "start"}).raise_for_status()

            def finished():
                r = http.get(f"{base}/v1/metrics")
                return True if r.json()["phase"] == "finished" else None

            _wait_for(finished, timeout, what="run completion")
            history = http.get(f"{base}/v1/metrics/history").json()["snapshots"]
        if not history:
            raise ExperimentError("networked run finished with no metrics snapshots")
        auc = history[-1]["global_auc"]
        if auc is None:
            raise ExperimentError("coordinator did not archive a global AUC")
        for proc in procs[1:]:
            proc.wait(timeout=30.0)
        return float(auc)
    finally:
        for proc in procs:
            if proc.poll() is None:
                proc.terminate()
        for proc in procs:
            try:
                proc.wait(timeout=10.0)
            except subprocess.TimeoutExpired:
                proc.kill()


# -------------------------------------------------------------------- report


def _summaries(values: list[float]) -> tuple[float, float | None, float | None]:
    mean, std = metrics.summarize(values)
    stderr = None if std is None else std / len(values) ** 0.5
    return mean, std, stderr


def run_experiment(plan: ExperimentPlan, mode: str, out_dir) -> dict:
    if mode not in ("simulated", "networked"):
        raise ConfigError(f"unknown mode {mode!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    per_setting: dict[str, list[float]] = {}
    meta: dict[str, dict] = {}
    for seed in plan.seeds:
        if plan.gen is not None:
            city_dir = out / "data" / f"seed_{seed}"
            if not (city_dir / "schema.json").exists():
                cohorts, test, schema = generate_synthetic_city(plan.gen, seed)
                write_city(city_dir, cohorts, test, schema)
        else:
            city_dir = Path(plan.data_dir)
        log.info("seed %d: running settings (%s mode)", seed, mode)
        results = _run_seed(plan, mode, city_dir, seed, out / "runs" / f"seed_{seed}")
        for name, r in results.items():
            per_setting.setdefault(name, []).append(r["auc"])
            meta.setdefault(name, {"n_train": r["n_train"], "n_pos": r["n_pos"]})

    rows = []
    for name, values in per_setting.items():
        mean, std, stderr = _summaries(values)
        rows.append(
            {
                "setting": name,
                "auc_mean": mean,
                "auc_std": std,
                "auc_stderr": stderr,
                "n_train": meta[name]["n_train"],
                "n_pos_rate": meta[name]["n_pos"] / meta[name]["n_train"],
            }
        )
    report = {
        "plan_name": plan.name,
        "mode": mode,
        "seeds": list(plan.seeds),
        "rows": rows,
        "per_seed": per_setting,
    }
    emit_report(report, "csv", out / "report.csv")
    emit_report(report, "json", out / "report.json")
    emit_report(report, "markdown-table", out / "report.md")
    return report


_CSV_FIELDS = ["setting", "auc_mean", "auc_std", "auc_stderr", "n_train", "n_pos_rate"]


def _g17(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_report(report: dict, fmt: str, path) -> Path:
    path = Path(path)
    rows = report["rows"]
    if not rows:
        raise ValueError("report has no rows")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_FIELDS)
            for row in rows:
                writer.writerow([_g17(row[k]) for k in _CSV_FIELDS])
    elif fmt == "json":
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    elif fmt == "markdown-table":
        lines = ["| Setting | AUC Mean | AUC Std. |", "| --- | --- | --- |"]
        for row in rows:
            std = "" if row["auc_std"] is None else f"{row['auc_std']:.4f}"
            lines.append(f"| {row['setting']} | {row['auc_mean']:.4f} | {std} |")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


# ----------------------------------------------------------------------- CLI


def _cmd_run(args) -> int:
    plan = ExperimentPlan.from_json(args.plan)
    report = run_experiment(plan, args.mode, args.out)
    for row in report["rows"]:
        std = "n/a" if row["auc_std"] is None else f"{row['auc_std']:.4f}"
        print(f"{row['setting']:<36} AUC {row['auc_mean']:.4f} (std {std})")
    return 0


def _cmd_gen_data(args) -> int:
    d = json.loads(Path(args.config).read_text())
    seed = int(d.pop("seed", 0))
    config = GenConfig.from_dict(d)
    cohorts, test, schema = generate_synthetic_city(config, seed)
    write_city(args.out, cohorts, test, schema)
    for cohort in cohorts:
        stats = cohort.stats()
        print(f"{cohort.hospital_id}: n={stats['n']} positives={stats['n_pos']}")
    print(f"test: n={len(test.records)} positives={int(test.labels().sum())}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedtab-exp", description="Federated training experiment harness."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment plan")
    p_run.add_argument("--plan", required=True, help="path to plan JSON")
    p_run.add_argument("--mode", choices=["simulated", "networked"], default="simulated")
    p_run.add_argument("--out", required=True, help="output directory for the report")
    p_run.set_defaults(fn=_cmd_run)

    p_gen = sub.add_parser("gen-data", help="generate a synthetic hospital city")
    p_gen.add_argument("--config", required=True, help="path to generator JSON config")
    p_gen.add_argument("--out", required=True, help="output directory for CSVs")
    p_gen.set_defaults(fn=_cmd_gen_data)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
