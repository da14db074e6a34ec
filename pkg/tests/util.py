"""Shared helpers for the test suite."""

from __future__ import annotations

import json
import subprocess
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import httpx
import numpy as np

from fedtab.experiment import _free_port, _spawn, _wait_for
from fedtab.models import _sigmoid
from fedtab.rng import Stream
from fedtab.synthetic import GenConfig


def tiny_gen(**overrides) -> GenConfig:
    """A three-hospital city small enough for sub-second runs."""
    params = dict(
        total_patients=900,
        hospitals=("hosp_1", "hosp_2", "hosp_3"),
        shares=(0.4, 0.3, 0.3),
        positive_rates=(0.06, 0.06, 0.06),
        n_features=20,
        n_signal=8,
        test_size=300,
        missing_rate=0.05,
    )
    params.update(overrides)
    return GenConfig(**params)


def make_blobs(seed: int, n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Labeled matrix with a learnable linear-logistic signal; both classes
    guaranteed present."""
    s = Stream(seed)
    x = s.derive("x").normal(n * d).reshape(n, d)
    w = s.derive("w").normal(d)
    p = _sigmoid(x @ w * 0.8)
    y = (s.derive("y").uniform(n) < p).astype(np.float64)
    if y.sum() == 0:
        y[0] = 1.0
    if y.sum() == n:
        y[0] = 0.0
    return x, y


def pairwise_auc(scores, labels) -> float:
    """O(n^2) oracle: wins + half-ties over all positive/negative pairs."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    sp = s[y == 1]
    sn = s[y == 0]
    wins = (sp[:, None] > sn[None, :]).sum()
    ties = (sp[:, None] == sn[None, :]).sum()
    return float((wins + 0.5 * ties) / (sp.size * sn.size))


class RecordingProxy:
    """Reverse proxy that records every request/response JSON body passing
    between clients and the coordinator."""

    def __init__(self, upstream: str):
        self.upstream = upstream.rstrip("/")
        self.records: list[dict] = []
        self._lock = threading.Lock()
        proxy = self

        class Handler(BaseHTTPRequestHandler):
            def _forward(self):
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                headers = {}
                for key in ("Authorization", "Content-Type"):
                    if self.headers.get(key):
                        headers[key] = self.headers[key]
                resp = proxy._http.request(
                    self.command,
                    proxy.upstream + self.path,
                    content=raw,
                    headers=headers,
                )
                with proxy._lock:
                    proxy.records.append(
                        {
                            "method": self.command,
                            "path": self.path.split("?")[0],
                            "request": json.loads(raw) if raw else None,
                            "response": json.loads(resp.content) if resp.content else None,
                            "status": resp.status_code,
                        }
                    )
                self.send_response(resp.status_code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(resp.content)))
                self.end_headers()
                self.wfile.write(resp.content)

            do_GET = _forward
            do_POST = _forward

            def log_message(self, *args):  # keep test output quiet
                pass

        self._http = httpx.Client(timeout=30.0)
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def start(self) -> "RecordingProxy":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._http.close()

    def snapshot(self) -> list[dict]:
        with self._lock:
            return list(self.records)


class NetworkedRun:
    """Coordinator + client subprocesses over a real HTTP socket, with knobs
    the fault-injection and privacy scenarios need: per-client training
    configs, quorum below the client count, short round deadlines, and an
    optional proxy between clients and coordinator."""

    def __init__(
        self,
        city_dir,
        scratch,
        model: dict,
        train: dict,
        rounds: int,
        quorum: int | None = None,
        round_timeout_ms: int = 600_000,
        per_client_train: dict[str, dict] | None = None,
        record_traffic: bool = False,
        seed: int = 0,
    ):
        self.city_dir = Path(city_dir)
        self.scratch = Path(scratch)
        self.scratch.mkdir(parents=True, exist_ok=True)
        self.csvs = sorted(
            p for p in self.city_dir.glob("*.csv") if p.name != "test.csv"
        )
        self.port = _free_port()
        self.base = f"http://127.0.0.1:{self.port}"
        self.http = httpx.Client(timeout=10.0)
        self.procs: dict[str, subprocess.Popen] = {}
        self.event_log = self.scratch / "events.jsonl"

        coord_cfg = {
            "host": "127.0.0.1",
            "port": self.port,
            "model": model,
            "quorum": quorum if quorum is not None else len(self.csvs),
            "staleness_window": 0,
            "aggregation": "plain-mean",
            "round_timeout_ms": round_timeout_ms,
            "heartbeat_timeout_s": 120.0,
            "tick_ms": 20,
            "convergence": {"max_rounds": rounds, "weight_delta_tol": 0.0, "patience": 1},
            "schema_path": str(self.city_dir / "schema.json"),
            "test_path": str(self.city_dir / "test.csv"),
            "event_log_path": str(self.event_log),
        }
        coord_path = self.scratch / "coordinator.json"
        coord_path.write_text(json.dumps(coord_cfg, indent=2, sort_keys=True))
        self.procs["coordinator"] = _spawn(
            [sys.executable, "-m", "fedtab.coordinator.main", "--config", str(coord_path)],
            self.scratch / "coordinator.log",
        )
        _wait_for(self._healthy, 30.0, what="coordinator startup")

        self.proxy = RecordingProxy(self.base).start() if record_traffic else None
        # route our own control/metrics traffic through the proxy as well so
        # every message kind shows up in the recording
        self.query_base = self.proxy.url if self.proxy else self.base
        client_base = self.query_base
        for path in self.csvs:
            hid = path.stem
            cfg = {
                "client_id": hid,
                "coordinator_url": client_base,
                "data_path": str(path),
                "schema_path": str(self.city_dir / "schema.json"),
                "train": (per_client_train or {}).get(hid, train),
                "heartbeat_interval_s": 0.05,
                "test_path": str(self.city_dir / "test.csv"),
                "seed": seed,
            }
            cfg_path = self.scratch / f"client_{hid}.json"
            cfg_path.write_text(json.dumps(cfg, indent=2, sort_keys=True))
            self.procs[hid] = _spawn(
                [sys.executable, "-m", "fedtab.client", "--config", str(cfg_path)],
                self.scratch / f"client_{hid}.log",
            )
        _wait_for(self._all_registered, 60.0, what="client registration")

    def _healthy(self):
        try:
            r = self.http.get(f"{self.base}/v1/healthz")
            return True if r.status_code == 200 else None
        except httpx.TransportError:
            return None

    def _all_registered(self):
        stats = self.http.get(f"{self.query_base}/v1/metrics").json()["cohort_stats"]
        return True if len(stats) == len(self.csvs) else None

    def start(self):
        self.http.post(
            f"{self.query_base}/v1/control", json={"action": "start"}
        ).raise_for_status()

    def metrics(self) -> dict:
        return self.http.get(f"{self.query_base}/v1/metrics").json()

    def history(self) -> list[dict]:
        return self.http.get(f"{self.query_base}/v1/metrics/history").json()["snapshots"]

    def wait_finished(self, timeout: float):
        _wait_for(
            lambda: True if self.metrics()["phase"] == "finished" else None,
            timeout,
            interval=0.05,
            what="run completion",
        )

    def kill_client(self, hid: str):
        self.procs[hid].kill()
        self.procs[hid].wait(timeout=10.0)

    def wait_clients(self, timeout: float = 60.0) -> dict[str, int]:
        codes = {}
        for hid, proc in self.procs.items():
            if hid == "coordinator":
                continue
            if proc.poll() is None:
                proc.wait(timeout=timeout)
            codes[hid] = proc.returncode
        return codes

    def close(self):
        for proc in self.procs.values():
            if proc.poll() is None:
                proc.terminate()
        for proc in self.procs.values():
            try:
                proc.wait(timeout=10.0)
            except subprocess.TimeoutExpired:
                proc.kill()
        if self.proxy:
            self.proxy.stop()
        self.http.close()
