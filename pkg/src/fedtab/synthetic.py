"""Synthetic multi-hospital cohort generator.

Patients are drawn from a shared linear-logistic ground truth over 119
features (continuous features in z-scored units, discrete ones as small
integer codes), with a mild per-hospital mean shift on the continuous
columns.  Labels are sampled from the ground-truth probabilities and each
hospital is rejection-sampled to hit its target positive rate exactly, so a
learnable city-wide signal exists by construction.  Everything is driven by
the package PRNG: one seed reproduces the city byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    CONTINUOUS,
    DISCRETE,
    Cohort,
    FeatureDef,
    FeatureSchema,
    PatientRecord,
    export_csv,
    ingest_csv,
)
from .exceptions import GenerationError
from .models import _sigmoid
from .rng import Stream

_NAMED_FEATURES: tuple[tuple[str, str, tuple[float, ...]], ...] = (
    ("sbp", CONTINUOUS, ()),
    ("dbp", CONTINUOUS, ()),
    ("bmi", CONTINUOUS, ()),
    ("ldl_chol", CONTINUOUS, ()),
    ("hdl_chol", CONTINUOUS, ()),
    ("glucose", CONTINUOUS, ()),
    ("antihypertensive", DISCRETE, (0.0, 1.0)),
    ("prior_coronary", DISCRETE, (0.0, 1.0)),
    ("atrial_fib", DISCRETE, (0.0, 1.0)),
    ("smoking", DISCRETE, (0.0, 1.0, 2.0)),
)

_BATCH = 4096


@dataclass(frozen=True)
class GenConfig:
    total_patients: int = 20000
    hospitals: tuple[str, ...] = (
        "hospital_A",
        "hospital_B",
        "hospital_C",
        "hospital_D",
        "hospital_E",
    )
    shares: tuple[float, ...] = (0.50, 0.20, 0.14, 0.08, 0.08)
    positive_rates: tuple[float, ...] = (0.035, 0.035, 0.035, 0.008, 0.008)
    n_features: int = 119
    test_size: int = 4000
    missing_rate: float = 0.05
    covariate_shift: float = 0.25
    base_rate: float = 0.03
    n_signal: int = 24
    signal_scale: float = 2.4
    label_name: str = "stroke"

    def __post_init__(self):
        if self.total_patients < len(self.hospitals) or self.test_size < 1:
            raise GenerationError("cohort sizes must be positive")
        if len(self.shares) != len(self.hospitals) or len(self.positive_rates) != len(
            self.hospitals
        ):
            raise GenerationError("shares and positive_rates must match hospitals")
        if not math.isclose(sum(self.shares), 1.0, abs_tol=1e-9):
            raise GenerationError("hospital shares must sum to 1")
        if any(not 0.0 < r < 1.0 for r in self.positive_rates):
            raise GenerationError("positive rates must lie in (0, 1)")
        object.__setattr__(self, "hospitals", tuple(self.hospitals))
        object.__setattr__(self, "shares", tuple(float(s) for s in self.shares))
        object.__setattr__(
            self, "positive_rates", tuple(float(r) for r in self.positive_rates)
        )

    def to_dict(self) -> dict:
        return {
            "total_patients": self.total_patients,
            "hospitals": list(self.hospitals),
            "shares": list(self.shares),
            "positive_rates": list(self.positive_rates),
            "n_features": self.n_features,
            "test_size": self.test_size,
            "missing_rate": self.missing_rate,
            "covariate_shift": self.covariate_shift,
            "base_rate": self.base_rate,
            "n_signal": self.n_signal,
            "signal_scale": self.signal_scale,
            "label_name": self.label_name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        kwargs = dict(d)
        for key in ("hospitals", "shares", "positive_rates"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def build_schema(config: GenConfig) -> FeatureSchema:
    feats: list[FeatureDef] = []
    for name, kind, domain in _NAMED_FEATURES[: config.n_features]:
        feats.append(FeatureDef(name, kind, domain))
    for i in range(len(feats) + 1, config.n_features + 1):
        if i % 3 == 0:
            feats.append(FeatureDef(f"risk_factor_{i:03d}", DISCRETE, (0.0, 1.0)))
        else:
            feats.append(FeatureDef(f"risk_factor_{i:03d}", CONTINUOUS))
    return FeatureSchema(tuple(feats), label_name=config.label_name)


class _GroundTruth:
    """Feature distributions plus the logistic labelling model."""

    def __init__(self, config: GenConfig, schema: FeatureSchema, seed: int):
        self.config = config
        self.schema = schema
        d = config.n_features
        master = Stream(seed).derive("ground-truth")

        self.kinds = [f.kind for f in schema.features]
        self.domains = [f.domain for f in schema.features]
        # Per-feature Bernoulli/categorical parameters for discrete columns.
        prev = master.derive("prevalence").uniform(d)
        self.theta = 0.08 + 0.4 * prev
        self.cat_cum: list[np.ndarray | None] = []
        for j, f in enumerate(schema.features):
            if f.kind == DISCRETE and len(f.domain) > 2:
                raw = master.derive("categorical", j).uniform(len(f.domain)) + 0.2
                self.cat_cum.append(np.cumsum(raw / raw.sum()))
            else:
                self.cat_cum.append(None)

        # Sparse signal vector, rescaled so the population logit std equals
        # signal_scale regardless of which features were picked.
        w = np.zeros(d)
        order = master.derive("signal-pick").permutation(d)
        picked = order[: min(config.n_signal, d)]
        w[picked] = master.derive("signal-weights").normal(picked.size)
        var = 0.0
        for j in range(d):
            if w[j] == 0.0:
                continue
            if self.kinds[j] == CONTINUOUS:
                var += w[j] ** 2
            elif len(self.domains[j]) == 2:
                var += w[j] ** 2 * self.theta[j] * (1.0 - self.theta[j])
            else:
                probs = np.diff(np.concatenate(([0.0], self.cat_cum[j])))
                vals = np.asarray(self.domains[j])
                mean = float(probs @ vals)
                var += w[j] ** 2 * float(probs @ (vals - mean) ** 2)
        self.w = w * (config.signal_scale / math.sqrt(var)) if var > 0 else w

        # Mild per-hospital mean shift on continuous columns only.
        self.shifts = {}
        for hid in config.hospitals:
            s = master.derive("shift", hid).normal(d) * config.covariate_shift
            for j, kind in enumerate(self.kinds):
                if kind == DISCRETE:
                    s[j] = 0.0
            self.shifts[hid] = s

        self.bias = self._calibrate_bias(master.derive("calibration"))

    def draw_features(self, stream: Stream, m: int, hid: str) -> np.ndarray:
        d = self.config.n_features
        z = stream.normal(m * d).reshape(m, d)
        u = stream.uniform(m * d).reshape(m, d)
        x = np.empty((m, d))
        shift = self.shifts[hid]
        for j, kind in enumerate(self.kinds):
            if kind == CONTINUOUS:
                x[:, j] = shift[j] + z[:, j]
            elif self.cat_cum[j] is None:
                x[:, j] = (u[:, j] < self.theta[j]).astype(np.float64)
            else:
                idx = np.searchsorted(self.cat_cum[j], u[:, j], side="right")
                x[:, j] = np.asarray(self.domains[j])[np.minimum(idx, len(self.domains[j]) - 1)]
        return x

    def probabilities(self, x: np.ndarray, bias: float | None = None) -> np.ndarray:
        b = self.bias if bias is None else bias
        return _sigmoid(x @ self.w + b)

    def _calibrate_bias(self, stream: Stream) -> float:
        """Bisect the intercept so the pooled mixture hits base_rate."""
        cfg = self.config
        pilots = []
        for hid, share in zip(cfg.hospitals, cfg.shares):
            m = max(128, int(round(8192 * share)))
            pilots.append(self.draw_features(stream.derive("pilot", hid), m, hid))
        x = np.vstack(pilots)
        raw = x @ self.w
        lo, hi = -30.0, 10.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            rate = float(np.mean(1.0 / (1.0 + np.exp(-(raw + mid)))))
            if rate < cfg.base_rate:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def _bucket_sizes(total: int, shares: tuple[float, ...]) -> list[int]:
    sizes = [int(math.floor(total * s)) for s in shares]
    i = 0
    while sum(sizes) < total:
        sizes[i % len(sizes)] += 1
        i += 1
    return sizes


def _sample_bucket(
    truth: _GroundTruth,
    stream: Stream,
    hid: str,
    n: int,
    positive_rate: float,
    missing_rate: float,
) -> list[PatientRecord]:
    """Rejection-sample n patients from hospital hid's distribution with an
    exact count of round(positive_rate * n) positives."""
    cfg = truth.config
    k_pos = int(round(positive_rate * n))
    k_neg = n - k_pos
    pos_chunks: list[np.ndarray] = []
    neg_chunks: list[np.ndarray] = []
    have_pos = have_neg = drawn = 0
    cap = 200 * n + 100_000
    while have_pos < k_pos or have_neg < k_neg:
        if drawn > cap:
            raise GenerationError(
                f"{hid}: cannot reach positive rate {positive_rate} "
                f"(ground-truth base rate too far; drew {drawn} candidates)"
            )
        x = truth.draw_features(stream, _BATCH, hid)
        p = truth.probabilities(x)
        y = stream.uniform(_BATCH) < p
        drawn += _BATCH
        take_pos = x[y][: k_pos - have_pos]
        take_neg = x[~y][: k_neg - have_neg]
        pos_chunks.append(take_pos)
        neg_chunks.append(take_neg)
        have_pos += take_pos.shape[0]
        have_neg += take_neg.shape[0]

    mat = np.vstack(pos_chunks + neg_chunks)
    labels = np.concatenate([np.ones(k_pos, dtype=int), np.zeros(k_neg, dtype=int)])
    order = stream.permutation(n)
    mat, labels = mat[order], labels[order]

    sex_u = stream.uniform(n)
    # Age tracks the first continuous column so hospital shifts show up in
    # the dashboard histograms; never missing.
    ages = np.clip(np.rint(64.0 + 11.0 * mat[:, 0]).astype(int), 18, 95)
    if missing_rate > 0.0:
        mask = stream.uniform(n * cfg.n_features).reshape(n, cfg.n_features) < missing_rate
    else:
        mask = np.zeros((n, cfg.n_features), dtype=bool)

    records = []
    for i in range(n):
        values = [None if mask[i, j] else float(mat[i, j]) for j in range(cfg.n_features)]
        records.append(
            PatientRecord(values, int(labels[i]), "F" if sex_u[i] < 0.515 else "M", int(ages[i]))
        )
    return records


def generate_synthetic_city(
    config: GenConfig, seed: int
) -> tuple[list[Cohort], Cohort, FeatureSchema]:
    """Five hospital cohorts, a complete held-out test cohort drawn from the
    pooled mixture, and the shared schema.  Deterministic per seed."""
    schema = build_schema(config)
    truth = _GroundTruth(config, schema, seed)
    root = Stream(seed)

    cohorts = []
    sizes = _bucket_sizes(config.total_patients, config.shares)
    for hid, n, rate in zip(config.hospitals, sizes, config.positive_rates):
        records = _sample_bucket(
            truth, root.derive("hospital", hid), hid, n, rate, config.missing_rate
        )
        cohorts.append(Cohort(hid, records, schema))

    # Test patients come from the same mixture of hospital distributions,
    # weighted by hospital size, with no missingness so every setting is
    # evaluated on the identical complete matrix.
    test_records: list[PatientRecord] = []
    test_sizes = _bucket_sizes(config.test_size, config.shares)
    for hid, n, rate in zip(config.hospitals, test_sizes, config.positive_rates):
        test_records.extend(
            _sample_bucket(truth, root.derive("test", hid), hid, n, rate, 0.0)
        )
    order = root.derive("test", "shuffle").permutation(len(test_records))
    test = Cohort("city_test", [test_records[i] for i in order], schema)
    return cohorts, test, schema


def write_city(out_dir, cohorts: list[Cohort], test: Cohort, schema: FeatureSchema) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema.save(out / "schema.json")
    for cohort in cohorts:
        export_csv(cohort, out / f"{cohort.hospital_id}.csv")
    export_csv(test, out / "test.csv")


def load_city(data_dir) -> tuple[list[Cohort], Cohort, FeatureSchema]:
    data = Path(data_dir)
    schema = FeatureSchema.load(data / "schema.json")
    cohorts = [
        ingest_csv(p, schema)
        for p in sorted(data.glob("*.csv"))
        if p.name != "test.csv"
    ]
    if not cohorts:
        raise GenerationError(f"no cohort CSV files in {data}")
    test = ingest_csv(data / "test.csv", schema)
    return cohorts, test, schema
