"""Tabular cohort handling: CSV ingestion, missing-value imputation, feature
selection, and the aggregate statistics shared with the coordinator.

Missing entries are `None` in memory and empty-or-"NA" cells on disk.  CSV
layout is fixed: sex, age, one column per schema feature, label last.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ImputationError, IngestionError, ShapeError
from .rng import fnv1a64

CONTINUOUS = "continuous"
DISCRETE = "discrete"

MEAN = "column-mean"
MEDIAN = "column-median"

AGE_BINS = 12  # 10-year bins covering ages 0..119; 120 folds into the last


@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str
    domain: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ShapeError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        if self.kind == DISCRETE:
            if not self.domain:
                raise ShapeError(f"discrete feature {self.name!r} needs a domain")
            if list(self.domain) != sorted(set(self.domain)):
                raise ShapeError(f"domain of {self.name!r} must be sorted and unique")


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureDef, ...]
    label_name: str = "stroke"
    selected: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ShapeError("duplicate feature names")
        sel = tuple(self.selected) if self.selected else tuple(names)
        unknown = set(sel) - set(names)
        if unknown:
            raise ShapeError(f"selected features not in schema: {sorted(unknown)}")
        object.__setattr__(self, "selected", sel)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def input_dim(self) -> int:
        return len(self.selected)

    def feature(self, name: str) -> FeatureDef:
        for f in self.features:
            if f.name == name:
                return f
        raise ShapeError(f"no feature named {name!r}")

    def columns(self) -> list[str]:
        return ["sex", "age", *self.feature_names, self.label_name]

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "domain": list(f.domain)}
                for f in self.features
            ],
            "label_name": self.label_name,
            "selected": list(self.selected),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        feats = tuple(
            FeatureDef(f["name"], f["kind"], tuple(f.get("domain", ())))
            for f in d["features"]
        )
        return cls(feats, d.get("label_name", "stroke"), tuple(d.get("selected", ())))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return format(fnv1a64(canon.encode("utf-8")), "016x")


@dataclass
class PatientRecord:
    values: list[float | None]
    label: int
    sex: str
    age: int


@dataclass
class Cohort:
    hospital_id: str
    records: list[PatientRecord]
    schema: FeatureSchema

    def __post_init__(self):
        if not self.hospital_id:
            raise ShapeError("hospital_id must be nonempty")
        width = len(self.schema.features)
        for i, r in enumerate(self.records):
            if len(r.values) != width:
                raise ShapeError(f"record {i} has {len(r.values)} values, expected {width}")

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.float64)

    def n_missing(self) -> int:
        return sum(v is None for r in self.records for v in r.values)

    def stats(self) -> dict:
        """Aggregate statistics safe to transmit: counts and the age histogram."""
        hist = [0] * AGE_BINS
        for r in self.records:
            hist[min(r.age // 10, AGE_BINS - 1)] += 1
        n_pos = sum(r.label == 1 for r in self.records)
        n_male = sum(r.sex == "M" for r in self.records)
        return {
            "n": len(self.records),
            "n_pos": n_pos,
            "n_neg": len(self.records) - n_pos,
            "n_male": n_male,
            "n_female": len(self.records) - n_male,
            "age_hist": hist,
        }


def _format_value(v: float | None) -> str:
    return "" if v is None else format(float(v), ".17g")


def export_csv(cohort: Cohort, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cohort.schema.columns())
        for r in cohort.records:
            writer.writerow(
                [r.sex, r.age, *(_format_value(v) for v in r.values), r.label]
            )


def ingest_csv(path, schema: FeatureSchema, hospital_id: str | None = None) -> Cohort:
    """Parse a cohort CSV.  Empty cells and "NA" are missing; labels must be
    exactly 0 or 1.  Errors name the offending row (1-based data row) and
    column."""
    path = Path(path)
    expected = schema.columns()
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path.name}: empty file") from None
        if header != expected:
            raise IngestionError(
                f"{path.name}: header {header} does not match schema columns {expected}"
            )
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(expected):
                raise IngestionError(f"{path.name} row {row_no}: expected {len(expected)} cells")
            sex = row[0]
            if sex not in ("M", "F"):
                raise IngestionError(f"{path.name} row {row_no}, column 'sex': bad value {sex!r}")
            try:
                age = int(row[1])
            except ValueError:
                raise IngestionError(
                    f"{path.name} row {row_no}, column 'age': unparseable {row[1]!r}"
                ) from None
            if not 0 <= age <= 120:
                raise IngestionError(f"{path.name} row {row_no}, column 'age': {age} out of range")
            values: list[float | None] = []
            for feat, cell in zip(schema.features, row[2:-1]):
                if cell == "" or cell == "NA":
                    values.append(None)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"{path.name} row {row_no}, column {feat.name!r}: unparseable {cell!r}"
                    ) from None
            if row[-1] not in ("0", "1"):
                raise IngestionError(
                    f"{path.name} row {row_no}, column {schema.label_name!r}: "
                    f"label must be 0 or 1, got {row[-1]!r}"
                )
            records.append(PatientRecord(values, int(row[-1]), sex, age))
    return Cohort(hospital_id or path.stem, records, schema)


@dataclass(frozen=True)
class ImputePolicy:
    """Per-feature fill statistics, fitted on non-missing training values only."""

    strategy: dict[str, str]
    statistics: dict[str, float]
    schema_digest: str


def fit_impute(cohort: Cohort, strategy: str | dict[str, str] = MEAN) -> ImputePolicy:
    schema = cohort.schema
    if isinstance(strategy, str):
        strategy = {f.name: strategy for f in schema.features}
    for name, s in strategy.items():
        if s not in (MEAN, MEDIAN):
            raise ImputationError(f"feature {name!r}: unknown strategy {s!r}")
    stats: dict[str, float] = {}
    for j, feat in enumerate(schema.features):
        observed = [r.values[j] for r in cohort.records if r.values[j] is not None]
        if not observed:
            raise ImputationError(
                f"feature {feat.name!r} has no observed values in cohort "
                f"{cohort.hospital_id!r}"
            )
        how = strategy.get(feat.name, MEAN)
        if how == MEAN:
            stats[feat.name] = float(sum(observed) / len(observed))
        else:
            ordered = sorted(observed)
            mid = len(ordered) // 2
            if len(ordered) % 2:
                stats[feat.name] = float(ordered[mid])
            else:
                stats[feat.name] = float((ordered[mid - 1] + ordered[mid]) / 2.0)
    return ImputePolicy(dict(strategy), stats, schema.digest())


def nearest_in_domain(value: float, domain: tuple[float, ...]) -> float:
    """Closest member of a sorted domain; exact ties go to the smaller value."""
    i = bisect_left(domain, value)
    if i == 0:
        return domain[0]
    if i == len(domain):
        return domain[-1]
    lo, hi = domain[i - 1], domain[i]
    return lo if value - lo <= hi - value else hi


def apply_impute(cohort: Cohort, policy: ImputePolicy) -> Cohort:
    """Fill every missing cell.  Continuous features take the fitted value
    verbatim; discrete features take the nearest domain member (ties toward
    the smaller value).  Observed cells are left untouched."""
    schema = cohort.schema
    if policy.schema_digest != schema.digest():
        raise ShapeError("imputation policy was fitted against a different schema")
    fills: list[float] = []
    for feat in schema.features:
        fill = policy.statistics[feat.name]
        if feat.kind == DISCRETE:
            fill = nearest_in_domain(fill, feat.domain)
        fills.append(fill)
    records = [
        PatientRecord(
            [fills[j] if v is None else v for j, v in enumerate(r.values)],
            r.label,
            r.sex,
            r.age,
        )
        for r in cohort.records
    ]
    return Cohort(cohort.hospital_id, records, schema)


def select_features(cohort: Cohort, schema: FeatureSchema | None = None) -> np.ndarray:
    """Matrix of the selected feature columns, in schema.selected order.
    Requires imputation to have run (no missing cells)."""
    schema = schema or cohort.schema
    index = {f.name: j for j, f in enumerate(cohort.schema.features)}
    cols = []
    for name in schema.selected:
        if name not in index:
            raise ShapeError(f"selected feature {name!r} not present in cohort schema")
        cols.append(index[name])
    out = np.empty((len(cohort.records), len(cols)), dtype=np.float64)
    for i, r in enumerate(cohort.records):
        for k, j in enumerate(cols):
            v = r.values[j]
            if v is None:
                raise ShapeError(
                    f"missing value in feature {cohort.schema.features[j].name!r} "
                    f"row {i}; run imputation first"
                )
            out[i, k] = v
    return out
