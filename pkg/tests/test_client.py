import json

import numpy as np
import pytest

from fedtab.client import ClientConfig, local_pipeline
from fedtab.data import MEAN, MEDIAN, apply_impute, fit_impute, select_features
from fedtab.exceptions import ConfigError
from fedtab.models import TrainConfig
from fedtab.synthetic import generate_synthetic_city

from util import tiny_gen


def full_config_dict():
    return {
        "client_id": "hosp_1",
        "coordinator_url": "http://127.0.0.1:9000/",
        "data_path": "/tmp/cohort.csv",
        "schema_path": "/tmp/schema.json",
        "train": {"learning_rate": 0.05, "local_epochs": 2, "batch_size": 16},
    }


def test_config_from_dict_defaults():
    cfg = ClientConfig.from_dict(full_config_dict())
    assert cfg.client_id == "hosp_1"
    assert cfg.coordinator_url == "http://127.0.0.1:9000"  # trailing slash trimmed
    assert cfg.impute_strategy == MEAN
    assert cfg.heartbeat_interval_s == 1.0
    assert cfg.seed == 0
    assert cfg.test_path is None
    assert cfg.train == TrainConfig(learning_rate=0.05, local_epochs=2, batch_size=16)


def test_config_optional_overrides():
    raw = full_config_dict()
    raw.update(
        impute_strategy=MEDIAN,
        heartbeat_interval_s=0.2,
        seed=7,
        test_path="/tmp/test.csv",
    )
    cfg = ClientConfig.from_dict(raw)
    assert cfg.impute_strategy == MEDIAN
    assert cfg.heartbeat_interval_s == 0.2
    assert cfg.seed == 7
    assert cfg.test_path == "/tmp/test.csv"


@pytest.mark.parametrize("missing", ["client_id", "coordinator_url", "data_path", "schema_path"])
def test_config_missing_key_is_config_error(missing):
    raw = full_config_dict()
    del raw[missing]
    with pytest.raises(ConfigError, match=missing):
        ClientConfig.from_dict(raw)


def test_config_from_json(tmp_path):
    path = tmp_path / "client.json"
    path.write_text(json.dumps(full_config_dict()))
    cfg = ClientConfig.from_json(path)
    assert cfg.client_id == "hosp_1"


def test_local_pipeline_matches_manual_steps():
    cohorts, _, schema = generate_synthetic_city(tiny_gen(), seed=3)
    cohort = cohorts[0]

    x, y, policy = local_pipeline(cohort, MEDIAN)

    manual_policy = fit_impute(cohort, MEDIAN)
    filled = apply_impute(cohort, manual_policy)
    mx, my = select_features(filled), filled.labels()

    assert policy == manual_policy
    np.testing.assert_array_equal(x, mx)
    np.testing.assert_array_equal(y, my)
    assert x.shape == (len(cohort.records), schema.input_dim)
