"""
テスト共通のフィクスチャ
"""

import numpy as np
import pytest

from survival.data_model import dump_dataset, make_sample
from survival.sim_lab import SimConfig, TruncatedCauchyLaw, simulate_cox_sample


def pareto_sample(n, theta=1.0, seed=0, censoring_theta=None):
    """標準パレート標本（共変量なし）"""
    rng = np.random.default_rng(seed)
    times = (1.0 - rng.uniform(size=n)) ** (-theta)
    if censoring_theta is None:
        return make_sample(times, np.ones(n))
    censoring = (1.0 - rng.uniform(size=n)) ** (-censoring_theta)
    return make_sample(np.minimum(times, censoring), (times <= censoring).astype(int))


@pytest.fixture
def hand_sample():
    """相異なる10点、打ち切り2点、共変量1列"""
    times = [1.5, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 55.0, 89.0]
    status = [1, 1, 0, 1, 1, 1, 0, 1, 1, 1]
    z = [[0.2], [-0.4], [0.9], [0.0], [-1.0], [0.5], [0.3], [-0.7], [0.8], [-0.1]]
    return make_sample(times, status, z)


@pytest.fixture
def cauchy_config():
    """打ち切りありの変換コーシー設定（β = −0.5）"""
    return SimConfig(
        n=200,
        n_mc=1,
        beta=[-0.5],
        failure_baseline=TruncatedCauchyLaw(x0=0.0, gamma_scale=1.0),
        censoring_law=TruncatedCauchyLaw(x0=0.0, gamma_scale=2.0),
        seed=11,
    )


@pytest.fixture
def cauchy_sample(cauchy_config):
    return simulate_cox_sample(cauchy_config, 0)


@pytest.fixture
def dataset_csv(tmp_path, cauchy_sample):
    path = tmp_path / "data.csv"
    path.write_text(dump_dataset(cauchy_sample), encoding="utf-8")
    return path
