import numpy as np
import pytest

from flowid.features import FeatureVector, LabeledDataset, N_FEATURES
from flowid.seeds import mix
from flowid.synthgen import EnvironmentSpec, drift_fleet, gen_environment


def toy_rows(n_devices=3, rows_per_day=40, n_days=3, spread=10.0, noise=0.0, seed=0):
    """Rows where each device sits at its own point in feature space."""
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    for day in range(1, n_days + 1):
        for d in range(n_devices):
            for _ in range(rows_per_day):
                values = np.full(N_FEATURES, float(d) * spread)
                if noise:
                    values = values + rng.normal(0, noise, N_FEATURES)
                rows.append(FeatureVector(values=values, device_id=f"dev{d}",
                                          category_id=f"cat{d % 2}", day_index=day))
    return rows


def toy_dataset(**kwargs) -> LabeledDataset:
    return LabeledDataset.from_rows(toy_rows(**kwargs))


@pytest.fixture(scope="session")
def small_env() -> LabeledDataset:
    """Small deterministic fleet capture shared by harness/store/api tests."""
    spec = EnvironmentSpec("unit", drift_fleet(0, drift_scale=0.0, rotation_days=0),
                           pattern="light", n_days=4, seed=mix(0, "unit-env"))
    return gen_environment(spec)
