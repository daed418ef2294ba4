import numpy as np
import pytest

from satlink.flightsim import WeatherSpec, demo_config, generate_dataset
from satlink.ingest import FeatureMatrix


def make_matrix(X, y=None, y_cnr=None, flight_ids=None, columns=None):
    """Build a bare FeatureMatrix for model-level tests."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if flight_ids is None:
        flight_ids = [f"T{i:04d}" for i in range(n)]
    return FeatureMatrix(
        columns=tuple(columns or [f"f{j}" for j in range(X.shape[1])]),
        X=X,
        y=None if y is None else np.asarray(y, dtype=np.int8),
        y_cnr_db=None if y_cnr is None else np.asarray(y_cnr, dtype=np.float64),
        flight_ids=np.asarray(flight_ids, dtype=object),
        vocab=None,
    )


def separable_toy(n_per_class=50, seed=5):
    """Four well-separated 2-d clusters, one per CNR category."""
    rng = np.random.default_rng(seed)
    centers = [(0.0, 0.0), (0.0, 10.0), (10.0, 0.0), (10.0, 10.0)]
    X, y = [], []
    for label, (cx, cy) in enumerate(centers):
        X.append(np.column_stack([
            cx + rng.uniform(-1.0, 1.0, n_per_class),
            cy + rng.uniform(-1.0, 1.0, n_per_class),
        ]))
        y.extend([label] * n_per_class)
    return make_matrix(np.vstack(X), y=y)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 12-flight synthetic dataset shared by ingest/CLI tests."""
    out_dir = tmp_path_factory.mktemp("small_corpus")
    config = demo_config(flights_per_route=2, seed=911, weather=WeatherSpec(6.0, 13))
    manifest = generate_dataset(config, str(out_dir))
    return {"dir": str(out_dir), "config": config, "manifest": manifest}
