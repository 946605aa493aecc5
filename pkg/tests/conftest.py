import numpy as np
import pytest

from mlaqp.engine import TrainConfig, train
from mlaqp.gbdt import GbdtConfig
from mlaqp.schema import Attribute, DatasetSchema
from mlaqp.workload import WorkloadSpec, gen_dataset, gen_queries

FAST = TrainConfig(point=GbdtConfig.point(rounds=150), quantile=GbdtConfig.quantile(rounds=150, learning_rate=0.05))


@pytest.fixture(scope="session")
def three_attr_schema():
    return DatasetSchema.numeric("B", ["a1", "a2", "a3"])


@pytest.fixture(scope="session")
def mixed_schema():
    return DatasetSchema("sales", (
        Attribute("price"),
        Attribute("qty"),
        Attribute("region", "categorical", 3),
        Attribute("product", "categorical", 5000),
    ))


@pytest.fixture(scope="session")
def small_dataset():
    return gen_dataset(4, 5000, seed=3)


@pytest.fixture(scope="session")
def small_workload(small_dataset):
    return gen_queries(WorkloadSpec(300, 4, 2, seed=4), small_dataset)


@pytest.fixture(scope="session")
def small_catalogue(small_workload, small_dataset):
    cat, _ = train(small_workload, small_dataset.schema, FAST)
    return cat


@pytest.fixture(scope="session")
def saved_catalogue(small_catalogue, tmp_path_factory):
    from mlaqp.catalogue import save

    d = tmp_path_factory.mktemp("cat") / "catalogue"
    save(small_catalogue, d)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
