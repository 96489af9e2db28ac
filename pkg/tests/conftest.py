import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT / "tests"))

from spatial_rag.broker import ContextBroker
from spatial_rag.datasets import DatasetDescriptor, load_dataset
from spatial_rag.subscriptions import SubscriptionManager

FIXTURE_PATH = REPO_ROOT / "fixtures" / "madrid_limit10"


@pytest.fixture(scope="session")
def fixture_path() -> Path:
    return FIXTURE_PATH


@pytest.fixture()
def fixture_broker() -> ContextBroker:
    broker = ContextBroker()
    result = load_dataset(DatasetDescriptor(path=FIXTURE_PATH), broker)
    assert result.loaded == 10 and result.ok
    return broker


@pytest.fixture()
def manager_factory():
    managers = []

    def make(broker, **kwargs) -> SubscriptionManager:
        manager = SubscriptionManager(broker, **kwargs)
        managers.append(manager)
        return manager

    yield make
    for manager in managers:
        manager.close()
