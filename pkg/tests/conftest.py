import numpy as np
import pytest

from tokenseal.harness.common import default_model, default_proxy, default_sampler_config
from tokenseal.toylm import CompiledModel


@pytest.fixture(scope="session")
def toy_model():
    return default_model()


@pytest.fixture(scope="session")
def proxy_model():
    return default_proxy()


@pytest.fixture(scope="session")
def wm_compiled(toy_model):
    cfg = default_sampler_config()
    return CompiledModel(toy_model, temperature=cfg.temperature, top_p=cfg.top_p)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
