import numpy as np
import pytest

from tarnpricer import ConstantVol, MarketModel, RateCurve, TarnContract


def flat_model(sigma=0.2, r_d=0.0, r_f=0.0):
    return MarketModel(
        domestic=RateCurve.flat(r_d),
        foreign=RateCurve.flat(r_f),
        vol=ConstantVol(sigma),
    )


def benchmark_times(k=20):
    return tuple(i * 30 / 365 for i in range(1, k + 1))


def benchmark_contract(knockout, target):
    return TarnContract(strike=1.0, target=target, beta=1,
                        fixing_times=benchmark_times(), knockout=knockout)


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
