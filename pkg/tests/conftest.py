import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clusterps import codes
from clusterps.dem import DetectorErrorModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def tiny_model(columns, priors, num_detectors=None, observables=None, times=None):
    num_detectors = num_detectors if num_detectors is not None else max(max(c) for c in columns if c) + 1
    observables = observables or [[] for _ in columns]
    k = max((max(o) + 1 for o in observables if o), default=0)
    return DetectorErrorModel.from_columns(columns, observables, priors, num_detectors, k, detector_times=times)


@pytest.fixture(scope="session")
def rep3_t3():
    return codes.phenomenological_dem(codes.repetition_code(3), 3, 0.1, 0.1)


@pytest.fixture(scope="session")
def rep7_t3():
    return codes.phenomenological_dem(codes.repetition_code(7), 3, 0.03, 0.03)


@pytest.fixture(scope="session")
def surface5_t5():
    return codes.phenomenological_dem(codes.rotated_surface_code(5), 5, 0.01, 0.01)


@pytest.fixture(scope="session")
def hgp_code():
    return codes.hgp_code(codes.HGP_CLASSICAL_CHECK, codes.HGP_CLASSICAL_CHECK)


@pytest.fixture(scope="session")
def bb72_code():
    return codes.bivariate_bicycle_code(*codes.BB_72_12_6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
