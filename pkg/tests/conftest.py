import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bernoulli():
    from seqest import bernoulli_model

    return bernoulli_model()


@pytest.fixture(scope="session")
def poisson():
    from seqest import poisson_model

    return poisson_model()


@pytest.fixture(scope="session")
def exponential():
    from seqest import exponential_model

    return exponential_model()


@pytest.fixture(scope="session")
def normal():
    from seqest import normal_model

    return normal_model(1.0)
