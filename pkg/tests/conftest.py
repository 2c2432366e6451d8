import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scaling_report():
    from fastrpca.bench import run_scaling_experiment

    return run_scaling_experiment([1000, 2000, 4000], 5, 0.1)
