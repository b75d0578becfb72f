import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def build_cohort(spec):
    from patient_embed.data.synthetic import generate_synthetic_cohort, schema_for
    from patient_embed.pipeline import preprocess

    cohort, _, _ = preprocess(generate_synthetic_cohort(spec), schema_for(spec))
    return cohort


@pytest.fixture(scope="session")
def small_cohort():
    from patient_embed.data.synthetic import SyntheticSpec

    return build_cohort(SyntheticSpec(size=80, seed=3))


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
