import os

# Keep BLAS single-threaded for reproducible timings in the acceptance
# suite; must be set before numpy spins up its thread pools.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import hypothesis
import pytest

from bonesup.phantom import generate
from bonesup.schedule import paper_schedule

hypothesis.settings.register_profile(
    "ci", max_examples=25, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def sched():
    return paper_schedule()


@pytest.fixture(scope="session")
def phantoms64():
    return generate(seed=42, count=4, size=64)
