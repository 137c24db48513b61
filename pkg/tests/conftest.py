import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng(request):
    # stable per-test stream so failures reproduce
    return np.random.default_rng(abs(hash(request.node.name)) % 2**32)
