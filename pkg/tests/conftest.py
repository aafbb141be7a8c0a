import pytest

from rcpolar.channels import make_bec, make_bsc
from rcpolar.ratecompat import build_scheme, rate_profile


@pytest.fixture(scope="session")
def aligned_scheme():
    """Non-degraded pair whose first block needs one alignment step."""
    return build_scheme([make_bsc(0.05), make_bec(0.4)], rate_profile(135, ["135/256", "45/128"]), delta=1e-3)


@pytest.fixture(scope="session")
def bec_scheme():
    return build_scheme([make_bec(0.3), make_bec(0.5)], rate_profile(48, ["3/5", "2/5"]))


@pytest.fixture(scope="session")
def bec3_scheme():
    return build_scheme([make_bec(0.2), make_bec(0.4), make_bec(0.6)], rate_profile(24, ["1/2", "1/3", "1/4"]))
