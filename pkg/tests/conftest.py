import numpy as np
import pytest

from contactsys import HopfSphere, UnitCotangentSphere, parse_model


@pytest.fixture(scope="session")
def hopf():
    return HopfSphere(1)


@pytest.fixture(scope="session")
def ut():
    return UnitCotangentSphere()


@pytest.fixture(scope="session")
def rp2():
    return parse_model("ut_sphere(metric=round, quotient=antipodal)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
