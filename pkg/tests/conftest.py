import pytest

from coarsecert.groups import FreeGroup, LatticeGroup


@pytest.fixture(scope="session")
def F2():
    return FreeGroup(2)


@pytest.fixture(scope="session")
def Z1():
    return LatticeGroup(1)


@pytest.fixture(scope="session")
def Z2():
    return LatticeGroup(2)
