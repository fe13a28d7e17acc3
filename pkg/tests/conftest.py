import os

import pytest

HERE = os.path.dirname(os.path.abspath(__file__))


@pytest.fixture
def fixtures_dir():
    return os.path.join(HERE, "fixtures")


@pytest.fixture
def data_dir():
    return os.path.join(os.path.dirname(HERE), "data")
