import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cogproto.classes import PatientClass
from cogproto.game import default_class_models
from cogproto.protocol import default_protocol_config


@pytest.fixture(scope="session")
def models():
    return default_class_models()


@pytest.fixture(scope="session")
def h_model(models):
    return models[PatientClass.HEALTHY]


@pytest.fixture(scope="session")
def m_model(models):
    return models[PatientClass.MILD]


@pytest.fixture(scope="session")
def big_m_model(models):
    return models[PatientClass.MAJOR]


@pytest.fixture(scope="session")
def protocol_config():
    return default_protocol_config()
