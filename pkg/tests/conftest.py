import pytest

from swipt_opt.config import load_config


def _scenario(*presets, sets=()):
    return load_config(presets=("paper",) + presets, sets=sets).scenario


@pytest.fixture
def make_scn():
    """Factory: validated scenario from built-in presets plus ``key=value`` overrides."""
    return _scenario


@pytest.fixture
def paper():
    return _scenario()
