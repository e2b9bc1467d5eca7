"""Reusable dependency injected testing components."""
import os

import pytest

from broadwell import Boundary, Domain, broadwell2d
from broadwell.fields import random_field


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size runs, deselect with -m \"not slow\"")


@pytest.fixture
def model():
    """The planar Broadwell model."""
    return broadwell2d()


@pytest.fixture
def periodic_domain():
    """Periodic [-2, 2]^2 with 32 cells per side (h = 1/8)."""
    return Domain.square(2.0, 32, Boundary.PERIODIC)


@pytest.fixture
def outflow_domain():
    """Outflow [-3, 3]^2 with 48 cells per side (h = 1/8)."""
    return Domain.square(3.0, 48, Boundary.OUTFLOW)


@pytest.fixture
def smooth_field(periodic_domain):
    """Seeded smooth random densities in [0, 1] on the periodic domain."""
    return random_field(periodic_domain, amplitude=1.0, seed=7)


@pytest.fixture
def rescaled_field(outflow_domain):
    """Seeded smooth random densities in [0, 1] on the outflow domain."""
    return random_field(outflow_domain, amplitude=1.0, seed=11)


@pytest.fixture
def out_dir(tmp_path):
    """A fresh output directory path that does not exist yet."""
    return os.path.join(str(tmp_path), "run")


@pytest.fixture
def write_config(tmp_path):
    """Write configuration text to a file and return its path."""
    def _write(text, name="run.conf"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write
