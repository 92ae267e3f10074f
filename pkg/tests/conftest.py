"""Shared pytest fixtures for mpskit tests."""

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def mock_env_vars(monkeypatch, tmp_path):
    """Set up test environment variables."""
    monkeypatch.setenv("MPSKIT_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("MPSKIT_THREADS", "2")
    monkeypatch.setenv("MPSKIT_DEBUG", "false")
    monkeypatch.delenv("MPSKIT_LOG_DIR", raising=False)


@pytest.fixture
def rig12():
    """Twelve-band uniform rig over the default wavelength range."""
    from spectral_core import uniform_rig

    return uniform_rig(12)


@pytest.fixture
def white_lambertian():
    from spectral_core import make_material

    return make_material("white_lambertian")


@pytest.fixture
def small_sphere():
    """A 48 px sphere shape, enough pixels for the estimators but quick to render."""
    from render import SphereShape

    return SphereShape(resolution=48)


@pytest.fixture
def tiny_table():
    """Hand-filled table on two wavelengths and a 2x2 geometry grid."""
    from spectral_core import SpectralBrdfTable, WavelengthGrid

    values = np.array(
        [
            [[0.1, 0.2], [0.3, 0.4]],
            [[0.5, 0.6], [0.7, 0.8]],
        ]
    )
    return SpectralBrdfTable(WavelengthGrid([400.0, 600.0]), [0.0, 1.0], [0.0, 1.0], values, name="tiny")


@pytest.fixture
def lambertian_observations():
    """Exact Lambertian observations max(L n, 0) for a sphere under a 12-light rig."""
    from render import SphereShape
    from spectral_core import MultispectralImage, uniform_rig

    rig = uniform_rig(12)
    normals = SphereShape(resolution=64).normals()
    observations = np.maximum(rig.directions @ normals.in_mask().T, 0.0)
    return MultispectralImage.from_observations(observations, normals.mask), rig, normals
