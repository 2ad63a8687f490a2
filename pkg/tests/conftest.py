"""
Pytest configuration and fixtures for the mapcalc tests.
"""

import numpy as np
import pytest

import mapcalc.config
from mapcalc.dependencies import init_report_store, reset_report_store
from mapcalc.geometry import GridGeometry, euclidean, sphere
from mapcalc.grid import Grid
from mapcalc.mapfield import DiscreteMap
from mapcalc.presets import band_limited
from mapcalc.soliton import make_cigar

# Support radius of the random test data; leaves 6 empty layers at h = 1/32.
SUPPORT = 0.8


@pytest.fixture(autouse=True)
def reset_global_state():
    """Drop the report store and settings singletons between tests."""
    reset_report_store()
    mapcalc.config._settings = None
    yield
    reset_report_store()
    mapcalc.config._settings = None


@pytest.fixture(scope="session")
def flat_geom():
    """Flat square [-1, 1]^2 at h = 1/32."""
    return GridGeometry.from_manifold(euclidean(2, 1.0), Grid.square(1.0, 1.0 / 32.0))


@pytest.fixture(scope="session")
def fine_flat_geom():
    """Flat square [-1, 1]^2 at h = 1/64."""
    return GridGeometry.from_manifold(euclidean(2, 1.0), Grid.square(1.0, 1.0 / 64.0))


@pytest.fixture(scope="session")
def cigar():
    return make_cigar(4.0)


@pytest.fixture(scope="session")
def cigar_geom(cigar):
    """Cigar chart [-4, 4]^2 at h = 1/8."""
    return GridGeometry.from_manifold(cigar.manifold, Grid.square(4.0, 1.0 / 8.0))


@pytest.fixture(scope="session")
def flat_target():
    return euclidean(2, 10.0)


@pytest.fixture(scope="session")
def sphere_target():
    return sphere()


def random_deviation(geom, seed=7, amplitude=0.3, radius=SUPPORT, components=2):
    return amplitude * band_limited(geom.grid, components, seed, modes=1, radius=radius)


def identity_map(geom, target, seed=7, amplitude=0.3, offset=None):
    """x + offset + a random compactly supported deviation."""
    offset = np.zeros(target.dim) if offset is None else np.asarray(offset, dtype=float)
    return DiscreteMap(geom, target, random_deviation(geom, seed, amplitude), linear=np.eye(2), offset=offset)


def bump_map(geom, target, seed=7, amplitude=0.3, offset=None):
    """A constant base point plus a random compactly supported deviation."""
    offset = np.zeros(target.dim) if offset is None else np.asarray(offset, dtype=float)
    return DiscreteMap(geom, target, random_deviation(geom, seed, amplitude), offset=offset)


@pytest.fixture
def flat_map(flat_geom, flat_target):
    return identity_map(flat_geom, flat_target)


@pytest.fixture
def sphere_map(flat_geom, sphere_target):
    return bump_map(flat_geom, sphere_target, offset=[0.5 * np.pi, 0.0])


@pytest.fixture
def constant_map(flat_geom, flat_target):
    return DiscreteMap.constant(flat_geom, flat_target, [0.5, -0.25])


@pytest.fixture
def memory_store():
    """In-memory report store installed as the global store."""
    return init_report_store(in_memory=True)


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Point MAPCALC_OUTPUT_DIR at a temporary directory."""
    monkeypatch.setenv("MAPCALC_OUTPUT_DIR", str(tmp_path))
    return tmp_path
