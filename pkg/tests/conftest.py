import numpy as np
import pytest

from actionlab.models import RingParameters, qubit_system, ring_system, spin_system

RING_PARAMS = RingParameters(sites=256, circumference=256.0, mass=1.0, flight_time=20.0)


@pytest.fixture(scope="session")
def qubit():
    return qubit_system()


@pytest.fixture(scope="session")
def spin20():
    return spin_system(20.0)


@pytest.fixture(scope="session")
def spin50():
    return spin_system(50.0)


@pytest.fixture(scope="session")
def ring256():
    return ring_system(RING_PARAMS)


def haar_basis(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random unitary via QR; rows are an orthonormal basis."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return (q * (np.diagonal(r) / np.abs(np.diagonal(r)))).T
