import math

import numpy as np
import pytest

from phasecode import qstate
from phasecode.noise import DeviceParams

SQRT_HALF = 1.0 / math.sqrt(2.0)

# Logical basis vectors built directly from their definition, independent of
# the package's encoder: |0>_L = (|+X,+X,+X> + |-X,-X,-X>)/sqrt(2), etc.
_PLUS = np.array([1.0, 1.0]) * SQRT_HALF
_MINUS = np.array([1.0, -1.0]) * SQRT_HALF


def triple(v):
    return np.kron(np.kron(v, v), v)


LOGICAL_ZERO = (triple(_PLUS) + triple(_MINUS)) * SQRT_HALF
LOGICAL_ONE = (triple(_PLUS) - triple(_MINUS)) * SQRT_HALF


def random_density_matrix(rng, n_qubits):
    """Random full-rank density operator via a Haar-ish unitary on a random
    probability diagonal."""
    dim = 2**n_qubits
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    q = q * (np.diagonal(r) / np.abs(np.diagonal(r)))
    probs = rng.dirichlet(np.ones(dim))
    return qstate.DensityOperator(q @ np.diag(probs) @ q.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def ideal_params():
    return DeviceParams.ideal()


@pytest.fixture
def reference_params():
    return DeviceParams.reference()


@pytest.fixture
def strict_states():
    """Assert state invariants (trace, Hermiticity, positivity) after every
    operation while the test runs."""
    qstate.set_validation(True)
    yield
    qstate.set_validation(False)
