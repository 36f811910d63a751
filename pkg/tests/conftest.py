"""Shared test helpers, including an independent 2x2 matrix oracle.

The oracle builds its own matrices from Pauli constants defined here, so it
never routes through the coefficient-level code paths it is checking.
"""

import numpy as np
import pytest

from sgkit.instrument import BlochState, Instrument, KrausOperator, exact_normalize

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID = np.eye(2, dtype=complex)


def mat(alpha, beta) -> np.ndarray:
    """Explicit matrix of alpha*1 + beta . sigma."""
    beta = np.asarray(beta, dtype=complex)
    return alpha * ID + beta[0] * SX + beta[1] * SY + beta[2] * SZ


def kraus_mat(k: KrausOperator) -> np.ndarray:
    return mat(k.alpha, k.beta)


def state_mat(s: BlochState) -> np.ndarray:
    return 0.5 * mat(1.0, s.r)


def bloch_of(rho: np.ndarray) -> np.ndarray:
    return np.array(
        [np.trace(rho @ SX).real, np.trace(rho @ SY).real, np.trace(rho @ SZ).real]
    )


def random_kraus(rng, scale=0.5) -> KrausOperator:
    return KrausOperator(
        scale * complex(rng.normal(), rng.normal()),
        scale * (rng.normal(size=3) + 1j * rng.normal(size=3)),
    )


def random_pair(rng) -> Instrument:
    """Unnormalized random branch pair."""
    return Instrument(random_kraus(rng), random_kraus(rng))


def random_instrument(rng) -> Instrument:
    """Random pair renormalized to an exact instrument."""
    return exact_normalize(random_pair(rng))


def random_state(rng, pure=False) -> BlochState:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    if not pure:
        v *= rng.uniform(0.0, 1.0)
    return BlochState(v)


def random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
