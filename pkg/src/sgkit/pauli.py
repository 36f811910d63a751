"""Coefficient-level arithmetic for 2x2 operators written in the Pauli basis.

An operator is stored as ``scalar * 1 + vector . sigma`` with a complex
scalar and a complex 3-vector.  All products below are bilinear: nothing
conjugates implicitly, conjugation is always explicit through ``adjoint``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-12


class NonHermitianInput(ValueError):
    """An operation that needs a Hermitian operator got a non-Hermitian one."""


def _c3(values) -> np.ndarray:
    vec = np.array(values, dtype=complex).reshape(3)
    if not np.all(np.isfinite(vec.real)) or not np.all(np.isfinite(vec.imag)):
        raise ValueError("vector components must be finite")
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True)
class PauliCoefficients:
    scalar: complex
    vector: np.ndarray

    def __post_init__(self):
        scalar = complex(self.scalar)
        if not (np.isfinite(scalar.real) and np.isfinite(scalar.imag)):
            raise ValueError("scalar must be finite")
        object.__setattr__(self, "scalar", scalar)
        object.__setattr__(self, "vector", _c3(self.vector))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return (
            abs(self.scalar.imag) <= tol
            and float(np.max(np.abs(self.vector.imag))) <= tol
        )


def pauli_mul(a: PauliCoefficients, b: PauliCoefficients) -> PauliCoefficients:
    """Operator product, using sigma_i sigma_j = delta_ij + i eps_ijk sigma_k."""
    scalar = a.scalar * b.scalar + np.dot(a.vector, b.vector)
    vector = a.scalar * b.vector + b.scalar * a.vector + 1j * np.cross(a.vector, b.vector)
    return PauliCoefficients(scalar, vector)


def pauli_add(a: PauliCoefficients, b: PauliCoefficients) -> PauliCoefficients:
    return PauliCoefficients(a.scalar + b.scalar, a.vector + b.vector)


def adjoint(a: PauliCoefficients) -> PauliCoefficients:
    """Conjugate transpose; Pauli matrices are Hermitian so only coefficients flip."""
    return PauliCoefficients(np.conj(a.scalar), np.conj(a.vector))


def trace(a: PauliCoefficients) -> complex:
    return 2.0 * a.scalar


def to_matrix(a: PauliCoefficients) -> np.ndarray:
    """Explicit 2x2 matrix; used only as a brute-force oracle."""
    return (
        a.scalar * IDENTITY
        + a.vector[0] * SIGMA_X
        + a.vector[1] * SIGMA_Y
        + a.vector[2] * SIGMA_Z
    )


def from_matrix(m: np.ndarray) -> PauliCoefficients:
    """Inverse of ``to_matrix`` via the orthogonality of the Pauli basis."""
    m = np.asarray(m, dtype=complex)
    scalar = (m[0, 0] + m[1, 1]) / 2.0
    vx = (m[0, 1] + m[1, 0]) / 2.0
    vy = 1j * (m[0, 1] - m[1, 0]) / 2.0
    vz = (m[0, 0] - m[1, 1]) / 2.0
    return PauliCoefficients(scalar, (vx, vy, vz))


def hermitian_eigenvalues(a: PauliCoefficients, tol: float = HERMITIAN_TOL) -> tuple[float, float]:
    """Eigenvalues (larger, smaller) of a Hermitian operator.

    Raises NonHermitianInput when the imaginary parts exceed ``tol``.
    """
    if not a.is_hermitian(tol):
        raise NonHermitianInput("operator is not Hermitian within tolerance")
    s = a.scalar.real
    n = float(np.linalg.norm(a.vector.real))
    return (s + n, s - n)
