"""Shared oracles for the test suite.

The oracles here are deliberately independent of the kernel implementations:
gates are applied through explicit Kronecker-product matrices and entropies
through the full density matrix, so kernel bugs cannot hide behind themselves.
"""

import numpy as np
import pytest


def dense_operator(u: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Full 2^n x 2^n matrix for `u` acting on `qubit` (and the following
    qubits for larger blocks), with qubit 0 as the most significant bit."""
    k = u.shape[0].bit_length() - 1  # number of qubits u acts on
    left = np.eye(1 << qubit)
    right = np.eye(1 << (n - qubit - k))
    return np.kron(np.kron(left, u), right)


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return (amps / np.linalg.norm(amps)).astype(np.complex128)


def density_matrix_entropy(amps: np.ndarray, num_leading: int, n: int) -> float:
    """Entropy oracle: build rho_A by explicit partial trace, diagonalize."""
    m = amps.reshape(1 << num_leading, 1 << (n - num_leading))
    rho = m @ m.conj().T
    evals = np.linalg.eigvalsh(rho)
    evals = evals[evals > 1e-12]
    return float(-np.sum(evals * np.log(evals)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
