"""Dense statevector of an L-qubit chain with the native trapped-ion gates.

Conventions:
    * qubit 0 is the most significant bit of the basis-state index;
    * two-qubit gates act on adjacent pairs (i, i+1) only (open boundary);
    * amplitudes are complex128 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateBranchError, GateTargetError, NotNormalizedError

NORM_TOL = 1e-10
UNITARITY_TOL = 1e-12
EIGENVALUE_FLOOR = 1e-12


@dataclass
class StateVector:
    """Pure state of `num_qubits` qubits as 2**num_qubits amplitudes."""

    num_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def all_zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def all_plus(cls, num_qubits: int) -> "StateVector":
        dim = 1 << num_qubits
        amps = np.full(dim, 1.0 / math.sqrt(dim), dtype=np.complex128)
        return cls(num_qubits, amps)

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm_squared(self) -> float:
        a = self.amplitudes
        return float(np.sum(a.real * a.real + a.imag * a.imag))


@dataclass
class SingleQubitGate:
    matrix: np.ndarray  # 2x2
    target: int


@dataclass
class TwoQubitGate:
    matrix: np.ndarray  # 4x4
    targets: tuple[int, int]  # adjacent pair (i, i+1)


def ms_gate(theta: float, qubit: int = 0) -> TwoQubitGate:
    """Molmer-Sorensen XX rotation: cos(theta) I - i sin(theta) X (x) X,
    acting on the pair (qubit, qubit+1)."""
    c = math.cos(theta)
    s = -1j * math.sin(theta)
    m = np.array(
        [
            [c, 0, 0, s],
            [0, c, s, 0],
            [0, s, c, 0],
            [s, 0, 0, c],
        ],
        dtype=np.complex128,
    )
    return TwoQubitGate(m, (qubit, qubit + 1))


def rotation_gate(theta: float, phi: float, qubit: int = 0) -> SingleQubitGate:
    """Single-qubit rotation R(theta, phi) about the axis at azimuth phi in
    the xy-plane."""
    c = math.cos(theta / 2.0)
    s = math.sin(theta / 2.0)
    m = np.array(
        [
            [c, -1j * np.exp(-1j * phi) * s],
            [-1j * np.exp(1j * phi) * s, c],
        ],
        dtype=np.complex128,
    )
    return SingleQubitGate(m, qubit)


def is_unitary(matrix: np.ndarray, tol: float = UNITARITY_TOL) -> bool:
    d = matrix.shape[0]
    return bool(np.max(np.abs(matrix.conj().T @ matrix - np.eye(d))) < tol)


def apply_gate(state: StateVector, gate: SingleQubitGate | TwoQubitGate) -> StateVector:
    """Return a new state with `gate` applied."""
    out = state.copy()
    n = state.num_qubits
    if isinstance(gate, SingleQubitGate):
        if not 0 <= gate.target < n:
            raise GateTargetError(f"qubit {gate.target} out of range for L={n}")
        kernels.apply_1q(out.amplitudes, np.ascontiguousarray(gate.matrix), gate.target, n)
    else:
        i, j = gate.targets
        if j != i + 1 or not 0 <= i < n - 1:
            raise GateTargetError(f"pair {gate.targets} is not an adjacent pair in [0, {n})")
        kernels.apply_2q(out.amplitudes, np.ascontiguousarray(gate.matrix), i, n)
    return out


def measurement_probability(state: StateVector, qubit: int) -> tuple[float, float]:
    """Born probabilities (p0, p1) for a Z-basis measurement of `qubit`."""
    if not 0 <= qubit < state.num_qubits:
        raise GateTargetError(f"qubit {qubit} out of range for L={state.num_qubits}")
    norm = state.norm_squared()
    if abs(norm - 1.0) > NORM_TOL:
        raise NotNormalizedError(f"state norm^2 = {norm!r}, expected 1")
    p0 = kernels.prob_zero(state.amplitudes, qubit, state.num_qubits)
    p0 = min(max(p0, 0.0), 1.0)
    return p0, 1.0 - p0


def project(
    state: StateVector, qubit: int, outcome: int, renormalize: bool = True
) -> tuple[StateVector, float]:
    """Project `qubit` onto `outcome`.

    Returns the projected state and the branch weight (squared norm of the
    projected state before renormalization). Renormalizing a zero-weight
    branch raises DegenerateBranchError.
    """
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    if not 0 <= qubit < state.num_qubits:
        raise GateTargetError(f"qubit {qubit} out of range for L={state.num_qubits}")
    out = state.copy()
    weight = kernels.project(out.amplitudes, qubit, outcome, renormalize, state.num_qubits)
    if renormalize and weight == 0.0:
        raise DegenerateBranchError(f"outcome {outcome} on qubit {qubit} has zero probability")
    return out, weight


def entanglement_entropy(state: StateVector, num_leading: int, base2: bool = False) -> float:
    """Von Neumann entropy of the first `num_leading` qubits, in nats
    (bits with `base2`).

    Diagonalizes the reduced density matrix on the smaller side of the cut;
    eigenvalues below 1e-12 are skipped.
    """
    n = state.num_qubits
    if not 0 < num_leading < n:
        raise ValueError(f"subsystem size must be in (0, {n}), got {num_leading}")
    norm = state.norm_squared()
    if abs(norm - 1.0) > NORM_TOL:
        raise NotNormalizedError(f"state norm^2 = {norm!r}, expected 1")
    m = state.amplitudes.reshape(1 << num_leading, -1)
    # rho_A and rho_B share a nonzero spectrum; diagonalize the smaller one
    if m.shape[0] <= m.shape[1]:
        rho = m @ m.conj().T
    else:
        rho = m.conj().T @ m
    evals = np.linalg.eigvalsh(rho)
    evals = evals[evals > EIGENVALUE_FLOOR]
    s = float(-np.sum(evals * np.log(evals)))
    s = max(s, 0.0)
    return s / math.log(2.0) if base2 else s
