"""Hamiltonian models mapping (system parameters, controls) to matrices.

The central model is a three-level lambda system used in rare-earth-ion
ensembles: two ground states |0>, |1> form the qubit and are coupled
optically to a shared excited state |e> whose energy is shifted by an
ion-specific detuning.  Basis order is (|0>, |1>, |e>) everywhere.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemParameters",
    "HamiltonianModel",
    "ReqcModel",
    "StubModel",
    "TargetGate",
    "reqc_model",
    "stub_model",
    "phase_gate_target",
    "identity_target",
]


@dataclass(frozen=True)
class SystemParameters:
    """Uncontrollable parameters of one ensemble member.

    gamma: relative field strength (dimensionless, >= 0).
    delta: inhomogeneous shift of the excited state, in Rabi-frequency units.
    """

    gamma: float
    delta: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.gamma) and np.isfinite(self.delta)):
            raise ValueError("system parameters must be finite")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


class HamiltonianModel(ABC):
    """Drift-plus-controls Hamiltonian, linear in each control channel.

    Subclasses provide the drift term and the constant matrices dH/deps_c;
    ``evaluate`` assembles H(xi, eps) = drift(xi) + sum_c eps_c * dH/deps_c.
    ``hermitian`` declares whether H is Hermitian for all inputs, which
    selects the unitary propagation path.
    """

    dimension: int
    qubit_indices: tuple[int, ...]
    n_channels: int
    hermitian: bool

    @abstractmethod
    def drift(self, xi: SystemParameters) -> np.ndarray:
        """Control-independent part of H, shape (d, d) complex."""

    @abstractmethod
    def control_derivatives(self, xi: SystemParameters) -> np.ndarray:
        """Constant matrices dH/deps_c, shape (n_channels, d, d) complex."""

    def evaluate(self, xi: SystemParameters, eps: np.ndarray) -> np.ndarray:
        """Hamiltonian at control vector ``eps`` (length n_channels)."""
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (self.n_channels,):
            raise ValueError(
                f"expected {self.n_channels} control values, got shape {eps.shape}"
            )
        return self.drift(xi) + np.tensordot(eps, self.control_derivatives(xi), axes=1)


class ReqcModel(HamiltonianModel):
    """Three-level single-ion model with optically driven |0>,|1> -> |e>.

    H = -delta |e><e| + (gamma/2) * sum_i (Omega_i |e><i| + h.c.),
    with complex Rabi frequencies Omega_i = eps_{2i} + 1j*eps_{2i+1}
    carried by four real quadrature channels.  An optional excited-state
    loss rate adds the non-Hermitian term -(1j/2) * loss_rate |e><e|.
    """

    dimension = 3
    qubit_indices = (0, 1)
    n_channels = 4

    def __init__(self, loss_rate: float = 0.0):
        if loss_rate < 0:
            raise ValueError(f"loss_rate must be >= 0, got {loss_rate}")
        self.loss_rate = loss_rate
        self.hermitian = loss_rate == 0.0

    def drift(self, xi: SystemParameters) -> np.ndarray:
        h = np.zeros((3, 3), dtype=complex)
        h[2, 2] = -xi.delta - 0.5j * self.loss_rate
        return h

    def control_derivatives(self, xi: SystemParameters) -> np.ndarray:
        g = 0.5 * xi.gamma
        mats = np.zeros((4, 3, 3), dtype=complex)
        for i, ground in enumerate((0, 1)):
            # Real quadrature: (gamma/2)(|e><i| + |i><e|).
            mats[2 * i, 2, ground] = g
            mats[2 * i, ground, 2] = g
            # Imaginary quadrature: (gamma/2)(1j|e><i| - 1j|i><e|).
            mats[2 * i + 1, 2, ground] = 1j * g
            mats[2 * i + 1, ground, 2] = -1j * g
        return mats


class StubModel(HamiltonianModel):
    """Two-level toy model for smoke tests: H = eps_0 sx/2 + eps_1 sy/2."""

    dimension = 2
    qubit_indices = (0, 1)
    n_channels = 2
    hermitian = True

    def drift(self, xi: SystemParameters) -> np.ndarray:
        return np.zeros((2, 2), dtype=complex)

    def control_derivatives(self, xi: SystemParameters) -> np.ndarray:
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
        return 0.5 * np.stack([sx, sy])


def reqc_model(loss_rate: float = 0.0) -> ReqcModel:
    """Three-level rare-earth ion model; lossless by default."""
    return ReqcModel(loss_rate=loss_rate)


def stub_model() -> StubModel:
    return StubModel()


@dataclass(frozen=True)
class TargetGate:
    """Desired unitary on the qubit subspace."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"target matrix must be square, got shape {m.shape}")
        defect = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if defect > 1e-12:
            raise ValueError(f"target matrix is not unitary (defect {defect:.2e})")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def phase_gate_target() -> TargetGate:
    """Pi phase shift on |0>: diag(-1, +1) in the (|0>, |1>) basis."""
    return TargetGate(np.diag([-1.0 + 0j, 1.0 + 0j]))


def identity_target(n: int) -> TargetGate:
    """Do-nothing target used for ions that must not be disturbed."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return TargetGate(np.eye(n, dtype=complex))
