"""The frequency-estimation problem: register Hamiltonian, noise channels, probes.

``N`` qubits precess at an unknown frequency ``omega`` under
``H = (omega/2) sum_j sz_j`` while each qubit couples to its own Markovian
environment with rate ``kappa``, along ``sz`` (parallel/dephasing noise) or
``sx`` (transverse noise).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .qops import SX, SZ, embed

__all__ = [
    "NoiseAxis",
    "FrequencyModel",
    "hamiltonian",
    "hamiltonian_derivative",
    "collapse_operators",
    "ghz_state",
    "coherent_spin_state",
]


class NoiseAxis(enum.Enum):
    PARALLEL = "parallel"
    TRANSVERSE = "transverse"


@dataclass(frozen=True)
class FrequencyModel:
    """N-qubit frequency estimation with independent single-qubit noise.

    Attributes
    ----------
    n_qubits : int
        Number of probe qubits, ``N >= 1``.
    omega : float
        Frequency to estimate (rad / unit time).
    kappa : float
        Noise rate, ``kappa >= 0``.
    noise_axis : NoiseAxis
        ``PARALLEL`` couples through ``sz`` (dephasing), ``TRANSVERSE``
        through ``sx``.
    """

    n_qubits: int
    omega: float
    kappa: float
    noise_axis: NoiseAxis = NoiseAxis.PARALLEL

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if not isinstance(self.noise_axis, NoiseAxis):
            object.__setattr__(self, "noise_axis", NoiseAxis(self.noise_axis))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def _spin_z_half_diag(n: int) -> np.ndarray:
    """Diagonal of (1/2) sum_j sz_j for an n-qubit register."""
    diag = np.zeros(2**n)
    for idx in range(2**n):
        ones = bin(idx).count("1")
        diag[idx] = 0.5 * (n - 2 * ones)
    return diag


def hamiltonian(m: FrequencyModel) -> np.ndarray:
    """Register Hamiltonian ``(omega/2) sum_j sz_j`` (diagonal)."""
    return np.diag(m.omega * _spin_z_half_diag(m.n_qubits)).astype(complex)


def hamiltonian_derivative(m: FrequencyModel) -> np.ndarray:
    """Frequency derivative of the Hamiltonian, ``(1/2) sum_j sz_j``.

    Independent of ``omega``; supplied analytically so steppers never
    differentiate numerically.
    """
    return np.diag(_spin_z_half_diag(m.n_qubits)).astype(complex)


def collapse_operators(m: FrequencyModel) -> list[np.ndarray]:
    """Per-qubit noise operators ``sqrt(kappa/2) * s_axis_j``.

    Each satisfies ``c_j^dag c_j = (kappa/2) * I``, which is what makes the
    photodetection record carry no information on the frequency.
    """
    pauli = SZ if m.noise_axis is NoiseAxis.PARALLEL else SX
    amp = np.sqrt(m.kappa / 2.0)
    return [amp * embed(pauli, j, m.n_qubits) for j in range(1, m.n_qubits + 1)]


def ghz_state(n: int) -> np.ndarray:
    """(|0...0> + |1...1>)/sqrt(2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    return psi


def coherent_spin_state(n: int) -> np.ndarray:
    """[(|0> + |1>)/sqrt(2)]^(tensor n): all amplitudes equal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.full(2**n, 2.0 ** (-n / 2.0), dtype=complex)
