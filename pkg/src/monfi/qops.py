"""Dense complex qubit-operator toolkit and the two Fisher-information formulas.

All operators are plain ``numpy`` arrays of ``complex128``; a ket is a 1-d
array, an operator a square 2-d array.  Qubit 1 is the most significant
tensor factor, so ``embed(sz, 1, 2) = diag(1, 1, -1, -1)``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ID2",
    "SX",
    "SY",
    "SZ",
    "kron",
    "embed",
    "dag",
    "is_hermitian",
    "require_hermitian",
    "require_density_matrix",
    "require_normalized",
    "hermitian_eig",
    "qfi_mixed",
    "qfi_pure",
]

ID2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

# Eigenvalue-pair cutoff for the mixed-state QFI sum.  Absolute, since the
# density matrix has unit trace; avoids the blow-up when the state changes
# rank (e.g. approaching omega = 0).
EPS_RANK = 1e-12


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with qubit 1 as the leftmost (most significant) factor."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def embed(op: np.ndarray, j: int, n: int) -> np.ndarray:
    """Embed a single-qubit operator at position ``j`` (1-based) in an ``n``-qubit register."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {op.shape}")
    if not 1 <= j <= n:
        raise ValueError(f"qubit index {j} out of range 1..{n}")
    out = np.eye(1, dtype=complex)
    for k in range(1, n + 1):
        out = np.kron(out, op if k == j else ID2)
    return out


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a).conj().T


def is_hermitian(a: np.ndarray, rtol: float = 1e-10) -> bool:
    """Check ``max|A - A^dag| <= rtol * max(1, max|A|)``."""
    a = np.asarray(a)
    scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
    return float(np.abs(a - dag(a)).max()) <= rtol * scale


def require_hermitian(a: np.ndarray, name: str = "matrix", rtol: float = 1e-10) -> None:
    if not is_hermitian(a, rtol):
        raise ValueError(f"{name} is not Hermitian within tolerance {rtol}")


def require_density_matrix(rho: np.ndarray, name: str = "rho", eig_floor: float = -1e-10) -> None:
    """Validate Hermiticity, unit trace and positivity (within ``eig_floor``)."""
    require_hermitian(rho, name)
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"{name} trace {tr} deviates from 1")
    w = np.linalg.eigvalsh(0.5 * (rho + dag(rho)))
    if w.min() < eig_floor:
        raise ValueError(f"{name} has negative eigenvalue {w.min()}")


def require_normalized(psi: np.ndarray, name: str = "psi", tol: float = 1e-10) -> None:
    nrm = float(np.linalg.norm(psi))
    if abs(nrm - 1.0) > tol:
        raise ValueError(f"{name} norm {nrm} deviates from 1")


def hermitian_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and eigenvectors as
    the columns of ``v``, so that ``a = v @ diag(w) @ v.conj().T``.
    """
    a = np.asarray(a, dtype=complex)
    require_hermitian(a, "input")
    w, v = np.linalg.eigh(0.5 * (a + dag(a)))
    return w, v


def _qfi_mixed_raw(rho: np.ndarray, drho: np.ndarray, eps_rank: float = EPS_RANK) -> float:
    """Mixed-state QFI sum in the eigenbasis of ``rho``; no input validation."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    a = v.conj().T @ drho @ v
    denom = w[:, None] + w[None, :]
    mask = denom > eps_rank
    q = 2.0 * float(np.sum((np.abs(a) ** 2)[mask] / denom[mask]))
    return q


def qfi_mixed(rho: np.ndarray, drho: np.ndarray, eps_rank: float = EPS_RANK) -> float:
    """Quantum Fisher information of a mixed state from its parameter derivative.

    Evaluates ``2 sum_{s,t} |<s|drho|t>|^2 / (l_s + l_t)`` over eigenvalue
    pairs with ``l_s + l_t > eps_rank``, where ``rho = sum_s l_s |s><s|``.

    Parameters
    ----------
    rho : ndarray
        Density matrix (Hermitian, unit trace, positive within ``-1e-10``).
    drho : ndarray
        Derivative of the state with respect to the estimated parameter
        (Hermitian and traceless within ``1e-10``).
    """
    rho = np.asarray(rho, dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    require_density_matrix(rho)
    require_hermitian(drho, "drho")
    scale = max(1.0, float(np.abs(drho).max())) if drho.size else 1.0
    if abs(complex(np.trace(drho))) > 1e-10 * scale:
        raise ValueError("drho is not traceless within tolerance")
    return _qfi_mixed_raw(rho, drho, eps_rank)


def qfi_pure(psi: np.ndarray, dpsi: np.ndarray) -> float:
    """Quantum Fisher information of a pure state family.

    Evaluates ``4 [ <dpsi|dpsi> + (<dpsi|psi>)^2 ]``.  For a normalized family
    ``<dpsi|psi>`` is purely imaginary, so the bracket is real; the imaginary
    residue is asserted below 1e-10 and discarded.
    """
    psi = np.asarray(psi, dtype=complex)
    dpsi = np.asarray(dpsi, dtype=complex)
    require_normalized(psi)
    overlap = np.vdot(dpsi, psi)
    val = 4.0 * (np.vdot(dpsi, dpsi) + overlap**2)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"pure-state QFI has imaginary residue {val.imag}")
    return float(val.real)
