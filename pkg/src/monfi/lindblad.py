"""Unconditional dynamics and the ultimate (environment-included) QFI.

Three computation routes live here:

* fixed-step RK4 propagation of the master equation, jointly with the
  frequency derivative of the state, feeding the mixed-state QFI formula;
* the two-frequency generalized map, whose log-trace mixed second derivative
  gives the ultimate QFI reachable with full access to the environment
  (evaluated by a four-point stencil, exploiting the exact per-qubit
  factorization of the map for independent noise);
* closed forms: the transverse-noise ultimate QFI and its optimal
  interrogation time, and the parallel-noise ultimate QFI (the noiseless
  unitary value).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from .errors import NumericalGuardError
from .model import FrequencyModel, NoiseAxis, ghz_state, hamiltonian, hamiltonian_derivative
from .qops import SX, SZ, _qfi_mixed_raw, dag, qfi_pure, require_density_matrix, require_normalized

__all__ = [
    "QfiCurve",
    "GeneralizedState",
    "propagate_unconditional",
    "unconditional_qfi",
    "unconditional_qfi_curve",
    "propagate_generalized",
    "ultimate_qfi_numeric",
    "generalized_qubit_trace_row",
    "ghz_generalized_trace",
    "ultimate_qfi_ghz_row",
    "transverse_ultimate_qfi",
    "transverse_optimal_time",
    "parallel_ultimate_qfi",
    "ghz_ultimate_qfi",
]

EPS_CURVE = 1e-9


@dataclass
class QfiCurve:
    """QFI values on a time grid."""

    times: np.ndarray
    values: np.ndarray
    kind: str = "unconditional"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same shape")
        if self.times.size >= 2 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly ascending")
        if self.kind not in ("unconditional", "ultimate", "effective"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.values.size and self.values.min() < -EPS_CURVE:
            raise ValueError(f"negative QFI value {self.values.min()} on the grid")


@dataclass
class GeneralizedState:
    """Operator evolved under the two-frequency generalized map.

    Not Hermitian in general; only its trace is consumed downstream.  At
    ``omega1 == omega2`` it coincides with the physical density matrix.
    """

    rho_bar: np.ndarray
    omega1: float
    omega2: float


# ---------------------------------------------------------------------------
# unconditional master equation
# ---------------------------------------------------------------------------


def _pauli_conjugations(m: FrequencyModel):
    """Return a function rho -> sum_j s_j rho s_j for the model's noise axis."""
    n = m.n_qubits
    if m.noise_axis is NoiseAxis.PARALLEL:
        # sz_j rho sz_j flips the sign of entries whose row/col bits differ at j;
        # summing the sign masks turns the whole conjugation sum into one
        # elementwise product
        mask = np.zeros((2**n, 2**n))
        for j in range(n):
            bit = np.array([1 - 2 * ((idx >> (n - 1 - j)) & 1) for idx in range(2**n)], dtype=float)
            mask += np.outer(bit, bit)

        def apply(rho: np.ndarray) -> np.ndarray:
            return mask * rho

        return apply

    def apply(rho: np.ndarray) -> np.ndarray:
        t = rho.reshape((2,) * (2 * n))
        out = np.zeros_like(t)
        for j in range(n):
            out += np.flip(t, axis=(j, n + j))
        return out.reshape(rho.shape)

    return apply


def _liouvillian_applier(m: FrequencyModel):
    """Operator-form application of the master-equation generator.

    Mathematically identical to multiplying the column-stacked state by the
    dense superoperator matrix, but memory-light (no 4^N x 4^N matrix).
    """
    hdiag = np.real(np.diag(hamiltonian(m)))
    comm_h = hdiag[:, None] - hdiag[None, :]
    conj_sum = _pauli_conjugations(m)
    half_kappa = 0.5 * m.kappa
    n = m.n_qubits

    def lop(rho: np.ndarray) -> np.ndarray:
        return -1j * comm_h * rho + half_kappa * (conj_sum(rho) - n * rho)

    return lop


def _liouvillian_norm_bound(m: FrequencyModel) -> float:
    # 2*||H|| = N*|omega|; each dissipator contributes at most kappa
    return m.n_qubits * (abs(m.omega) + m.kappa)


def _rk4_joint(m: FrequencyModel, rho0: np.ndarray, t_grid: np.ndarray):
    """RK4 on (rho, drho/domega); yields the pair at every grid time."""
    lop = _liouvillian_applier(m)
    dhdiag = np.real(np.diag(hamiltonian_derivative(m)))
    comm_dh = dhdiag[:, None] - dhdiag[None, :]

    def rhs(rho, drho):
        return lop(rho), lop(drho) - 1j * comm_dh * rho

    h_max = 0.05 / max(_liouvillian_norm_bound(m), 1e-12)
    rho = np.array(rho0, dtype=complex)
    drho = np.zeros_like(rho)
    t_prev = float(t_grid[0])
    if t_prev != 0.0:
        raise ValueError("t_grid must start at 0")
    yield rho.copy(), drho.copy()
    for t_next in t_grid[1:]:
        span = float(t_next) - t_prev
        n_sub = max(1, int(np.ceil(span / h_max)))
        h = span / n_sub
        for _ in range(n_sub):
            k1r, k1d = rhs(rho, drho)
            k2r, k2d = rhs(rho + 0.5 * h * k1r, drho + 0.5 * h * k1d)
            k3r, k3d = rhs(rho + 0.5 * h * k2r, drho + 0.5 * h * k2d)
            k4r, k4d = rhs(rho + h * k3r, drho + h * k3d)
            rho = rho + (h / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
            drho = drho + (h / 6.0) * (k1d + 2 * k2d + 2 * k3d + k4d)
            rho = 0.5 * (rho + dag(rho))
            drho = 0.5 * (drho + dag(drho))
        t_prev = float(t_next)
        yield rho.copy(), drho.copy()


def propagate_unconditional(
    m: FrequencyModel, rho0: np.ndarray, t_grid: np.ndarray
) -> list[np.ndarray]:
    """Propagate a density matrix through the unconditional master equation.

    ``t_grid`` must be ascending and start at 0.  Every returned state is
    checked Hermitian, unit trace within 1e-9 and positive within -1e-9.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    require_density_matrix(rho0, "rho0")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size >= 2 and np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly ascending")
    out = []
    for rho, _ in _rk4_joint(m, rho0, t_grid):
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > 1e-9:
            raise NumericalGuardError(f"trace drifted to {tr}; reduce the step bound")
        wmin = float(np.linalg.eigvalsh(rho).min())
        if wmin < -1e-9:
            raise NumericalGuardError(f"negative eigenvalue {wmin} during propagation")
        out.append(rho)
    return out


def unconditional_qfi(m: FrequencyModel, rho0: np.ndarray, t: float) -> float:
    """QFI of the unconditionally evolved state at time ``t``.

    Propagates (rho, d(rho)/d(omega)) jointly and feeds the eigenbasis QFI
    formula.
    """
    return unconditional_qfi_curve(m, rho0, np.array([0.0, float(t)])).values[-1]


def unconditional_qfi_curve(m: FrequencyModel, rho0: np.ndarray, t_grid: np.ndarray) -> QfiCurve:
    """Unconditional QFI on a time grid (single joint propagation pass)."""
    rho0 = np.asarray(rho0, dtype=complex)
    require_density_matrix(rho0, "rho0")
    t_grid = np.asarray(t_grid, dtype=float)
    values = []
    for rho, drho in _rk4_joint(m, rho0, t_grid):
        values.append(_qfi_mixed_raw(rho, drho))
    return QfiCurve(times=t_grid, values=np.array(values), kind="unconditional")


def _propagate_joint(m: FrequencyModel, rho0: np.ndarray, t_grid: np.ndarray):
    """(rho, drho) pairs on the grid; used by consistency tests."""
    return list(_rk4_joint(m, np.asarray(rho0, dtype=complex), np.asarray(t_grid, dtype=float)))


# ---------------------------------------------------------------------------
# two-frequency generalized map
# ---------------------------------------------------------------------------


def _single_qubit_generator(omega1: float, omega2: float, kappa: float, axis: NoiseAxis) -> np.ndarray:
    """4x4 generator of the single-qubit two-frequency map, column-stacked.

    Column stacking: vec(X)_i with i = r + 2c, so vec(A X B) =
    (B^T kron A) vec(X).
    """
    h1 = 0.5 * SZ
    s = SZ if axis is NoiseAxis.PARALLEL else SX
    eye = np.eye(2, dtype=complex)
    gen = -1j * omega1 * np.kron(eye, h1) + 1j * omega2 * np.kron(h1.T, eye)
    gen += 0.5 * kappa * (np.kron(s.T, s) - np.eye(4, dtype=complex))
    return gen


def _generalized_superoperator(m: FrequencyModel, omega1: float, omega2: float) -> np.ndarray:
    """Dense 4^N x 4^N two-frequency generator (small N only; cross-checks)."""
    from .model import collapse_operators

    d = m.dim
    eye = np.eye(d, dtype=complex)
    # built from the derivative structure so omega = 0 also works
    dh = np.real(np.diag(hamiltonian_derivative(m)))
    h_w1 = np.diag(omega1 * dh).astype(complex)
    h_w2 = np.diag(omega2 * dh).astype(complex)
    gen = -1j * np.kron(eye, h_w1) + 1j * np.kron(h_w2.T, eye)
    for c in collapse_operators(m):
        cdc = dag(c) @ c
        gen += np.kron(c.conj(), c)
        gen -= 0.5 * np.kron(eye, cdc)
        gen -= 0.5 * np.kron(cdc.T, eye)
    return gen


def _apply_single_qubit_map(e1: np.ndarray, rho: np.ndarray, n: int) -> np.ndarray:
    """Apply a one-qubit superoperator to every qubit of an n-qubit operator."""
    # tensor legs (r', c', r, c); F-order reshape matches i = r + 2c stacking
    e_t = np.asarray(e1).reshape((2, 2, 2, 2), order="F")
    t = rho.reshape((2,) * (2 * n))
    for j in range(n):
        t = np.moveaxis(t, (j, n + j), (0, 1))
        t = np.tensordot(e_t, t, axes=([2, 3], [0, 1]))
        t = np.moveaxis(t, (0, 1), (j, n + j))
    return t.reshape(rho.shape)


def propagate_generalized(
    m: FrequencyModel, rho0: np.ndarray, t: float, omega1: float, omega2: float
) -> GeneralizedState:
    """Evolve ``rho0`` under the two-frequency generalized map for time ``t``.

    The map factorizes over qubits for independent noise, so the single-qubit
    4x4 generator is exponentiated (scaling and squaring) and applied to each
    qubit in turn.
    """
    gen = _single_qubit_generator(omega1, omega2, m.kappa, m.noise_axis)
    e1 = expm(t * gen)
    rho_bar = _apply_single_qubit_map(e1, np.asarray(rho0, dtype=complex), m.n_qubits)
    return GeneralizedState(rho_bar=rho_bar, omega1=omega1, omega2=omega2)


def _log_abs_trace(m: FrequencyModel, rho0: np.ndarray, t: float, w1: float, w2: float) -> float:
    tr = complex(np.trace(propagate_generalized(m, rho0, t, w1, w2).rho_bar))
    mod = abs(tr)
    if not np.isfinite(mod) or mod <= 0.0:
        raise NumericalGuardError(
            f"generalized-map trace modulus {mod} at (omega1={w1}, omega2={w2}); stencil too wide"
        )
    return float(np.log(mod))


def _stencil_second_derivative(f, omega: float, delta: float) -> float:
    fpp = f(omega + delta, omega + delta)
    fpm = f(omega + delta, omega - delta)
    fmp = f(omega - delta, omega + delta)
    fmm = f(omega - delta, omega - delta)
    return 4.0 * (fpp - fpm - fmp + fmm) / (4.0 * delta**2)


def _stencil_with_refinement(f, omega: float, t: float, kappa: float, delta: float | None) -> float:
    if delta is not None:
        if delta <= 0:
            raise ValueError("delta must be positive")
        return _stencil_second_derivative(f, omega, delta)
    d = 1e-3 * max(kappa, abs(omega), 1.0 / t)
    q = _stencil_second_derivative(f, omega, d)
    for _ in range(8):
        d *= 0.5
        q_new = _stencil_second_derivative(f, omega, d)
        if abs(q_new - q) <= max(1e-6 * abs(q_new), 1e-12):
            return q_new
        q = q_new
    return q


def ultimate_qfi_numeric(
    m: FrequencyModel, rho0: np.ndarray, t: float, delta: float | None = None
) -> float:
    """Ultimate QFI from the two-frequency map, by a four-point stencil.

    Evaluates ``4 d^2/(domega1 domega2) log|Tr rho_bar|`` at
    ``omega1 = omega2 = m.omega`` with central differences of half-width
    ``delta``.  With ``delta=None`` the half-width starts at
    ``1e-3 * max(kappa, |omega|, 1/t)`` and is halved until the estimate
    moves by less than 1e-6 relative.

    ``rho0`` must be a pure density matrix.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    require_density_matrix(rho0, "rho0")
    purity = float(np.real(np.trace(rho0 @ rho0)))
    if abs(purity - 1.0) > 1e-8:
        raise ValueError(f"rho0 must be pure (purity {purity})")
    if t <= 0:
        raise ValueError("t must be positive")

    def f(w1, w2):
        return _log_abs_trace(m, rho0, t, w1, w2)

    return _stencil_with_refinement(f, m.omega, t, m.kappa, delta)


# ---------------------------------------------------------------------------
# single-qubit trace row and GHZ reduction (transverse noise)
# ---------------------------------------------------------------------------


def generalized_qubit_trace_row(omega1: float, omega2: float, kappa: float, t: float) -> np.ndarray:
    """First row of the transverse two-frequency qubit map, normalized-Pauli basis.

    Basis order (identity, x, y, z) with basis elements sigma_i/sqrt(2).  Only
    this row is needed to follow the trace of the evolved operator.  The
    removable singularity at ``kappa^2 == (omega1-omega2)^2`` is evaluated by
    series.  At ``omega1 == omega2`` the row is (1, 0, 0, 0): the physical
    map preserves the trace.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    delta = omega1 - omega2
    z2 = kappa**2 - delta**2
    half_t = 0.5 * t
    if abs(z2) < 1e-8 * kappa**2:
        # sinh(h z)/z and cosh(h z) as series in u = (h z)^2, both even in z
        u = half_t**2 * z2
        sinh_over_z = half_t * (1.0 + u / 6.0 + u**2 / 120.0 + u**3 / 5040.0)
        cosh_val = 1.0 + u / 2.0 + u**2 / 24.0 + u**3 / 720.0
    else:
        z = np.sqrt(complex(z2))
        sinh_over_z = np.sinh(half_t * z) / z
        cosh_val = np.cosh(half_t * z)
    damp = np.exp(-kappa * t / 2.0)
    r0 = damp * (cosh_val + kappa * sinh_over_z)
    r3 = damp * 1j * (omega2 - omega1) * sinh_over_z
    return np.array([r0, 0.0, 0.0, r3], dtype=complex)


def ghz_generalized_trace(omega1: float, omega2: float, kappa: float, t: float, n: int) -> complex:
    """Trace of the two-frequency map applied to an n-qubit GHZ projector.

    Diagonal single-qubit blocks map through the trace row; off-diagonal
    blocks stay off-diagonal and contribute nothing.
    """
    row = generalized_qubit_trace_row(omega1, omega2, kappa, t)
    a = row[0] + row[3]  # trace of the mapped |0><0|
    b = row[0] - row[3]  # trace of the mapped |1><1|
    return 0.5 * (a**n + b**n)


def ultimate_qfi_ghz_row(n: int, kappa: float, t: float, delta: float | None = None) -> float:
    """Ultimate QFI for a GHZ probe under transverse noise, via the trace row.

    O(1) cost in ``n``; same stencil definition as :func:`ultimate_qfi_numeric`.
    """

    def f(w1, w2):
        tr = ghz_generalized_trace(w1, w2, kappa, t, n)
        mod = abs(tr)
        if not np.isfinite(mod) or mod <= 0.0:
            raise NumericalGuardError(f"GHZ trace modulus {mod}; stencil too wide")
        return float(np.log(mod))

    return _stencil_with_refinement(f, 0.0, t, kappa, delta)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def transverse_ultimate_qfi(n: int, kappa: float, t: float) -> float:
    """Closed-form ultimate QFI for a GHZ probe under transverse noise."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    e = np.exp(-kappa * t)
    return float((n**2 * (1.0 - e) ** 2 + n * (2.0 * kappa * t + 1.0 - (2.0 - e) ** 2)) / kappa**2)


def transverse_optimal_time(n: int, kappa: float, t_max: float | None = None) -> tuple[float, float, bool]:
    """Maximize the closed-form transverse ultimate QFI over t.

    Returns ``(t_opt, max_t Q/t, at_bound)``.  For small n the ratio is
    monotonically increasing, in which case ``at_bound`` is True and the
    reported optimum sits at the search boundary.  As n grows, t_opt tends
    to ~1.26/kappa.
    """
    if t_max is None:
        t_max = 50.0 / kappa
    ts = np.linspace(1e-4 / kappa, t_max, 2001)
    ratio = np.array([transverse_ultimate_qfi(n, kappa, t) / t for t in ts])
    k = int(np.argmax(ratio))
    # flat approach to the large-t asymptote counts as a boundary maximum
    if k >= len(ts) - 1 or ratio[-1] >= (1.0 - 1e-6) * ratio[k]:
        return float(ts[k]), float(ratio[k]), True
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, len(ts) - 1)]
    res = minimize_scalar(
        lambda t: -transverse_ultimate_qfi(n, kappa, t) / t,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(res.x), float(-res.fun), False


def parallel_ultimate_qfi(m: FrequencyModel, psi0: np.ndarray, t: float) -> float:
    """Ultimate QFI under parallel noise: the noiseless unitary value.

    Equals ``4 t^2 Var_psi0((1/2) sum_j sz_j)``, evaluated as the pure-state
    QFI of the unitarily evolved probe.  GHZ gives ``n^2 t^2``.
    """
    if m.noise_axis is not NoiseAxis.PARALLEL:
        raise ValueError("parallel_ultimate_qfi requires parallel noise")
    psi0 = np.asarray(psi0, dtype=complex)
    require_normalized(psi0)
    hdiag = np.real(np.diag(hamiltonian(m)))
    dhdiag = np.real(np.diag(hamiltonian_derivative(m)))
    psi_t = np.exp(-1j * hdiag * t) * psi0
    dpsi_t = -1j * t * dhdiag * psi_t
    return qfi_pure(psi_t, dpsi_t)


def ghz_ultimate_qfi(m: FrequencyModel, t: float) -> float:
    """Ultimate QFI for the GHZ probe of the given model (closed forms)."""
    if m.noise_axis is NoiseAxis.PARALLEL:
        return float(m.n_qubits**2 * t**2)
    if t == 0.0:
        return 0.0
    return transverse_ultimate_qfi(m.n_qubits, m.kappa, t)
