"""Pure-path stepping for large registers, using bit-structured Pauli action.

The dense kernels store every collapse operator as a full matrix, which is
wasteful beyond ~10 qubits.  Here single-qubit Paulis act on a ket through
axis reshapes (sx flips one bit, sz applies a sign mask), so perfect-
monitoring trajectories stay affordable up to N ~ 14.  Semantics match the
dense pure-path runners; only the operator application differs.
"""

from __future__ import annotations

import numpy as np

from .errors import StepSizeError
from .model import FrequencyModel, NoiseAxis, ghz_state
from .trajectories import (
    HOMODYNE,
    TrajectorySamples,
    UnravelingSpec,
    _check_dt_guard,
    _grid_indices,
    _trajectory_rng,
)
from ._kernels._pyfallback import _pure_samples

__all__ = ["run_trajectory_pure_structured"]


class _StructuredOps:
    def __init__(self, m: FrequencyModel, u: UnravelingSpec):
        _check_dt_guard(m.omega, m.kappa, u.dt)
        n = m.n_qubits
        eta = u.eta_channels(n)
        if not np.all(eta == 1.0):
            raise ValueError("the structured path covers perfect monitoring only")
        self.n = n
        self.dt = u.dt
        self.kind = u.kind
        self.amp = np.sqrt(m.kappa / 2.0)
        self.transverse = m.noise_axis is NoiseAxis.TRANSVERSE
        ones = np.array([bin(i).count("1") for i in range(2**n)])
        hdiag = m.omega * 0.5 * (n - 2 * ones)
        self.dhdiag = 0.5 * (n - 2 * ones)
        chalf = m.kappa / 2.0
        if u.kind == HOMODYNE:
            # I - iH dt - (1/2) sum c^dag c dt - sum (eta/2) c_j^2 dt, all diagonal
            scalar = 1.0 - 0.5 * n * chalf * u.dt - 0.5 * n * chalf * u.dt
            self.adiag = scalar - 1j * hdiag * u.dt
            if not self.transverse:
                self.sz_signs = np.array([1.0 - 2.0 * ((np.arange(2**n) >> (n - 1 - j)) & 1) for j in range(n)])
        else:
            scalar = 1.0 - 0.5 * n * chalf * u.dt
            self.m0diag = np.exp(-1j * hdiag * u.dt) * scalar
            self.dm0diag = -1j * self.dhdiag * u.dt * self.m0diag
            self.pc = np.full(n, chalf * u.dt)
            if float(self.pc.sum()) > 0.05:
                raise StepSizeError("total click probability per step exceeds 0.05; reduce dt")
            if not self.transverse:
                self.sz_signs = np.array([1.0 - 2.0 * ((np.arange(2**n) >> (n - 1 - j)) & 1) for j in range(n)])

    def apply_c(self, j: int, v: np.ndarray) -> np.ndarray:
        """c_j v = sqrt(kappa/2) * (pauli on qubit j) v."""
        if self.transverse:
            t = v.reshape((2,) * self.n)
            return self.amp * np.flip(t, axis=j).reshape(v.shape)
        return self.amp * (self.sz_signs[j] * v)

    def apply_x(self, j: int, v: np.ndarray) -> np.ndarray:
        """(c_j + c_j^dag) v; Paulis are Hermitian so this is 2 c_j v."""
        return 2.0 * self.apply_c(j, v)


def run_trajectory_pure_structured(
    m: FrequencyModel,
    u: UnravelingSpec,
    psi0: np.ndarray | None,
    t_grid: np.ndarray,
    seed: int,
    traj_index: int,
) -> TrajectorySamples:
    """Structured-operator equivalent of run_trajectory for eta = 1 paths."""
    ops = _StructuredOps(m, u)
    t_grid = np.asarray(t_grid, dtype=float)
    grid_idx = _grid_indices(t_grid, u.dt, u.n_steps)
    rng = _trajectory_rng(seed, traj_index)
    psi = np.array(ghz_state(m.n_qubits) if psi0 is None else psi0, dtype=complex)
    phi = np.zeros_like(psi)
    n = m.n_qubits
    n_grid = len(grid_idx)
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    g = 0
    if n_grid and grid_idx[0] == 0:
        out_trtau[0], out_qcond[0] = _pure_samples(psi, phi)
        if u.kind != HOMODYNE:
            out_trtau[0] = 0.0
        g = 1

    if u.kind == HOMODYNE:
        dw = rng.normal(0.0, np.sqrt(u.dt), size=(u.n_steps, n))
        for i in range(u.n_steps):
            dy = np.array([np.vdot(psi, ops.apply_x(j, psi)).real for j in range(n)]) * u.dt + dw[i]

            def apply_b(v):
                out = np.zeros_like(v)
                for j in range(n):
                    out += dy[j] * ops.apply_c(j, v)
                return out

            b_psi = apply_b(psi)
            num_psi = ops.adiag * psi + b_psi + 0.5 * apply_b(b_psi)
            b_phi = apply_b(phi)
            num_phi = ops.adiag * phi + b_phi + 0.5 * apply_b(b_phi) - 1j * (ops.dhdiag * u.dt) * psi
            nrm = float(np.linalg.norm(num_psi))
            if not np.isfinite(nrm) or nrm <= 0.0:
                raise StepSizeError(f"structured homodyne step produced norm {nrm}")
            psi = num_psi / nrm
            phi = num_phi / nrm
            if g < n_grid and grid_idx[g] == i + 1:
                out_trtau[g], out_qcond[g] = _pure_samples(psi, phi)
                g += 1
    else:
        urand = rng.random(u.n_steps)
        for i in range(u.n_steps):
            nn = float(np.vdot(psi, psi).real)
            click = -1
            cum = 0.0
            for j in range(n):
                cum += ops.pc[j] * nn
                if urand[i] < cum:
                    click = j
                    break
            e_psi = ops.m0diag * psi
            e_phi = ops.m0diag * phi + ops.dm0diag * psi
            if click >= 0:
                e_psi = ops.apply_c(click, e_psi)
                e_phi = ops.apply_c(click, e_phi)
            nrm = float(np.linalg.norm(e_psi))
            if not np.isfinite(nrm) or nrm <= 0.0:
                raise StepSizeError(f"structured counting step produced norm {nrm}")
            psi = e_psi / nrm
            phi = e_phi / nrm
            phi = phi - np.vdot(psi, phi).real * psi
            if g < n_grid and grid_idx[g] == i + 1:
                _, q = _pure_samples(psi, phi)
                out_trtau[g] = 0.0
                out_qcond[g] = q
                g += 1

    return TrajectorySamples(times=t_grid, tr_tau=out_trtau, q_cond=out_qcond)
