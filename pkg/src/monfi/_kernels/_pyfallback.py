"""Pure-numpy trajectory stepping: reference semantics for the compiled kernel.

Single steps are exposed so the public step operations can delegate here; the
``run_*`` loops mirror the Cython kernel exactly and are the slow-path backend.

State buffers (`rho`, `tau`, `psi`, `phi`) are updated in place by the
runners.  All operators are complex128 and C-contiguous.
"""

from __future__ import annotations

import numpy as np

from ..errors import StepSizeError
from ..qops import _qfi_mixed_raw


def _dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def _resym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


# ---------------------------------------------------------------------------
# homodyne, mixed conditional state
# ---------------------------------------------------------------------------


def hd_step_mixed(A, dHdt, C, X, defw, sqeta, dt, rho, tau, dwrow):
    """One diffusive step of (rho, tau); returns (rho', tau', dy)."""
    nc = C.shape[0]
    means = np.array([np.einsum("ij,ji->", rho, X[j]).real for j in range(nc)])
    dy = sqeta * means * dt + dwrow
    b = np.tensordot(sqeta * dy, C, axes=1)
    m_op = A + b + 0.5 * (b @ b)
    g = rho @ _dagger(m_op)
    num_rho = m_op @ g
    for j in range(nc):
        num_rho += defw[j] * (C[j] @ rho @ _dagger(C[j]))
    k = dHdt @ g
    cross = -1j * k
    num_tau = m_op @ tau @ _dagger(m_op) + cross + _dagger(cross)
    for j in range(nc):
        num_tau += defw[j] * (C[j] @ tau @ _dagger(C[j]))
    tr = float(np.trace(num_rho).real)
    if not np.isfinite(tr) or tr <= 0.0:
        raise StepSizeError(f"homodyne step produced trace {tr}; reduce dt")
    rho_new = _resym(num_rho / tr)
    tau_new = _resym(num_tau / tr)
    return rho_new, tau_new, dy


def run_homodyne_mixed(A, dHdt, C, X, defw, sqeta, dt, dw, grid_idx, rho, tau, eps_rank):
    n_steps = dw.shape[0]
    n_grid = len(grid_idx)
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    g = 0

    def sample(slot):
        trt = float(np.trace(tau).real)
        out_trtau[slot] = trt
        out_qcond[slot] = _qfi_mixed_raw(rho, tau - trt * rho, eps_rank)

    if g < n_grid and grid_idx[g] == 0:
        sample(g)
        g += 1
    for i in range(n_steps):
        rho_new, tau_new, _ = hd_step_mixed(A, dHdt, C, X, defw, sqeta, dt, rho, tau, dw[i])
        rho[...] = rho_new
        tau[...] = tau_new
        if g < n_grid and grid_idx[g] == i + 1:
            sample(g)
            g += 1
    return out_trtau, out_qcond


# ---------------------------------------------------------------------------
# photodetection, mixed conditional state
# ---------------------------------------------------------------------------


def pd_select_click(pc, trr, urand):
    """Channel index for this step, or -1 for no click."""
    cum = 0.0
    for j in range(len(pc)):
        cum += pc[j] * trr
        if urand < cum:
            return j
    return -1


def pd_step_mixed(m0diag, dm0diag, C, defw, pc, rho, tau, urand, gauge=True):
    """One counting step of (rho, tau); returns (rho', tau', click).

    ``gauge=False`` skips the traceless projection of tau (used by tests to
    measure the raw floating-point trace residue).
    """
    nc = C.shape[0]
    trr = float(np.trace(rho).real)
    click = pd_select_click(pc, trr, urand)
    # deterministic within-step evolution happens in every branch; a click is
    # an instantaneous jump composed on top of it
    e_rho = m0diag[:, None] * rho * m0diag.conj()[None, :]
    e_tau = (
        m0diag[:, None] * tau * m0diag.conj()[None, :]
        + dm0diag[:, None] * rho * m0diag.conj()[None, :]
        + m0diag[:, None] * rho * dm0diag.conj()[None, :]
    )
    for j in range(nc):
        e_rho += defw[j] * (C[j] @ rho @ _dagger(C[j]))
        e_tau += defw[j] * (C[j] @ tau @ _dagger(C[j]))
    if click >= 0:
        e_rho = C[click] @ e_rho @ _dagger(C[click])
        e_tau = C[click] @ e_tau @ _dagger(C[click])
    tr = float(np.trace(e_rho).real)
    if not np.isfinite(tr) or tr <= 0.0:
        raise StepSizeError(f"photodetection step produced trace {tr}; reduce dt")
    rho_new = _resym(e_rho / tr)
    tau_new = _resym(e_tau / tr)
    if gauge:
        # counting records carry no frequency information for these channels,
        # so tau is traceless; project out the floating-point residue
        tau_new -= float(np.trace(tau_new).real) * rho_new
    return rho_new, tau_new, click


def run_pd_mixed(m0diag, dm0diag, C, defw, pc, urand, grid_idx, rho, tau, eps_rank):
    n_steps = urand.shape[0]
    nc = C.shape[0]
    n_grid = len(grid_idx)
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    clicks = np.zeros(nc, dtype=np.int64)
    g = 0

    def sample(slot):
        out_trtau[slot] = 0.0
        trt = float(np.trace(tau).real)
        out_qcond[slot] = _qfi_mixed_raw(rho, tau - trt * rho, eps_rank)

    if g < n_grid and grid_idx[g] == 0:
        sample(g)
        g += 1
    for i in range(n_steps):
        rho_new, tau_new, click = pd_step_mixed(m0diag, dm0diag, C, defw, pc, rho, tau, urand[i])
        rho[...] = rho_new
        tau[...] = tau_new
        if click >= 0:
            clicks[click] += 1
        if g < n_grid and grid_idx[g] == i + 1:
            sample(g)
            g += 1
    return out_trtau, out_qcond, clicks


# ---------------------------------------------------------------------------
# homodyne, pure conditional state (all efficiencies = 1)
# ---------------------------------------------------------------------------


def _apply_b(C, weights, v):
    out = np.zeros_like(v)
    for j in range(C.shape[0]):
        out += weights[j] * (C[j] @ v)
    return out


def hd_step_pure(A, dHdt, C, X, sqeta, dt, psi, phi, dwrow):
    """One diffusive step of (psi, phi); returns (psi', phi', dy)."""
    nc = C.shape[0]
    means = np.array([np.vdot(psi, X[j] @ psi).real for j in range(nc)])
    dy = sqeta * means * dt + dwrow
    w = sqeta * dy
    b_psi = _apply_b(C, w, psi)
    num_psi = A @ psi + b_psi + 0.5 * _apply_b(C, w, b_psi)
    b_phi = _apply_b(C, w, phi)
    num_phi = A @ phi + b_phi + 0.5 * _apply_b(C, w, b_phi) + (-1j) * (dHdt @ psi)
    nrm = float(np.linalg.norm(num_psi))
    if not np.isfinite(nrm) or nrm <= 0.0:
        raise StepSizeError(f"homodyne step produced norm {nrm}; reduce dt")
    return num_psi / nrm, num_phi / nrm, dy


def _pure_samples(psi, phi):
    overlap = np.vdot(psi, phi)
    trtau = 2.0 * overlap.real
    dpsi = phi - overlap.real * psi
    back = np.vdot(dpsi, psi)
    q = 4.0 * (np.vdot(dpsi, dpsi).real + (back**2).real)
    return trtau, q


def run_homodyne_pure(A, dHdt, C, X, sqeta, dt, dw, grid_idx, psi, phi):
    n_steps = dw.shape[0]
    n_grid = len(grid_idx)
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    g = 0
    if g < n_grid and grid_idx[g] == 0:
        out_trtau[g], out_qcond[g] = _pure_samples(psi, phi)
        g += 1
    for i in range(n_steps):
        psi_new, phi_new, _ = hd_step_pure(A, dHdt, C, X, sqeta, dt, psi, phi, dw[i])
        psi[...] = psi_new
        phi[...] = phi_new
        if g < n_grid and grid_idx[g] == i + 1:
            out_trtau[g], out_qcond[g] = _pure_samples(psi, phi)
            g += 1
    return out_trtau, out_qcond


# ---------------------------------------------------------------------------
# photodetection, pure conditional state (all efficiencies = 1)
# ---------------------------------------------------------------------------


def pd_step_pure(m0diag, dm0diag, C, pc, psi, phi, urand, gauge=True):
    """One counting step of (psi, phi); returns (psi', phi', click)."""
    nn = float(np.vdot(psi, psi).real)
    click = pd_select_click(pc, nn, urand)
    e_psi = m0diag * psi
    e_phi = m0diag * phi + dm0diag * psi
    if click >= 0:
        e_psi = C[click] @ e_psi
        e_phi = C[click] @ e_phi
    nrm = float(np.linalg.norm(e_psi))
    if not np.isfinite(nrm) or nrm <= 0.0:
        raise StepSizeError(f"photodetection step produced norm {nrm}; reduce dt")
    psi_new = e_psi / nrm
    phi_new = e_phi / nrm
    if gauge:
        # traceless gauge, see pd_step_mixed
        phi_new = phi_new - np.vdot(psi_new, phi_new).real * psi_new
    return psi_new, phi_new, click


def run_pd_pure(m0diag, dm0diag, C, pc, urand, grid_idx, psi, phi):
    n_steps = urand.shape[0]
    nc = C.shape[0]
    n_grid = len(grid_idx)
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    clicks = np.zeros(nc, dtype=np.int64)
    g = 0

    def sample(slot):
        _, q = _pure_samples(psi, phi)
        out_trtau[slot] = 0.0
        out_qcond[slot] = q

    if g < n_grid and grid_idx[g] == 0:
        sample(g)
        g += 1
    for i in range(n_steps):
        psi_new, phi_new, click = pd_step_pure(m0diag, dm0diag, C, pc, psi, phi, urand[i])
        psi[...] = psi_new
        phi[...] = phi_new
        if click >= 0:
            clicks[click] += 1
        if g < n_grid and grid_idx[g] == i + 1:
            sample(g)
            g += 1
    return out_trtau, out_qcond, clicks
