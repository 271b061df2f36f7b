# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trajectory-stepping kernel.

Mirrors ``_pyfallback`` exactly (same update order, same normalization and
re-symmetrization, same traceless gauge for counting records); the loops run
without the GIL so trajectories can be fanned out over threads.  Matrix
products use plain triple loops: register dimensions in the hot regime are
tiny (2..16), where BLAS call overhead would dominate.
"""

import numpy as np

from libc.stdlib cimport free, malloc
from libc.math cimport sqrt as c_sqrt
from scipy.linalg.cython_lapack cimport zheevd

from ..errors import StepSizeError


# ---------------------------------------------------------------------------
# small dense helpers (row-major buffers)
# ---------------------------------------------------------------------------


cdef inline void mat_zero(double complex* a, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        a[i] = 0


cdef inline void mat_copy(double complex* src, double complex* dst, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        dst[i] = src[i]


cdef void matmul(double complex* a, double complex* b, double complex* out, int d) noexcept nogil:
    # out = a @ b; ikj order keeps the inner loop contiguous in b and out
    cdef int i, j, k
    cdef double complex aik
    for i in range(d):
        for j in range(d):
            out[i * d + j] = 0
        for k in range(d):
            aik = a[i * d + k]
            for j in range(d):
                out[i * d + j] = out[i * d + j] + aik * b[k * d + j]


cdef void matmul_nh(double complex* a, double complex* b, double complex* out, int d) noexcept nogil:
    # out = a @ b^H
    cdef int i, j, k
    cdef double complex acc
    for i in range(d):
        for j in range(d):
            acc = 0
            for k in range(d):
                acc = acc + a[i * d + k] * b[j * d + k].conjugate()
            out[i * d + j] = acc


cdef void matvec(double complex* a, double complex* v, double complex* out, int d) noexcept nogil:
    cdef int i, k
    cdef double complex acc
    for i in range(d):
        acc = 0
        for k in range(d):
            acc = acc + a[i * d + k] * v[k]
        out[i] = acc


cdef inline double trace_re(double complex* a, int d) noexcept nogil:
    cdef int i
    cdef double s = 0.0
    for i in range(d):
        s += a[i * d + i].real
    return s


cdef inline void resym(double complex* a, int d) noexcept nogil:
    cdef int i, j
    cdef double complex u, v
    for i in range(d):
        for j in range(i, d):
            u = a[i * d + j]
            v = a[j * d + i]
            a[i * d + j] = 0.5 * (u + v.conjugate())
            a[j * d + i] = a[i * d + j].conjugate()


cdef inline void mat_scale(double complex* a, double s, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        a[i] = a[i] * s


# ---------------------------------------------------------------------------
# mixed-state QFI via LAPACK zheevd
# ---------------------------------------------------------------------------


cdef struct EigWork:
    double complex* a
    double* w
    double complex* work
    double* rwork
    int* iwork
    double complex* z
    int lwork
    int lrwork
    int liwork


cdef int eig_work_alloc(EigWork* ew, int d) except -1:
    cdef int lwork = 2 * d * d + 4 * d + 16
    cdef int lrwork = 2 * d * d + 6 * d + 16
    cdef int liwork = 5 * d + 8
    ew.a = <double complex*> malloc(d * d * sizeof(double complex))
    ew.w = <double*> malloc(d * sizeof(double))
    ew.work = <double complex*> malloc(lwork * sizeof(double complex))
    ew.rwork = <double*> malloc(lrwork * sizeof(double))
    ew.iwork = <int*> malloc(liwork * sizeof(int))
    ew.z = <double complex*> malloc(d * sizeof(double complex))
    ew.lwork = lwork
    ew.lrwork = lrwork
    ew.liwork = liwork
    if ew.a == NULL or ew.w == NULL or ew.work == NULL or ew.rwork == NULL or ew.iwork == NULL or ew.z == NULL:
        raise MemoryError()
    return 0


cdef void eig_work_free(EigWork* ew) noexcept nogil:
    free(ew.a); free(ew.w); free(ew.work); free(ew.rwork); free(ew.iwork); free(ew.z)


cdef double qfi_mixed_c(double complex* rho, double complex* drho, int d, double eps,
                        EigWork* ew, int* status) noexcept nogil:
    # Row-major Hermitian rho seen column-major by LAPACK is its conjugate;
    # eigenvalues agree and eigenvectors conjugate, which cancels in |.|^2
    # after the matching conjugation in the basis change below.
    cdef int info = 0, n = d
    cdef int s, t, a, b
    cdef double complex acc, amp
    cdef double q = 0.0, denom
    mat_copy(rho, ew.a, d * d)
    zheevd(b'V', b'L', &n, ew.a, &n, ew.w, ew.work, &ew.lwork, ew.rwork, &ew.lrwork,
           ew.iwork, &ew.liwork, &info)
    if info != 0:
        status[0] = 2
        return 0.0
    # ew.a row s (row-major view) holds the components of LAPACK eigenvector s
    for t in range(d):
        for a in range(d):
            acc = 0
            for b in range(d):
                acc = acc + drho[a * d + b] * ew.a[t * d + b].conjugate()
            ew.z[a] = acc
        for s in range(d):
            denom = ew.w[s] + ew.w[t]
            if denom > eps:
                amp = 0
                for a in range(d):
                    amp = amp + ew.a[s * d + a] * ew.z[a]
                q += (amp.real * amp.real + amp.imag * amp.imag) / denom
    return 2.0 * q


# ---------------------------------------------------------------------------
# homodyne, mixed
# ---------------------------------------------------------------------------


def run_homodyne_mixed(double complex[:, ::1] A, double complex[:, ::1] dHdt,
                       double complex[:, :, ::1] C, double complex[:, :, ::1] X,
                       double[::1] defw, double[::1] sqeta, double dt,
                       double[:, ::1] dw, long[::1] grid_idx,
                       double complex[:, ::1] rho, double complex[:, ::1] tau,
                       double eps_rank):
    cdef int d = rho.shape[0]
    cdef int nc = C.shape[0]
    cdef int n_steps = dw.shape[0]
    cdef int n_grid = grid_idx.shape[0]
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    cdef double[::1] trtau_v = out_trtau
    cdef double[::1] qcond_v = out_qcond

    cdef double complex* buf = <double complex*> malloc(8 * d * d * sizeof(double complex))
    cdef double* dyv = <double*> malloc(nc * sizeof(double))
    if buf == NULL or dyv == NULL:
        free(buf); free(dyv)
        raise MemoryError()
    cdef double complex* B = buf
    cdef double complex* M = buf + d * d
    cdef double complex* T1 = buf + 2 * d * d
    cdef double complex* T2 = buf + 3 * d * d
    cdef double complex* G = buf + 4 * d * d
    cdef double complex* K = buf + 5 * d * d
    cdef double complex* NR = buf + 6 * d * d
    cdef double complex* NT = buf + 7 * d * d
    cdef EigWork ew
    eig_work_alloc(&ew, d)

    cdef double complex* rho_p = &rho[0, 0]
    cdef double complex* tau_p = &tau[0, 0]
    cdef double complex* A_p = &A[0, 0]
    cdef double complex* dH_p = &dHdt[0, 0]
    cdef double complex* C_p = &C[0, 0, 0]
    cdef double complex* X_p = &X[0, 0, 0]

    cdef int i, j, a, b, g = 0
    cdef int status = 0, bad_step = -1
    cdef double mj, tr, w, trt
    cdef double complex cij

    with nogil:
        if n_grid > 0 and grid_idx[0] == 0:
            trt = trace_re(tau_p, d)
            for a in range(d * d):
                T1[a] = tau_p[a] - trt * rho_p[a]
            trtau_v[0] = trt
            qcond_v[0] = qfi_mixed_c(rho_p, T1, d, eps_rank, &ew, &status)
            g = 1
        for i in range(n_steps):
            if status != 0:
                break
            # record increments
            for j in range(nc):
                mj = 0.0
                for a in range(d):
                    for b in range(d):
                        cij = rho_p[a * d + b] * X_p[j * d * d + b * d + a]
                        mj += cij.real
                dyv[j] = sqeta[j] * mj * dt + dw[i, j]
            # B and M = A + B + B^2/2
            mat_zero(B, d * d)
            for j in range(nc):
                w = sqeta[j] * dyv[j]
                for a in range(d * d):
                    B[a] = B[a] + w * C_p[j * d * d + a]
            matmul(B, B, T1, d)
            for a in range(d * d):
                M[a] = A_p[a] + B[a] + 0.5 * T1[a]
            # NR = M rho M^H + defects
            matmul_nh(rho_p, M, G, d)
            matmul(M, G, NR, d)
            for j in range(nc):
                if defw[j] != 0.0:
                    matmul(C_p + j * d * d, rho_p, T1, d)
                    matmul_nh(T1, C_p + j * d * d, T2, d)
                    for a in range(d * d):
                        NR[a] = NR[a] + defw[j] * T2[a]
            # NT = M tau M^H + (-i dHdt rho M^H + h.c.) + defects
            matmul(dH_p, G, K, d)
            matmul_nh(tau_p, M, T1, d)
            matmul(M, T1, NT, d)
            for a in range(d):
                for b in range(d):
                    NT[a * d + b] = NT[a * d + b] - 1j * K[a * d + b] + 1j * K[b * d + a].conjugate()
            for j in range(nc):
                if defw[j] != 0.0:
                    matmul(C_p + j * d * d, tau_p, T1, d)
                    matmul_nh(T1, C_p + j * d * d, T2, d)
                    for a in range(d * d):
                        NT[a] = NT[a] + defw[j] * T2[a]
            tr = trace_re(NR, d)
            if not (tr > 0.0):
                status = 1
                bad_step = i
                break
            mat_copy(NR, rho_p, d * d)
            mat_scale(rho_p, 1.0 / tr, d * d)
            resym(rho_p, d)
            mat_copy(NT, tau_p, d * d)
            mat_scale(tau_p, 1.0 / tr, d * d)
            resym(tau_p, d)
            if g < n_grid and grid_idx[g] == i + 1:
                trt = trace_re(tau_p, d)
                for a in range(d * d):
                    T1[a] = tau_p[a] - trt * rho_p[a]
                trtau_v[g] = trt
                qcond_v[g] = qfi_mixed_c(rho_p, T1, d, eps_rank, &ew, &status)
                g += 1

    eig_work_free(&ew)
    free(buf); free(dyv)
    if status == 1:
        raise StepSizeError(f"homodyne step {bad_step} produced nonpositive trace; reduce dt")
    if status == 2:
        raise RuntimeError("eigensolver failed during QFI evaluation")
    return out_trtau, out_qcond


# ---------------------------------------------------------------------------
# photodetection, mixed
# ---------------------------------------------------------------------------


def run_pd_mixed(double complex[::1] m0diag, double complex[::1] dm0diag,
                 double complex[:, :, ::1] C, double[::1] defw, double[::1] pc,
                 double[::1] urand, long[::1] grid_idx,
                 double complex[:, ::1] rho, double complex[:, ::1] tau,
                 double eps_rank):
    cdef int d = rho.shape[0]
    cdef int nc = C.shape[0]
    cdef int n_steps = urand.shape[0]
    cdef int n_grid = grid_idx.shape[0]
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    out_clicks = np.zeros(nc, dtype=np.int64)
    cdef double[::1] trtau_v = out_trtau
    cdef double[::1] qcond_v = out_qcond
    cdef long[::1] clicks_v = out_clicks

    cdef double complex* buf = <double complex*> malloc(4 * d * d * sizeof(double complex))
    if buf == NULL:
        raise MemoryError()
    cdef double complex* ER = buf
    cdef double complex* ET = buf + d * d
    cdef double complex* T1 = buf + 2 * d * d
    cdef double complex* T2 = buf + 3 * d * d
    cdef EigWork ew
    eig_work_alloc(&ew, d)

    cdef double complex* rho_p = &rho[0, 0]
    cdef double complex* tau_p = &tau[0, 0]
    cdef double complex* C_p = &C[0, 0, 0]
    cdef double complex* m0 = &m0diag[0]
    cdef double complex* dm0 = &dm0diag[0]

    cdef int i, j, a, b, g = 0, click
    cdef int status = 0, bad_step = -1
    cdef double tr, trr, cum, trt
    cdef double complex mb

    with nogil:
        if n_grid > 0 and grid_idx[0] == 0:
            trt = trace_re(tau_p, d)
            for a in range(d * d):
                T1[a] = tau_p[a] - trt * rho_p[a]
            trtau_v[0] = 0.0
            qcond_v[0] = qfi_mixed_c(rho_p, T1, d, eps_rank, &ew, &status)
            g = 1
        for i in range(n_steps):
            if status != 0:
                break
            trr = trace_re(rho_p, d)
            click = -1
            cum = 0.0
            for j in range(nc):
                cum += pc[j] * trr
                if urand[i] < cum:
                    click = j
                    break
            # deterministic within-step factor on every branch
            for a in range(d):
                for b in range(d):
                    mb = m0[b].conjugate()
                    ER[a * d + b] = m0[a] * rho_p[a * d + b] * mb
                    ET[a * d + b] = (m0[a] * tau_p[a * d + b] * mb
                                     + dm0[a] * rho_p[a * d + b] * mb
                                     + m0[a] * rho_p[a * d + b] * dm0[b].conjugate())
            for j in range(nc):
                if defw[j] != 0.0:
                    matmul(C_p + j * d * d, rho_p, T1, d)
                    matmul_nh(T1, C_p + j * d * d, T2, d)
                    for a in range(d * d):
                        ER[a] = ER[a] + defw[j] * T2[a]
                    matmul(C_p + j * d * d, tau_p, T1, d)
                    matmul_nh(T1, C_p + j * d * d, T2, d)
                    for a in range(d * d):
                        ET[a] = ET[a] + defw[j] * T2[a]
            if click >= 0:
                matmul(C_p + click * d * d, ER, T1, d)
                matmul_nh(T1, C_p + click * d * d, ER, d)
                matmul(C_p + click * d * d, ET, T1, d)
                matmul_nh(T1, C_p + click * d * d, ET, d)
                clicks_v[click] += 1
            tr = trace_re(ER, d)
            if not (tr > 0.0):
                status = 1
                bad_step = i
                break
            mat_copy(ER, rho_p, d * d)
            mat_scale(rho_p, 1.0 / tr, d * d)
            resym(rho_p, d)
            mat_copy(ET, tau_p, d * d)
            mat_scale(tau_p, 1.0 / tr, d * d)
            resym(tau_p, d)
            # counting records are frequency independent: keep tau traceless
            trt = trace_re(tau_p, d)
            for a in range(d * d):
                tau_p[a] = tau_p[a] - trt * rho_p[a]
            if g < n_grid and grid_idx[g] == i + 1:
                trt = trace_re(tau_p, d)
                for a in range(d * d):
                    T1[a] = tau_p[a] - trt * rho_p[a]
                trtau_v[g] = 0.0
                qcond_v[g] = qfi_mixed_c(rho_p, T1, d, eps_rank, &ew, &status)
                g += 1

    eig_work_free(&ew)
    free(buf)
    if status == 1:
        raise StepSizeError(f"photodetection step {bad_step} produced nonpositive trace; reduce dt")
    if status == 2:
        raise RuntimeError("eigensolver failed during QFI evaluation")
    return out_trtau, out_qcond, out_clicks


# ---------------------------------------------------------------------------
# homodyne, pure
# ---------------------------------------------------------------------------


cdef void pure_samples_c(double complex* psi, double complex* phi, int d,
                         double* trtau, double* q) noexcept nogil:
    cdef int a
    cdef double complex overlap = 0, back = 0, sq
    cdef double dd = 0.0
    for a in range(d):
        overlap = overlap + psi[a].conjugate() * phi[a]
    # dpsi = phi - Re(overlap) psi
    cdef double re = overlap.real
    for a in range(d):
        sq = phi[a] - re * psi[a]
        dd += sq.real * sq.real + sq.imag * sq.imag
        back = back + sq.conjugate() * psi[a]
    sq = back * back
    trtau[0] = 2.0 * re
    q[0] = 4.0 * (dd + sq.real)


def run_homodyne_pure(double complex[:, ::1] A, double complex[:, ::1] dHdt,
                      double complex[:, :, ::1] C, double complex[:, :, ::1] X,
                      double[::1] sqeta, double dt,
                      double[:, ::1] dw, long[::1] grid_idx,
                      double complex[::1] psi, double complex[::1] phi):
    cdef int d = psi.shape[0]
    cdef int nc = C.shape[0]
    cdef int n_steps = dw.shape[0]
    cdef int n_grid = grid_idx.shape[0]
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    cdef double[::1] trtau_v = out_trtau
    cdef double[::1] qcond_v = out_qcond

    cdef double complex* buf = <double complex*> malloc(5 * d * sizeof(double complex))
    cdef double* dyv = <double*> malloc(nc * sizeof(double))
    if buf == NULL or dyv == NULL:
        free(buf); free(dyv)
        raise MemoryError()
    cdef double complex* b1 = buf
    cdef double complex* b2 = buf + d
    cdef double complex* npsi = buf + 2 * d
    cdef double complex* nphi = buf + 3 * d
    cdef double complex* tmp = buf + 4 * d

    cdef double complex* psi_p = &psi[0]
    cdef double complex* phi_p = &phi[0]
    cdef double complex* A_p = &A[0, 0]
    cdef double complex* dH_p = &dHdt[0, 0]
    cdef double complex* C_p = &C[0, 0, 0]
    cdef double complex* X_p = &X[0, 0, 0]

    cdef int i, j, a, k, g = 0
    cdef int status = 0, bad_step = -1
    cdef double mj, nrm, w, s1, s2
    cdef double complex acc

    with nogil:
        if n_grid > 0 and grid_idx[0] == 0:
            pure_samples_c(psi_p, phi_p, d, &s1, &s2)
            trtau_v[0] = s1
            qcond_v[0] = s2
            g = 1
        for i in range(n_steps):
            for j in range(nc):
                matvec(X_p + j * d * d, psi_p, tmp, d)
                mj = 0.0
                for a in range(d):
                    acc = psi_p[a].conjugate() * tmp[a]
                    mj += acc.real
                dyv[j] = sqeta[j] * mj * dt + dw[i, j]
            # npsi = A psi + B psi + B(B psi)/2, same for phi plus -i dHdt psi
            mat_zero(b1, d)
            mat_zero(b2, d)
            for j in range(nc):
                w = sqeta[j] * dyv[j]
                matvec(C_p + j * d * d, psi_p, tmp, d)
                for a in range(d):
                    b1[a] = b1[a] + w * tmp[a]
                matvec(C_p + j * d * d, phi_p, tmp, d)
                for a in range(d):
                    b2[a] = b2[a] + w * tmp[a]
            matvec(A_p, psi_p, npsi, d)
            for a in range(d):
                npsi[a] = npsi[a] + b1[a]
            matvec(A_p, phi_p, nphi, d)
            for a in range(d):
                nphi[a] = nphi[a] + b2[a]
            # second application of B
            mat_zero(tmp, d)
            for j in range(nc):
                w = sqeta[j] * dyv[j]
                matvec(C_p + j * d * d, b1, tmp, d)
                for a in range(d):
                    npsi[a] = npsi[a] + 0.5 * w * tmp[a]
                matvec(C_p + j * d * d, b2, tmp, d)
                for a in range(d):
                    nphi[a] = nphi[a] + 0.5 * w * tmp[a]
            matvec(dH_p, psi_p, tmp, d)
            for a in range(d):
                nphi[a] = nphi[a] - 1j * tmp[a]
            nrm = 0.0
            for a in range(d):
                nrm += npsi[a].real * npsi[a].real + npsi[a].imag * npsi[a].imag
            nrm = c_sqrt(nrm)
            if not (nrm > 0.0):
                status = 1
                bad_step = i
                break
            for a in range(d):
                psi_p[a] = npsi[a] / nrm
                phi_p[a] = nphi[a] / nrm
            if g < n_grid and grid_idx[g] == i + 1:
                pure_samples_c(psi_p, phi_p, d, &s1, &s2)
                trtau_v[g] = s1
                qcond_v[g] = s2
                g += 1

    free(buf); free(dyv)
    if status == 1:
        raise StepSizeError(f"homodyne step {bad_step} produced nonpositive norm; reduce dt")
    return out_trtau, out_qcond


# ---------------------------------------------------------------------------
# photodetection, pure
# ---------------------------------------------------------------------------


def run_pd_pure(double complex[::1] m0diag, double complex[::1] dm0diag,
                double complex[:, :, ::1] C, double[::1] pc,
                double[::1] urand, long[::1] grid_idx,
                double complex[::1] psi, double complex[::1] phi):
    cdef int d = psi.shape[0]
    cdef int nc = C.shape[0]
    cdef int n_steps = urand.shape[0]
    cdef int n_grid = grid_idx.shape[0]
    out_trtau = np.zeros(n_grid)
    out_qcond = np.zeros(n_grid)
    out_clicks = np.zeros(nc, dtype=np.int64)
    cdef double[::1] trtau_v = out_trtau
    cdef double[::1] qcond_v = out_qcond
    cdef long[::1] clicks_v = out_clicks

    cdef double complex* buf = <double complex*> malloc(3 * d * sizeof(double complex))
    if buf == NULL:
        raise MemoryError()
    cdef double complex* epsi = buf
    cdef double complex* ephi = buf + d
    cdef double complex* tmp = buf + 2 * d

    cdef double complex* psi_p = &psi[0]
    cdef double complex* phi_p = &phi[0]
    cdef double complex* C_p = &C[0, 0, 0]
    cdef double complex* m0 = &m0diag[0]
    cdef double complex* dm0 = &dm0diag[0]

    cdef int i, j, a, g = 0, click
    cdef int status = 0, bad_step = -1
    cdef double nn, cum, nrm, s1, s2, re
    cdef double complex overlap

    with nogil:
        if n_grid > 0 and grid_idx[0] == 0:
            pure_samples_c(psi_p, phi_p, d, &s1, &s2)
            trtau_v[0] = 0.0
            qcond_v[0] = s2
            g = 1
        for i in range(n_steps):
            nn = 0.0
            for a in range(d):
                nn += psi_p[a].real * psi_p[a].real + psi_p[a].imag * psi_p[a].imag
            click = -1
            cum = 0.0
            for j in range(nc):
                cum += pc[j] * nn
                if urand[i] < cum:
                    click = j
                    break
            for a in range(d):
                epsi[a] = m0[a] * psi_p[a]
                ephi[a] = m0[a] * phi_p[a] + dm0[a] * psi_p[a]
            if click >= 0:
                matvec(C_p + click * d * d, epsi, tmp, d)
                mat_copy(tmp, epsi, d)
                matvec(C_p + click * d * d, ephi, tmp, d)
                mat_copy(tmp, ephi, d)
                clicks_v[click] += 1
            nrm = 0.0
            for a in range(d):
                nrm += epsi[a].real * epsi[a].real + epsi[a].imag * epsi[a].imag
            nrm = c_sqrt(nrm)
            if not (nrm > 0.0):
                status = 1
                bad_step = i
                break
            for a in range(d):
                psi_p[a] = epsi[a] / nrm
                phi_p[a] = ephi[a] / nrm
            # traceless gauge, see run_pd_mixed
            overlap = 0
            for a in range(d):
                overlap = overlap + psi_p[a].conjugate() * phi_p[a]
            re = overlap.real
            for a in range(d):
                phi_p[a] = phi_p[a] - re * psi_p[a]
            if g < n_grid and grid_idx[g] == i + 1:
                pure_samples_c(psi_p, phi_p, d, &s1, &s2)
                trtau_v[g] = 0.0
                qcond_v[g] = s2
                g += 1

    free(buf)
    if status == 1:
        raise StepSizeError(f"photodetection step {bad_step} produced nonpositive norm; reduce dt")
    return out_trtau, out_qcond, out_clicks
