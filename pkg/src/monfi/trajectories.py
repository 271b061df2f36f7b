"""Stochastic conditional dynamics under continuous monitoring.

One weak-measurement step maps the conditional state and its frequency
derivative forward through a measurement-branch Kraus pair and renormalizes
both by the same trace:

* homodyne: measurement-record Kraus with second-order (Milstein) correction,
  driven by Gaussian record increments;
* photodetection: a deterministic no-click factor applied every step (its
  frequency-dependent part is an exact diagonal phase, which keeps the record
  statistics frequency independent), with an instantaneous jump composed on
  top of it on click steps.

Mixed states (finite efficiency) carry the pair (rho, tau) with tau the
normalized derivative of the unnormalized state; perfect monitoring keeps the
state pure and carries (psi, phi) instead.  For a GHZ probe under parallel
noise with photodetection the whole dynamics lives in the two-dimensional
span of |0...0> and |1...1>, and a 2x2 effective stepper reproduces the full
register statistics at any register size.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from ._kernels import _pyfallback as _ref
from .errors import StepSizeError
from .model import FrequencyModel, NoiseAxis, collapse_operators, ghz_state, hamiltonian, hamiltonian_derivative
from .qops import dag

__all__ = [
    "UnravelingSpec",
    "TrajectoryState",
    "MeasurementRecord",
    "TrajectorySamples",
    "homodyne_step_mixed",
    "photodetection_step_mixed",
    "homodyne_step_pure",
    "photodetection_step_pure",
    "ghz_parallel_pd_step",
    "run_trajectory",
    "uses_ghz_fast_path",
]

PHOTODETECTION = "photodetection"
HOMODYNE = "homodyne"
_KIND_ALIASES = {"pd": PHOTODETECTION, "photodetection": PHOTODETECTION, "hd": HOMODYNE, "hom": HOMODYNE, "homodyne": HOMODYNE}

# step guards: dt*kappa and dt*|omega| capped, and the per-step total click
# probability capped, so single-jump stepping stays valid
MAX_DT_RATE = 0.01
MAX_CLICK_PROB = 0.05


@dataclass(frozen=True)
class UnravelingSpec:
    """Monitoring scheme: record kind, per-channel efficiencies, time step."""

    kind: str
    eta: float | tuple[float, ...]
    dt: float
    n_steps: int

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown unraveling kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        eta = self.eta
        if np.isscalar(eta):
            eta = (float(eta),)
        else:
            eta = tuple(float(e) for e in eta)
        if any(e < 0.0 or e > 1.0 for e in eta):
            raise ValueError(f"efficiencies must lie in [0, 1], got {eta}")
        object.__setattr__(self, "eta", eta)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    def eta_channels(self, n: int) -> np.ndarray:
        """Per-channel efficiencies for n channels (scalar broadcasts)."""
        if len(self.eta) == 1:
            return np.full(n, self.eta[0])
        if len(self.eta) != n:
            raise ValueError(f"got {len(self.eta)} efficiencies for {n} channels")
        return np.array(self.eta)

    @property
    def t_max(self) -> float:
        return self.dt * self.n_steps


@dataclass
class TrajectoryState:
    """Conditional state plus its information carrier.

    Mixed path: (rho, tau); pure path: (psi, phi).
    """

    rho: np.ndarray | None = None
    tau: np.ndarray | None = None
    psi: np.ndarray | None = None
    phi: np.ndarray | None = None

    @classmethod
    def mixed(cls, rho: np.ndarray, tau: np.ndarray | None = None) -> "TrajectoryState":
        rho = np.array(rho, dtype=complex)
        tau = np.zeros_like(rho) if tau is None else np.array(tau, dtype=complex)
        return cls(rho=rho, tau=tau)

    @classmethod
    def pure(cls, psi: np.ndarray, phi: np.ndarray | None = None) -> "TrajectoryState":
        psi = np.array(psi, dtype=complex)
        phi = np.zeros_like(psi) if phi is None else np.array(phi, dtype=complex)
        return cls(psi=psi, phi=phi)

    @property
    def is_pure(self) -> bool:
        return self.psi is not None

    def drho(self) -> np.ndarray:
        """Derivative of the normalized conditional state."""
        if self.is_pure:
            overlap = np.vdot(self.psi, self.phi)
            dpsi = self.phi - overlap.real * self.psi
            return np.outer(dpsi, self.psi.conj()) + np.outer(self.psi, dpsi.conj())
        trt = float(np.trace(self.tau).real)
        return self.tau - trt * self.rho

    def tr_tau(self) -> float:
        if self.is_pure:
            return 2.0 * float(np.vdot(self.psi, self.phi).real)
        return float(np.trace(self.tau).real)


@dataclass
class MeasurementRecord:
    """Per-step outcome: homodyne increments, or a click channel (or None)."""

    dy: np.ndarray | None = None
    click: int | None = None


@dataclass
class TrajectorySamples:
    """Per-grid-point (Tr tau, conditional QFI) samples of one trajectory."""

    times: np.ndarray
    tr_tau: np.ndarray
    q_cond: np.ndarray


class _Prepared:
    """Operator arrays shared by every step of a (model, unraveling) pair."""

    def __init__(self, u: UnravelingSpec, d: int, nc: int, eta: np.ndarray,
                 hdiag: np.ndarray, dhdiag: np.ndarray, cs: np.ndarray, chalf: np.ndarray):
        self.kind = u.kind
        self.dt = u.dt
        self.d = d
        self.nc = nc
        self.eta = eta
        self.all_efficient = bool(np.all(eta == 1.0))
        self.C = np.ascontiguousarray(cs)
        self.dHdt = np.ascontiguousarray(np.diag(dhdiag * u.dt).astype(complex))
        self.defw = (1.0 - eta) * u.dt
        dt = u.dt
        s_bar = float(chalf.sum())
        if u.kind == HOMODYNE:
            self.sqeta = np.sqrt(eta)
            self.X = np.ascontiguousarray(np.array([c + dag(c) for c in cs]))
            a = np.eye(d, dtype=complex) - 1j * np.diag(hdiag).astype(complex) * dt
            for j in range(nc):
                a -= 0.5 * dt * (dag(cs[j]) @ cs[j])
                a -= 0.5 * eta[j] * dt * (cs[j] @ cs[j])  # Milstein delta term, folded
            self.A = np.ascontiguousarray(a)
        else:
            # no-click factor: exact frequency phase times a frequency-free scalar
            scalar = 1.0 - 0.5 * s_bar * dt
            self.m0diag = np.ascontiguousarray(np.exp(-1j * hdiag * dt) * scalar)
            self.dm0diag = np.ascontiguousarray(-1j * dhdiag * dt * self.m0diag)
            self.pc = eta * chalf * dt
            total = float(self.pc.sum())
            if total > MAX_CLICK_PROB:
                raise StepSizeError(
                    f"total click probability per step {total:.3g} exceeds {MAX_CLICK_PROB}; reduce dt"
                )


def _check_dt_guard(m_omega: float, kappa: float, dt: float) -> None:
    if kappa > 0 and dt * kappa > MAX_DT_RATE:
        raise StepSizeError(f"dt*kappa = {dt * kappa:.3g} exceeds {MAX_DT_RATE}; reduce dt")
    if m_omega != 0 and dt * abs(m_omega) > MAX_DT_RATE:
        raise StepSizeError(f"dt*|omega| = {dt * abs(m_omega):.3g} exceeds {MAX_DT_RATE}; reduce dt")


def _channel_halves(cs: list[np.ndarray]) -> np.ndarray:
    """Scalars g_j with c_j^dag c_j = g_j I; required by the counting stepper."""
    out = np.empty(len(cs))
    for j, c in enumerate(cs):
        cdc = dag(c) @ c
        g = float(np.trace(cdc).real) / c.shape[0]
        if np.abs(cdc - g * np.eye(c.shape[0])).max() > 1e-12 * max(1.0, g):
            raise ValueError("collapse operators must satisfy c^dag c = g*I")
        out[j] = g
    return out


@lru_cache(maxsize=64)
def _prepare(m: FrequencyModel, u: UnravelingSpec) -> _Prepared:
    _check_dt_guard(m.omega, m.kappa, u.dt)
    cs = collapse_operators(m)
    nc = len(cs)
    eta = u.eta_channels(nc)
    hdiag = np.real(np.diag(hamiltonian(m)))
    dhdiag = np.real(np.diag(hamiltonian_derivative(m)))
    return _Prepared(u, m.dim, nc, eta, hdiag, dhdiag, np.array(cs), _channel_halves(cs))


@lru_cache(maxsize=64)
def _prepare_ghz_2d(n: int, omega: float, kappa: float, u: UnravelingSpec) -> _Prepared:
    """Effective 2x2 operators for a GHZ probe under parallel counting.

    Single effective channel sqrt(n*kappa/2)*sz on span{|0...0>, |1...1>};
    the Hamiltonian restricts to (n*omega/2)*sz there.
    """
    if u.kind != PHOTODETECTION:
        raise ValueError("the 2d fast path applies to photodetection only")
    _check_dt_guard(omega, kappa, u.dt)
    eta = u.eta_channels(1)
    hdiag = np.array([0.5 * n * omega, -0.5 * n * omega])
    dhdiag = np.array([0.5 * n, -0.5 * n])
    sz = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    c_eff = np.sqrt(n * kappa / 2.0) * sz
    cs = np.array([c_eff])
    return _Prepared(u, 2, 1, eta, hdiag, dhdiag, cs, _channel_halves([c_eff]))


def _require_mixed(s: TrajectoryState):
    if s.is_pure or s.rho is None:
        raise ValueError("this operation needs a mixed-path state (rho, tau)")


def _require_pure(s: TrajectoryState, eta: np.ndarray):
    if not s.is_pure:
        raise ValueError("this operation needs a pure-path state (psi, phi)")
    if not np.all(eta == 1.0):
        raise ValueError("the pure path requires every efficiency equal to 1")


def homodyne_step_mixed(
    s: TrajectoryState, m: FrequencyModel, u: UnravelingSpec, dw: np.ndarray
) -> tuple[TrajectoryState, MeasurementRecord]:
    """One homodyne step of the mixed conditional pair (rho, tau).

    ``dw`` holds one Gaussian increment per channel (mean 0, variance dt).
    Record increments are ``dy_j = sqrt(eta_j) Tr[rho(c_j + c_j^dag)] dt + dw_j``.
    """
    p = _prepare(m, u)
    if p.kind != HOMODYNE:
        raise ValueError("unraveling is not homodyne")
    _require_mixed(s)
    dw = np.asarray(dw, dtype=float)
    rho, tau, dy = _ref.hd_step_mixed(p.A, p.dHdt, p.C, p.X, p.defw, p.sqeta, p.dt, s.rho, s.tau, dw)
    return TrajectoryState(rho=rho, tau=tau), MeasurementRecord(dy=dy)


def photodetection_step_mixed(
    s: TrajectoryState, m: FrequencyModel, u: UnravelingSpec, rand: float
) -> tuple[TrajectoryState, MeasurementRecord]:
    """One counting step of the mixed conditional pair (rho, tau).

    Channel ``j`` clicks with probability ``eta_j Tr[rho c_j^dag c_j] dt``,
    selected by the uniform draw ``rand``.
    """
    p = _prepare(m, u)
    if p.kind != PHOTODETECTION:
        raise ValueError("unraveling is not photodetection")
    _require_mixed(s)
    rho, tau, click = _ref.pd_step_mixed(p.m0diag, p.dm0diag, p.C, p.defw, p.pc, s.rho, s.tau, float(rand))
    return TrajectoryState(rho=rho, tau=tau), MeasurementRecord(click=None if click < 0 else click)


def homodyne_step_pure(
    s: TrajectoryState, m: FrequencyModel, u: UnravelingSpec, dw: np.ndarray
) -> tuple[TrajectoryState, MeasurementRecord]:
    """One homodyne step of the pure conditional pair (psi, phi); needs eta = 1."""
    p = _prepare(m, u)
    if p.kind != HOMODYNE:
        raise ValueError("unraveling is not homodyne")
    _require_pure(s, p.eta)
    dw = np.asarray(dw, dtype=float)
    psi, phi, dy = _ref.hd_step_pure(p.A, p.dHdt, p.C, p.X, p.sqeta, p.dt, s.psi, s.phi, dw)
    return TrajectoryState(psi=psi, phi=phi), MeasurementRecord(dy=dy)


def photodetection_step_pure(
    s: TrajectoryState, m: FrequencyModel, u: UnravelingSpec, rand: float
) -> tuple[TrajectoryState, MeasurementRecord]:
    """One counting step of the pure conditional pair (psi, phi); needs eta = 1."""
    p = _prepare(m, u)
    if p.kind != PHOTODETECTION:
        raise ValueError("unraveling is not photodetection")
    _require_pure(s, p.eta)
    psi, phi, click = _ref.pd_step_pure(p.m0diag, p.dm0diag, p.C, p.pc, s.psi, s.phi, float(rand))
    return TrajectoryState(psi=psi, phi=phi), MeasurementRecord(click=None if click < 0 else click)


def ghz_parallel_pd_step(
    s: TrajectoryState, n: int, omega: float, kappa: float, eta: float, dt: float, rand: float
) -> tuple[TrajectoryState, MeasurementRecord]:
    """One counting step on the two-dimensional GHZ subspace (parallel noise).

    ``s`` must live in span{|0...0>, |1...1>} as a 2-component state; the
    update is statistically identical to the full 2^n register simulation.
    """
    u = UnravelingSpec(PHOTODETECTION, eta, dt, 1)
    p = _prepare_ghz_2d(n, omega, kappa, u)
    if s.is_pure:
        _require_pure(s, p.eta)
        psi, phi, click = _ref.pd_step_pure(p.m0diag, p.dm0diag, p.C, p.pc, s.psi, s.phi, float(rand))
        return TrajectoryState(psi=psi, phi=phi), MeasurementRecord(click=None if click < 0 else click)
    _require_mixed(s)
    rho, tau, click = _ref.pd_step_mixed(p.m0diag, p.dm0diag, p.C, p.defw, p.pc, s.rho, s.tau, float(rand))
    return TrajectoryState(rho=rho, tau=tau), MeasurementRecord(click=None if click < 0 else click)


# ---------------------------------------------------------------------------
# full-trajectory runner
# ---------------------------------------------------------------------------


def _grid_indices(t_grid: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    idx = np.rint(t_grid / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - t_grid) > 1e-9 * np.maximum(1.0, np.abs(t_grid))):
        raise ValueError("t_grid points must be multiples of dt")
    if np.any(idx < 0) or np.any(idx > n_steps):
        raise ValueError("t_grid points must lie within [0, n_steps*dt]")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("t_grid must be strictly ascending")
    return idx


def _is_ghz(psi: np.ndarray) -> bool:
    d = psi.shape[0]
    amp = 1.0 / np.sqrt(2.0)
    ref = np.zeros(d, dtype=complex)
    ref[0] = ref[-1] = amp
    return bool(np.abs(psi - ref).max() < 1e-12)


def uses_ghz_fast_path(m: FrequencyModel, u: UnravelingSpec, psi0: np.ndarray | None) -> bool:
    """Whether run_trajectory will use the 2x2 GHZ reduction."""
    if m.noise_axis is not NoiseAxis.PARALLEL or u.kind != PHOTODETECTION:
        return False
    if len(set(u.eta)) != 1:
        return False
    return psi0 is None or _is_ghz(np.asarray(psi0, dtype=complex))


def _trajectory_rng(seed: int, traj_index: int) -> np.random.Generator:
    # counter-based stream: results do not depend on scheduling order
    key = np.array([seed, traj_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def run_trajectory(
    m: FrequencyModel,
    u: UnravelingSpec,
    psi0: np.ndarray | None,
    t_grid: np.ndarray,
    seed: int,
    traj_index: int,
) -> TrajectorySamples:
    """Simulate one monitored trajectory and sample (Tr tau, conditional QFI).

    ``psi0=None`` means the GHZ probe.  The pure path is selected when every
    efficiency equals 1, the 2x2 GHZ reduction when the probe is GHZ under
    parallel counting.  Deterministic given (seed, traj_index): the noise
    stream comes from a counter-based generator keyed by the pair.
    """
    if seed < 0 or traj_index < 0:
        raise ValueError("seed and traj_index must be nonnegative")
    t_grid = np.asarray(t_grid, dtype=float)
    grid_idx = _grid_indices(t_grid, u.dt, u.n_steps)
    n_steps = u.n_steps
    rng = _trajectory_rng(seed, traj_index)
    fast = uses_ghz_fast_path(m, u, psi0)

    if fast:
        p = _prepare_ghz_2d(m.n_qubits, m.omega, m.kappa, u)
        psi_start = np.full(2, 1.0 / np.sqrt(2.0), dtype=complex)
    else:
        p = _prepare(m, u)
        if psi0 is None:
            psi_start = ghz_state(m.n_qubits)
        else:
            psi_start = np.asarray(psi0, dtype=complex)
            if psi_start.shape != (m.dim,):
                raise ValueError(f"psi0 has shape {psi_start.shape}, expected ({m.dim},)")

    from .qops import EPS_RANK

    if p.kind == HOMODYNE:
        dw = rng.normal(0.0, np.sqrt(u.dt), size=(n_steps, p.nc))
        if p.all_efficient:
            psi = np.ascontiguousarray(psi_start)
            phi = np.zeros_like(psi)
            trtau, qcond = _kernels.run_homodyne_pure(p.A, p.dHdt, p.C, p.X, p.sqeta, p.dt, dw, grid_idx, psi, phi)
        else:
            rho = np.ascontiguousarray(np.outer(psi_start, psi_start.conj()))
            tau = np.zeros_like(rho)
            trtau, qcond = _kernels.run_homodyne_mixed(
                p.A, p.dHdt, p.C, p.X, p.defw, p.sqeta, p.dt, dw, grid_idx, rho, tau, EPS_RANK
            )
    else:
        urand = rng.random(n_steps)
        if p.all_efficient:
            psi = np.ascontiguousarray(psi_start)
            phi = np.zeros_like(psi)
            trtau, qcond, _ = _kernels.run_pd_pure(p.m0diag, p.dm0diag, p.C, p.pc, urand, grid_idx, psi, phi)
        else:
            rho = np.ascontiguousarray(np.outer(psi_start, psi_start.conj()))
            tau = np.zeros_like(rho)
            trtau, qcond, _ = _kernels.run_pd_mixed(
                p.m0diag, p.dm0diag, p.C, p.defw, p.pc, urand, grid_idx, rho, tau, EPS_RANK
            )

    return TrajectorySamples(times=t_grid, tr_tau=trtau, q_cond=qcond)
