import numpy as np
import pytest

from monfi._kernels import _pyfallback as ref
from monfi.bigstate import run_trajectory_pure_structured
from monfi.errors import StepSizeError
from monfi.model import FrequencyModel, NoiseAxis, collapse_operators, ghz_state, hamiltonian
from monfi.qops import dag
from monfi.trajectories import (
    TrajectoryState,
    UnravelingSpec,
    _prepare,
    _prepare_ghz_2d,
    ghz_parallel_pd_step,
    homodyne_step_mixed,
    homodyne_step_pure,
    photodetection_step_mixed,
    photodetection_step_pure,
    run_trajectory,
    uses_ghz_fast_path,
)


def ghz_mixed_state(n):
    psi = ghz_state(n)
    return TrajectoryState.mixed(np.outer(psi, psi.conj()))


class TestUnravelingSpec:
    def test_kind_aliases(self):
        assert UnravelingSpec("pd", 1.0, 1e-3, 10).kind == "photodetection"
        assert UnravelingSpec("hom", 1.0, 1e-3, 10).kind == "homodyne"

    def test_rejects_bad_eta(self):
        with pytest.raises(ValueError):
            UnravelingSpec("pd", 1.5, 1e-3, 10)
        with pytest.raises(ValueError):
            UnravelingSpec("pd", (-0.1, 0.5), 1e-3, 10)

    def test_rejects_bad_kind_and_dt(self):
        with pytest.raises(ValueError):
            UnravelingSpec("heterodyne", 1.0, 1e-3, 10)
        with pytest.raises(ValueError):
            UnravelingSpec("pd", 1.0, -1e-3, 10)

    def test_eta_broadcast(self):
        u = UnravelingSpec("pd", 0.5, 1e-3, 10)
        np.testing.assert_allclose(u.eta_channels(3), [0.5, 0.5, 0.5])
        u2 = UnravelingSpec("pd", (0.2, 0.7), 1e-3, 10)
        with pytest.raises(ValueError):
            u2.eta_channels(3)

    def test_step_guard_on_rate(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        with pytest.raises(StepSizeError):
            _prepare(m, UnravelingSpec("pd", 1.0, 0.1, 10))

    def test_step_guard_on_click_probability(self):
        # many channels push the per-step click probability over the cap
        m = FrequencyModel(12, omega=0.1, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        with pytest.raises(StepSizeError):
            _prepare(m, UnravelingSpec("pd", 1.0, 0.009, 10))


class TestHomodyneMixed:
    def test_unmonitored_step_matches_euler(self):
        # eta = 0: the deterministic part agrees with an Euler step of the
        # master equation to second order in dt
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        rho0 = ghz_mixed_state(2).rho
        h = hamiltonian(m)
        cs = collapse_operators(m)

        def lindblad_rhs(rho):
            out = -1j * (h @ rho - rho @ h)
            for c in cs:
                out += c @ rho @ dag(c) - 0.5 * (dag(c) @ c @ rho + rho @ dag(c) @ c)
            return out

        errs = []
        for dt in (2e-3, 1e-3):
            u = UnravelingSpec("hd", 0.0, dt, 1)
            s = TrajectoryState.mixed(rho0)
            out, _ = homodyne_step_mixed(s, m, u, np.array([0.3, -0.2]) * np.sqrt(dt))
            euler = rho0 + dt * lindblad_rhs(rho0)
            errs.append(np.abs(out.rho - euler).max())
        assert errs[0] <= 1e-4  # O(dt^2) scale at dt=2e-3
        assert errs[0] / errs[1] > 3.0  # halving dt shrinks the gap ~4x

    def test_perfect_monitoring_preserves_purity(self):
        m = FrequencyModel(1, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("hd", 1.0, 1e-3, 1000)
        rng = np.random.default_rng(3)
        s = ghz_mixed_state(1)
        for i in range(1000):
            s, _ = homodyne_step_mixed(s, m, u, rng.normal(0, np.sqrt(u.dt), 1))
        purity = np.trace(s.rho @ s.rho).real
        assert abs(purity - 1.0) <= 1e-9

    def test_state_invariants_after_steps(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 0.4, 1e-3, 100)
        rng = np.random.default_rng(7)
        s = ghz_mixed_state(2)
        for i in range(100):
            s, rec = homodyne_step_mixed(s, m, u, rng.normal(0, np.sqrt(u.dt), 2))
            assert np.trace(s.rho).real == pytest.approx(1.0, abs=1e-9)
            assert np.abs(s.rho - dag(s.rho)).max() <= 1e-12
            assert np.abs(s.tau - dag(s.tau)).max() <= 1e-9
            assert np.linalg.eigvalsh(s.rho).min() >= -1e-9
            assert abs(np.trace(s.drho())) <= 1e-10
            assert rec.dy.shape == (2,)

    def test_milstein_kraus_matches_literal_double_sum(self):
        # the B + B^2/2 construction equals the explicit ordered double sum
        # with cross coefficients sqrt(eta_j eta_k)/2, here with unequal eta
        m = FrequencyModel(2, omega=0.9, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", (0.3, 0.8), 1e-3, 1)
        p = _prepare(m, u)
        rho0 = ghz_mixed_state(2).rho
        dw = np.array([0.02, -0.03])
        s_out, rec = homodyne_step_mixed(TrajectoryState.mixed(rho0), m, u, dw)

        h = hamiltonian(m)
        cs = collapse_operators(m)
        eta = np.array([0.3, 0.8])
        dy = rec.dy
        d = 4
        m_lit = np.eye(d, dtype=complex) - 1j * h * u.dt
        for c in cs:
            m_lit -= 0.5 * u.dt * (dag(c) @ c)
        for j, c in enumerate(cs):
            m_lit += np.sqrt(eta[j]) * dy[j] * c
        for j in range(2):
            for k in range(2):
                coef = np.sqrt(eta[j] * eta[k]) / 2.0
                m_lit += coef * (cs[j] @ cs[k]) * (dy[j] * dy[k] - (u.dt if j == k else 0.0))
        num = m_lit @ rho0 @ dag(m_lit)
        for j, c in enumerate(cs):
            num += (1 - eta[j]) * u.dt * (c @ rho0 @ dag(c))
        expected = num / np.trace(num).real
        expected = 0.5 * (expected + dag(expected))
        np.testing.assert_allclose(s_out.rho, expected, atol=1e-13)

    def test_record_statistics(self):
        # dy has mean sqrt(eta) Tr[rho (c + c^dag)] dt and variance dt
        m = FrequencyModel(1, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 0.64, 1e-3, 1)
        plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
        rho0 = np.outer(plus, plus.conj())
        p = _prepare(m, u)
        mean_th = 0.8 * np.trace(rho0 @ p.X[0]).real * u.dt
        rng = np.random.default_rng(11)
        n = 40000
        dys = np.empty(n)
        s = TrajectoryState.mixed(rho0)
        for i in range(n):
            _, rec = homodyne_step_mixed(s, m, u, rng.normal(0, np.sqrt(u.dt), 1))
            dys[i] = rec.dy[0]
        se_mean = np.sqrt(u.dt / n)
        assert abs(dys.mean() - mean_th) <= 4 * se_mean
        assert abs(dys.var() - u.dt) <= 4 * u.dt * np.sqrt(2.0 / n)


class TestPhotodetectionMixed:
    def test_click_probability_is_state_independent(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 0.8, 1e-3, 1)
        p = _prepare(m, u)
        np.testing.assert_allclose(p.pc, 0.8 * 0.5 * 1e-3 * np.ones(2))

    def test_click_rate_matches(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("pd", 0.6, 2e-3, 1)
        rng = np.random.default_rng(5)
        s = ghz_mixed_state(2)
        n = 30000
        clicks = np.zeros(2)
        for i in range(n):
            s2, rec = photodetection_step_mixed(s, m, u, rng.random())
            if rec.click is not None:
                clicks[rec.click] += 1
        rate = 0.6 * 0.5 * 2e-3  # eta * kappa/2 * dt per channel
        for j in range(2):
            assert abs(clicks[j] / n - rate) <= 4 * np.sqrt(rate / n)

    @pytest.mark.parametrize("axis", [NoiseAxis.PARALLEL, NoiseAxis.TRANSVERSE])
    def test_raw_trace_residue_is_float_noise(self, axis):
        # the record distribution is frequency independent, so Tr tau stays
        # zero up to rounding even without the traceless projection
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=axis)
        u = UnravelingSpec("pd", 0.7, 1e-3, 1)
        p = _prepare(m, u)
        rng = np.random.default_rng(13)
        rho = ghz_mixed_state(2).rho
        tau = np.zeros_like(rho)
        worst = 0.0
        for i in range(400):
            rho, tau, _ = ref.pd_step_mixed(
                p.m0diag, p.dm0diag, p.C, p.defw, p.pc, rho, tau, rng.random(), gauge=False
            )
            worst = max(worst, abs(np.trace(tau).real))
        assert worst <= 1e-12
        assert np.abs(tau).max() > 1e-3  # tau itself is far from zero

    def test_trace_tau_zero_after_gauged_step(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("pd", 0.5, 1e-3, 1)
        rng = np.random.default_rng(17)
        s = ghz_mixed_state(2)
        for i in range(200):
            s, _ = photodetection_step_mixed(s, m, u, rng.random())
        assert abs(s.tr_tau()) <= 1e-14


class TestPurePath:
    def test_requires_unit_efficiency(self):
        m = FrequencyModel(1, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 0.5, 1e-3, 1)
        s = TrajectoryState.pure(ghz_state(1))
        with pytest.raises(ValueError):
            photodetection_step_pure(s, m, u, 0.5)

    @pytest.mark.parametrize("kind", ["hd", "pd"])
    def test_pure_equals_mixed_at_unit_efficiency(self, kind):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec(kind, 1.0, 1e-3, 500)
        rng = np.random.default_rng(29)
        noise = rng.normal(0, np.sqrt(u.dt), (500, 2)) if kind == "hd" else rng.random(500)
        sp = TrajectoryState.pure(ghz_state(2))
        sm = ghz_mixed_state(2)
        for i in range(500):
            if kind == "hd":
                sp, _ = homodyne_step_pure(sp, m, u, noise[i])
                sm, _ = homodyne_step_mixed(sm, m, u, noise[i])
            else:
                sp, _ = photodetection_step_pure(sp, m, u, noise[i])
                sm, _ = photodetection_step_mixed(sm, m, u, noise[i])
        rho_pure = np.outer(sp.psi, sp.psi.conj())
        assert np.abs(rho_pure - sm.rho).max() <= 1e-8
        assert abs(sp.tr_tau() - sm.tr_tau()) <= 1e-8
        from monfi.qops import _qfi_mixed_raw, qfi_pure

        overlap = np.vdot(sp.psi, sp.phi)
        dpsi = sp.phi - overlap.real * sp.psi
        q_pure = qfi_pure(sp.psi, dpsi)
        q_mixed = _qfi_mixed_raw(sm.rho, sm.drho())
        assert q_pure == pytest.approx(q_mixed, abs=1e-8, rel=1e-8)

    def test_trace_identity_on_pure_path(self):
        # Tr tau equals <psi|phi> + <phi|psi> by construction
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 1.0, 1e-3, 50)
        rng = np.random.default_rng(31)
        sp = TrajectoryState.pure(ghz_state(2))
        for i in range(50):
            sp, _ = homodyne_step_pure(sp, m, u, rng.normal(0, np.sqrt(u.dt), 2))
        assert sp.tr_tau() == pytest.approx(2 * np.vdot(sp.psi, sp.phi).real, abs=1e-15)

    def test_noiseless_zero_record_stream(self):
        # kappa = 0 with a silent record reproduces unitary evolution
        m = FrequencyModel(2, omega=1.0, kappa=0.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 1.0, 1e-3, 500)
        sp = TrajectoryState.pure(ghz_state(2))
        for i in range(500):
            sp, _ = homodyne_step_pure(sp, m, u, np.zeros(2))
        overlap = np.vdot(sp.psi, sp.phi)
        dpsi = sp.phi - overlap.real * sp.psi
        from monfi.qops import qfi_pure

        assert qfi_pure(sp.psi, dpsi) == pytest.approx(4 * 0.25, rel=1e-2)


class TestPhotodetectionConditionalStates:
    def _run_pattern(self, n, omega, kappa, clicks_at, n_steps, dt):
        m = FrequencyModel(n, omega=omega, kappa=kappa, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 1.0, dt, n_steps)
        s = TrajectoryState.pure(ghz_state(n))
        m_count = 0
        for i in range(n_steps):
            rand = 0.0 if i in clicks_at else 0.999999
            s, rec = photodetection_step_pure(s, m, u, rand)
            if rec.click is not None:
                m_count += 1
        assert m_count == len(clicks_at)
        return s

    def test_conditional_state_after_m_clicks(self):
        # (|0...0> + exp(i(N omega t + m pi)) |1...1>)/sqrt(2), global phase free
        n, omega, kappa, dt, n_steps = 3, 1.1, 1.0, 1e-3, 400
        for clicks_at in ([], [7], [3, 200], [0, 1, 399]):
            s = self._run_pattern(n, omega, kappa, clicks_at, n_steps, dt)
            t = n_steps * dt
            target = np.zeros(2**n, dtype=complex)
            target[0] = 1 / np.sqrt(2)
            target[-1] = np.exp(1j * (n * omega * t + len(clicks_at) * np.pi)) / np.sqrt(2)
            assert abs(np.vdot(target, s.psi)) == pytest.approx(1.0, abs=1e-12)

    def test_no_click_run_is_unitary(self):
        n, omega = 2, 0.9
        s = self._run_pattern(n, omega, 1.0, [], 300, 1e-3)
        t = 0.3
        target = np.zeros(4, dtype=complex)
        target[0] = 1 / np.sqrt(2)
        target[-1] = np.exp(1j * n * omega * t) / np.sqrt(2)
        assert abs(np.vdot(target, s.psi)) == pytest.approx(1.0, abs=1e-12)

    def test_odd_click_count_flips_sign(self):
        # at omega = 0 an odd number of jumps lands orthogonal to the probe
        s = self._run_pattern(2, 0.0, 1.0, [5], 10, 1e-3)
        assert abs(np.vdot(ghz_state(2), s.psi)) <= 1e-12


class TestGradientConsistency:
    """tau - Tr[tau] rho against finite differences of the fixed-record state."""

    def _linear_unnormalized(self, m, u, noise, kind):
        p = _prepare(m, u)
        psi = ghz_state(m.n_qubits)
        rt = np.outer(psi, psi.conj()).astype(complex)
        for x in noise:
            if kind == "hd":
                b = np.tensordot(p.sqeta * x, p.C, axes=1)
                mv = p.A + b + 0.5 * (b @ b)
                new = mv @ rt @ dag(mv)
                for j in range(p.nc):
                    new += p.defw[j] * (p.C[j] @ rt @ dag(p.C[j]))
            else:
                new = p.m0diag[:, None] * rt * p.m0diag.conj()[None, :]
                for j in range(p.nc):
                    new += p.defw[j] * (p.C[j] @ rt @ dag(p.C[j]))
                if x >= 0:
                    new = p.C[int(x)] @ new @ dag(p.C[int(x)])
            rt = new
        return rt

    @pytest.mark.parametrize("kind", ["hd", "pd"])
    def test_fixed_record_finite_difference(self, kind):
        n_steps = 200
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec(kind, 0.6, 1e-3, n_steps)
        rng = np.random.default_rng(41)
        s = ghz_mixed_state(2)
        record = []
        for i in range(n_steps):
            if kind == "hd":
                dw = rng.normal(0, np.sqrt(u.dt), 2)
                s, rec = homodyne_step_mixed(s, m, u, dw)
                record.append(rec.dy)
            else:
                s, rec = photodetection_step_mixed(s, m, u, rng.random())
                record.append(-1 if rec.click is None else rec.click)
        drho = s.drho()
        delta = 1e-5
        out = {}
        for sign in (+1, -1):
            ms = FrequencyModel(2, 1.0 + sign * delta, 1.0, NoiseAxis.TRANSVERSE)
            rt = self._linear_unnormalized(ms, u, record, kind)
            out[sign] = rt / np.trace(rt)
        fd = (out[+1] - out[-1]) / (2 * delta)
        rel = np.abs(fd - drho).max() / np.abs(drho).max()
        assert rel <= 1e-6


class TestGhzFastPath:
    def test_per_step_match_with_full_register(self):
        n = 3
        m = FrequencyModel(n, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 0.7, 1e-3, 300)
        p_full = _prepare(m, u)
        rng = np.random.default_rng(47)
        urand = rng.random(300)
        full = ghz_mixed_state(n)
        two = TrajectoryState.mixed(np.full((2, 2), 0.5, dtype=complex))
        for i in range(300):
            full, rec_f = photodetection_step_mixed(full, m, u, urand[i])
            two, rec_2 = ghz_parallel_pd_step(two, n, 1.0, 1.0, 0.7, 1e-3, urand[i])
            assert (rec_f.click is None) == (rec_2.click is None)
            sub = np.array(
                [[full.rho[0, 0], full.rho[0, -1]], [full.rho[-1, 0], full.rho[-1, -1]]]
            )
            assert np.abs(sub - two.rho).max() <= 1e-10
            sub_t = np.array(
                [[full.tau[0, 0], full.tau[0, -1]], [full.tau[-1, 0], full.tau[-1, -1]]]
            )
            assert np.abs(sub_t - two.tau).max() <= 1e-10

    def test_unit_efficiency_reaches_heisenberg(self):
        m = FrequencyModel(6, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 1.0, 1e-3, 800)
        for k in range(5):
            s = run_trajectory(m, u, None, np.array([0.4, 0.8]), seed=3, traj_index=k)
            np.testing.assert_allclose(s.q_cond, 36 * np.array([0.4, 0.8]) ** 2, rtol=1e-10)
            assert np.all(s.tr_tau == 0.0)

    def test_finite_efficiency_effective_dephasing(self):
        # N=2, kappa=1, eta=0.5, t=1: N^2 t^2 exp(-2 kappa (1-eta) N t)
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 0.5, 5e-4, 2000)
        qs = [run_trajectory(m, u, None, np.array([1.0]), 7, k).q_cond[0] for k in range(60)]
        expected = 4 * np.exp(-2.0)
        assert np.mean(qs) == pytest.approx(expected, rel=2e-3)

    def test_fast_path_detection(self):
        mp = FrequencyModel(3, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        mt = FrequencyModel(3, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u_pd = UnravelingSpec("pd", 0.5, 1e-3, 10)
        u_hd = UnravelingSpec("hd", 0.5, 1e-3, 10)
        assert uses_ghz_fast_path(mp, u_pd, None)
        assert uses_ghz_fast_path(mp, u_pd, ghz_state(3))
        assert not uses_ghz_fast_path(mp, u_hd, None)
        assert not uses_ghz_fast_path(mt, u_pd, None)
        assert not uses_ghz_fast_path(mp, u_pd, np.array([1, 0, 0, 0, 0, 0, 0, 0], dtype=complex))


class TestRunTrajectory:
    def test_deterministic_given_seed_and_index(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 0.5, 1e-3, 200)
        grid = np.array([0.1, 0.2])
        a = run_trajectory(m, u, None, grid, seed=5, traj_index=9)
        b = run_trajectory(m, u, None, grid, seed=5, traj_index=9)
        assert np.array_equal(a.tr_tau, b.tr_tau) and np.array_equal(a.q_cond, b.q_cond)
        c = run_trajectory(m, u, None, grid, seed=5, traj_index=10)
        assert not np.array_equal(a.tr_tau, c.tr_tau)

    def test_noiseless_counting(self):
        m = FrequencyModel(3, omega=1.0, kappa=0.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 1.0, 1e-3, 500)
        s = run_trajectory(m, u, None, np.array([0.5]), 1, 0)
        assert s.q_cond[0] == pytest.approx(9 * 0.25, rel=1e-9)
        assert s.tr_tau[0] == 0.0

    def test_noiseless_homodyne(self):
        m = FrequencyModel(2, omega=1.0, kappa=0.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 1.0, 1e-3, 500)
        s = run_trajectory(m, u, None, np.array([0.5]), 1, 0)
        assert s.q_cond[0] == pytest.approx(4 * 0.25, rel=1e-2)
        assert abs(s.tr_tau[0]) <= 1e-2

    def test_parallel_counting_record_is_silent(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        for eta in (0.3, 1.0):
            u = UnravelingSpec("pd", eta, 1e-3, 300)
            s = run_trajectory(m, u, None, np.array([0.15, 0.3]), 2, 4)
            assert np.all(s.tr_tau == 0.0)

    def test_grid_validation(self):
        m = FrequencyModel(1, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 1.0, 1e-3, 100)
        with pytest.raises(ValueError):
            run_trajectory(m, u, None, np.array([0.05015]), 1, 0)  # not a multiple of dt
        with pytest.raises(ValueError):
            run_trajectory(m, u, None, np.array([0.2]), 1, 0)  # beyond n_steps*dt

    def test_positivity_over_random_steps(self):
        m = FrequencyModel(2, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec("hd", 0.25, 2e-3, 1)
        rng = np.random.default_rng(53)
        s = ghz_mixed_state(2)
        for i in range(500):
            s, _ = homodyne_step_mixed(s, m, u, rng.normal(0, np.sqrt(u.dt), 2))
            assert np.linalg.eigvalsh(s.rho).min() >= -1e-9


class TestStructuredBigState:
    @pytest.mark.parametrize("kind", ["hd", "pd"])
    def test_matches_dense_pure_path(self, kind):
        m = FrequencyModel(3, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.TRANSVERSE)
        u = UnravelingSpec(kind, 1.0, 1e-3, 300)
        grid = np.array([0.15, 0.3])
        for k in range(3):
            dense = run_trajectory(m, u, None, grid, seed=9, traj_index=k)
            big = run_trajectory_pure_structured(m, u, None, grid, seed=9, traj_index=k)
            np.testing.assert_allclose(big.tr_tau, dense.tr_tau, atol=1e-10)
            np.testing.assert_allclose(big.q_cond, dense.q_cond, atol=1e-9, rtol=1e-9)

    def test_parallel_counting_structured(self):
        m = FrequencyModel(4, omega=1.0, kappa=1.0, noise_axis=NoiseAxis.PARALLEL)
        u = UnravelingSpec("pd", 1.0, 1e-3, 400)
        s = run_trajectory_pure_structured(m, u, None, np.array([0.4]), 5, 1)
        assert s.q_cond[0] == pytest.approx(16 * 0.16, rel=1e-9)
