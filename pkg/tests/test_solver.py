import numpy as np
import pytest

from multirate import (
    ConfigurationError,
    IntegrationError,
    IntegratorMode,
    JacobianMode,
    MacroStepUnknowns,
    MultirateSystem,
    QuadratureSpec,
    SlowPlacement,
    SolverConfig,
    State,
    TimeGrid,
    build_time_grid,
    del_jacobian,
    del_residual,
    explicit_macro_step,
    initial_step,
    integrate,
    macro_flow_map,
    macro_step,
    verify_trajectory,
)

from _oracles import (
    block_mass_inv,
    full_grad_potential,
    implicit_midpoint_trajectory,
    symplectic_euler_momentum_first,
)
from conftest import toy_state

MIDMID = QuadratureSpec.midpoint_midpoint()


def free_state():
    return State([0.0], [1.0], [2.0], [1.0])


class TestResidual:
    def test_free_particle_drift_residual_vanishes(self, free_particle, config):
        grid = build_time_grid(0.5, 4, 2)
        step, _ = initial_step(free_state(), free_particle, MIDMID, grid, config)
        # exact continuation of the drift
        v_s = free_particle.mass_slow_inv @ step.p_slow_end
        v_f = free_particle.mass_fast_inv @ step.p_fast_end
        s2 = step.q_slow_end + 0.5 * v_s
        fast = step.fast[-1] + grid.dt * np.arange(1, 5)[:, None] * v_f
        res = del_residual(step, MacroStepUnknowns(s2, fast), free_particle, MIDMID, grid)
        assert np.max(np.abs(res)) < 1e-14

    def test_converged_step_residual_below_tolerance(self, fpu):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-9)
        grid = build_time_grid(0.3, 5, 2)
        s0, _ = initial_step(q0, sys, MIDMID, grid, cfg)
        s1, stats = macro_step(s0, sys, MIDMID, grid, cfg)
        assert stats.residual_norm < 1e-9
        res = del_residual(s0, MacroStepUnknowns(s1.q_slow_end, s1.fast[1:]), sys, MIDMID, grid)
        assert np.max(np.abs(res)) < 1e-9

    def test_local_linearity_of_residual(self, fpu, config):
        sys, q0 = fpu
        grid = build_time_grid(0.3, 5, 2)
        s0, _ = initial_step(q0, sys, MIDMID, grid, config)
        s1, _ = macro_step(s0, sys, MIDMID, grid, config)
        x = MacroStepUnknowns(s1.q_slow_end, s1.fast[1:]).pack()

        def norm_at(delta):
            xp = x.copy()
            xp[4] += delta
            u = MacroStepUnknowns.unpack(xp, 3, 3, 5)
            return np.max(np.abs(del_residual(s0, u, sys, MIDMID, grid)))

        r1, r2 = norm_at(1e-4), norm_at(5e-5)
        assert r1 / r2 == pytest.approx(2.0, rel=0.05)


class TestJacobian:
    def test_analytic_matches_finite_difference(self, fpu, config):
        sys, q0 = fpu
        grid = build_time_grid(0.3, 5, 2)
        step, _ = initial_step(q0, sys, MIDMID, grid, config)
        unk = MacroStepUnknowns(step.q_slow_end + 0.01, step.fast[1:] + 0.005)
        Ja = del_jacobian(step, unk, sys, MIDMID, grid,
                          SolverConfig(jacobian_mode=JacobianMode.ANALYTIC))
        Jf = del_jacobian(step, unk, sys, MIDMID, grid,
                          SolverConfig(jacobian_mode=JacobianMode.FINITE_DIFFERENCE, fd_step=1e-7))
        assert np.max(np.abs(Ja - Jf) / (1.0 + np.abs(Ja))) < 1e-5

    def test_fast_chain_locality(self, fpu, config):
        # fast-fast blocks vanish beyond nearest micro neighbours
        sys, q0 = fpu
        grid = build_time_grid(0.3, 5, 2)
        step, _ = initial_step(q0, sys, MIDMID, grid, config)
        unk = MacroStepUnknowns(step.q_slow_end, step.fast[1:])
        J = del_jacobian(step, unk, sys, MIDMID, grid, SolverConfig())
        n_s, n_f, p = 3, 3, 5
        for m in range(p):          # residual rows of fast nodes 0..p-1
            for m2 in range(1, p + 1):   # columns of fast nodes 1..p
                if abs(m - m2) >= 2:
                    blk = J[n_s + m * n_f : n_s + (m + 1) * n_f,
                            n_s + (m2 - 1) * n_f : n_s + m2 * n_f]
                    assert np.all(blk == 0.0)

    def test_free_particle_jacobian_is_constant_difference_operator(self, free_particle, config):
        grid = build_time_grid(0.5, 3, 2)
        step, stats = initial_step(free_state(), free_particle, MIDMID, grid, config)
        s1, stats = macro_step(step, free_particle, MIDMID, grid, config)
        assert stats.newton_iters <= 1
        unk = MacroStepUnknowns(s1.q_slow_end, s1.fast[1:])
        J1 = del_jacobian(step, unk, free_particle, MIDMID, grid, config)
        unk2 = MacroStepUnknowns(s1.q_slow_end + 3.0, s1.fast[1:] - 2.0)
        J2 = del_jacobian(step, unk2, free_particle, MIDMID, grid, config)
        assert np.array_equal(J1, J2)
        assert J1[0, 0] == pytest.approx(-1.0 / 0.5)

    def test_analytic_mode_requires_hessians(self):
        sys_no_hess = MultirateSystem(
            1, 1, np.eye(1), np.eye(1),
            lambda qs, qf: 0.0, lambda qs, qf: (np.zeros(1), np.zeros(1)),
            lambda qf: 0.0, lambda qf: np.zeros(1))
        cfg = SolverConfig(jacobian_mode=JacobianMode.ANALYTIC)
        with pytest.raises(ConfigurationError):
            cfg.resolve_jacobian_mode(sys_no_hess)


class TestInitialStep:
    def test_free_drift(self, free_particle, config):
        grid = build_time_grid(0.5, 4, 1)
        st = free_state()
        step, stats = initial_step(st, free_particle, MIDMID, grid, config)
        v_s = free_particle.mass_slow_inv @ st.p_slow
        v_f = free_particle.mass_fast_inv @ st.p_fast
        assert np.allclose(step.q_slow_end, st.q_slow + 0.5 * v_s, atol=1e-13)
        for m in range(5):
            assert np.allclose(step.fast[m], st.q_fast + m * grid.dt * v_f, atol=1e-13)

    def test_fpu_initial_step_converges(self, fpu):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-9)
        grid = build_time_grid(0.3, 5, 1)
        step, stats = initial_step(q0, sys, MIDMID, grid, cfg)
        assert stats.residual_norm < 1e-9
        assert np.all(np.isfinite(step.fast))

    def test_first_step_matches_implicit_midpoint(self, toy_coupled, config):
        sys = toy_coupled
        st = toy_state()
        grid = build_time_grid(0.05, 1, 1)
        step, _ = initial_step(st, sys, MIDMID, grid, config)
        gradU = full_grad_potential(sys)
        Minv = block_mass_inv(sys)
        qs, ps = implicit_midpoint_trajectory(
            gradU, Minv, np.concatenate([st.q_slow, st.q_fast]),
            np.concatenate([st.p_slow, st.p_fast]), 0.05, 1)
        assert np.max(np.abs(step.q_slow_end - qs[1][:1])) < 1e-11
        assert np.max(np.abs(step.fast[-1] - qs[1][1:])) < 1e-11
        assert np.max(np.abs(step.p_slow_end - ps[1][:1])) < 1e-11
        assert np.max(np.abs(step.p_fast_end - ps[1][1:])) < 1e-11


class TestMacroStep:
    def test_momentum_matching_at_all_nodes(self, fpu):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-10)
        for p in (1, 5, 10):
            grid = build_time_grid(0.3, p, 3)
            traj, _ = integrate(q0, sys, MIDMID, grid, cfg)
            cert = verify_trajectory(traj, q0, sys, MIDMID, grid)
            assert cert.ok(1e-10)

    def test_divergence_reports_partial_trajectory(self, fpu):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-9, max_newton_iters=8)
        grid = build_time_grid(0.3, 5, 50)
        quad = QuadratureSpec.trapezoidal_trapezoidal(1.0, 1.0)
        with pytest.raises(IntegrationError) as exc_info:
            integrate(q0, sys, quad, grid, cfg)
        err = exc_info.value
        assert err.partial_trajectory is not None
        assert err.step_index is not None


class TestExplicitStep:
    def test_rejects_non_explicit_quadrature(self, fpu, config):
        sys, q0 = fpu
        grid = build_time_grid(0.01, 5, 1)
        step, _ = initial_step(q0, sys, MIDMID, grid, config)
        with pytest.raises(ConfigurationError):
            explicit_macro_step(step, sys, MIDMID, grid)
        with pytest.raises(ConfigurationError):
            integrate(q0, sys, MIDMID, grid, config, IntegratorMode.EXPLICIT)

    def test_free_particle_drift(self, free_particle, config):
        grid = build_time_grid(0.5, 3, 4)
        quad = QuadratureSpec.explicit()
        traj, _ = integrate(free_state(), free_particle, quad, grid, config,
                            IntegratorMode.EXPLICIT)
        v_s = free_particle.mass_slow_inv @ np.array([2.0])
        assert np.allclose(traj.slow_q[:, 0], 0.0 + v_s[0] * grid.macro_times(), atol=1e-13)

    @pytest.mark.parametrize("alpha_v,alpha_w,gamma_w", [
        (1.0, 1.0, 1.0), (0.5, 0.5, 1.0), (0.3, 0.8, 0.0),
    ])
    def test_matches_implicit_path(self, fpu, alpha_v, alpha_w, gamma_w):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-12)
        quad = QuadratureSpec(alpha_v, 1.0, alpha_w, gamma_w, SlowPlacement.MACRO_NODES_ONLY)
        grid = build_time_grid(0.01, 5, 30)
        t_imp, _ = integrate(q0, sys, quad, grid, cfg, IntegratorMode.IMPLICIT_DEL)
        t_exp, _ = integrate(q0, sys, quad, grid, cfg, IntegratorMode.EXPLICIT)
        assert np.max(np.abs(t_imp.slow_q - t_exp.slow_q)) < 1e-12
        assert np.max(np.abs(t_imp.fast_q - t_exp.fast_q)) < 1e-12
        assert np.max(np.abs(t_imp.fast_p - t_exp.fast_p)) < 1e-10


class TestIntegrate:
    def test_zero_intervals_returns_initial_state(self, fpu, config):
        sys, q0 = fpu
        grid = TimeGrid(dT=0.3, micro_per_macro=5, n_macro=0)
        traj, stats = integrate(q0, sys, MIDMID, grid, config)
        assert traj.slow_q.shape == (1, 3)
        assert np.array_equal(traj.slow_q[0], q0.q_slow)
        assert np.array_equal(traj.fast_p[0], q0.p_fast)
        assert stats.n_steps == 0

    def test_deterministic(self, fpu):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-9)
        grid = build_time_grid(0.3, 5, 10)
        t1, _ = integrate(q0, sys, MIDMID, grid, cfg)
        t2, _ = integrate(q0, sys, MIDMID, grid, cfg)
        assert np.array_equal(t1.slow_q, t2.slow_q)
        assert np.array_equal(t1.slow_p, t2.slow_p)
        assert np.array_equal(t1.fast_q, t2.fast_q)
        assert np.array_equal(t1.fast_p, t2.fast_p)

    def test_midpoint_single_rate_equals_implicit_midpoint(self, fpu):
        sys, q0 = fpu
        cfg = SolverConfig(newton_tol=1e-13)
        grid = build_time_grid(0.01, 1, 100)
        traj, _ = integrate(q0, sys, MIDMID, grid, cfg)
        gradU = full_grad_potential(sys)
        Minv = block_mass_inv(sys)
        qs, ps = implicit_midpoint_trajectory(
            gradU, Minv, np.concatenate([q0.q_slow, q0.q_fast]),
            np.concatenate([q0.p_slow, q0.p_fast]), 0.01, 100)
        q_all = np.hstack([traj.slow_q, traj.fast_q])
        p_all = np.hstack([traj.slow_p, traj.fast_p])
        assert np.max(np.abs(q_all - qs)) < 1e-8
        assert np.max(np.abs(p_all - ps)) < 1e-8

    def test_left_rectangle_single_rate_is_symplectic_euler(self, toy_coupled):
        sys = toy_coupled
        cfg = SolverConfig(newton_tol=1e-13)
        h = 0.02
        grid = build_time_grid(h, 1, 50)
        quad = QuadratureSpec.trapezoidal_trapezoidal(1.0, 1.0)
        traj, _ = integrate(toy_state(), sys, quad, grid, cfg)
        gradU = full_grad_potential(sys)
        Minv = block_mass_inv(sys)
        q = np.concatenate([toy_state().q_slow, toy_state().q_fast])
        p = np.concatenate([toy_state().p_slow, toy_state().p_fast])
        for k in range(50):
            q, p = symplectic_euler_momentum_first(gradU, Minv, q, p, h)
            assert np.max(np.abs(np.hstack([traj.slow_q[k + 1], traj.fast_q[k + 1]]) - q)) < 1e-10
            assert np.max(np.abs(np.hstack([traj.slow_p[k + 1], traj.fast_p[k + 1]]) - p)) < 1e-10


class TestSymplecticity:
    @pytest.mark.parametrize("quad", [
        QuadratureSpec.midpoint_midpoint(),
        QuadratureSpec.trapezoidal_midpoint(1.0),
        QuadratureSpec.trapezoidal_trapezoidal(1.0, 1.0),
    ])
    def test_flow_jacobian_preserves_canonical_form(self, toy_coupled, quad):
        sys = toy_coupled
        cfg = SolverConfig(newton_tol=1e-13)
        z0 = np.array([0.3, 0.1, -0.2, 0.4])

        def flow(z):
            st = State(z[0:1], z[1:2], z[2:3], z[3:4])
            out = macro_flow_map(st, sys, quad, 0.1, 4, cfg)
            return np.concatenate([out.q_slow, out.q_fast, out.p_slow, out.p_fast])

        delta = 1e-5
        D = np.empty((4, 4))
        for i in range(4):
            zp, zm = z0.copy(), z0.copy()
            zp[i] += delta
            zm[i] -= delta
            D[:, i] = (flow(zp) - flow(zm)) / (2.0 * delta)
        J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
        assert np.max(np.abs(D.T @ J @ D - J)) < 1e-6
