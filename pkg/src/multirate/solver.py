"""Compound Newton solver for the discrete Euler-Lagrange equations.

One macro step solves for the next slow configuration and all fast micro
nodes of the interval simultaneously.  The residual stacks the slow
stationarity equation, the matching equation at the shared fast node and the
interior fast stationarity equations; its Jacobian has arrowhead structure
(dense slow row/column borders, block-tridiagonal fast chain).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import (
    IntervalMomenta,
    MacroStepUnknowns,
    _eval_v_terms,
    _eval_w_terms,
    interval_momenta,
)
from .errors import (
    AbortedStepError,
    ConfigurationError,
    DivergenceError,
    IntegrationError,
)
from .model import MultirateSystem, QuadratureSpec, State, TimeGrid, Trajectory

__all__ = [
    "JacobianMode",
    "IntegratorMode",
    "SolverConfig",
    "StepStats",
    "IntegrationStats",
    "MacroStep",
    "del_residual",
    "del_jacobian",
    "initial_step",
    "macro_step",
    "explicit_macro_step",
    "integrate",
    "macro_flow_map",
    "TrajectoryCertificate",
    "verify_trajectory",
]


class JacobianMode(enum.Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "fd"
    AUTO = "auto"


class IntegratorMode(enum.Enum):
    IMPLICIT_DEL = "del"
    EXPLICIT = "explicit"
    CLOSED_FORM_PQ = "pq"


@dataclass(frozen=True)
class SolverConfig:
    """Newton iteration controls.

    Convergence is measured in the infinity norm of the stacked residual.
    ``fd_step`` scales componentwise as ``fd_step * (1 + |x_i|)`` when the
    Jacobian is approximated by forward differences.

    After the tolerance is met, up to ``polish_iters`` further iterations are
    taken unless the residual is already four orders of magnitude below the
    tolerance.  Quadratic convergence then parks accepted residuals far below
    ``newton_tol``, so long-run conservation certificates are limited by the
    discretization instead of the stopping rule; set ``polish_iters=0`` for
    the bare stopping rule.
    """

    newton_tol: float = 1e-9
    max_newton_iters: int = 50
    jacobian_mode: JacobianMode = JacobianMode.AUTO
    fd_step: float = 1e-7
    polish_iters: int = 1

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.polish_iters < 0:
            raise ValueError("polish_iters must be non-negative")

    def resolve_jacobian_mode(self, sys: MultirateSystem) -> JacobianMode:
        if self.jacobian_mode is JacobianMode.AUTO:
            return JacobianMode.ANALYTIC if sys.has_hessians else JacobianMode.FINITE_DIFFERENCE
        if self.jacobian_mode is JacobianMode.ANALYTIC and not sys.has_hessians:
            raise ConfigurationError("analytic Jacobian requested but the system supplies no Hessians")
        return self.jacobian_mode


@dataclass
class StepStats:
    """Work and timing record of one macro step."""

    newton_iters: int = 0
    residual_norm: float = 0.0
    solve_time: float = 0.0
    jacobian_time: float = 0.0


@dataclass
class IntegrationStats:
    """Aggregate work record of a trajectory integration."""

    n_steps: int = 0
    newton_iters_total: int = 0
    solve_time_total: float = 0.0
    jacobian_time_total: float = 0.0
    wall_time_total: float = 0.0
    residual_max: float = 0.0

    def add(self, step: StepStats):
        self.n_steps += 1
        self.newton_iters_total += step.newton_iters
        self.solve_time_total += step.solve_time
        self.jacobian_time_total += step.jacobian_time
        self.residual_max = max(self.residual_max, step.residual_norm)

    @property
    def solve_time_per_step(self) -> float:
        return self.solve_time_total / self.n_steps if self.n_steps else 0.0

    @property
    def jacobian_time_per_step(self) -> float:
        return self.jacobian_time_total / self.n_steps if self.n_steps else 0.0


@dataclass
class MacroStep:
    """Solution data of one macro interval, including its right momenta."""

    index: int
    q_slow_start: np.ndarray
    q_slow_end: np.ndarray
    fast: np.ndarray                 # (p+1, n_fast)
    momenta: IntervalMomenta = field(repr=False)

    @property
    def p_slow_end(self) -> np.ndarray:
        return self.momenta.p_s_plus

    @property
    def p_fast_end(self) -> np.ndarray:
        return self.momenta.p_f_plus[-1]

    def end_state(self) -> State:
        return State(self.q_slow_end, self.fast[-1], self.p_slow_end, self.p_fast_end)


# ---------------------------------------------------------------------------
# residual and Jacobian


def _stacked_residual(q_slow_k, fast0, p_slow_in, p_fast_in, unknowns: MacroStepUnknowns,
                      sys: MultirateSystem, quad: QuadratureSpec, grid: TimeGrid) -> np.ndarray:
    """Stacked step equations; zero when the incoming momenta are matched."""
    p = grid.micro_per_macro
    dt = grid.dt
    q0 = q_slow_k
    q1 = unknowns.q_slow_next
    fast = np.vstack([fast0[None, :], unknowns.q_fast_micro]) if sys.n_fast else np.zeros((p + 1, 0))

    v_s = (q1 - q0) / grid.dT
    g_s0 = -(sys.mass_slow @ v_s)
    g_f = np.zeros((p + 1, sys.n_fast))
    for m in range(p):
        Mv_f = sys.mass_fast @ ((fast[m + 1] - fast[m]) / dt)
        g_f[m] -= Mv_f
        g_f[m + 1] += Mv_f

    for m, w, c0, c1, u_l, u_r, g_s, g_fV, _, _, _ in _eval_v_terms(q0, q1, fast, sys, quad, grid):
        if c0:
            g_s0 -= (w * c0) * g_s
        if u_l:
            g_f[m] -= (w * u_l) * g_fV
        if u_r:
            g_f[m + 1] -= (w * u_r) * g_fV
    for m, w, u_l, u_r, g, _ in _eval_w_terms(fast, sys, quad, grid):
        if u_l:
            g_f[m] -= (w * u_l) * g
        if u_r:
            g_f[m + 1] -= (w * u_r) * g

    res = np.empty(sys.n_slow + p * sys.n_fast)
    res[: sys.n_slow] = g_s0 + p_slow_in
    if sys.n_fast:
        res[sys.n_slow : sys.n_slow + sys.n_fast] = g_f[0] + p_fast_in
        if p > 1:
            res[sys.n_slow + sys.n_fast :] = g_f[1:p].ravel()
    return res


def _assemble_jacobian(q_slow_k, fast0, unknowns: MacroStepUnknowns, sys: MultirateSystem,
                       quad: QuadratureSpec, grid: TimeGrid, kin: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of the stacked residual with respect to the unknowns."""
    p = grid.micro_per_macro
    n_s, n_f = sys.n_slow, sys.n_fast
    q0 = q_slow_k
    q1 = unknowns.q_slow_next
    fast = np.vstack([fast0[None, :], unknowns.q_fast_micro]) if n_f else np.zeros((p + 1, 0))

    J = kin.copy()

    def fast_col(i):
        # column slice of fast node i (i >= 1)
        lo = n_s + (i - 1) * n_f
        return slice(lo, lo + n_f)

    def fast_row(i):
        # residual row slice of fast node i (0 <= i <= p-1)
        lo = n_s + i * n_f
        return slice(lo, lo + n_f)

    for m, w, c0, c1, u_l, u_r, _, _, H_ss, H_sf, H_ff in _eval_v_terms(
            q0, q1, fast, sys, quad, grid, hessian=True):
        nodes = ((m, u_l), (m + 1, u_r))
        if c0 and c1:
            J[:n_s, :n_s] -= (w * c0 * c1) * H_ss
        for i, u in nodes:
            if not u:
                continue
            if c0 and i >= 1:
                J[:n_s, fast_col(i)] -= (w * c0 * u) * H_sf
            if i <= p - 1 and c1:
                J[fast_row(i), :n_s] -= (w * u * c1) * H_sf.T
            if i <= p - 1:
                for i2, u2 in nodes:
                    if u2 and i2 >= 1:
                        J[fast_row(i), fast_col(i2)] -= (w * u * u2) * H_ff
    for m, w, u_l, u_r, _, H in _eval_w_terms(fast, sys, quad, grid, hessian=True):
        nodes = ((m, u_l), (m + 1, u_r))
        for i, u in nodes:
            if not u or i > p - 1:
                continue
            for i2, u2 in nodes:
                if u2 and i2 >= 1:
                    J[fast_row(i), fast_col(i2)] -= (w * u * u2) * H
    return J


def del_residual(prev: MacroStep, unknowns: MacroStepUnknowns, sys: MultirateSystem,
                 quad: QuadratureSpec, grid: TimeGrid) -> np.ndarray:
    """Discrete Euler-Lagrange residual of macro step ``prev.index + 1``.

    ``prev`` supplies the configuration history (previous interval) whose
    right discrete momenta enter the matching equations.
    """
    return _stacked_residual(prev.q_slow_end, prev.fast[-1], prev.p_slow_end,
                             prev.p_fast_end, unknowns, sys, quad, grid)


def del_jacobian(prev: MacroStep, unknowns: MacroStepUnknowns, sys: MultirateSystem,
                 quad: QuadratureSpec, grid: TimeGrid, config: SolverConfig) -> np.ndarray:
    """Jacobian of :func:`del_residual` with respect to the stacked unknowns."""
    mode = config.resolve_jacobian_mode(sys)
    if mode is JacobianMode.ANALYTIC:
        kin = _build_kinetic_jacobian_full(sys, grid)
        return _assemble_jacobian(prev.q_slow_end, prev.fast[-1], unknowns, sys, quad, grid, kin)
    return _fd_jacobian(
        lambda x: _stacked_residual(
            prev.q_slow_end, prev.fast[-1], prev.p_slow_end, prev.p_fast_end,
            MacroStepUnknowns.unpack(x, sys.n_slow, sys.n_fast, grid.micro_per_macro),
            sys, quad, grid),
        unknowns.pack(), config.fd_step)


def _build_kinetic_jacobian_full(sys: MultirateSystem, grid: TimeGrid) -> np.ndarray:
    """Constant kinetic part of the Jacobian (mass-scaled difference operator)."""
    p = grid.micro_per_macro
    n_s, n_f = sys.n_slow, sys.n_fast
    dim = n_s + p * n_f
    J = np.zeros((dim, dim))
    if n_s:
        J[:n_s, :n_s] = -sys.mass_slow / grid.dT
    if n_f:
        Mdt = sys.mass_fast / grid.dt

        def row(i):
            return slice(n_s + i * n_f, n_s + (i + 1) * n_f)

        def col(i):
            return slice(n_s + (i - 1) * n_f, n_s + i * n_f)

        # node-0 matching equation: d/d f_1 of -M (f_1 - f_0)/dt
        J[row(0), col(1)] = -Mdt
        for m in range(1, p):
            J[row(m), col(m)] = 2.0 * Mdt
            if m - 1 >= 1:
                J[row(m), col(m - 1)] = -Mdt
            if m + 1 <= p:
                J[row(m), col(m + 1)] = -Mdt
    return J


def _fd_jacobian(residual, x0: np.ndarray, fd_step: float) -> np.ndarray:
    """Forward-difference Jacobian with componentwise steps."""
    r0 = residual(x0)
    J = np.empty((r0.size, x0.size))
    for i in range(x0.size):
        h = fd_step * (1.0 + abs(x0[i]))
        xp = x0.copy()
        xp[i] += h
        J[:, i] = (residual(xp) - r0) / h
    return J


# ---------------------------------------------------------------------------
# Newton driver and step functions


def _newton(residual, jacobian, x0: np.ndarray, config: SolverConfig):
    x = x0.copy()
    stats = StepStats()
    F = residual(x)
    norm = float(np.max(np.abs(F))) if F.size else 0.0
    polish_left = config.polish_iters
    while True:
        if norm <= config.newton_tol:
            if polish_left <= 0 or norm <= 1e-4 * config.newton_tol:
                break
            polish_left -= 1
        elif stats.newton_iters >= config.max_newton_iters:
            raise DivergenceError(
                f"Newton did not reach tol={config.newton_tol:g} in "
                f"{config.max_newton_iters} iterations (residual {norm:.3e})",
                residual_norm=norm, iterations=stats.newton_iters)
        t0 = time.perf_counter()
        J = jacobian(x)
        stats.jacobian_time += time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise DivergenceError(f"singular Newton matrix: {exc}", residual_norm=norm,
                                  iterations=stats.newton_iters) from exc
        stats.solve_time += time.perf_counter() - t0
        x = x + dx
        if not np.all(np.isfinite(x)):
            raise AbortedStepError("Newton iterate became non-finite")
        F = residual(x)
        stats.newton_iters += 1
        norm = float(np.max(np.abs(F))) if F.size else 0.0
    stats.residual_norm = norm
    return x, stats


def _solve_step(index: int, q_slow_k, fast0, p_slow_in, p_fast_in, guess: MacroStepUnknowns,
                sys: MultirateSystem, quad: QuadratureSpec, grid: TimeGrid,
                config: SolverConfig) -> tuple[MacroStep, StepStats]:
    mode = config.resolve_jacobian_mode(sys)
    p = grid.micro_per_macro

    def residual(x):
        u = MacroStepUnknowns.unpack(x, sys.n_slow, sys.n_fast, p)
        return _stacked_residual(q_slow_k, fast0, p_slow_in, p_fast_in, u, sys, quad, grid)

    if mode is JacobianMode.ANALYTIC:
        kin = _build_kinetic_jacobian_full(sys, grid)

        def jacobian(x):
            u = MacroStepUnknowns.unpack(x, sys.n_slow, sys.n_fast, p)
            return _assemble_jacobian(q_slow_k, fast0, u, sys, quad, grid, kin)
    else:
        def jacobian(x):
            return _fd_jacobian(residual, x, config.fd_step)

    x, stats = _newton(residual, jacobian, guess.pack(), config)
    u = MacroStepUnknowns.unpack(x, sys.n_slow, sys.n_fast, p)
    fast = np.vstack([fast0[None, :], u.q_fast_micro]) if sys.n_fast else np.zeros((p + 1, 0))
    mom = interval_momenta(q_slow_k, u.q_slow_next, fast, sys, quad, grid)
    return MacroStep(index, np.asarray(q_slow_k, dtype=float).copy(), u.q_slow_next, fast, mom), stats


def initial_step(q0: State, sys: MultirateSystem, quad: QuadratureSpec, grid: TimeGrid,
                 config: SolverConfig) -> tuple[MacroStep, StepStats]:
    """Solve the distinct first macro interval from an initial (q, p) state.

    The equations equate the left discrete momenta of the interval with the
    given initial momenta and impose stationarity at the interior fast nodes.
    """
    if not q0.finite:
        raise ValueError("initial state contains non-finite entries")
    p = grid.micro_per_macro
    # free-drift prediction
    s1 = q0.q_slow + grid.dT * (sys.mass_slow_inv @ q0.p_slow)
    v_f = sys.mass_fast_inv @ q0.p_fast
    fast_guess = q0.q_fast[None, :] + grid.dt * np.arange(1, p + 1)[:, None] * v_f[None, :]
    guess = MacroStepUnknowns(s1, fast_guess)
    return _solve_step(0, q0.q_slow, q0.q_fast, q0.p_slow, q0.p_fast, guess,
                       sys, quad, grid, config)


def macro_step(prev: MacroStep, sys: MultirateSystem, quad: QuadratureSpec, grid: TimeGrid,
               config: SolverConfig) -> tuple[MacroStep, StepStats]:
    """Advance one macro interval given the completed previous interval."""
    p = grid.micro_per_macro
    # linear extrapolation for the slow node, constant continuation for fast
    s1_guess = 2.0 * prev.q_slow_end - prev.q_slow_start
    fast_guess = np.repeat(prev.fast[-1][None, :], p, axis=0)
    guess = MacroStepUnknowns(s1_guess, fast_guess)
    return _solve_step(prev.index + 1, prev.q_slow_end, prev.fast[-1],
                       prev.p_slow_end, prev.p_fast_end, guess, sys, quad, grid, config)


def _explicit_step(index: int, q_slow_k, fast0, p_slow_in, p_fast_in, sys: MultirateSystem,
                   quad: QuadratureSpec, grid: TimeGrid) -> MacroStep:
    p = grid.micro_per_macro
    dt = grid.dt
    q0 = np.asarray(q_slow_k, dtype=float)
    f0 = np.asarray(fast0, dtype=float)

    g_s, g_f = sys.slow_potential_grad(q0, f0)
    g_s = np.asarray(g_s, dtype=float)
    g_f = np.asarray(g_f, dtype=float)
    # total weight of the left node in the fast quadrature (gamma_W in {0,1})
    w_left = quad.alpha_W * quad.gamma_W + (1.0 - quad.alpha_W) * (1.0 - quad.gamma_W)

    fast = np.empty((p + 1, sys.n_fast))
    fast[0] = f0
    kick0 = p_fast_in - grid.dT * quad.alpha_V * g_f - dt * w_left * np.asarray(
        sys.fast_potential_grad(f0), dtype=float)
    fast[1] = f0 + dt * (sys.mass_fast_inv @ kick0)
    for m in range(1, p):
        gw = np.asarray(sys.fast_potential_grad(fast[m]), dtype=float)
        fast[m + 1] = 2.0 * fast[m] - fast[m - 1] - dt * dt * (sys.mass_fast_inv @ gw)
    q1 = q0 + grid.dT * (sys.mass_slow_inv @ (p_slow_in - grid.dT * quad.alpha_V * g_s))

    mom = interval_momenta(q0, q1, fast, sys, quad, grid)
    return MacroStep(index, q0.copy(), q1, fast, mom)


def explicit_macro_step(prev: MacroStep, sys: MultirateSystem, quad: QuadratureSpec,
                        grid: TimeGrid) -> MacroStep:
    """Iteration-free macro step; requires an explicit-solvable quadrature.

    The shared-node equation yields the first fast node, the interior
    equations advance the fast chain, and the slow equation gives the next
    macro configuration, each by a single mass-matrix solve.
    """
    if not quad.explicit_solvable:
        raise ConfigurationError(
            "explicit stepping requires macro-node slow placement and a "
            "trapezoidal-family fast quadrature (gamma_W in {0, 1})")
    return _explicit_step(prev.index + 1, prev.q_slow_end, prev.fast[-1],
                          prev.p_slow_end, prev.p_fast_end, sys, quad, grid)


# ---------------------------------------------------------------------------
# trajectory integration


def _empty_trajectory(q0: State, grid: TimeGrid, sys: MultirateSystem) -> Trajectory:
    N, p = grid.n_macro, grid.micro_per_macro
    slow_q = np.zeros((N + 1, sys.n_slow))
    slow_p = np.zeros((N + 1, sys.n_slow))
    fast_q = np.zeros((N * p + 1, sys.n_fast))
    fast_p = np.zeros((N * p + 1, sys.n_fast))
    slow_q[0] = q0.q_slow
    slow_p[0] = q0.p_slow
    fast_q[0] = q0.q_fast
    fast_p[0] = q0.p_fast
    return Trajectory(grid, slow_q, slow_p, fast_q, fast_p)


def _store_step(traj: Trajectory, step: MacroStep):
    k = step.index
    p = traj.grid.micro_per_macro
    traj.slow_q[k + 1] = step.q_slow_end
    traj.fast_q[k * p + 1 : (k + 1) * p + 1] = step.fast[1:]
    # matched momenta: store the left value at every node it is defined on
    if k > 0:
        traj.slow_p[k] = step.momenta.p_s_minus
        traj.fast_p[k * p] = step.momenta.p_f_minus[0]
    for m in range(1, p):
        traj.fast_p[k * p + m] = step.momenta.p_f_minus[m]
    # provisional right values at the interval end; overwritten by the next step
    traj.slow_p[k + 1] = step.momenta.p_s_plus
    traj.fast_p[(k + 1) * p] = step.momenta.p_f_plus[-1]


def integrate(q0: State, sys: MultirateSystem, quad: QuadratureSpec, grid: TimeGrid,
              config: SolverConfig, mode: IntegratorMode = IntegratorMode.IMPLICIT_DEL,
              ) -> tuple[Trajectory, IntegrationStats]:
    """Integrate the full trajectory over ``grid.n_macro`` macro steps.

    Deterministic: identical inputs produce bit-identical trajectories.  On a
    step failure an :class:`IntegrationError` carrying the partial trajectory
    is raised.
    """
    if mode is IntegratorMode.CLOSED_FORM_PQ:
        from . import schemes
        return schemes.integrate_pq(q0, sys, quad, grid, config)
    if mode is IntegratorMode.EXPLICIT and not quad.explicit_solvable:
        raise ConfigurationError("quadrature is not explicit-solvable")

    traj = _empty_trajectory(q0, grid, sys)
    stats = IntegrationStats()
    t_wall = time.perf_counter()
    step: Optional[MacroStep] = None
    for k in range(grid.n_macro):
        try:
            if mode is IntegratorMode.EXPLICIT:
                if step is None:
                    step = _explicit_step(0, q0.q_slow, q0.q_fast, q0.p_slow, q0.p_fast,
                                          sys, quad, grid)
                else:
                    step = explicit_macro_step(step, sys, quad, grid)
                sstats = StepStats()
            else:
                if step is None:
                    step, sstats = initial_step(q0, sys, quad, grid, config)
                else:
                    step, sstats = macro_step(step, sys, quad, grid, config)
        except Exception as exc:
            stats.wall_time_total = time.perf_counter() - t_wall
            raise IntegrationError(f"macro step {k} failed: {exc}",
                                   partial_trajectory=traj, step_index=k, cause=exc) from exc
        _store_step(traj, step)
        stats.add(sstats)
    stats.wall_time_total = time.perf_counter() - t_wall
    return traj, stats


def macro_flow_map(state: State, sys: MultirateSystem, quad: QuadratureSpec, dT: float,
                   micro_per_macro: int, config: SolverConfig) -> State:
    """One application of the macro-step flow map (q, p) -> (q, p)."""
    grid = TimeGrid(dT=dT, micro_per_macro=micro_per_macro, n_macro=1)
    step, _ = initial_step(state, sys, quad, grid, config)
    return step.end_state()


# ---------------------------------------------------------------------------
# certificates


@dataclass
class TrajectoryCertificate:
    """Residual and momentum-matching checks over a whole trajectory."""

    residual_max: float
    matching_macro_max: float
    matching_micro_max: float
    initial_max: float

    def ok(self, newton_tol: float, matching_factor: float = 10.0) -> bool:
        return (
            self.residual_max <= newton_tol
            and self.initial_max <= newton_tol
            and self.matching_macro_max <= matching_factor * newton_tol
            and self.matching_micro_max <= matching_factor * newton_tol
        )


def verify_trajectory(traj: Trajectory, q0: State, sys: MultirateSystem, quad: QuadratureSpec,
                      grid: TimeGrid) -> TrajectoryCertificate:
    """Recompute the discrete equations along a trajectory.

    The stacked residual at each interior macro node equals the mismatch of
    left and right discrete momenta, so the certificate reports both the
    residual norm and the per-node matching norms.
    """
    N = grid.n_macro
    moms = [
        interval_momenta(traj.slow_q[k], traj.slow_q[k + 1], traj.interval_fast(k),
                         sys, quad, grid)
        for k in range(N)
    ]
    residual_max = 0.0
    match_macro = 0.0
    match_micro = 0.0

    def inf(a):
        return float(np.max(np.abs(a))) if a.size else 0.0

    initial_max = 0.0
    if N >= 1:
        initial_max = max(inf(moms[0].p_s_minus - q0.p_slow),
                          inf(moms[0].p_f_minus[0] - q0.p_fast) if sys.n_fast else 0.0)
    for k in range(1, N):
        r_s = moms[k - 1].p_s_plus - moms[k].p_s_minus
        parts = [inf(r_s)]
        if sys.n_fast:
            parts.append(inf(moms[k - 1].p_f_plus[-1] - moms[k].p_f_minus[0]))
        residual_here = max(parts)
        match_macro = max(match_macro, residual_here)
        residual_max = max(residual_max, residual_here)
    for k in range(N):
        for m in range(1, grid.micro_per_macro):
            mism = inf(moms[k].p_f_plus[m - 1] - moms[k].p_f_minus[m])
            match_micro = max(match_micro, mism)
            residual_max = max(residual_max, mism)
    return TrajectoryCertificate(residual_max, match_macro, match_micro, initial_max)
