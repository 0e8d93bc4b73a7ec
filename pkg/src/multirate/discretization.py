"""Discrete Lagrangian ingredients on the two-level grid.

The action over one macro interval is approximated by a discrete Lagrangian
``L_d = T_d - V_d - W_d`` built from linear interpolation of the slow
variables between macro nodes, piecewise-linear fast variables on the micro
grid, and affine quadrature rules per potential (see
:class:`multirate.model.QuadratureSpec`).

Every potential contribution is represented uniformly as a list of
quadrature terms.  A term evaluates the potential at a point that is an
affine combination of the two nodes bounding micro interval ``m``:

* fast component: ``u_l * f[m] + u_r * f[m+1]`` with ``u_l + u_r = 1``
* slow component: ``c0 * q_s_k + c1 * q_s_next`` (interpolation folded in)

Macro-node-only placement of the slow potential is expressed in the same
representation with weights attached to the first and last micro interval,
so all derivative formulas below have a single code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .model import MultirateSystem, QuadratureSpec, SlowPlacement, TimeGrid, Trajectory

__all__ = [
    "MacroStepUnknowns",
    "interp_slow",
    "discrete_kinetic",
    "discrete_slow_potential",
    "discrete_fast_potential",
    "discrete_lagrangian",
    "discrete_lagrangian_micro",
    "grad_discrete_lagrangian",
    "IntervalMomenta",
    "interval_momenta",
    "NodeMomenta",
    "discrete_momenta",
]


@dataclass
class MacroStepUnknowns:
    """Unknowns of one macro step in the fixed stacking order.

    The flat vector is ``[q_slow_next; q_fast_micro[0]; ...; q_fast_micro[p-1]]``
    where ``q_fast_micro[i]`` is the fast configuration at micro node i+1.
    """

    q_slow_next: np.ndarray
    q_fast_micro: np.ndarray  # shape (p, n_fast), nodes 1..p

    def pack(self) -> np.ndarray:
        return np.concatenate([self.q_slow_next, self.q_fast_micro.ravel()])

    @classmethod
    def unpack(cls, x: np.ndarray, n_slow: int, n_fast: int, p: int) -> "MacroStepUnknowns":
        if x.size != n_slow + p * n_fast:
            raise ValueError(f"unknown vector has size {x.size}, expected {n_slow + p * n_fast}")
        return cls(x[:n_slow].copy(), x[n_slow:].reshape(p, n_fast).copy())


def interp_slow(q_slow_k, q_slow_next, grid: TimeGrid, m: int):
    """Linearly interpolated slow configuration at micro node m."""
    p = grid.micro_per_macro
    if not 0 <= m <= p:
        raise ValueError(f"micro index m={m} outside [0, {p}]")
    q0 = np.asarray(q_slow_k, dtype=float)
    q1 = np.asarray(q_slow_next, dtype=float)
    return q0 + (m / p) * (q1 - q0)


def _branches(alpha: float, gamma: float):
    """Quadrature branches as (weight, left-node coefficient) pairs.

    gamma = 1/2 collapses the two affine points onto the interval midpoint;
    alpha in {0, 1} drops the zero-weight branch.
    """
    if gamma == 0.5:
        return ((1.0, 0.5),)
    out = []
    if alpha != 0.0:
        out.append((alpha, gamma))
    if alpha != 1.0:
        out.append((1.0 - alpha, 1.0 - gamma))
    return tuple(out)


def _slow_coeffs(u_l: float, m: int, p: int) -> tuple[float, float]:
    """Coefficients (c0, c1) of the macro nodes in the slow evaluation point."""
    c1 = u_l * (m / p) + (1.0 - u_l) * ((m + 1) / p)
    return 1.0 - c1, c1


def _v_term_geometry(quad: QuadratureSpec, grid: TimeGrid):
    """Static geometry of the slow-potential terms: (m, weight, c0, c1, u_l, u_r)."""
    p = grid.micro_per_macro
    if quad.slow_placement is SlowPlacement.MACRO_NODES_ONLY:
        terms = []
        if quad.alpha_V != 0.0:
            terms.append((0, grid.dT * quad.alpha_V, 1.0, 0.0, 1.0, 0.0))
        if quad.alpha_V != 1.0:
            terms.append((p - 1, grid.dT * (1.0 - quad.alpha_V), 0.0, 1.0, 0.0, 1.0))
        return terms
    dt = grid.dt
    terms = []
    for m in range(p):
        for w, u_l in _branches(quad.alpha_V, quad.gamma_V):
            c0, c1 = _slow_coeffs(u_l, m, p)
            terms.append((m, dt * w, c0, c1, u_l, 1.0 - u_l))
    return terms


def _w_term_geometry(quad: QuadratureSpec, grid: TimeGrid):
    """Static geometry of the fast-potential terms: (m, weight, u_l, u_r)."""
    dt = grid.dt
    return [
        (m, dt * w, u_l, 1.0 - u_l)
        for m in range(grid.micro_per_macro)
        for w, u_l in _branches(quad.alpha_W, quad.gamma_W)
    ]


def _check_finite(arr, m, what):
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite {what} at micro interval {m}", node_index=m)


# ---------------------------------------------------------------------------
# scalar energies


def discrete_kinetic(q_slow_k, q_slow_next, fast_nodes, sys: MultirateSystem,
                     grid: TimeGrid) -> float:
    """Discrete kinetic energy of one macro interval.

    Slow velocity is the macro difference quotient, fast velocities the micro
    difference quotients; both are constant per (macro resp. micro) interval.
    """
    q0 = np.asarray(q_slow_k, dtype=float)
    q1 = np.asarray(q_slow_next, dtype=float)
    fast = np.asarray(fast_nodes, dtype=float)
    p = grid.micro_per_macro
    if fast.shape != (p + 1, sys.n_fast):
        raise ValueError(f"fast_nodes must have shape {(p + 1, sys.n_fast)}, got {fast.shape}")
    if q0.shape != (sys.n_slow,) or q1.shape != (sys.n_slow,):
        raise ValueError("slow configuration dimension mismatch")
    v_s = (q1 - q0) / grid.dT
    total = 0.5 * grid.dT * float(v_s @ (sys.mass_slow @ v_s))
    dt = grid.dt
    for m in range(p):
        v_f = (fast[m + 1] - fast[m]) / dt
        total += 0.5 * dt * float(v_f @ (sys.mass_fast @ v_f))
    return total


def discrete_slow_potential(q_slow_k, q_slow_next, fast_nodes, sys: MultirateSystem,
                            quad: QuadratureSpec, grid: TimeGrid) -> float:
    """Quadrature approximation of the slow-potential action contribution."""
    q0 = np.asarray(q_slow_k, dtype=float)
    q1 = np.asarray(q_slow_next, dtype=float)
    fast = np.asarray(fast_nodes, dtype=float)
    total = 0.0
    for m, w, c0, c1, u_l, u_r in _v_term_geometry(quad, grid):
        qs = c0 * q0 + c1 * q1
        qf = u_l * fast[m] + u_r * fast[m + 1]
        total += w * float(sys.slow_potential(qs, qf))
    return total


def discrete_fast_potential(fast_nodes, sys: MultirateSystem, quad: QuadratureSpec,
                            grid: TimeGrid) -> float:
    """Quadrature approximation of the fast-potential action contribution."""
    fast = np.asarray(fast_nodes, dtype=float)
    total = 0.0
    for m, w, u_l, u_r in _w_term_geometry(quad, grid):
        total += w * float(sys.fast_potential(u_l * fast[m] + u_r * fast[m + 1]))
    return total


def discrete_lagrangian(q_slow_k, q_slow_next, fast_nodes, sys: MultirateSystem,
                        quad: QuadratureSpec, grid: TimeGrid) -> float:
    """Discrete Lagrangian T_d - V_d - W_d of one macro interval."""
    return (
        discrete_kinetic(q_slow_k, q_slow_next, fast_nodes, sys, grid)
        - discrete_slow_potential(q_slow_k, q_slow_next, fast_nodes, sys, quad, grid)
        - discrete_fast_potential(fast_nodes, sys, quad, grid)
    )


def discrete_lagrangian_micro(q_slow_k, q_slow_next, fast_nodes, sys: MultirateSystem,
                              quad: QuadratureSpec, grid: TimeGrid, m: int) -> float:
    """Contribution of micro interval m; these sum to the full discrete Lagrangian.

    The slow kinetic term is split evenly over the p micro intervals.
    """
    q0 = np.asarray(q_slow_k, dtype=float)
    q1 = np.asarray(q_slow_next, dtype=float)
    fast = np.asarray(fast_nodes, dtype=float)
    p = grid.micro_per_macro
    if not 0 <= m < p:
        raise ValueError(f"micro interval m={m} outside [0, {p})")
    dt = grid.dt
    v_s = (q1 - q0) / grid.dT
    v_f = (fast[m + 1] - fast[m]) / dt
    val = 0.5 * dt * float(v_s @ (sys.mass_slow @ v_s))
    val += 0.5 * dt * float(v_f @ (sys.mass_fast @ v_f))
    for mm, w, c0, c1, u_l, u_r in _v_term_geometry(quad, grid):
        if mm == m:
            val -= w * float(sys.slow_potential(c0 * q0 + c1 * q1, u_l * fast[m] + u_r * fast[m + 1]))
    for mm, w, u_l, u_r in _w_term_geometry(quad, grid):
        if mm == m:
            val -= w * float(sys.fast_potential(u_l * fast[m] + u_r * fast[m + 1]))
    return val


# ---------------------------------------------------------------------------
# gradients and momenta (closed form)


def _eval_v_terms(q0, q1, fast, sys, quad, grid, hessian=False):
    """Evaluate slow-potential gradients (and optionally Hessians) per term."""
    out = []
    for m, w, c0, c1, u_l, u_r in _v_term_geometry(quad, grid):
        qs = c0 * q0 + c1 * q1
        qf = u_l * fast[m] + u_r * fast[m + 1]
        g_s, g_f = sys.slow_potential_grad(qs, qf)
        g_s = np.asarray(g_s, dtype=float)
        g_f = np.asarray(g_f, dtype=float)
        _check_finite(g_s, m, "slow-potential gradient")
        _check_finite(g_f, m, "slow-potential gradient")
        if hessian:
            H_ss, H_sf, H_ff = sys.slow_potential_hessian(qs, qf)
            out.append((m, w, c0, c1, u_l, u_r, g_s, g_f,
                        np.asarray(H_ss, dtype=float),
                        np.asarray(H_sf, dtype=float),
                        np.asarray(H_ff, dtype=float)))
        else:
            out.append((m, w, c0, c1, u_l, u_r, g_s, g_f, None, None, None))
    return out


def _eval_w_terms(fast, sys, quad, grid, hessian=False):
    """Evaluate fast-potential gradients (and optionally Hessians) per term."""
    out = []
    for m, w, u_l, u_r in _w_term_geometry(quad, grid):
        qf = u_l * fast[m] + u_r * fast[m + 1]
        g = np.asarray(sys.fast_potential_grad(qf), dtype=float)
        _check_finite(g, m, "fast-potential gradient")
        if hessian:
            out.append((m, w, u_l, u_r, g, np.asarray(sys.fast_potential_hessian(qf), dtype=float)))
        else:
            out.append((m, w, u_l, u_r, g, None))
    return out


def grad_discrete_lagrangian(q_slow_k, q_slow_next, fast_nodes, sys: MultirateSystem,
                             quad: QuadratureSpec, grid: TimeGrid):
    """Closed-form partial derivatives of the discrete Lagrangian.

    Returns ``(g_s0, g_s1, g_f)`` where ``g_s0``/``g_s1`` are the derivatives
    with respect to the slow configuration at the interval start/end and
    ``g_f`` has shape (p+1, n_fast) with the derivative per fast micro node.
    """
    q0 = np.asarray(q_slow_k, dtype=float)
    q1 = np.asarray(q_slow_next, dtype=float)
    fast = np.asarray(fast_nodes, dtype=float)
    p = grid.micro_per_macro
    dt = grid.dt

    v_s = (q1 - q0) / grid.dT
    Mv_s = sys.mass_slow @ v_s
    g_s0 = -Mv_s.copy()
    g_s1 = Mv_s.copy()
    g_f = np.zeros((p + 1, sys.n_fast))
    for m in range(p):
        Mv_f = sys.mass_fast @ ((fast[m + 1] - fast[m]) / dt)
        g_f[m] -= Mv_f
        g_f[m + 1] += Mv_f

    for m, w, c0, c1, u_l, u_r, g_s, g_fV, _, _, _ in _eval_v_terms(q0, q1, fast, sys, quad, grid):
        g_s0 -= (w * c0) * g_s
        g_s1 -= (w * c1) * g_s
        if u_l:
            g_f[m] -= (w * u_l) * g_fV
        if u_r:
            g_f[m + 1] -= (w * u_r) * g_fV
    for m, w, u_l, u_r, g, _ in _eval_w_terms(fast, sys, quad, grid):
        if u_l:
            g_f[m] -= (w * u_l) * g
        if u_r:
            g_f[m + 1] -= (w * u_r) * g
    return g_s0, g_s1, g_f


@dataclass
class IntervalMomenta:
    """Discrete momenta of one macro interval.

    ``p_f_minus[m]`` is the left discrete fast momentum at micro node m
    (m = 0..p-1), ``p_f_plus[m]`` the right discrete fast momentum at micro
    node m+1 (m = 0..p-1), both defined through the per-micro-interval
    Lagrangian contributions.
    """

    p_s_minus: np.ndarray
    p_s_plus: np.ndarray
    p_f_minus: np.ndarray
    p_f_plus: np.ndarray


def interval_momenta(q_slow_k, q_slow_next, fast_nodes, sys: MultirateSystem,
                     quad: QuadratureSpec, grid: TimeGrid) -> IntervalMomenta:
    """Closed-form discrete momenta of one macro interval."""
    q0 = np.asarray(q_slow_k, dtype=float)
    q1 = np.asarray(q_slow_next, dtype=float)
    fast = np.asarray(fast_nodes, dtype=float)
    p = grid.micro_per_macro
    dt = grid.dt

    v_s = (q1 - q0) / grid.dT
    Mv_s = sys.mass_slow @ v_s
    p_s_minus = Mv_s.copy()
    p_s_plus = Mv_s.copy()
    p_f_minus = np.zeros((p, sys.n_fast))
    p_f_plus = np.zeros((p, sys.n_fast))
    for m in range(p):
        Mv_f = sys.mass_fast @ ((fast[m + 1] - fast[m]) / dt)
        p_f_minus[m] = Mv_f
        p_f_plus[m] = Mv_f

    for m, w, c0, c1, u_l, u_r, g_s, g_fV, _, _, _ in _eval_v_terms(q0, q1, fast, sys, quad, grid):
        p_s_minus += (w * c0) * g_s
        p_s_plus -= (w * c1) * g_s
        if u_l:
            p_f_minus[m] += (w * u_l) * g_fV
        if u_r:
            p_f_plus[m] -= (w * u_r) * g_fV
    for m, w, u_l, u_r, g, _ in _eval_w_terms(fast, sys, quad, grid):
        if u_l:
            p_f_minus[m] += (w * u_l) * g
        if u_r:
            p_f_plus[m] -= (w * u_r) * g
    return IntervalMomenta(p_s_minus, p_s_plus, p_f_minus, p_f_plus)


@dataclass
class NodeMomenta:
    """Left/right discrete momenta meeting at macro node k plus the micro pairs
    of the following interval; converged trajectories match minus and plus
    values up to the solver tolerance."""

    p_s_minus: np.ndarray       # slow, from interval k
    p_s_plus: np.ndarray        # slow, from interval k-1
    p_f0_minus: np.ndarray      # fast at the shared node, from interval k
    p_fp_plus: np.ndarray       # fast at the shared node, from interval k-1
    p_f_minus: np.ndarray       # interval k, micro nodes 0..p-1
    p_f_plus: np.ndarray        # interval k, micro nodes 1..p


def discrete_momenta(traj: Trajectory, k: int, sys: MultirateSystem, quad: QuadratureSpec,
                     grid: TimeGrid) -> NodeMomenta:
    """Discrete momenta at interior macro node k from two consecutive intervals."""
    if not 1 <= k <= grid.n_macro - 1:
        raise ValueError(f"need an interior macro node, got k={k}")
    prev = interval_momenta(traj.slow_q[k - 1], traj.slow_q[k], traj.interval_fast(k - 1),
                            sys, quad, grid)
    cur = interval_momenta(traj.slow_q[k], traj.slow_q[k + 1], traj.interval_fast(k),
                           sys, quad, grid)
    return NodeMomenta(
        p_s_minus=cur.p_s_minus,
        p_s_plus=prev.p_s_plus,
        p_f0_minus=cur.p_f_minus[0],
        p_fp_plus=prev.p_f_plus[-1],
        p_f_minus=cur.p_f_minus,
        p_f_plus=cur.p_f_plus,
    )
