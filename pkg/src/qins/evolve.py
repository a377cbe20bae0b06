"""Implicit theta-scheme integration of the linearized block evolution.

Each step solves (I + theta dt (A+B)) u_{n+1} = u_n - (1-theta) dt (A+B) u_n
+ dt f_{n+theta} matrix-free with restarted GMRES, preconditioned by the
exact per-mode inverse of the constant-coefficient step operator built from
spatially averaged coefficients.  Mean-zero/solenoidal invariants are
re-projected after every solve and the drift is recorded.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import elliptic, fields as fd
from ._kernels import block2_solve
from .fields import SCALAR_TAG, V1_TAG, V2_TAG, ScalarField, VectorField
from .linop import BlockState, apply_generator, block_from_velocity

GMRES_RTOL = 1e-12
GMRES_RESTART = 50
GMRES_MAXITER = 10  # outer cycles; total inner iterations <= 500


class SolverError(RuntimeError):
    """Inner Krylov solve failed to reach the required residual."""


@dataclass(frozen=True)
class LinearProblem:
    """One time window of the linear block evolution.

    ``coeff`` is a single coefficient set or a per-step list (sampled at
    t_{n+theta}); ``forcing`` holds node samples f(t_0) .. f(t_steps).
    """

    coeff: object
    forcing: list
    u0: BlockState
    dt: float
    steps: int
    theta: float = 0.5

    def __post_init__(self):
        if self.dt <= 0 or self.steps < 1:
            raise ValueError("need dt > 0 and steps >= 1")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if len(self.forcing) != self.steps + 1:
            raise ValueError("forcing must provide steps+1 node samples")
        if isinstance(self.coeff, (list, tuple)) and len(self.coeff) != self.steps:
            raise ValueError("per-step coefficients must provide one entry per step")
        self.u0.validate(rtol_mean=1e-10, rtol_div=1e-9)

    def coeff_at(self, n):
        if isinstance(self.coeff, (list, tuple)):
            return self.coeff[n]
        return self.coeff

    @property
    def grid(self):
        return self.u0.grid

    @property
    def times(self):
        return self.dt * np.arange(self.steps + 1)


def linear_problem_from_primal(coeff, f1_samples, f2_samples, v0, c0_prime,
                               dt, steps, theta=0.5) -> LinearProblem:
    """Assemble the block problem from velocity/concentration forcing data.

    The block forcing rows are (f2, div_n f1, P_sigma f1); the initial state
    splits v0 into its divergence and solenoidal parts.
    """
    forcing = [
        BlockState(f2, elliptic.div_n(f1), elliptic.helmholtz_project(f1))
        for f1, f2 in zip(f1_samples, f2_samples)
    ]
    return LinearProblem(coeff=coeff, forcing=forcing,
                         u0=block_from_velocity(v0, c0_prime),
                         dt=dt, steps=steps, theta=theta)


def primal_forcing_from_block(f: BlockState):
    """Inverse of the forcing assembly: (f1, f2) with the given block rows."""
    f1 = fd.grad(elliptic.neumann_laplacian_solve(f.g)) + f.w
    return f1, f.c_prime


class _ModePreconditioner:
    """Exact per-mode inverse of I + tau*(plate/Stokes symbol), averaged coefficients."""

    def __init__(self, grid, params, tau, r4_mean, a0_mean, nu_mean):
        self.grid = grid
        self.tau = tau
        beta = params.beta
        k_plate = params.epsilon / (params.alpha * params.beta)
        q = grid.ksq(SCALAR_TAG)
        self.m11 = np.ones_like(q)
        self.m12 = np.full_like(q, -tau / beta)
        self.m12.flat[0] = 0.0
        self.m21 = tau * k_plate * q**2 * r4_mean
        self.m22 = 1.0 + tau * a0_mean * q
        self.w1 = 1.0 / (1.0 + tau * nu_mean * grid.ksq(V1_TAG))
        self.w2 = 1.0 / (1.0 + tau * nu_mean * grid.ksq(V2_TAG))

    def apply(self, vec):
        g = self.grid
        parts = vec.reshape(4, *g.shape)
        cp = fd.fwd(g, parts[0], SCALAR_TAG)
        gg = fd.fwd(g, parts[1], SCALAR_TAG)
        x1, x2 = block2_solve(self.m11, self.m12, self.m21, self.m22, cp, gg)
        x2.flat[0] = 0.0
        w1 = fd.fwd(g, parts[2], V1_TAG) * self.w1
        w2 = fd.fwd(g, parts[3], V2_TAG) * self.w2
        return np.concatenate([
            fd.inv(g, x1, SCALAR_TAG).ravel(),
            fd.inv(g, x2, SCALAR_TAG).ravel(),
            fd.inv(g, w1, V1_TAG).ravel(),
            fd.inv(g, w2, V2_TAG).ravel(),
        ])


@dataclass
class StepInfo:
    iterations: int
    residual: float
    drift: float


@dataclass
class BlockTrajectory:
    times: np.ndarray
    states: list
    step_infos: list = field(default_factory=list)

    @property
    def max_drift(self):
        return max((s.drift for s in self.step_infos), default=0.0)


def _gmres(op, b, x0, precond, request=GMRES_RTOL):
    n = b.size
    mat = spla.LinearOperator((n, n), matvec=op)
    mop = spla.LinearOperator((n, n), matvec=precond.apply)
    count = [0]

    def cb(_):
        count[0] += 1

    def run(x_start, rtol, maxiter):
        kwargs = dict(x0=x_start, M=mop, restart=GMRES_RESTART, maxiter=maxiter,
                      callback=cb, callback_type="pr_norm")
        try:
            x, _ = spla.gmres(mat, b, rtol=rtol, atol=0.0, **kwargs)
        except TypeError:  # older scipy spells the tolerance differently
            x, _ = spla.gmres(mat, b, tol=rtol, atol=0.0, **kwargs)
        return x

    bnorm = max(np.linalg.norm(b), 1e-300)
    x = run(x0, request, GMRES_MAXITER - 2)
    res = np.linalg.norm(op(x) - b) / bnorm
    if res > GMRES_RTOL:
        # scipy's internal metric met its target but the true residual did
        # not; polish from the current iterate with a tighter request.
        x = run(x, request * 0.1, 2)
        res = np.linalg.norm(op(x) - b) / bnorm
    if res > GMRES_RTOL:
        raise SolverError(
            f"implicit solve stalled: relative residual {res:.3e} after "
            f"{count[0]} iterations (target {GMRES_RTOL:.1e})"
        )
    return x, count[0], res


def step_theta(u_n: BlockState, problem: LinearProblem, n: int) -> tuple:
    """Advance one step; returns (u_{n+1}, StepInfo)."""
    grid = problem.grid
    dt, th = problem.dt, problem.theta
    coeff = problem.coeff_at(n)
    tau = th * dt

    def op(vec):
        # Constrain the Krylov space to the invariant subspace (mean-zero g,
        # solenoidal w); complementary directions pass through untouched.
        u = BlockState.unpack(grid, vec)
        u = BlockState(u.c_prime, elliptic.mean_project(u.g),
                       elliptic.helmholtz_project(u.w))
        au = apply_generator(coeff, u, check=False)
        return vec + tau * au.pack()

    f_th = problem.forcing[n + 1] * th + problem.forcing[n] * (1.0 - th)
    rhs = u_n
    if th < 1.0:
        rhs = rhs - ((1.0 - th) * dt) * apply_generator(coeff, u_n, check=False)
    b = rhs.pack() + dt * f_th.pack()
    precond = _precond_for(problem, n)
    # Small steps can and should be solved tighter: the step residual enters
    # staggered-in-time equation residuals divided by dt.
    request = float(np.clip(GMRES_RTOL * dt / 1e-2, 1e-13, GMRES_RTOL))
    x, iters, res = _gmres(op, b, u_n.pack(), precond, request)
    raw = BlockState.unpack(grid, x)
    g_fix = elliptic.mean_project(raw.g)
    w_fix = elliptic.helmholtz_project(raw.w)
    drift = max(
        fd.norm_l2(raw.g - g_fix),
        fd.norm_l2(raw.w - w_fix),
    )
    return BlockState(raw.c_prime, g_fix, w_fix), StepInfo(iters, res, drift)


def _precond_for(problem, n):
    cache = getattr(problem, "_precond_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(problem, "_precond_cache", cache)
    key = 0 if not isinstance(problem.coeff, (list, tuple)) else n
    if key not in cache:
        c = problem.coeff_at(n)
        cache[key] = _ModePreconditioner(
            problem.grid, c.params, problem.theta * problem.dt,
            c.r4_mean, c.a0_mean, c.nu_t_mean,
        )
    return cache[key]


def solve_linear_window(problem: LinearProblem) -> BlockTrajectory:
    """Integrate the whole window; returns the node trajectory."""
    states = [problem.u0]
    infos = []
    u = problem.u0
    for n in range(problem.steps):
        u, info = step_theta(u, problem, n)
        states.append(u)
        infos.append(info)
    return BlockTrajectory(problem.times, states, infos)


def reconstruct_velocity(u: BlockState) -> VectorField:
    """v = w + grad of the Neumann potential of g; div v = g, P_sigma v = w."""
    return u.w + fd.grad(elliptic.neumann_laplacian_solve(u.g))


# -- discrete space-time norms -------------------------------------------------


def time_derivative_stack(times, stack):
    """Second-order finite-difference d/dt of a (T, ...) sample stack."""
    times = np.asarray(times, dtype=float)
    if len(times) < 3:
        raise ValueError("need at least 3 time samples")
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-10, atol=0.0):
        raise ValueError("uniform time samples required")
    h = dt[0]
    out = np.empty_like(stack)
    out[1:-1] = (stack[2:] - stack[:-2]) / (2 * h)
    out[0] = (-3 * stack[0] + 4 * stack[1] - stack[2]) / (2 * h)
    out[-1] = (3 * stack[-1] - 4 * stack[-2] + stack[-3]) / (2 * h)
    return out


def _trapezoid(times, series):
    return float(np.trapezoid(np.asarray(series), np.asarray(times)))


def xt1_norm(times, vs) -> float:
    """|| (dv/dt, grad^2 v) ||_{L2(QT)} + ||v(0)||_{H1}."""
    grid = vs[0].grid
    stack1 = np.array([v.v1 for v in vs])
    stack2 = np.array([v.v2 for v in vs])
    d1 = time_derivative_stack(times, stack1)
    d2 = time_derivative_stack(times, stack2)
    sq = []
    for i, v in enumerate(vs):
        dv = VectorField(grid, d1[i], d2[i])
        sq.append(fd.norm_l2(dv) ** 2 + fd.vseminorm_hm(v, 2) ** 2)
    return np.sqrt(_trapezoid(times, sq)) + fd.vnorm_h1(vs[0])


def xt2_norm(times, cps) -> float:
    """|| (c', dc'/dt, grad dc'/dt, grad^3 c') ||_{L2(QT)} + ||c'(0)||_{H2}."""
    grid = cps[0].grid
    stack = np.array([c.values for c in cps])
    dc = time_derivative_stack(times, stack)
    sq = []
    for i, c in enumerate(cps):
        dcf = ScalarField(grid, dc[i])
        sq.append(
            fd.norm_l2(c) ** 2
            + fd.norm_l2(dcf) ** 2
            + fd.seminorm_h1(dcf) ** 2
            + fd.seminorm_hm(c, 3) ** 2
        )
    return np.sqrt(_trapezoid(times, sq)) + fd.norm_h2(cps[0])


def xt_norm(times, vs, cps) -> float:
    return xt1_norm(times, vs) + xt2_norm(times, cps)


def yt_norm(times, f1s, f2s, v0, c0_prime) -> float:
    """|| (f1, grad f2) ||_{L2(QT)} + ||v0||_{H1} + ||c'(0)||_{H2}."""
    sq = [fd.norm_l2(f1) ** 2 + fd.seminorm_h1(f2) ** 2
          for f1, f2 in zip(f1s, f2s)]
    return np.sqrt(_trapezoid(times, sq)) + fd.vnorm_h1(v0) + fd.norm_h2(c0_prime)
