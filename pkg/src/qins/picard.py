"""Picard fixed-point solver for the reformulated mixture-flow system.

Each iteration evaluates the nonlinear right-hand side on the current
trajectory, solves one linear window implicitly in the block variables,
reconstructs the velocity, and maps the evolved concentration variable back
through the density weight.  Windows are short enough for the map to
contract; the driver chains windows and halves them on non-convergence.

The right-hand side is assembled as an exact algebraic rearrangement: the
operator terms applied to the coefficient state minus the full momentum-
and concentration-equation terms of the primal system.  A converged fixed
point therefore satisfies the theta-discretized primal equations to solver
tolerance, independent of the coefficient freezing policy.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import elliptic, fields as fd, model
from .evolve import (
    SolverError,
    linear_problem_from_primal,
    reconstruct_velocity,
    solve_linear_window,
    time_derivative_stack,
    xt1_norm,
    xt2_norm,
)
from .fields import ScalarField, VectorField
from .linop import freeze_coefficients
from .model import MaterialState, PhysParams, rho_hat_values

log = logging.getLogger("qins")

FROZEN = "frozen_at_window_start"
UPDATED = "updated_each_iteration"


class PicardError(RuntimeError):
    """The fixed-point iteration failed to converge or blew up."""


@dataclass(frozen=True)
class PicardConfig:
    window_T: float
    dt: float
    tol: float = 1e-10
    max_iter: int = 50
    coefficient_mode: str = FROZEN
    theta: float = 0.5
    dealias_products: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.dt <= 0 or self.dt > self.window_T * (1 + 1e-12):
            raise ValueError("need 0 < dt <= window_T")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.coefficient_mode not in (FROZEN, UPDATED):
            raise ValueError(f"unknown coefficient_mode {self.coefficient_mode!r}")

    def steps(self, window=None):
        w = self.window_T if window is None else window
        n = max(int(round(w / self.dt)), 1)
        if abs(n * self.dt - w) > 1e-9 * max(w, 1.0):
            raise ValueError("window_T must be an integer multiple of dt")
        return n


@dataclass
class MaterialTrajectory:
    times: np.ndarray
    states: list

    @property
    def grid(self):
        return self.states[0].grid

    def velocities(self):
        return [s.v for s in self.states]

    def concentrations(self):
        return [s.c for s in self.states]


# -- nonlinear right-hand side ---------------------------------------------------


def _da(x, grid, tag, enable):
    if not enable:
        return x
    c = fd.fwd(grid, x, tag) * grid.dealias_mask(tag)
    return fd.inv(grid, c, tag)


def c_prime_of(c: ScalarField, c_tilde0: ScalarField, p: PhysParams) -> ScalarField:
    """Density-weighted deviation rho(c) (c - c_tilde0)."""
    r = rho_hat_values(c.values, p)
    return ScalarField(c.grid, r * (c.values - c_tilde0.values))


def operator_row1(v: VectorField, c_coeff: ScalarField, c_prime: ScalarField,
                  p: PhysParams) -> VectorField:
    """Spatial momentum row of the linear operator at coefficient state c.

    -div(scaled stress of v) + (eps/(beta alpha)) grad div(rho^-4 grad c').
    Applied without dealiasing, matching the block solver's discretization.
    """
    s = model.stress(c_coeff, v, p, scaled=True)
    visc = model.div_stress(s)
    r = rho_hat_values(c_coeff.values, p)
    gc = fd.grad(c_prime)
    flux = VectorField(v.grid, r ** (-4) * gc.v1, r ** (-4) * gc.v2)
    cap = fd.grad(fd.div(flux)) * (p.epsilon / (p.beta * p.alpha))
    return cap - visc


def momentum_terms(v: VectorField, c: ScalarField, p: PhysParams, da=True) -> VectorField:
    """All non-time terms of the primal momentum equation (moved left).

    v.grad v - rho^-1 div S + (1/beta) grad(rho^-2 (eps lap c - phi(c)))
    - (1/beta) G(div v) grad c + (1/beta^2) grad(rho^-1 G(div v)).
    """
    grid = v.grid
    r = rho_hat_values(c.values, p)
    r_inv = 1.0 / r

    # component parities: (v.grad v)_1 is "sc", (v.grad v)_2 is "cs"
    d1v1, d2v1, d1v2, d2v2 = fd.jacobian_values(v)
    adv1 = _da(v.v1 * d1v1 + v.v2 * d2v1, grid, "sc", da)
    adv2 = _da(v.v1 * d1v2 + v.v2 * d2v2, grid, "cs", da)
    adv = VectorField(grid, adv1, adv2)

    s = model.stress(c, v, p, scaled=False)
    ds = model.div_stress(s)
    visc = VectorField(grid, _da(r_inv * ds.v1, grid, "sc", da),
                       _da(r_inv * ds.v2, grid, "cs", da))

    lap_c = fd.laplacian(c).values
    inner = _da(r_inv**2 * (p.epsilon * lap_c - p.phi(c.values)), grid, "cc", da)
    cap = fd.grad(ScalarField(grid, inner)) * (1.0 / p.beta)

    gv = elliptic.g_operator(elliptic.div_n(v))
    gc = fd.grad(c)
    gterm = VectorField(grid, _da(gv.values * gc.v1, grid, "sc", da),
                        _da(gv.values * gc.v2, grid, "cs", da)) * (1.0 / p.beta)

    mug = fd.grad(ScalarField(grid, _da(r_inv * gv.values, grid, "cc", da)))
    mug = mug * (1.0 / p.beta**2)

    return adv - visc + cap - gterm + mug


def advection_c(v: VectorField, c: ScalarField, p: PhysParams, da=True) -> ScalarField:
    """rho v . grad c (the transport part of the concentration equation)."""
    grid = v.grid
    r = rho_hat_values(c.values, p)
    gc = fd.grad(c)
    vals = _da(r * (v.v1 * gc.v1 + v.v2 * gc.v2), grid, "cc", da)
    return ScalarField(grid, vals)


def build_F(v_list, c_list, times, c_tilde0: ScalarField, p: PhysParams,
            coefficient_mode=FROZEN, da=True):
    """Right-hand side samples (f1, f2) for one linear window.

    f1 = [operator momentum row at the coefficient state] - [momentum terms];
    f2 = -rho v.grad c + (d rho/dt)(c - c_tilde0), with the density's time
    derivative finite-differenced along the given trajectory.
    """
    grid = c_tilde0.grid
    rho_stack = np.array([rho_hat_values(c.values, p) for c in c_list])
    drho = time_derivative_stack(times, rho_stack)
    f1s, f2s = [], []
    band = p.band + p.clamp_width
    worst = max(float(np.abs(c.values).max()) for c in c_list)
    if worst > band:
        log.warning("concentration left the density band: max |c| = %.3f", worst)
    for k, (v, c) in enumerate(zip(v_list, c_list)):
        cp = c_prime_of(c, c_tilde0, p)
        c_coeff = c_tilde0 if coefficient_mode == FROZEN else c
        f1 = operator_row1(v, c_coeff, cp, p) - momentum_terms(v, c, p, da)
        f2_vals = -advection_c(v, c, p, da).values + _da(
            drho[k] * (c.values - c_tilde0.values), grid, "cc", da
        )
        if not (np.all(np.isfinite(f1.v1)) and np.all(np.isfinite(f2_vals))):
            raise PicardError("non-finite right-hand side sample")
        f1s.append(f1)
        f2s.append(ScalarField(grid, f2_vals))
    return f1s, f2s


def apply_S(cp_list, c_list, c_tilde0: ScalarField, p: PhysParams):
    """Concentration update c = rho(c_old)^-1 c' + c_tilde0 per sample."""
    out = []
    for cp, c_old in zip(cp_list, c_list):
        r = rho_hat_values(c_old.values, p)
        out.append(ScalarField(cp.grid, cp.values / r + c_tilde0.values))
    return out


# -- discrete primal residuals ---------------------------------------------------


def discrete_primal_residuals(v_list, c_list, times, c_tilde0, p, theta=0.5, da=True):
    """Staggered residuals of the theta-discretized primal equations.

    Returns (r1, r2): the largest relative L2 residual of the momentum and
    concentration rows over all steps.  A converged Picard trajectory
    drives both to the solver tolerance.
    """
    grid = c_tilde0.grid
    dt = times[1] - times[0]
    n1 = [momentum_terms(v, c, p, da) for v, c in zip(v_list, c_list)]
    rho_stack = np.array([rho_hat_values(c.values, p) for c in c_list])
    drho = time_derivative_stack(times, rho_stack)
    n2 = []
    for k, (v, c) in enumerate(zip(v_list, c_list)):
        trans = advection_c(v, c, p, da).values
        rel = _da(drho[k] * (c.values - c_tilde0.values), grid, "cc", da)
        dv = fd.div(v).values
        n2.append(trans - rel - dv / p.beta)
    cp = [c_prime_of(c, c_tilde0, p) for c in c_list]
    r1 = r2 = 0.0
    s1 = s2 = 1e-300
    for n in range(len(times) - 1):
        dtv = (v_list[n + 1] - v_list[n]) * (1.0 / dt)
        res1 = dtv + n1[n + 1] * theta + n1[n] * (1.0 - theta)
        r1 = max(r1, fd.norm_l2(res1))
        s1 = max(s1, fd.norm_l2(dtv), fd.norm_l2(n1[n + 1]))
        dtcp = (cp[n + 1].values - cp[n].values) / dt
        res2 = dtcp + theta * n2[n + 1] + (1.0 - theta) * n2[n]
        r2 = max(r2, fd.norm_l2(ScalarField(grid, res2)))
        s2 = max(s2, np.sqrt(float(np.sum(dtcp**2)) * grid.cell_area),
                 np.sqrt(float(np.sum(n2[n + 1] ** 2)) * grid.cell_area))
    return r1 / s1, r2 / s2


# -- the fixed-point loop --------------------------------------------------------


@dataclass
class PicardIteration:
    iteration: int
    distance: float
    rel_distance: float
    q_hat: float


@dataclass
class PicardReport:
    converged: bool
    iterations: list = field(default_factory=list)
    residual_lt1: float = float("nan")
    residual_lt2: float = float("nan")
    window_T: float = 0.0
    message: str = ""

    @property
    def n_iterations(self):
        return len(self.iterations)

    @property
    def q_hat(self):
        """First contraction estimate (distance ratio of iterations 2/1)."""
        if len(self.iterations) >= 2 and self.iterations[0].distance > 0:
            return self.iterations[1].distance / self.iterations[0].distance
        return 0.0


def _window_coefficients(cfg, c_list, times, c_tilde0, p):
    if cfg.coefficient_mode == FROZEN:
        return freeze_coefficients(c_tilde0, p)
    coeffs = []
    for n in range(len(times) - 1):
        c_th = ScalarField(
            c_tilde0.grid,
            cfg.theta * c_list[n + 1].values + (1 - cfg.theta) * c_list[n].values,
        )
        coeffs.append(freeze_coefficients(c_th, p))
    return coeffs


def _xt_distance(times, v_a, c_a, v_b, c_b):
    dv = [a - b for a, b in zip(v_a, v_b)]
    dc = [a - b for a, b in zip(c_a, c_b)]
    return xt1_norm(times, dv) + xt2_norm(times, dc)


def fixed_point_solve(initial: MaterialState, cfg: PicardConfig, p: PhysParams,
                      window=None, guess="solve"):
    """Solve one time window; returns (MaterialTrajectory, PicardReport).

    ``guess`` selects the starting iterate: "solve" (default) takes the
    velocity of one linear solve on the constant-in-time lift, "lift" starts
    from the lift itself.  Raises PicardError when the iteration exceeds
    max_iter or blows up; callers typically react by halving the window.
    """
    grid = initial.grid
    steps = cfg.steps(window)
    times = cfg.dt * np.arange(steps + 1)
    c0, v0 = initial.c, initial.v
    if float(np.abs(c0.values).max()) > 1.0 + 1e-9:
        raise ValueError("|c0| <= 1 is required pointwise")
    c_tilde0 = c0

    def solve_window(v_list, c_list):
        f1s, f2s = build_F(v_list, c_list, times, c_tilde0, p,
                           cfg.coefficient_mode, cfg.dealias_products)
        coeff = _window_coefficients(cfg, c_list, times, c_tilde0, p)
        prob = linear_problem_from_primal(
            coeff, f1s, f2s, v0, fd.zeros(grid), cfg.dt, steps, cfg.theta
        )
        block = solve_linear_window(prob)
        v_new = [reconstruct_velocity(u) for u in block.states]
        cp_new = [u.c_prime for u in block.states]
        return v_new, cp_new

    # initial guess: velocity from one linear solve on the constant lift,
    # concentration part kept at the lift
    v_lift = [v0] * (steps + 1)
    c_lift = [c0] * (steps + 1)
    v_cur, _ = solve_window(v_lift, c_lift)
    c_cur = list(c_lift)

    report = PicardReport(converged=False, window_T=times[-1])
    dist_prev = None
    scale0 = _xt_distance(times, v_cur, c_cur,
                          [fd.zero_vector(grid)] * (steps + 1),
                          [fd.zeros(grid)] * (steps + 1))
    for m in range(1, cfg.max_iter + 1):
        v_new, cp_new = solve_window(v_cur, c_cur)
        c_new = apply_S(cp_new, c_cur, c_tilde0, p)
        dist = _xt_distance(times, v_new, c_new, v_cur, c_cur)
        norm_new = _xt_distance(times, v_new, c_new,
                                [fd.zero_vector(grid)] * (steps + 1),
                                [fd.zeros(grid)] * (steps + 1))
        rel = dist / max(norm_new, 1e-300)
        q = dist / dist_prev if (dist_prev is not None and dist_prev > 0) else 0.0
        report.iterations.append(PicardIteration(m, dist, rel, q))
        v_cur, c_cur = v_new, c_new
        if norm_new > 100.0 * max(scale0, 1e-12) + 1e6:
            raise PicardError(f"iterate blew up at iteration {m}")
        if rel < cfg.tol or dist == 0.0:
            report.converged = True
            break
        dist_prev = dist
    if not report.converged:
        raise PicardError(
            f"no convergence in {cfg.max_iter} iterations "
            f"(last contraction estimate {report.iterations[-1].q_hat:.3f}); "
            "consider a smaller window"
        )
    r1, r2 = discrete_primal_residuals(
        v_cur, c_cur, times, c_tilde0, p, cfg.theta, cfg.dealias_products
    )
    report.residual_lt1, report.residual_lt2 = r1, r2
    traj = MaterialTrajectory(times, [MaterialState(v, c) for v, c in zip(v_cur, c_cur)])
    return traj, report


@dataclass
class SimulationResult:
    trajectory: MaterialTrajectory
    window_reports: list
    success: bool
    message: str = ""


def simulate(initial: MaterialState, total_T: float, cfg: PicardConfig,
             p: PhysParams) -> SimulationResult:
    """Chain Picard windows to cover [0, total_T].

    Coefficients re-freeze at every window start.  A failing window is
    retried with half the length (at most 5 halvings); persistent failure
    returns the partial trajectory with success=False.
    """
    state = initial
    t_done = 0.0
    window = min(cfg.window_T, total_T)
    all_times = [0.0]
    all_states = [initial]
    reports = []
    halvings = 0
    while t_done < total_T - 1e-12:
        w = min(window, total_T - t_done)
        w = max(round(w / cfg.dt), 1) * cfg.dt
        try:
            traj, rep = fixed_point_solve(state, cfg, p, window=w)
        except (PicardError, SolverError) as exc:
            halvings += 1
            if halvings > 5 or window / 2 < cfg.dt:
                return SimulationResult(
                    MaterialTrajectory(np.array(all_times), all_states),
                    reports, False,
                    f"window failed after {halvings - 1} halvings: {exc}",
                )
            window = window / 2
            log.warning("window failed (%s); halving to %g", exc, window)
            continue
        rep.window_T = w
        reports.append(rep)
        for i in range(1, len(traj.times)):
            all_times.append(t_done + traj.times[i])
            all_states.append(traj.states[i])
        state = traj.states[-1]
        t_done += traj.times[-1]
    return SimulationResult(
        MaterialTrajectory(np.array(all_times), all_states), reports, True
    )
