"""Conservation, identity, and inequality monitors for trajectories."""

from dataclasses import dataclass

import numpy as np

from . import elliptic, fields as fd, model
from .evolve import time_derivative_stack
from .fields import ScalarField
from .model import MaterialState, PhysParams, rho_hat_values


def mass_total(state: MaterialState, p: PhysParams) -> float:
    """Total mixture mass: spectral quadrature of the density."""
    return float(rho_hat_values(state.c.values, p).mean()) * state.grid.volume


def mass_drift(traj, p: PhysParams) -> float:
    """max |m(t) - m(0)| / m(0) along a trajectory."""
    masses = [mass_total(s, p) for s in traj.states]
    m0 = masses[0]
    return max(abs(m - m0) for m in masses) / abs(m0)


def div_identity_residual(state: MaterialState, p: PhysParams) -> float:
    """Structural residual of div v = beta lap(mu0) with mu0 rebuilt from v."""
    dv = elliptic.div_n(state.v)
    mu0 = model.chem_potential_mu0(state.v, p)
    res = dv - fd.laplacian(mu0) * p.beta
    return fd.norm_l2(res) / max(fd.norm_l2(dv), 1e-14)


def lt2_residual_series(traj, p: PhysParams) -> np.ndarray:
    """|| rho (dc/dt + v.grad c) - beta^-1 div v ||_L2 per sample.

    The time derivative is finite-differenced along the trajectory
    (second order; first order with only two samples).
    """
    if len(traj.times) < 2:
        raise ValueError("need at least 2 time samples")
    cs = np.array([s.c.values for s in traj.states])
    if len(traj.times) == 2:
        h = traj.times[1] - traj.times[0]
        dc = np.array([(cs[1] - cs[0]) / h] * 2)
    else:
        dc = time_derivative_stack(traj.times, cs)
    grid = traj.states[0].grid
    out = []
    for k, s in enumerate(traj.states):
        r = rho_hat_values(s.c.values, p)
        gc = fd.grad(s.c)
        adv = s.v.v1 * gc.v1 + s.v.v2 * gc.v2
        dv = fd.div(s.v).values
        res = r * (dc[k] + adv) - dv / p.beta
        out.append(np.sqrt(float(np.sum(res**2)) * grid.cell_area))
    return np.array(out)


def energy_series(traj, p: PhysParams):
    """Rows (t, e_kin, e_free, e_total, de_total) along a trajectory."""
    rows = []
    prev = None
    for t, s in zip(traj.times, traj.states):
        ek = model.kinetic_energy(s, p)
        ef = model.free_energy(s.c, p)
        et = ek + ef
        rows.append((float(t), ek, ef, et, 0.0 if prev is None else et - prev))
        prev = et
    return rows


@dataclass(frozen=True)
class InequalityReport:
    samples: int
    interpolation_violations: int
    min_interpolation_slack: float
    max_duality_error: float
    max_korn_ratio: float
    korn_skipped: int

    @property
    def ok(self):
        return (
            self.interpolation_violations == 0
            and self.max_duality_error < 1e-11
            and np.isfinite(self.max_korn_ratio)
        )


def inequality_suite(grid, p: PhysParams, samples: int, rng=None) -> InequalityReport:
    """Random sampling of the interpolation inequality, the duality identity
    of the weak Neumann Laplacian, and Korn ratios after rigid projection.

    The interpolation inequality ||f||_L2^2 <= ||f||_Hm1 |f|_H1 uses the
    gradient seminorm, under which a single mode attains equality.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    violations = 0
    min_slack = np.inf
    max_dual = 0.0
    for _ in range(samples):
        f = fd.random_scalar(grid, rng, mean_zero=True)
        l2sq = fd.norm_l2(f) ** 2
        bound = fd.norm_hm1(f) * fd.seminorm_h1(f)
        slack = bound - l2sq
        min_slack = min(min_slack, slack / max(bound, 1e-300))
        if l2sq > bound * (1 + 1e-12):
            violations += 1
        # duality: ((-lap) f, g)_Hm1 = (f, g)_L2 for mean-zero f, g
        h = fd.random_scalar(grid, rng, mean_zero=True)
        lhs = fd.inner_hm1(-1.0 * fd.laplacian(f), h)
        rhs = fd.inner_l2(f, h)
        max_dual = max(max_dual, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    korn = elliptic.korn_check(grid, samples, rng)
    return InequalityReport(
        samples=samples,
        interpolation_violations=violations,
        min_interpolation_slack=float(min_slack),
        max_duality_error=float(max_dual),
        max_korn_ratio=korn.max_ratio,
        korn_skipped=korn.skipped,
    )


DIAG_COLUMNS = ("time", "mass", "e_kin", "e_free", "e_total",
                "lt2_residual", "div_identity", "mean_mu0", "max_abs_c")


def trajectory_rows(traj, p: PhysParams):
    """Diagnostics CSV rows for a trajectory (one per sample)."""
    lt2 = lt2_residual_series(traj, p) if len(traj.times) >= 2 else [0.0] * 1
    rows = []
    for k, (t, s) in enumerate(zip(traj.times, traj.states)):
        mu0 = model.chem_potential_mu0(s.v, p)
        rows.append((
            float(t),
            mass_total(s, p),
            model.kinetic_energy(s, p),
            model.free_energy(s.c, p),
            model.total_energy(s, p),
            float(lt2[k]),
            div_identity_residual(s, p),
            fd.mean(mu0),
            float(np.abs(s.c.values).max()),
        ))
    return rows
