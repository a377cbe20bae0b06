"""Physical closures and derived fields for the two-phase mixture model.

The mixture density follows the reciprocal law rho(c) = 1/(alpha + beta*c)
on the physical concentration band, extended outside it by a C^3 saturating
clamp so the density stays positive for arbitrary field values.  Viscosities
interpolate linearly between the pure phases through the same clamp; the
default potential is the double well.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import elliptic, fields as fd
from ._kernels import smooth_clamp, smooth_clamp_deriv
from .fields import ScalarField, VectorField


def double_well(c):
    return 0.25 * (np.asarray(c) ** 2 - 1.0) ** 2


def double_well_prime(c):
    c = np.asarray(c)
    return c**3 - c


@dataclass(frozen=True)
class PhysParams:
    """Material parameters and smooth closures.

    alpha/beta set the density law; epsilon is the capillary coefficient;
    eps0 the width of the exact density band beyond |c| = 1.  nu/eta/gamma
    and Phi (with derivative phi) are smooth closures of the concentration;
    gamma is kept only to record that the discrete geometries run free-slip.
    """

    alpha: float
    beta: float
    epsilon: float = 1.0
    eps0: float = 0.1
    nu: Callable = None
    eta: Callable = None
    gamma: Callable = None
    Phi: Callable = None
    phi: Callable = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta == 0:
            raise ValueError("beta must be nonzero: the matched-density case is out of scope")
        if abs(self.beta) >= self.alpha:
            raise ValueError("|beta| < alpha is required for a positive density")
        if self.epsilon <= 0 or self.eps0 <= 0:
            raise ValueError("epsilon and eps0 must be positive")
        for name, default in (
            ("nu", lambda c: np.ones_like(np.asarray(c, dtype=float))),
            ("eta", lambda c: np.ones_like(np.asarray(c, dtype=float))),
            ("gamma", lambda c: np.zeros_like(np.asarray(c, dtype=float))),
            ("Phi", double_well),
            ("phi", double_well_prime),
        ):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        s = np.linspace(-2.0, 2.0, 401)
        if np.min(self.nu(s)) <= 0 or np.min(self.eta(s)) <= 0:
            raise ValueError("viscosity closures must have positive infimum")
        if np.min(self.gamma(s)) < 0:
            raise ValueError("friction closure must be nonnegative")
        if np.min(rho_hat_values(s, self)) <= 0:
            raise ValueError("density law is not positive over the sampled range")

    @property
    def band(self) -> float:
        """Half-width of the exact density band."""
        return 1.0 + self.eps0

    @property
    def clamp_width(self) -> float:
        return 0.5 * self.eps0


def make_params(
    alpha=1.5,
    beta=-0.5,
    epsilon=1.0,
    eps0=0.1,
    nu1=1.0,
    nu2=1.0,
    eta1=1.0,
    eta2=1.0,
    potential="double_well",
) -> PhysParams:
    """Standard closure set: phase-interpolated viscosities, double well."""
    if potential != "double_well":
        raise ValueError(f"unknown potential {potential!r}")
    hi = 1.0 + eps0
    band = 0.5 * eps0

    def nu(c):
        ch = smooth_clamp(np.asarray(c, dtype=float), hi, band)
        return 0.5 * (nu1 + nu2) + 0.5 * (nu1 - nu2) * ch

    def eta(c):
        ch = smooth_clamp(np.asarray(c, dtype=float), hi, band)
        return 0.5 * (eta1 + eta2) + 0.5 * (eta1 - eta2) * ch

    return PhysParams(alpha=alpha, beta=beta, epsilon=epsilon, eps0=eps0, nu=nu, eta=eta)


@dataclass(frozen=True)
class MaterialState:
    """Velocity/concentration pair on a shared grid."""

    v: VectorField
    c: ScalarField

    def __post_init__(self):
        if self.v.grid is not self.c.grid and self.v.grid != self.c.grid:
            raise ValueError("velocity and concentration live on different grids")

    @property
    def grid(self):
        return self.c.grid


# -- density law --------------------------------------------------------------


def rho_hat_values(c, p: PhysParams):
    """Mixture density 1/(alpha + beta*c), saturated outside the band."""
    ch = smooth_clamp(np.asarray(c, dtype=float), p.band, p.clamp_width)
    return 1.0 / (p.alpha + p.beta * ch)


def rho_hat(c: ScalarField, p: PhysParams) -> ScalarField:
    return ScalarField(c.grid, rho_hat_values(c.values, p))


def drho_dc_values(c, p: PhysParams):
    """d(rho)/dc; equals -beta*rho^2 on the band by the reciprocal law."""
    c = np.asarray(c, dtype=float)
    r = rho_hat_values(c, p)
    return -p.beta * smooth_clamp_deriv(c, p.band, p.clamp_width) * r**2


def drho_dc(c: ScalarField, p: PhysParams) -> ScalarField:
    return ScalarField(c.grid, drho_dc_values(c.values, p))


def rho_c_derivative_identity_check(c: ScalarField, p: PhysParams, h=1e-5):
    """Finite-difference residuals of the density-law derivative identities.

    Returns (max |FD(rho) + beta rho^2|, max |FD(rho*c) - alpha rho^2|) over
    points that stay inside the exact band under the FD stencil.
    """
    cv = c.values
    inside = np.abs(cv) <= p.band - 2 * h
    if not np.any(inside):
        raise ValueError("no sample points inside the density band")
    cs = cv[inside]
    r = rho_hat_values(cs, p)
    fd_rho = (rho_hat_values(cs + h, p) - rho_hat_values(cs - h, p)) / (2 * h)
    fd_rho_c = (
        rho_hat_values(cs + h, p) * (cs + h) - rho_hat_values(cs - h, p) * (cs - h)
    ) / (2 * h)
    res1 = np.max(np.abs(fd_rho + p.beta * r**2))
    res2 = np.max(np.abs(fd_rho_c - p.alpha * r**2))
    return float(res1), float(res2)


# -- stress -------------------------------------------------------------------


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric 2x2 tensor collocation field (t12 has cross parity)."""

    grid: fd.Grid
    t11: np.ndarray
    t22: np.ndarray
    t12: np.ndarray


def stress(c: ScalarField, v: VectorField, p: PhysParams, scaled=False) -> SymTensorField:
    """Viscous stress 2 nu(c) D(v) + eta(c) div(v) I.

    With ``scaled`` the density-weighted coefficients nu/rho, eta/rho are
    used instead.
    """
    d11, d22, d12 = fd.sym_gradient_values(v)
    dv = fd.div(v).values
    nu = p.nu(c.values)
    eta = p.eta(c.values)
    if scaled:
        r = rho_hat_values(c.values, p)
        nu = nu / r
        eta = eta / r
    return SymTensorField(
        c.grid,
        2.0 * nu * d11 + eta * dv,
        2.0 * nu * d22 + eta * dv,
        2.0 * nu * d12,
    )


def div_stress(s: SymTensorField) -> VectorField:
    return fd.div_tensor_sym(s.grid, s.t11, s.t12, s.t22)


# -- chemical potential and generalized pressure ------------------------------


def chem_potential_mu0(v: VectorField, p: PhysParams) -> ScalarField:
    """Mean-free chemical potential: div v = beta * lap(mu0)."""
    return (1.0 / p.beta) * elliptic.g_operator(elliptic.div_n(v))


def pressure_recover(state: MaterialState, p: PhysParams):
    """Recover (g0, pbar) from the closure linking mu0, pressure and c.

    g0 is mean-free; pbar is the scalar making that normalization hold.
    """
    c, v = state.c, state.v
    r = rho_hat_values(c.values, p)
    mu0 = chem_potential_mu0(v, p)
    lap_c = fd.laplacian(c).values
    numer = r * mu0.values + p.epsilon * lap_c - p.phi(c.values)
    g0_raw = numer / (p.beta * r**2)
    pbar = -p.beta * float(g0_raw.mean())
    g0 = ScalarField(c.grid, g0_raw + pbar / p.beta)
    return g0, pbar


def pressure_closure_residual(state: MaterialState, g0: ScalarField, pbar: float, p: PhysParams) -> float:
    """Relative residual of rho*mu0 + rho^2 pbar = beta rho^2 g0 - eps lap c + phi(c)."""
    c, v = state.c, state.v
    r = rho_hat_values(c.values, p)
    mu0 = chem_potential_mu0(v, p)
    lhs = r * mu0.values + r**2 * pbar
    rhs = p.beta * r**2 * g0.values - p.epsilon * fd.laplacian(c).values + p.phi(c.values)
    scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-14)
    return float(np.abs(lhs - rhs).max() / scale)


# -- energies -----------------------------------------------------------------


def free_energy(c: ScalarField, p: PhysParams) -> float:
    """int Phi(c) + (epsilon/2) |grad c|^2."""
    g = c.grid
    bulk = float(p.Phi(c.values).sum()) * g.cell_area
    return bulk + 0.5 * p.epsilon * fd.seminorm_h1(c) ** 2


def kinetic_energy(state: MaterialState, p: PhysParams) -> float:
    r = rho_hat_values(state.c.values, p)
    g = state.grid
    return 0.5 * float(np.sum(r * (state.v.v1**2 + state.v.v2**2))) * g.cell_area


def total_energy(state: MaterialState, p: PhysParams) -> float:
    return kinetic_energy(state, p) + free_energy(state.c, p)
