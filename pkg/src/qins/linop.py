"""Linearized block operators for the mixture model.

The abstract evolution unknown is u = (c', g, w): the density-weighted
concentration deviation, the velocity divergence (mean-zero), and the
solenoidal velocity part.  The generator couples a damped-plate block acting
on (c', g) with a Stokes-type block on w, plus lower-order couplings driven
by the gradient of the scaled viscosity.

Dense assembly (for spectra, self-adjointness, and resolvent probes) is
restricted to small grids; production paths are matrix-free.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from . import elliptic, fields as fd, model
from .fields import (
    CROSS_TAG,
    SCALAR_TAG,
    TORUS,
    V1_TAG,
    V2_TAG,
    ScalarField,
    VectorField,
)

DENSE_LIMIT = 1024  # max N1*N2 scalar unknowns for dense assembly


class InvariantError(ValueError):
    """A block-state invariant (mean-zero g, solenoidal w) is violated."""


@dataclass(frozen=True)
class BlockState:
    """Evolution unknown (c', g, w); g mean-zero, w divergence-free."""

    c_prime: ScalarField
    g: ScalarField
    w: VectorField

    @property
    def grid(self):
        return self.c_prime.grid

    def validate(self, rtol_mean=1e-12, rtol_div=1e-11):
        gscale = max(float(np.abs(self.g.values).max()), 1.0)
        if abs(fd.mean(self.g)) > rtol_mean * gscale:
            raise InvariantError("g must be mean-zero")
        wscale = max(fd.vnorm_h1(self.w), 1.0)
        if fd.norm_l2(fd.div(self.w)) > rtol_div * wscale:
            raise InvariantError("w must be divergence-free")

    def __add__(self, o):
        return BlockState(self.c_prime + o.c_prime, self.g + o.g, self.w + o.w)

    def __sub__(self, o):
        return BlockState(self.c_prime - o.c_prime, self.g - o.g, self.w - o.w)

    def __mul__(self, a):
        return BlockState(self.c_prime * a, self.g * a, self.w * a)

    __rmul__ = __mul__

    def pack(self):
        return np.concatenate([
            self.c_prime.values.ravel(),
            self.g.values.ravel(),
            self.w.v1.ravel(),
            self.w.v2.ravel(),
        ])

    @staticmethod
    def unpack(grid, vec):
        n = grid.shape[0] * grid.shape[1]
        parts = vec.reshape(4, *grid.shape)
        return BlockState(
            ScalarField(grid, parts[0]),
            ScalarField(grid, parts[1]),
            VectorField(grid, parts[2], parts[3]),
        )

    def norm_h(self):
        """Norm of the state space: H^1 x H^-1 x L^2."""
        return float(np.sqrt(
            fd.norm_h1(self.c_prime) ** 2
            + fd.norm_hm1(elliptic.mean_project(self.g)) ** 2
            + fd.norm_l2(self.w) ** 2
        ))


def zero_block(grid) -> BlockState:
    return BlockState(fd.zeros(grid), fd.zeros(grid), fd.zero_vector(grid))


def block_from_velocity(v: VectorField, c_prime: ScalarField) -> BlockState:
    """Split a velocity into (g, w) = (div v, P_sigma v)."""
    return BlockState(c_prime, elliptic.div_n(v), elliptic.helmholtz_project(v))


@dataclass(frozen=True)
class OperatorScalars:
    """Scalar triple for frozen-coefficient operator studies.

    Unlike PhysParams this carries no closure functions and no density-band
    requirement; the nonlinear solver never uses it.
    """

    alpha: float
    beta: float
    epsilon: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta == 0 or self.epsilon <= 0:
            raise ValueError("need alpha > 0, beta != 0, epsilon > 0")


@dataclass(frozen=True)
class LinearizedCoefficients:
    """Coefficient fields frozen at a reference concentration.

    ``params`` only needs alpha/beta/epsilon attributes here; full
    PhysParams and the lightweight OperatorScalars both qualify.
    """

    grid: fd.Grid
    params: object
    c0: ScalarField
    rho0: np.ndarray
    rho0_m4: np.ndarray
    nu_t: np.ndarray
    eta_t: np.ndarray
    a0: np.ndarray
    dnu_t1: np.ndarray
    dnu_t2: np.ndarray

    @property
    def r4_mean(self):
        return float(self.rho0_m4.mean())

    @property
    def a0_mean(self):
        return float(self.a0.mean())

    @property
    def nu_t_mean(self):
        return float(self.nu_t.mean())


def make_coefficients(c0: ScalarField, params, rho0, nu_t, eta_t) -> LinearizedCoefficients:
    """Assemble LinearizedCoefficients from explicit coefficient arrays."""
    grid = c0.grid
    rho0 = np.broadcast_to(np.asarray(rho0, dtype=float), grid.shape).copy()
    nu_t = np.broadcast_to(np.asarray(nu_t, dtype=float), grid.shape).copy()
    eta_t = np.broadcast_to(np.asarray(eta_t, dtype=float), grid.shape).copy()
    a0 = 2.0 * nu_t + eta_t
    if np.min(rho0) <= 0 or np.min(nu_t) <= 0 or np.min(eta_t) <= 0:
        raise ValueError("coefficient fields must be strictly positive")
    dnu = fd.grad(ScalarField(grid, nu_t))
    return LinearizedCoefficients(
        grid=grid, params=params, c0=c0, rho0=rho0, rho0_m4=rho0 ** (-4),
        nu_t=nu_t, eta_t=eta_t, a0=a0, dnu_t1=dnu.v1, dnu_t2=dnu.v2,
    )


def freeze_coefficients(c0: ScalarField, p: model.PhysParams, a0_scale=1.0) -> LinearizedCoefficients:
    """Frozen coefficient fields rho0^-4, scaled viscosities, a(c0).

    ``a0_scale`` multiplies both scaled viscosities (used by damping sweeps).
    """
    rho0 = model.rho_hat_values(c0.values, p)
    nu_t = a0_scale * p.nu(c0.values) / rho0
    eta_t = a0_scale * p.eta(c0.values) / rho0
    return make_coefficients(c0, p, rho0, nu_t, eta_t)


def constant_coefficients(grid, scalars: OperatorScalars, nu_t, eta_t, rho0=1.0,
                          c_star=0.0) -> LinearizedCoefficients:
    """Spatially constant coefficients for spectrum/hypothesis studies."""
    return make_coefficients(fd.constant(grid, c_star), scalars, rho0, nu_t, eta_t)


# -- individual blocks --------------------------------------------------------


def _plate_row2(coeff, c_prime: ScalarField, g: ScalarField) -> ScalarField:
    p = coeff.params
    gc = fd.grad(c_prime)
    flux = VectorField(coeff.grid, coeff.rho0_m4 * gc.v1, coeff.rho0_m4 * gc.v2)
    term1 = fd.laplacian(fd.div(flux)) * (p.epsilon / (p.alpha * p.beta))
    term2 = fd.laplacian(ScalarField(coeff.grid, coeff.a0 * g.values))
    return term1 - term2


def apply_A1(coeff, c_prime: ScalarField, g: ScalarField, check=True):
    """Damped-plate block: (-beta^-1 P0 g, plate operator on (c', g))."""
    if check:
        gscale = max(float(np.abs(g.values).max()), 1.0)
        if abs(fd.mean(g)) > 1e-10 * gscale:
            raise InvariantError("g must be mean-zero")
    row1 = elliptic.mean_project(g) * (-1.0 / coeff.params.beta)
    return row1, _plate_row2(coeff, c_prime, g)


def _scaled_stress_values(coeff, w: VectorField):
    d11, d22, d12 = fd.sym_gradient_values(w)
    dv = fd.div(w).values
    s11 = 2.0 * coeff.nu_t * d11 + coeff.eta_t * dv
    s22 = 2.0 * coeff.nu_t * d22 + coeff.eta_t * dv
    s12 = 2.0 * coeff.nu_t * d12
    return s11, s22, s12


def apply_A2(coeff, w: VectorField) -> ScalarField:
    """Divergence-row coupling: -div_n(div of the scaled stress of w)."""
    s11, s22, s12 = _scaled_stress_values(coeff, w)
    return -1.0 * elliptic.div_n(fd.div_tensor_sym(coeff.grid, s11, s12, s22))


def apply_Agamma(coeff, w: VectorField, check=True) -> VectorField:
    """Stokes-type operator: -P_sigma div(2 nu_t D(w)) on solenoidal fields."""
    if check:
        wscale = max(fd.vnorm_h1(w), 1.0)
        if fd.norm_l2(fd.div(w)) > 1e-9 * wscale:
            raise InvariantError("w must be divergence-free")
    d11, d22, d12 = fd.sym_gradient_values(w)
    s = fd.div_tensor_sym(
        coeff.grid, 2.0 * coeff.nu_t * d11, 2.0 * coeff.nu_t * d12, 2.0 * coeff.nu_t * d22
    )
    return -1.0 * elliptic.helmholtz_project(s)


def _b_terms(coeff, g: ScalarField):
    """Shared evaluation of (B1 g, B2 g); both vanish for constant nu_t."""
    grid = coeff.grid
    pc = elliptic._inv_neumann_coeffs(grid, g.coeffs)
    c1, t1 = fd.deriv_coeffs(grid, pc, SCALAR_TAG, 0)
    c2, t2 = fd.deriv_coeffs(grid, pc, SCALAR_TAG, 1)
    g1 = fd.inv(grid, c1, t1)
    g2 = fd.inv(grid, c2, t2)
    cxx, _ = fd.deriv_coeffs(grid, c1, t1, 0)
    cxy, txy = fd.deriv_coeffs(grid, c1, t1, 1)
    cyy, _ = fd.deriv_coeffs(grid, c2, t2, 1)
    gxx = fd.inv(grid, cxx, SCALAR_TAG)
    gxy = fd.inv(grid, cxy, txy)
    gyy = fd.inv(grid, cyy, SCALAR_TAG)
    a1, a2 = coeff.dnu_t1, coeff.dnu_t2
    b1 = -1.0 * elliptic.helmholtz_project(
        fd.div_tensor(grid, 2 * a1 * g1, 2 * a1 * g2, 2 * a2 * g1, 2 * a2 * g2)
    )
    h1 = 2.0 * (gxx * a1 + gxy * a2) - 2.0 * g.values * a1
    h2 = 2.0 * (gxy * a1 + gyy * a2) - 2.0 * g.values * a2
    b2 = -1.0 * elliptic.div_n(VectorField(grid, h1, h2))
    return b1, b2


def apply_B1(coeff, g: ScalarField) -> VectorField:
    """Solenoidal coupling -P_sigma div(2 grad(nu_t) (x) grad G(g))."""
    return _b_terms(coeff, g)[0]


def apply_B2(coeff, g: ScalarField) -> ScalarField:
    """Divergence-row remainder of the stress of the gradient part of v."""
    return _b_terms(coeff, g)[1]


def apply_generator(coeff, u: BlockState, check=True) -> BlockState:
    """Full generator: triangular principal part plus the B couplings.

    Rows: (-beta^-1 P0 g,
           plate row + A2 w + B2 g,
           Stokes row - B1 g).
    """
    if check:
        u.validate(rtol_mean=1e-10, rtol_div=1e-9)
    row1, row2 = apply_A1(coeff, u.c_prime, u.g, check=False)
    row2 = row2 + apply_A2(coeff, u.w)
    b1, b2 = _b_terms(coeff, u.g)
    row2 = row2 + b2
    row3 = apply_Agamma(coeff, u.w, check=False) - b1
    return BlockState(row1, row2, row3)


# -- constant-coefficient spectrum --------------------------------------------


def plate_roots(p: model.PhysParams, a0: float, ksq):
    """Roots of lam^2 + a0 q lam + (eps/(alpha beta^2)) q^2 per mode q=|k|^2.

    These are the eigenvalues of the negated plate block; both roots have
    negative real part for q > 0.
    """
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    q = np.asarray(ksq, dtype=float)
    stiff = p.epsilon / (p.alpha * p.beta**2)
    disc = (a0 * q) ** 2 - 4.0 * stiff * q**2
    root = np.lib.scimath.sqrt(disc)
    lam_plus = 0.5 * (-a0 * q + root)
    lam_minus = 0.5 * (-a0 * q - root)
    return lam_plus, lam_minus


def spectrum_constant_coeff(p: model.PhysParams, a0: float, modes):
    """(lam_plus, lam_minus) pairs for a list of |k|^2 values."""
    lp, lm = plate_roots(p, a0, np.asarray(list(modes), dtype=float))
    return list(zip(lp, lm))


def ray_angle(p: model.PhysParams, a0: float) -> float:
    """Spectral ray angle of the underdamped plate block (in (pi/2, pi))."""
    stiff = p.epsilon / (p.alpha * p.beta**2)
    kappa = 0.5 * a0 / np.sqrt(stiff)
    if kappa >= 1.0:
        raise ValueError("overdamped: no complex ray")
    return float(np.arccos(-kappa))


# -- dense verification machinery ---------------------------------------------


def scalar_mode_basis(grid, include_mean=True):
    """Orthonormal (collocation l2) real basis of pure spectral modes.

    Returns (B, ksq): B has shape (nb, N1, N2); ksq the |k|^2 of each mode.
    The constant mode comes first when included.  Torus Nyquist lines are
    excluded (they are outside the working representation anyway).
    """
    n1, n2 = grid.shape
    if n1 * n2 > DENSE_LIMIT:
        raise ValueError(f"dense assembly limited to {DENSE_LIMIT} scalar unknowns")
    vecs, ksq = [], []
    if grid.mode == TORUS:
        f1 = (sfft.fftfreq(n1, 1.0 / n1)).astype(int)
        f2 = (sfft.fftfreq(n2, 1.0 / n2)).astype(int)
        k1, k2 = grid._torus_k
        for i in range(n1):
            if f1[i] == -(n1 // 2):
                continue
            for j in range(n2):
                if f2[j] == -(n2 // 2):
                    continue
                a, b = f1[i], f2[j]
                if (a, b) == (0, 0):
                    c = np.zeros(grid.shape, dtype=complex)
                    c[i, j] = 1.0
                    vecs.insert(0, fd.inv(grid, c, SCALAR_TAG))
                    ksq.insert(0, 0.0)
                    continue
                if not (a > 0 or (a == 0 and b > 0)):
                    continue
                ii, jj = (-a) % n1, (-b) % n2
                q = k1[i] ** 2 + k2[j] ** 2
                c = np.zeros(grid.shape, dtype=complex)
                c[i, j] = 1.0 / np.sqrt(2.0)
                c[ii, jj] = 1.0 / np.sqrt(2.0)
                vecs.append(fd.inv(grid, c, SCALAR_TAG))
                ksq.append(q)
                c = np.zeros(grid.shape, dtype=complex)
                c[i, j] = 1j / np.sqrt(2.0)
                c[ii, jj] = -1j / np.sqrt(2.0)
                vecs.append(fd.inv(grid, c, SCALAR_TAG))
                ksq.append(q)
    else:
        q_all = grid.ksq(SCALAR_TAG)
        for i in range(n1):
            for j in range(n2):
                c = np.zeros(grid.shape)
                c[i, j] = 1.0
                if (i, j) == (0, 0):
                    vecs.insert(0, fd.inv(grid, c, SCALAR_TAG))
                    ksq.insert(0, 0.0)
                else:
                    vecs.append(fd.inv(grid, c, SCALAR_TAG))
                    ksq.append(q_all[i, j])
    if not include_mean:
        vecs, ksq = vecs[1:], ksq[1:]
    return np.array(vecs), np.array(ksq)


def _dense_matrix(op, basis_in, basis_out):
    """Matrix of a values->values linear map between orthonormal bases."""
    cols = np.array([op(b) for b in basis_in])
    return basis_out.reshape(len(basis_out), -1) @ cols.reshape(len(cols), -1).T


def dense_plate_blocks(coeff):
    """Dense blocks of the plate operator on (c' full, g mean-zero) modes.

    Returns (M, qc, qg): M = [[0, -beta^-1 P0], [Aop, Bop-ish]] assembled
    column-wise, with qc/qg the mode |k|^2 lists of the two bases.
    """
    grid = coeff.grid
    beta = coeff.params.beta
    bc, qc = scalar_mode_basis(grid, include_mean=True)
    bg, qg = scalar_mode_basis(grid, include_mean=False)
    nc, ng = len(bc), len(bg)

    def col_from_cprime(vals):
        row2 = _plate_row2(coeff, ScalarField(grid, vals), fd.zeros(grid))
        return np.zeros(grid.shape), row2.values

    def col_from_g(vals):
        gfield = ScalarField(grid, vals)
        row1 = elliptic.mean_project(gfield) * (-1.0 / beta)
        row2 = _plate_row2(coeff, fd.zeros(grid), gfield)
        return row1.values, row2.values

    m = np.zeros((nc + ng, nc + ng))
    flat_c = bc.reshape(nc, -1)
    flat_g = bg.reshape(ng, -1)
    for idx, vals in enumerate(bc):
        r1, r2 = col_from_cprime(vals)
        m[:nc, idx] = flat_c @ r1.ravel()
        m[nc:, idx] = flat_g @ r2.ravel()
    for idx, vals in enumerate(bg):
        r1, r2 = col_from_g(vals)
        m[:nc, nc + idx] = flat_c @ r1.ravel()
        m[nc:, nc + idx] = flat_g @ r2.ravel()
    return m, qc, qg


def spectrum_numeric(coeff):
    """All eigenvalues of the negated dense plate block."""
    m, _, _ = dense_plate_blocks(coeff)
    return np.linalg.eigvals(-m)


def predicted_plate_spectrum(coeff, a0=None):
    """Per-mode quadratic roots matching the dense assembly's multiplicity."""
    _, qg = scalar_mode_basis(coeff.grid, include_mean=False)
    a0_val = coeff.a0_mean if a0 is None else a0
    lp, lm = plate_roots(coeff.params, a0_val, qg)
    return np.concatenate([[0.0 + 0.0j], lp, lm]), np.concatenate([[0.0], qg, qg])


def match_spectra(eigs, predicted):
    """Optimal pairing of computed and predicted eigenvalues.

    Returns (perm, abs_err) with perm[j] the eig index matched to
    predicted[j].
    """
    dist = np.abs(eigs[None, :] - predicted[:, None])
    rows, cols = linear_sum_assignment(dist)
    perm = np.empty(len(predicted), dtype=int)
    perm[rows] = cols
    return perm, dist[rows, cols]


@dataclass(frozen=True)
class PlateHypothesesReport:
    symmetry_err_A: float
    symmetry_err_B: float
    min_eig_A: float
    min_eig_B: float
    rho1: float
    rho2: float

    @property
    def positive(self):
        return self.min_eig_A > 0 and self.min_eig_B > 0


def check_H1_H2(coeff) -> PlateHypothesesReport:
    """Self-adjointness/positivity of the plate factors in the H^-1 metric.

    A = (eps/(alpha beta)) lap div(rho0^-4 grad .), B = -lap(a0 .), both on
    mean-zero fields; rho1/rho2 are the extreme generalized eigenvalues of B
    against A^(1/2).
    """
    grid = coeff.grid
    p = coeff.params
    basis, q = scalar_mode_basis(grid, include_mean=False)
    kA = p.epsilon / (p.alpha * p.beta)

    def a_op(vals):
        f = ScalarField(grid, vals)
        gc = fd.grad(f)
        flux = VectorField(grid, coeff.rho0_m4 * gc.v1, coeff.rho0_m4 * gc.v2)
        return (fd.laplacian(fd.div(flux)) * kA).values

    def b_op(vals):
        return -fd.laplacian(ScalarField(grid, coeff.a0 * vals)).values

    ma = _dense_matrix(a_op, basis, basis)
    mb = _dense_matrix(b_op, basis, basis)
    d = 1.0 / q  # H^-1 metric weights on pure modes
    sa = d[:, None] * ma
    sb = d[:, None] * mb
    sym_a = np.linalg.norm(sa - sa.T) / max(np.linalg.norm(sa), 1e-300)
    sym_b = np.linalg.norm(sb - sb.T) / max(np.linalg.norm(sb), 1e-300)
    half = np.sqrt(d)
    ta = 0.5 * ((half[:, None] * ma / half[None, :]) + (half[:, None] * ma / half[None, :]).T)
    tb = 0.5 * ((half[:, None] * mb / half[None, :]) + (half[:, None] * mb / half[None, :]).T)
    eig_a = np.linalg.eigvalsh(ta)
    eig_b = np.linalg.eigvalsh(tb)
    rho1 = rho2 = float("nan")
    if eig_a[0] > 0 and eig_b[0] > 0:
        w, u = np.linalg.eigh(ta)
        a_half = (u * np.sqrt(w)) @ u.T
        rhos = scipy.linalg.eigh(tb, a_half, eigvals_only=True)
        rho1, rho2 = float(rhos[0]), float(rhos[-1])
    return PlateHypothesesReport(
        symmetry_err_A=float(sym_a),
        symmetry_err_B=float(sym_b),
        min_eig_A=float(eig_a[0]),
        min_eig_B=float(eig_b[0]),
        rho1=rho1,
        rho2=rho2,
    )


def resolvent_probe(coeff, angles, radii):
    """|lambda| * resolvent norm of the plate block in the H1 x H^-1 metric.

    Probes lambda = r e^{i theta}; points within 1e-8 of the computed
    spectrum are flagged and skipped.
    """
    m, qc, qg = dense_plate_blocks(coeff)
    eigs = np.linalg.eigvals(-m)
    d = np.concatenate([1.0 + qc, 1.0 / qg])
    half = np.sqrt(d)
    records = []
    n = m.shape[0]
    for th in angles:
        for r in radii:
            lam = r * np.exp(1j * th)
            if np.min(np.abs(eigs - lam)) < 1e-8 * max(1.0, abs(lam)):
                records.append({"angle": th, "radius": r, "lam": lam,
                                "product": float("nan"), "flagged": True})
                continue
            res = np.linalg.inv(lam * np.eye(n) + m)
            weighted = (half[:, None] * res) / half[None, :]
            nrm = np.linalg.svd(weighted, compute_uv=False)[0]
            records.append({"angle": th, "radius": r, "lam": lam,
                            "product": float(abs(lam) * nrm), "flagged": False})
    return records


# -- sampled operator bounds ---------------------------------------------------


def b_bound_sample(coeff, rng, nsamples=50):
    """Ratios ||B1 g||/||g||_H1, ||B2 g||_Hm1/||g||_H1, ||B1 g||/||g||_H3/4."""
    out = []
    for _ in range(nsamples):
        g = fd.random_scalar(coeff.grid, rng, mean_zero=True)
        b1, b2 = _b_terms(coeff, g)
        h1 = fd.norm_h1(g)
        out.append((
            fd.norm_l2(b1) / h1,
            fd.norm_hm1(b2) / h1,
            fd.norm_l2(b1) / fd.norm_hs(g, 0.75),
        ))
    return np.array(out)


def norm_equivalence_sample(coeff, rng, nsamples=50):
    """Ratios (||(A+B)u||_H + ||u||_H) / (||w||_H2 + ||g||_H1 + ||c'||_H3)."""
    ratios = []
    for _ in range(nsamples):
        u = BlockState(
            fd.random_scalar(coeff.grid, rng),
            fd.random_scalar(coeff.grid, rng, mean_zero=True),
            elliptic.helmholtz_project(fd.random_vector(coeff.grid, rng)),
        )
        au = apply_generator(coeff, u, check=False)
        num = au.norm_h() + u.norm_h()
        den = (
            np.sqrt(fd.vnorm_h1(u.w) ** 2 + fd.vseminorm_hm(u.w, 2) ** 2)
            + fd.norm_h1(u.g)
            + fd.norm_sobolev(u.c_prime, 3)
        )
        ratios.append(num / den)
    return np.array(ratios)
