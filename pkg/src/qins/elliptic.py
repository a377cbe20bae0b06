"""Elliptic building blocks: mean projection, inverse Neumann Laplacian,
the mean-zero lifting operator, Helmholtz/Leray projection, weak divergence,
rigid-motion projection, and a sampled Korn-constant estimate.

Everything is diagonal per spectral mode, hence exact and O(N log N).
"""

from dataclasses import dataclass

import numpy as np

from . import fields as fd
from .fields import (
    MeanZeroError,
    ScalarField,
    VectorField,
    SCALAR_TAG,
)

MEAN_ZERO_RTOL = 1e-10


def mean_project(f: ScalarField) -> ScalarField:
    """P0: subtract the spatial mean."""
    return ScalarField(f.grid, f.values - f.values.mean())


def _require_mean_zero(f: ScalarField, what: str):
    scale = max(float(np.abs(f.values).max()), 1e-300)
    if abs(fd.mean(f)) > MEAN_ZERO_RTOL * scale:
        raise MeanZeroError(f"mean-zero required for {what}")


def _inv_neumann_coeffs(grid, coeffs):
    ksq = grid.ksq(SCALAR_TAG).copy()
    ksq.flat[0] = 1.0
    out = coeffs / (-ksq)
    out.flat[0] = 0.0
    return out


def neumann_laplacian_solve(f: ScalarField) -> ScalarField:
    """Solve lap(u) = f with zero Neumann data and mean(u) = 0.

    Rejects inputs whose mean is not (numerically) zero.
    """
    _require_mean_zero(f, "the inverse Neumann Laplacian")
    return fd.scalar_from_coeffs(f.grid, _inv_neumann_coeffs(f.grid, f.coeffs))


def g_operator(g: ScalarField) -> ScalarField:
    """Mean-zero lifting: lap(G(g)) = g, dG/dn = 0, mean(G(g)) = 0."""
    _require_mean_zero(g, "the lifting operator")
    return fd.scalar_from_coeffs(g.grid, _inv_neumann_coeffs(g.grid, g.coeffs))


def gradient_part(v: VectorField) -> VectorField:
    """(I - P_sigma) v = grad of the Neumann potential of div v."""
    g = v.grid
    dvc = fd.div(v).coeffs
    pc = _inv_neumann_coeffs(g, dvc)
    c1, _ = fd.deriv_coeffs(g, pc, SCALAR_TAG, 0)
    c2, _ = fd.deriv_coeffs(g, pc, SCALAR_TAG, 1)
    return fd.vector_from_coeffs(g, c1, c2)


def helmholtz_project(v: VectorField) -> VectorField:
    """Leray projection P_sigma onto divergence-free fields."""
    return v - gradient_part(v)


def div_n(v: VectorField) -> ScalarField:
    """Weak divergence into mean-zero data (normal trace drops by basis)."""
    d = fd.div(v)
    c = d.coeffs.copy()
    c.flat[0] = 0.0
    return fd.scalar_from_coeffs(v.grid, c)


def rigid_projection(v: VectorField) -> VectorField:
    """Remove the discrete rigid motions compatible with n.v = 0.

    On the torus these are the constant fields; on the rectangle the
    compatible kernel is trivial (no rigid motion has vanishing normal
    trace on all four walls), so the field is returned unchanged.
    """
    if v.grid.mode == fd.RECT:
        return v
    return VectorField(v.grid, v.v1 - v.v1.mean(), v.v2 - v.v2.mean())


def sym_gradient_norm(v: VectorField) -> float:
    """L2 norm of the symmetric gradient D(v)."""
    d11, d22, d12 = fd.sym_gradient_values(v)
    s = np.sum(d11**2) + np.sum(d22**2) + 2.0 * np.sum(d12**2)
    return float(np.sqrt(s * v.grid.cell_area))


@dataclass(frozen=True)
class KornReport:
    max_ratio: float
    ratios: np.ndarray
    skipped: int


def korn_check(grid, sample_count: int, rng=None) -> KornReport:
    """Sampled bound for ||v||_H1 / ||D v||_L2 over rigid-free fields.

    Degenerate samples with ||D v|| < 1e-14 are skipped and counted.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    ratios = []
    skipped = 0
    for _ in range(sample_count):
        v = rigid_projection(fd.random_vector(grid, rng))
        dn = sym_gradient_norm(v)
        if dn < 1e-14:
            skipped += 1
            continue
        ratios.append(fd.vnorm_h1(v) / dn)
    ratios = np.array(ratios)
    max_ratio = float(ratios.max()) if ratios.size else float("nan")
    return KornReport(max_ratio, ratios, skipped)
