"""Spectral collocation grids, scalar/vector fields, and exact differential operators.

Two geometries are supported:

* ``torus``: periodic box, complex Fourier basis for everything.
* ``rect``: axis-aligned box with midpoint collocation.  Scalars live in a
  cosine (even/even) basis, so homogeneous Neumann data holds by construction;
  vector components use mixed sine/cosine bases so the normal velocity
  vanishes on the walls identically.

Rect fields are tagged by their reflection parity per axis: ``"cc"`` scalars,
``"sc"`` first vector components, ``"cs"`` second components, ``"ss"``
cross-derivative fields.  Pointwise products combine parities (even*odd = odd
etc.), which keeps the pseudospectral algebra closed.

All transforms are orthonormal, so the collocation inner product equals the
coefficient inner product (after the top sine/Nyquist band is dropped, which
the forward transforms enforce).  Fields are immutable values; operations
return new fields.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TORUS = "torus"
RECT = "rect"

SCALAR_TAG = "cc"
V1_TAG = "sc"
V2_TAG = "cs"
CROSS_TAG = "ss"


class MeanZeroError(ValueError):
    """Raised when an operation requiring mean-zero input gets other data."""


@dataclass(frozen=True)
class Grid:
    """Collocation grid on a torus or a Neumann rectangle.

    mode: "torus" or "rect"; lengths: (L1, L2); shape: (N1, N2) with both
    even and >= 4.
    """

    mode: str
    lengths: tuple
    shape: tuple

    def __post_init__(self):
        if self.mode not in (TORUS, RECT):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        n1, n2 = self.shape
        if n1 < 4 or n2 < 4 or n1 % 2 or n2 % 2:
            raise ValueError("grid points must be even and >= 4 per axis")
        l1, l2 = self.lengths
        if l1 <= 0 or l2 <= 0:
            raise ValueError("domain lengths must be positive")
        object.__setattr__(self, "lengths", (float(l1), float(l2)))
        object.__setattr__(self, "shape", (int(n1), int(n2)))

    @property
    def cell_area(self):
        return (self.lengths[0] / self.shape[0]) * (self.lengths[1] / self.shape[1])

    @property
    def volume(self):
        return self.lengths[0] * self.lengths[1]

    @cached_property
    def x1(self):
        n, ell = self.shape[0], self.lengths[0]
        if self.mode == TORUS:
            return np.arange(n) * (ell / n)
        return (np.arange(n) + 0.5) * (ell / n)

    @cached_property
    def x2(self):
        n, ell = self.shape[1], self.lengths[1]
        if self.mode == TORUS:
            return np.arange(n) * (ell / n)
        return (np.arange(n) + 0.5) * (ell / n)

    def mesh(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    # -- wavenumber tables ------------------------------------------------

    @cached_property
    def _torus_k_true(self):
        k1 = 2.0 * np.pi / self.lengths[0] * sfft.fftfreq(self.shape[0], 1.0 / self.shape[0])
        k2 = 2.0 * np.pi / self.lengths[1] * sfft.fftfreq(self.shape[1], 1.0 / self.shape[1])
        return k1, k2

    @cached_property
    def _torus_k(self):
        k1, k2 = (k.copy() for k in self._torus_k_true)
        k1[self.shape[0] // 2] = 0.0  # Nyquist column is always dropped
        k2[self.shape[1] // 2] = 0.0
        return k1, k2

    def _axis_k(self, axis, letter):
        n = self.shape[axis]
        ell = self.lengths[axis]
        if self.mode == TORUS:
            return self._torus_k_true[axis]
        if letter == "c":
            return np.pi / ell * np.arange(n)
        return np.pi / ell * (np.arange(n) + 1)

    @cached_property
    def _ksq_cache(self):
        return {}

    def ksq(self, tag):
        """|k|^2 multiplier array for coefficient arrays of the given tag."""
        cache = self._ksq_cache
        if tag not in cache:
            if self.mode == TORUS:
                k1, k2 = self._torus_k_true
            else:
                k1 = self._axis_k(0, tag[0])
                k2 = self._axis_k(1, tag[1])
            cache[tag] = k1[:, None] ** 2 + k2[None, :] ** 2
        return cache[tag]

    @cached_property
    def _nyq_mask(self):
        m = np.ones(self.shape)
        m[self.shape[0] // 2, :] = 0.0
        m[:, self.shape[1] // 2] = 0.0
        return m

    @cached_property
    def _dealias_masks(self):
        masks = {}
        n1, n2 = self.shape
        if self.mode == TORUS:
            cut1, cut2 = (n1 - 1) // 3, (n2 - 1) // 3
            f1 = np.abs(sfft.fftfreq(n1, 1.0 / n1))
            f2 = np.abs(sfft.fftfreq(n2, 1.0 / n2))
            m = (f1[:, None] <= cut1) & (f2[None, :] <= cut2)
            masks[None] = m.astype(float)
        else:
            cut1, cut2 = (2 * n1 - 1) // 3, (2 * n2 - 1) // 3
            for tag in ("cc", "sc", "cs", "ss"):
                f1 = np.arange(n1) + (1 if tag[0] == "s" else 0)
                f2 = np.arange(n2) + (1 if tag[1] == "s" else 0)
                m = (f1[:, None] <= cut1) & (f2[None, :] <= cut2)
                masks[tag] = m.astype(float)
        return masks

    def dealias_mask(self, tag):
        if self.mode == TORUS:
            return self._dealias_masks[None]
        return self._dealias_masks[tag]


# -- transforms ------------------------------------------------------------


def fwd(grid, values, tag):
    """Forward orthonormal transform of collocation values for a tag."""
    if grid.mode == TORUS:
        c = sfft.fft2(values, norm="ortho")
        return c * grid._nyq_mask
    c = values
    for axis, letter in enumerate(tag):
        if letter == "c":
            c = sfft.dct(c, type=2, axis=axis, norm="ortho")
        else:
            c = sfft.dst(c, type=2, axis=axis, norm="ortho")
    # drop the top sine frequency so quadrature stays exact under products
    c = np.array(c)
    if tag[0] == "s":
        c[-1, :] = 0.0
    if tag[1] == "s":
        c[:, -1] = 0.0
    return c


def inv(grid, coeffs, tag):
    """Inverse of :func:`fwd`; returns real collocation values."""
    if grid.mode == TORUS:
        return sfft.ifft2(coeffs, norm="ortho").real
    v = coeffs
    for axis, letter in enumerate(tag):
        if letter == "c":
            v = sfft.idct(v, type=2, axis=axis, norm="ortho")
        else:
            v = sfft.idst(v, type=2, axis=axis, norm="ortho")
    return v


_FLIP = {"c": "s", "s": "c"}


def deriv_coeffs(grid, coeffs, tag, axis):
    """Differentiate coefficients along an axis; returns (coeffs, new_tag)."""
    if grid.mode == TORUS:
        k = grid._torus_k[axis]
        shape = [1, 1]
        shape[axis] = -1
        return coeffs * (1j * k.reshape(shape)), tag
    letter = tag[axis]
    n = grid.shape[axis]
    ell = grid.lengths[axis]
    kf = np.pi / ell * np.arange(1, n)  # frequencies 1..N-1
    out = np.zeros_like(coeffs)
    if letter == "c":
        # d/dx cos(kx) = -k sin(kx): cos index m -> sine index m-1
        if axis == 0:
            out[:-1, :] = -kf[:, None] * coeffs[1:, :]
        else:
            out[:, :-1] = -kf[None, :] * coeffs[:, 1:]
    else:
        # d/dx sin(kx) = k cos(kx): sine index m-1 -> cos index m
        if axis == 0:
            out[1:, :] = kf[:, None] * coeffs[:-1, :]
        else:
            out[:, 1:] = kf[None, :] * coeffs[:, :-1]
    new_tag = tag[:axis] + _FLIP[letter] + tag[axis + 1 :]
    return out, new_tag


def product_tag(tag_a, tag_b):
    """Parity tag of a pointwise product on the rect."""
    out = ""
    for a, b in zip(tag_a, tag_b):
        out += "c" if a == b else "s"
    return out


# -- fields ----------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """Real scalar collocation field (cosine basis on the rect)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite scalar field values")
        object.__setattr__(self, "values", v)

    @cached_property
    def coeffs(self):
        return fwd(self.grid, self.values, SCALAR_TAG)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a):
        return ScalarField(self.grid, self.values * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True)
class VectorField:
    """Real 2-component collocation field with wall-compatible bases."""

    grid: Grid
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        a1 = np.asarray(self.v1, dtype=np.float64)
        a2 = np.asarray(self.v2, dtype=np.float64)
        if a1.shape != self.grid.shape or a2.shape != self.grid.shape:
            raise ValueError("component shape does not match grid")
        if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
            raise ValueError("non-finite vector field values")
        object.__setattr__(self, "v1", a1)
        object.__setattr__(self, "v2", a2)

    @cached_property
    def coeffs1(self):
        return fwd(self.grid, self.v1, V1_TAG)

    @cached_property
    def coeffs2(self):
        return fwd(self.grid, self.v2, V2_TAG)

    def __add__(self, other):
        return VectorField(self.grid, self.v1 + other.v1, self.v2 + other.v2)

    def __sub__(self, other):
        return VectorField(self.grid, self.v1 - other.v1, self.v2 - other.v2)

    def __mul__(self, a):
        return VectorField(self.grid, self.v1 * float(a), self.v2 * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.v1, -self.v2)


def zeros(grid):
    return ScalarField(grid, np.zeros(grid.shape))


def constant(grid, value):
    return ScalarField(grid, np.full(grid.shape, float(value)))


def zero_vector(grid):
    z = np.zeros(grid.shape)
    return VectorField(grid, z, z.copy())


def scalar_from_coeffs(grid, coeffs):
    return ScalarField(grid, inv(grid, coeffs, SCALAR_TAG))


def vector_from_coeffs(grid, c1, c2):
    return VectorField(grid, inv(grid, c1, V1_TAG), inv(grid, c2, V2_TAG))


# -- differential operators -------------------------------------------------


def grad(f: ScalarField) -> VectorField:
    g = f.grid
    c1, _ = deriv_coeffs(g, f.coeffs, SCALAR_TAG, 0)
    c2, _ = deriv_coeffs(g, f.coeffs, SCALAR_TAG, 1)
    return vector_from_coeffs(g, c1, c2)


def div(v: VectorField) -> ScalarField:
    g = v.grid
    c1, _ = deriv_coeffs(g, v.coeffs1, V1_TAG, 0)
    c2, _ = deriv_coeffs(g, v.coeffs2, V2_TAG, 1)
    return scalar_from_coeffs(g, c1 + c2)


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    return scalar_from_coeffs(g, -g.ksq(SCALAR_TAG) * f.coeffs)


def laplacian_vector(v: VectorField) -> VectorField:
    g = v.grid
    return vector_from_coeffs(
        g, -g.ksq(V1_TAG) * v.coeffs1, -g.ksq(V2_TAG) * v.coeffs2
    )


def jacobian_values(v: VectorField):
    """Collocation values of all four partial derivatives of v.

    Returns (d1v1, d2v1, d1v2, d2v2); on the rect d1v1/d2v2 are "cc" fields
    while the cross derivatives d2v1/d1v2 are "ss" fields.
    """
    g = v.grid
    c11, t11 = deriv_coeffs(g, v.coeffs1, V1_TAG, 0)
    c21, t21 = deriv_coeffs(g, v.coeffs1, V1_TAG, 1)
    c12, t12 = deriv_coeffs(g, v.coeffs2, V2_TAG, 0)
    c22, t22 = deriv_coeffs(g, v.coeffs2, V2_TAG, 1)
    return (
        inv(g, c11, t11),
        inv(g, c21, t21),
        inv(g, c12, t12),
        inv(g, c22, t22),
    )


def second_derivative_values(f: ScalarField):
    """Collocation values (fxx, fyy, fxy); fxy is an "ss" field on the rect."""
    g = f.grid
    c1, t1 = deriv_coeffs(g, f.coeffs, SCALAR_TAG, 0)
    cxx, _ = deriv_coeffs(g, c1, t1, 0)
    cxy, txy = deriv_coeffs(g, c1, t1, 1)
    c2, t2 = deriv_coeffs(g, f.coeffs, SCALAR_TAG, 1)
    cyy, _ = deriv_coeffs(g, c2, t2, 1)
    return inv(g, cxx, SCALAR_TAG), inv(g, cyy, SCALAR_TAG), inv(g, cxy, txy)


def sym_gradient_values(v: VectorField):
    """Collocation values (d11, d22, d12) of the symmetric gradient of v.

    d11/d22 are scalar-parity ("cc") arrays, d12 is cross-parity ("ss").
    """
    d1v1, d2v1, d1v2, d2v2 = jacobian_values(v)
    return d1v1, d2v2, 0.5 * (d2v1 + d1v2)


def div_tensor(grid, t11, t12, t21, t22) -> VectorField:
    """Row-wise divergence of a 2x2 tensor given by collocation values.

    Diagonal entries are scalar-parity ("cc") arrays, off-diagonal entries
    cross-parity ("ss"); t12 sits in row 1, t21 in row 2.
    """
    c11 = fwd(grid, t11, SCALAR_TAG)
    c22 = fwd(grid, t22, SCALAR_TAG)
    c12 = fwd(grid, t12, CROSS_TAG)
    c21 = c12 if t21 is t12 else fwd(grid, t21, CROSS_TAG)
    d1, _ = deriv_coeffs(grid, c11, SCALAR_TAG, 0)
    d2, _ = deriv_coeffs(grid, c12, CROSS_TAG, 1)
    e1, _ = deriv_coeffs(grid, c21, CROSS_TAG, 0)
    e2, _ = deriv_coeffs(grid, c22, SCALAR_TAG, 1)
    return vector_from_coeffs(grid, d1 + d2, e1 + e2)


def div_tensor_sym(grid, s11, s12, s22) -> VectorField:
    """Divergence of a symmetric tensor (s12 used for both off-diagonals)."""
    return div_tensor(grid, s11, s12, s12, s22)


def dealias(field):
    """2/3-rule truncation, returning a new field of the same kind."""
    g = field.grid
    if isinstance(field, ScalarField):
        return scalar_from_coeffs(g, field.coeffs * g.dealias_mask(SCALAR_TAG))
    return vector_from_coeffs(
        g,
        field.coeffs1 * g.dealias_mask(V1_TAG),
        field.coeffs2 * g.dealias_mask(V2_TAG),
    )


# -- inner products and norms ------------------------------------------------


def mean(f: ScalarField) -> float:
    return float(f.values.mean())


def inner_l2(a, b) -> float:
    """Discrete L2 inner product (collocation quadrature; exact in-band)."""
    g = a.grid
    if isinstance(a, ScalarField):
        return float(np.vdot(a.values, b.values).real) * g.cell_area
    s = np.vdot(a.v1, b.v1).real + np.vdot(a.v2, b.v2).real
    return float(s) * g.cell_area


def _coeff_weight_sum(grid, coeffs, weights):
    return float(np.sum(np.abs(coeffs) ** 2 * weights)) * grid.cell_area


def norm_l2(f) -> float:
    return np.sqrt(max(inner_l2(f, f), 0.0))


def seminorm_h1(f: ScalarField) -> float:
    """|f|_{H^1} = ||grad f||_{L^2}, computed per mode."""
    g = f.grid
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, g.ksq(SCALAR_TAG)))


def norm_hm1(f: ScalarField) -> float:
    """||f||_{H^-1} = ||grad(inverse Neumann Laplacian) f||_{L^2}.

    Requires mean-zero data; the zero mode has no preimage.
    """
    g = f.grid
    scale = norm_l2(f)
    if abs(mean(f)) > 1e-12 * max(scale / np.sqrt(g.volume), 1e-300):
        raise MeanZeroError("mean-zero required for the H^-1 norm")
    ksq = g.ksq(SCALAR_TAG).copy()
    ksq.flat[0] = 1.0
    w = 1.0 / ksq
    w.flat[0] = 0.0
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, w))


def inner_hm1(a: ScalarField, b: ScalarField) -> float:
    """H^-1 inner product of two mean-zero scalar fields."""
    g = a.grid
    ksq = g.ksq(SCALAR_TAG).copy()
    ksq.flat[0] = 1.0
    w = 1.0 / ksq
    w.flat[0] = 0.0
    return float(np.sum((a.coeffs * np.conj(b.coeffs)).real * w)) * g.cell_area


def norm_h1(f: ScalarField) -> float:
    g = f.grid
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, 1.0 + g.ksq(SCALAR_TAG)))


def norm_h2(f: ScalarField) -> float:
    g = f.grid
    q = g.ksq(SCALAR_TAG)
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, 1.0 + q + q**2))


def norm_sobolev(f: ScalarField, order: int) -> float:
    """Full H^m norm: sum of |k|^(2j) weights for j = 0..m."""
    g = f.grid
    q = g.ksq(SCALAR_TAG)
    w = sum(q**j for j in range(order + 1))
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, w))


def norm_hs(f: ScalarField, s: float) -> float:
    """Fractional-order norm with (1 + |k|^2)^s weights."""
    g = f.grid
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, (1.0 + g.ksq(SCALAR_TAG)) ** s))


def seminorm_hm(f: ScalarField, order: int) -> float:
    g = f.grid
    return np.sqrt(_coeff_weight_sum(g, f.coeffs, g.ksq(SCALAR_TAG) ** order))


def vnorm_l2(v: VectorField) -> float:
    return norm_l2(v)


def vseminorm_hm(v: VectorField, order: int) -> float:
    g = v.grid
    s = _coeff_weight_sum(g, v.coeffs1, g.ksq(V1_TAG) ** order)
    s += _coeff_weight_sum(g, v.coeffs2, g.ksq(V2_TAG) ** order)
    return np.sqrt(s)


def vnorm_h1(v: VectorField) -> float:
    g = v.grid
    s = _coeff_weight_sum(g, v.coeffs1, 1.0 + g.ksq(V1_TAG))
    s += _coeff_weight_sum(g, v.coeffs2, 1.0 + g.ksq(V2_TAG))
    return np.sqrt(s)


def norm(f, space: str) -> float:
    """Named-space norms: "L2", "H1" (full), or "Hm1" (needs mean zero)."""
    if space == "L2":
        return norm_l2(f)
    if space == "H1":
        return norm_h1(f) if isinstance(f, ScalarField) else vnorm_h1(f)
    if space == "Hm1":
        return norm_hm1(f)
    raise ValueError(f"unknown norm space {space!r}")


# -- random smooth fields ----------------------------------------------------


def _mode_weights(grid, tag, kmax):
    if grid.mode == TORUS:
        f1 = np.abs(sfft.fftfreq(grid.shape[0], 1.0 / grid.shape[0]))
        f2 = np.abs(sfft.fftfreq(grid.shape[1], 1.0 / grid.shape[1]))
    else:
        f1 = np.arange(grid.shape[0]) + (1 if tag[0] == "s" else 0)
        f2 = np.arange(grid.shape[1]) + (1 if tag[1] == "s" else 0)
    r2 = (f1[:, None] / kmax) ** 2 + (f2[None, :] / kmax) ** 2
    w = np.exp(-2.0 * r2)
    w[r2 > 1.0] = 0.0
    return w


def random_scalar(grid, rng, kmax=None, mean_zero=False, amplitude=1.0):
    """Random smooth scalar with spectrum confined to |k| <= kmax modes."""
    if kmax is None:
        kmax = max(min(grid.shape) // 6, 2)
    white = rng.standard_normal(grid.shape)
    c = fwd(grid, white, SCALAR_TAG) * _mode_weights(grid, SCALAR_TAG, kmax)
    if mean_zero:
        c.flat[0] = 0.0
    vals = inv(grid, c, SCALAR_TAG)
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals = vals * (amplitude / peak)
    return ScalarField(grid, vals)


def random_stream(grid, rng, kmax=None, amplitude=1.0):
    """Random smooth stream function (cross-parity on the rect)."""
    if kmax is None:
        kmax = max(min(grid.shape) // 6, 2)
    tag = CROSS_TAG if grid.mode == RECT else SCALAR_TAG
    white = rng.standard_normal(grid.shape)
    c = fwd(grid, white, tag) * _mode_weights(grid, tag, kmax)
    vals = inv(grid, c, tag)
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals = vals * (amplitude / peak)
    return c * (amplitude / peak if peak > 0 else 1.0), tag


def random_solenoidal(grid, rng, kmax=None, amplitude=1.0):
    """Random smooth divergence-free vector field (curl of a stream)."""
    c, tag = random_stream(grid, rng, kmax, amplitude)
    c1, _ = deriv_coeffs(grid, c, tag, 1)
    c2, _ = deriv_coeffs(grid, c, tag, 0)
    w = vector_from_coeffs(grid, c1, -c2)
    peak = max(np.max(np.abs(w.v1)), np.max(np.abs(w.v2)))
    if peak > 0:
        w = w * (amplitude / peak)
    return w


def random_vector(grid, rng, kmax=None, amplitude=1.0):
    """Random smooth vector field (normal component vanishing on walls)."""
    if kmax is None:
        kmax = max(min(grid.shape) // 6, 2)
    w1 = rng.standard_normal(grid.shape)
    w2 = rng.standard_normal(grid.shape)
    c1 = fwd(grid, w1, V1_TAG) * _mode_weights(grid, V1_TAG, kmax)
    c2 = fwd(grid, w2, V2_TAG) * _mode_weights(grid, V2_TAG, kmax)
    v = vector_from_coeffs(grid, c1, c2)
    peak = max(np.max(np.abs(v.v1)), np.max(np.abs(v.v2)))
    if peak > 0:
        v = v * (amplitude / peak)
    return v


# -- boundary trace checks (rect) --------------------------------------------


def _axis_basis_at_wall(grid, axis, letter, end):
    n = grid.shape[axis]
    x = grid.lengths[axis] if end else 0.0
    ell = grid.lengths[axis]
    if letter == "c":
        k = np.pi / ell * np.arange(n)
        w = np.sqrt(2.0 / n) * np.cos(k * x)
        w[0] *= np.sqrt(0.5)
        return w
    k = np.pi / ell * (np.arange(n) + 1)
    return np.sqrt(2.0 / n) * np.sin(k * x)


def _eval_wall(grid, coeffs, tag, axis, end):
    """Evaluate a rect series on a wall line orthogonal to `axis`."""
    w = _axis_basis_at_wall(grid, axis, tag[axis], end)
    if axis == 0:
        line = np.tensordot(w, coeffs, axes=(0, 0))
        other = 1
    else:
        line = np.tensordot(coeffs, w, axes=(1, 0))
        other = 0
    # transform the remaining axis back to collocation values
    letter = tag[other]
    if letter == "c":
        return sfft.idct(line, type=2, norm="ortho")
    return sfft.idst(line, type=2, norm="ortho")


def max_normal_trace(v: VectorField) -> float:
    """max |n . v| over the four walls (rect); 0.0 on the torus."""
    if v.grid.mode == TORUS:
        return 0.0
    vals = []
    for end in (False, True):
        vals.append(np.abs(_eval_wall(v.grid, v.coeffs1, V1_TAG, 0, end)).max())
        vals.append(np.abs(_eval_wall(v.grid, v.coeffs2, V2_TAG, 1, end)).max())
    return float(max(vals))


def max_normal_derivative(f: ScalarField) -> float:
    """max |df/dn| over the four walls (rect); 0.0 on the torus."""
    if f.grid.mode == TORUS:
        return 0.0
    g = f.grid
    c1, t1 = deriv_coeffs(g, f.coeffs, SCALAR_TAG, 0)
    c2, t2 = deriv_coeffs(g, f.coeffs, SCALAR_TAG, 1)
    vals = []
    for end in (False, True):
        vals.append(np.abs(_eval_wall(g, c1, t1, 0, end)).max())
        vals.append(np.abs(_eval_wall(g, c2, t2, 1, end)).max())
    return float(max(vals))
