"""Discrete exterior-Dirichlet fractional Laplacian on grid domains.

The scheme for ``alpha < 2`` is a translation-invariant lattice quadrature of

    (-Delta)^{alpha/2} u(x) = c_{d,alpha} p.v. int (u(x) - u(x + y)) |y|^{-d-alpha} dy

with every off-centre cell weighted by the exact integral of the kernel over
that cell, and the central cell handled by a second-order Taylor expansion
that lands on the nearest-neighbour stencil.  Because ``u`` vanishes outside
the domain, the weights of all exterior cells (including the analytically
integrated far field) collapse onto the diagonal.

All weights scale as ``c h^{-alpha}`` times an ``h``-independent table, so
assembling on ``D / R`` with spacing ``h / R`` multiplies the matrix by
``R^alpha``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy import fft, integrate
from scipy.special import gamma, jv

from .geometry import Domain, unit_ball_volume

NEAR_CELLS = 6
_GL_NODES = 8
_GL_SPLITS = 3


def normalization_constant(d: int, alpha: float) -> float:
    """``c_{d,alpha}`` making the Fourier symbol exactly ``|xi|^alpha``."""
    if not 0 < alpha < 2:
        raise ValueError("normalization constant is defined for alpha in (0, 2)")
    return 2 ** alpha * gamma((d + alpha) / 2) / (math.pi ** (d / 2) * abs(gamma(-alpha / 2)))


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere ``S^{d-1}``."""
    return d * unit_ball_volume(d)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha out of range (0, 2]: {alpha}")


# -- h-independent weight tables ---------------------------------------------


def _gauss_legendre(n: int, splits: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [-1/2, 1/2]."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(-0.5, 0.5, splits + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _face_integral(d: int, power: float) -> float:
    """``int_{[-1,1]^{d-1}} (1 + |s|^2)^{power/2} ds`` by tensor Gauss-Legendre."""
    if d == 1:
        return 1.0
    x, w = np.polynomial.legendre.leggauss(24)
    edges = np.linspace(-1.0, 1.0, 5)
    nodes = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    weights = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    grids = np.meshgrid(*([nodes] * (d - 1)), indexing="ij")
    wgrid = np.prod(np.meshgrid(*([weights] * (d - 1)), indexing="ij"), axis=0)
    s2 = sum(g ** 2 for g in grids)
    return float(np.sum(wgrid * (1 + s2) ** (power / 2)))


@lru_cache(maxsize=None)
def exterior_total(d: int, alpha: float) -> float:
    """``int_{R^d minus [-1/2,1/2]^d} |y|^{-d-alpha} dy``.

    Split the exterior into the 2d pyramids over the cube faces; on each the
    radial part integrates in closed form.
    """
    return 2 * d * 2 ** alpha / alpha * _face_integral(d, -(d + alpha))


@lru_cache(maxsize=None)
def central_second_moment(d: int, alpha: float) -> float:
    """``int_{[-1/2,1/2]^d} |y|^{2-d-alpha} dy`` (finite for alpha < 2)."""
    return 2 * d * 0.5 ** (2 - alpha) / (2 - alpha) * _face_integral(d, 2 - d - alpha)


def _near_cell_integrals(d: int, alpha: float, offsets: np.ndarray) -> np.ndarray:
    nodes, weights = _gauss_legendre(_GL_NODES, _GL_SPLITS)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.meshgrid(*([weights] * d), indexing="ij"), axis=0).ravel()
    out = np.empty(len(offsets))
    for i, k in enumerate(offsets):
        r2 = np.sum((pts + k) ** 2, axis=1)
        out[i] = np.dot(w, r2 ** (-(d + alpha) / 2))
    return out


@lru_cache(maxsize=None)
def second_moment_defect(d: int, alpha: float) -> float:
    """``sum_{k != 0} int_{cell_k} (|k|^2 - |y|^2) |y|^{-d-alpha} dy``.

    Replacing each cell by its centre node mis-states the second moment of the
    kernel by this amount; the near-singularity stencil absorbs it so the
    scheme is exact on quadratics.
    """
    p = d + alpha
    nodes, weights = _gauss_legendre(_GL_NODES, _GL_SPLITS)
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.meshgrid(*([weights] * d), indexing="ij"), axis=0).ravel()
    box = np.stack(np.meshgrid(*([np.arange(-NEAR_CELLS, NEAR_CELLS + 1)] * d), indexing="ij"), axis=-1)
    near = 0.0
    for k in box.reshape(-1, d).astype(float):
        if not k.any():
            continue
        r2 = np.sum((pts + k) ** 2, axis=1)
        near += np.dot(w, (k @ k - r2) * r2 ** (-p / 2))
    M = 200 if d <= 2 else 60
    axis = np.arange(-M, M + 1, dtype=float)
    r2 = sum(g ** 2 for g in np.meshgrid(*([axis] * d), indexing="ij", sparse=True))
    far_mask = np.max(np.abs(np.stack(np.broadcast_arrays(*np.meshgrid(*([axis] * d), indexing="ij", sparse=True)))), axis=0) > NEAR_CELLS
    coeff = (2 * d + 4 * alpha) / 24.0
    far = coeff * float(np.sum(r2[far_mask] ** (-p / 2)))
    tail = coeff * (2 * M + 1) ** -alpha * exterior_total(d, alpha)
    return near + far + tail


def _far_cell_integrals(d: int, alpha: float, offsets: np.ndarray) -> np.ndarray:
    # midpoint rule plus the h^2 Laplacian correction of the cell average
    p = d + alpha
    r2 = np.sum(offsets.astype(float) ** 2, axis=-1)
    return r2 ** (-p / 2) + p * (alpha + 2) / 24.0 * r2 ** (-p / 2 - 1)


@lru_cache(maxsize=32)
def _canonical_weights(d: int, alpha: float, m: int) -> np.ndarray:
    """Off-centre unit-cell kernel integrals on the nonnegative orthant [0..m]^d.

    Values depend only on the sorted absolute offset so the table is exactly
    invariant under reflections and axis permutations.
    """
    grid = np.stack(np.meshgrid(*([np.arange(m + 1)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    canon = np.sort(grid, axis=1)
    uniq, inverse = np.unique(canon, axis=0, return_inverse=True)
    vals = np.zeros(len(uniq))
    nonzero = np.any(uniq != 0, axis=1)
    near = nonzero & (uniq.max(axis=1) <= NEAR_CELLS)
    far = nonzero & ~near
    vals[near] = _near_cell_integrals(d, alpha, uniq[near].astype(float))
    vals[far] = _far_cell_integrals(d, alpha, uniq[far])
    table = vals[inverse.ravel()].reshape((m + 1,) * d)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def correction_stencil(d: int, alpha: float) -> np.ndarray:
    """Extra coupling weights over offsets ``[-J, J]^d`` (``J = NEAR_CELLS``).

    The Taylor expansion over the central cell contributes
    ``int |y|^{2-d-alpha} / 2d`` per axis; the second-moment defect of the
    off-centre cells is subtracted so the scheme is exact on quadratics.  The
    net per-axis coefficient ``q`` must equal ``sum_k C[k] k_1^2 / 2``.  A
    positive ``q`` sits on the nearest neighbours.  A negative one is taken
    out of the axis offsets in proportion to their kernel weights, or out of
    the whole near box when the axis alone cannot absorb it, so every
    off-diagonal entry stays nonnegative.
    """
    J = NEAR_CELLS
    q = (central_second_moment(d, alpha) - second_moment_defect(d, alpha)) / (2 * d)
    out = np.zeros((2 * J + 1,) * d)
    centre = (J,) * d
    if q >= 0:
        for axis in range(d):
            for sign in (-1, 1):
                nb = list(centre)
                nb[axis] += sign
                out[tuple(nb)] = q
        return out
    table = _canonical_weights(d, alpha, J)
    idx = np.abs(np.arange(-J, J + 1))
    w = table[np.ix_(*([idx] * d))].copy()
    k1 = np.arange(-J, J + 1, dtype=float).reshape((-1,) + (1,) * (d - 1))
    on_axis = np.zeros_like(w, dtype=bool)
    for axis in range(d):
        sl = [J] * d
        sl[axis] = slice(None)
        on_axis[tuple(sl)] = True
    on_axis[centre] = False
    for support in (on_axis, np.ones_like(on_axis)):
        ws = np.where(support, w, 0.0)
        frac = -q / (0.5 * np.sum(ws * k1 ** 2))
        if frac <= 1:
            out = -frac * ws
            out.setflags(write=False)
            return out
    raise ValueError(f"no monotone second-order correction for d={d}, alpha={alpha}")


def stencil_weights(d: int, alpha: float, m: int) -> np.ndarray:
    """Unit-spacing, unit-constant stencil ``G`` over offsets ``[-m, m]^d``.

    ``(L u)_i = sum_k G[k] u_{i+k}`` on the infinite lattice: ``G[0]`` is the
    total off-centre weight including the correction, ``G[k] <= 0`` for
    ``k != 0``.  Offsets beyond ``m`` only ever meet exterior cells, so they
    appear in ``G[0]`` alone.
    """
    canon = _canonical_weights(d, alpha, m)
    idx = np.abs(np.arange(-m, m + 1))
    full = -canon[np.ix_(*([idx] * d))]
    corr = correction_stencil(d, alpha)
    J = NEAR_CELLS
    r = min(J, m)
    full[tuple(slice(m - r, m + r + 1) for _ in range(d))] -= corr[tuple(slice(J - r, J + r + 1) for _ in range(d))]
    full[(m,) * d] = diagonal_weight(d, alpha)
    return full


def diagonal_weight(d: int, alpha: float) -> float:
    """``G[0]``: exterior kernel mass plus the total correction weight."""
    return exterior_total(d, alpha) + float(np.sum(correction_stencil(d, alpha)))


# -- data types ------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorSpec:
    """Parameters of the discrete operator.

    ``c`` is ``c_{d,alpha}``; it is ``nan`` for the classical ``alpha = 2``
    path where no kernel is used.
    """

    alpha: float
    d: int
    h: float
    r_far: float
    c: float

    @classmethod
    def create(cls, alpha: float, d: int, h: float, r_far: float | None = None) -> OperatorSpec:
        _check_alpha(alpha)
        c = normalization_constant(d, alpha) if alpha < 2 else float("nan")
        return cls(float(alpha), int(d), float(h), float(r_far if r_far is not None else 200 * h), c)

    @property
    def scale(self) -> float:
        """Factor ``c h^{-alpha}`` converting unit-lattice weights to this grid."""
        if self.alpha == 2:
            return self.h ** -2
        return self.c * self.h ** -self.alpha


@dataclass(frozen=True)
class Potential:
    values: np.ndarray

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @classmethod
    def constant(cls, value: float, n: int) -> Potential:
        return cls(np.full(n, float(value)))


@dataclass(eq=False)
class DiscreteOperator:
    """``A u = -(-Delta)^{alpha/2} u + V u`` on interior nodes, ``u = 0`` outside.

    ``laplacian_matvec`` applies the positive part ``L = (-Delta)^{alpha/2}``;
    the operator itself is ``A = -L + diag(V)``.
    """

    domain: Domain
    spec: OperatorSpec
    potential: Potential
    _kernel_hat: np.ndarray | None = field(default=None, repr=False)
    _pad_shape: tuple[int, ...] | None = field(default=None, repr=False)
    _sparse: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.domain.n_interior

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def V(self) -> np.ndarray:
        return self.potential.values

    @property
    def index_map(self) -> np.ndarray:
        """Row number of every mask cell (-1 for exterior cells)."""
        return self.domain.node_lookup

    def laplacian_matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.alpha == 2:
            return self._laplacian_sparse() @ u
        grid = np.zeros(self.domain.shape)
        grid[self.domain.mask] = u
        out = fft.irfftn(fft.rfftn(grid, self._pad_shape) * self._kernel_hat, self._pad_shape)
        sl = tuple(slice(0, s) for s in self.domain.shape)
        return self.spec.scale * out[sl][self.domain.mask]

    def frac_matvec(self, u: np.ndarray) -> np.ndarray:
        return -self.laplacian_matvec(u)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return -self.laplacian_matvec(u) + self.V * np.asarray(u, dtype=float)

    def _laplacian_sparse(self) -> sp.csr_matrix:
        if self._sparse is None:
            self._sparse = _classical_laplacian(self.domain)
        return self._sparse

    def laplacian_matrix(self) -> np.ndarray | sp.csr_matrix:
        """``L`` as a dense array (``alpha < 2``) or sparse matrix (``alpha = 2``)."""
        if self.alpha == 2:
            return self._laplacian_sparse()
        idx = self.domain.interior_index
        n = len(idx)
        if n > 20000:
            raise MemoryError(f"dense assembly of {n} nodes refused")
        m = max(self.domain.shape) - 1
        g = stencil_weights(self.spec.d, self.alpha, m)
        out = np.empty((n, n))
        for row in range(n):
            diff = idx - idx[row] + m
            out[row] = g[tuple(diff.T)]
        return self.spec.scale * out

    def frac_matrix(self) -> np.ndarray | sp.csr_matrix:
        return -self.laplacian_matrix()

    def matrix(self) -> np.ndarray | sp.csr_matrix:
        """The full operator ``A`` (dense for ``alpha < 2``, sparse for ``alpha = 2``)."""
        L = self.laplacian_matrix()
        if sp.issparse(L):
            return (-L + sp.diags(self.V)).tocsr()
        return -L + np.diag(self.V)

    def diagonal_laplacian(self) -> np.ndarray:
        if self.alpha == 2:
            return self._laplacian_sparse().diagonal()
        return np.full(self.n, self.spec.scale * diagonal_weight(self.spec.d, self.alpha))

    def with_potential(self, V: np.ndarray | float | Potential) -> DiscreteOperator:
        return DiscreteOperator(self.domain, self.spec, _as_potential(V, self.n),
                                self._kernel_hat, self._pad_shape, self._sparse)


def _as_potential(V: np.ndarray | float | Potential | None, n: int) -> Potential:
    if V is None:
        return Potential.constant(0.0, n)
    if isinstance(V, Potential):
        vals = np.asarray(V.values, dtype=float)
    elif np.isscalar(V):
        vals = np.full(n, float(V))
    else:
        vals = np.asarray(V, dtype=float)
    if vals.shape != (n,):
        raise ValueError(f"potential must have {n} interior values, got shape {vals.shape}")
    return Potential(vals)


def _classical_laplacian(domain: Domain) -> sp.csr_matrix:
    """Dirichlet ``-Delta_h`` on the (2d+1)-point stencil."""
    table = domain.node_lookup
    idx = domain.interior_index
    n = len(idx)
    rows, cols = [np.arange(n)], [np.arange(n)]
    vals = [np.full(n, 2.0 * domain.d)]
    shape = np.asarray(domain.shape)
    for axis in range(domain.d):
        for step in (-1, 1):
            nb = idx.copy()
            nb[:, axis] += step
            ok = np.all((nb >= 0) & (nb < shape), axis=1)
            j = np.full(n, -1)
            j[ok] = table[tuple(nb[ok].T)]
            keep = j >= 0
            rows.append(np.arange(n)[keep])
            cols.append(j[keep])
            vals.append(np.full(keep.sum(), -1.0))
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return mat * domain.h ** -2


def _check_resolution(domain: Domain) -> None:
    idx = domain.interior_index
    extent = idx.max(axis=0) - idx.min(axis=0) + 1
    if np.any(extent < 3):
        raise ValueError("under-resolved domain: fewer than 3 interior cells along an axis")


def assemble(domain: Domain, alpha: float, V: np.ndarray | float | Potential | None = None,
             r_far: float | None = None) -> DiscreteOperator:
    """Assemble ``-(-Delta)^{alpha/2} + V`` with the exterior condition ``u = 0``.

    Parameters
    ----------
    domain : Domain
    alpha : float
        Stability index in ``(0, 2]``; ``alpha = 2`` gives the classical
        Dirichlet Laplacian stencil.
    V : array, float or Potential, optional
        Potential on interior nodes (default 0).
    r_far : float, optional
        Far-field radius recorded in the spec (default ``4 diam(D)``).
    """
    _check_alpha(alpha)
    _check_resolution(domain)
    spec = OperatorSpec.create(alpha, domain.d, domain.h, 4 * domain.diameter if r_far is None else r_far)
    pot = _as_potential(V, domain.n_interior)
    if alpha == 2:
        return DiscreteOperator(domain, spec, pot)
    shape = domain.shape
    m = max(shape) - 1
    g = stencil_weights(domain.d, alpha, m)
    pad = tuple(fft.next_fast_len(2 * s - 1, real=True) for s in shape)
    circ = np.zeros(pad)
    # wrap offsets -(s-1)..(s-1) onto the circular buffer
    for corner in itertools.product(*[(0, 1)] * domain.d):
        src, dst = [], []
        for axis, neg in enumerate(corner):
            s = shape[axis]
            if neg:
                src.append(slice(m - (s - 1), m))
                dst.append(slice(pad[axis] - (s - 1), pad[axis]))
            else:
                src.append(slice(m, m + s))
                dst.append(slice(0, s))
        circ[tuple(dst)] = g[tuple(src)]
    return DiscreteOperator(domain, spec, pot, fft.rfftn(circ), pad)


# -- validation oracles ---------------------------------------------------------------


def sphere_average_cos(d: int, s: np.ndarray | float) -> np.ndarray | float:
    """Average of ``cos(xi . y)`` over ``|y| = rho`` with ``s = |xi| rho``."""
    if d == 1:
        return np.cos(s)
    nu = d / 2 - 1
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = gamma(d / 2) * (2 / s) ** nu * jv(nu, s)
    return np.where(s == 0, 1.0, val)


def _oscillatory_tail(d: int, alpha: float, s: float, R: float) -> float:
    """``int_R^inf Lambda_d(s rho) rho^{-1-alpha} d rho`` for the sphere average ``Lambda_d``."""
    if d == 1:
        val, _ = integrate.quad(lambda r: r ** (-1 - alpha), R, np.inf, weight="cos", wvar=s)
        return float(val)
    import mpmath

    nu = d / 2 - 1
    pref = float(gamma(d / 2)) * 2 ** nu

    def f(r):
        return pref * mpmath.besselj(nu, s * r) * (s * r) ** (-nu) * r ** (-1 - alpha)

    return float(mpmath.quadosc(f, [R, mpmath.inf], omega=s))


def validate_symbol(spec: OperatorSpec, xi: Sequence[float]) -> float:
    """Relative error of the discrete symbol against ``|xi|^alpha``.

    The free-space lattice operator is applied to ``cos(xi . x)`` at a lattice
    node: offsets with ``|k h| <= r_far`` are summed with the scheme's
    weights, and the far field beyond ``r_far`` is integrated analytically.
    For ``xi = 0`` the absolute output is returned (it is zero).
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (spec.d,):
        raise ValueError("frequency vector has the wrong dimension")
    s = float(np.linalg.norm(xi))
    if s * spec.h > 1:
        raise ValueError("unresolved frequency: need |xi| h <= 1")
    if s == 0:
        return 0.0
    if spec.alpha == 2:
        numeric = float(np.sum(2 * (1 - np.cos(xi * spec.h)))) / spec.h ** 2
        return abs(numeric - s * s) / (s * s)
    m = int(math.floor(spec.r_far / spec.h))
    g = stencil_weights(spec.d, spec.alpha, m)
    axes = np.arange(-m, m + 1)
    grids = np.meshgrid(*([axes] * spec.d), indexing="ij")
    phase = sum(xi[k] * spec.h * grids[k] for k in range(spec.d))
    inside = sum(gk.astype(float) ** 2 for gk in grids) <= m * m
    centre = (m,) * spec.d
    inside[centre] = False
    near = float(np.sum(-g[inside] * (1 - np.cos(phase[inside]))))
    R = (m + 0.5) * spec.h
    area = sphere_area(spec.d)
    tail = area * (R ** -spec.alpha / spec.alpha - _oscillatory_tail(spec.d, spec.alpha, s, R))
    numeric = spec.scale * near + spec.c * tail
    target = s ** spec.alpha
    return abs(numeric - target) / target


def getoor_constant(d: int, alpha: float) -> float:
    """``(-Delta)^{alpha/2} (1 - |x|^2)_+^{alpha/2}`` inside the unit ball."""
    return 2 ** alpha * gamma(alpha / 2 + 1) * gamma((d + alpha) / 2) / gamma(d / 2)


def getoor_center_quadrature(d: int, alpha: float) -> float:
    """Independent evaluation of the Getoor constant at ``x = 0`` by radial quadrature."""
    c = normalization_constant(d, alpha)

    def inner(r):
        return (1 - (1 - r * r) ** (alpha / 2)) * r ** (-1 - alpha)

    near, _ = integrate.quad(inner, 0, 1, limit=200, epsabs=1e-13, epsrel=1e-12)
    return c * sphere_area(d) * (near + 1 / alpha)


def getoor_residual(alpha: float, d: int, h: float) -> float:
    """Max relative deviation of ``L (1-|x|^2)_+^{alpha/2}`` from the Getoor constant.

    Evaluated on the interior nodes of ``B_1`` with ``|x| <= 1/2``.
    """
    if alpha == 2:
        raise ValueError("getoor_residual needs alpha < 2 (use the classical stencil check)")
    _check_alpha(alpha)
    domain = Domain.ball(1.0, h, d)
    op = assemble(domain, alpha)
    x = domain.interior_points
    r2 = np.sum(x * x, axis=1)
    u = (1 - r2) ** (alpha / 2)
    lu = op.laplacian_matvec(u)
    C = getoor_constant(d, alpha)
    inner = r2 <= 0.25
    return float(np.max(np.abs(lu[inner] - C)) / C)
