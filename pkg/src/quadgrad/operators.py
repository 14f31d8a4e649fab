"""Finite-difference discretization of ``-L0 u = lam*c*u + <M grad u, grad u> + h``.

``L0 u = a_ij d_ij u + b_i d_i u`` is discretized with second-order central
differences on interior nodes; Dirichlet data ``g`` is eliminated.  Two
assembly paths exist on purpose: sparse matrices built from Kronecker
products of 1D difference operators (used for Jacobians and linear solves),
and a matrix-free stencil sweep over array slices (used for residuals).
Converged solutions are re-checked with the path that did not drive the
iteration.

Gradient term schemes
---------------------
``"central"``
    ``<M grad u, grad u>`` with central differences for ``grad u``.
``"exponential"``
    Only for ``M = mu0 * a`` with constant ``mu0`` and diagonal ``a``.  The
    whole principal part ``-L0 u - mu0 <a grad u, grad u>`` is written as
    ``-sum_j L_ij psi(u_j - u_i)`` with ``psi(d) = expm1(mu0 d)/mu0``, which is
    ``-exp(-mu0 u_i) (L_h exp-transform(u))_i``.  This scheme is monotone for
    every ``u`` and commutes exactly with the exponential change of variables
    in :mod:`quadgrad.transform`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .grid import Grid, GridFunction

FieldLike = Union[float, np.ndarray, Callable[..., np.ndarray], GridFunction]

BOUNDARY_TOL = 1e-10


class OperatorError(ValueError):
    """Invalid operator data."""


class EllipticityError(OperatorError):
    def __init__(self, node, value):
        super().__init__(f"ellipticity fails at node {node}: smallest eigenvalue {value:.3e}")
        self.node = node
        self.value = value


class PecletError(OperatorError):
    """Central drift differences on a mesh that is too coarse."""


class BoundaryDataError(OperatorError):
    """Grid function does not carry the problem's boundary values."""


def sample(grid: Grid, f: FieldLike) -> np.ndarray:
    """Turn a scalar, array, callable or GridFunction into node values."""
    if isinstance(f, GridFunction):
        return f.values.copy()
    if callable(f):
        return np.array(np.broadcast_to(np.asarray(f(*grid.coords), dtype=float), grid.shape))
    arr = np.asarray(f, dtype=float)
    return np.array(np.broadcast_to(arr, grid.shape))


@dataclass(frozen=True, eq=False)
class OperatorCoefficients:
    """``a`` with shape ``(d, d, *grid.shape)`` and ``b`` with shape ``(d, *grid.shape)``."""

    a: np.ndarray
    b: np.ndarray

    @classmethod
    def build(cls, grid: Grid, a: FieldLike | list = 1.0, b: FieldLike | list = 0.0) -> "OperatorCoefficients":
        """Accepts ``a`` as a scalar field (meaning ``a*I``) or a d x d nested list
        of fields, ``b`` as a scalar field (1D) or a list of d fields."""
        d = grid.dimension
        if isinstance(a, (list, tuple)):
            A = np.stack([np.stack([sample(grid, a[i][j]) for j in range(d)]) for i in range(d)])
        else:
            s = sample(grid, a)
            A = np.zeros((d, d) + grid.shape)
            for i in range(d):
                A[i, i] = s
        if isinstance(b, (list, tuple)):
            B = np.stack([sample(grid, bi) for bi in b])
        else:
            B = np.stack([sample(grid, b) for _ in range(d)]) if d == 1 else np.zeros((d,) + grid.shape)
            if d > 1 and np.any(sample(grid, b)):
                raise OperatorError("2D drift must be given per axis")
        return cls(A, B)

    @property
    def drift_bound(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.b**2, axis=0))))


def check_ellipticity(coeffs: OperatorCoefficients, grid: Grid) -> tuple[float, float]:
    """Global (smallest, largest) eigenvalue of ``a`` over all nodes."""
    A = np.moveaxis(coeffs.a.reshape(grid.dimension, grid.dimension, -1), -1, 0)
    if not np.allclose(A, np.swapaxes(A, 1, 2)):
        raise OperatorError("coefficient matrix a is not symmetric")
    ev = np.linalg.eigvalsh(A)
    lo = ev[:, 0]
    k = int(np.argmin(lo))
    if lo[k] <= 0:
        node = tuple(int(i) for i in np.unravel_index(k, grid.shape))
        raise EllipticityError(node, float(lo[k]))
    return float(lo.min()), float(ev[:, -1].max())


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of ``-L0 u = lam*c*u + <M grad u, grad u> + h`` in the domain, ``u = g`` on its boundary.

    ``M`` is ``mu * I`` unless ``m_diag`` (shape ``(d, *grid.shape)``) is given.
    ``reaction_mu`` marks the semilinear form produced by the exponential
    transform, ``-L0 v = lam*c*(1+mu v) log(1+mu v)/mu + (1+mu v) h``.
    """

    grid: Grid
    coeffs: OperatorCoefficients
    c: np.ndarray
    mu: np.ndarray
    h: np.ndarray
    g: np.ndarray
    lam: float = 0.0
    m_diag: np.ndarray | None = None
    upwind: bool = False
    cross_stencil: str = "nine-point"
    gradient_scheme: str = "central"
    reaction_mu: float | None = None
    mu_bound: float | None = None

    def __post_init__(self):
        if self.cross_stencil not in ("nine-point", "seven-point"):
            raise OperatorError(f"unknown cross stencil {self.cross_stencil!r}")
        if self.gradient_scheme not in ("central", "exponential"):
            raise OperatorError(f"unknown gradient scheme {self.gradient_scheme!r}")
        for name in ("c", "mu", "h", "g"):
            arr = getattr(self, name)
            if arr.shape != self.grid.shape or not np.all(np.isfinite(arr)):
                raise OperatorError(f"field {name} must be finite with shape {self.grid.shape}")
        if self.mu_bound is not None and np.max(np.abs(self.M)) > self.mu_bound:
            raise OperatorError(f"|M| exceeds declared bound {self.mu_bound}")
        if self.gradient_scheme == "exponential":
            self.exponential_mu  # validates

    def with_lambda(self, lam: float) -> "ProblemSpec":
        new = replace(self, lam=float(lam))
        # assembly does not depend on lam
        if "discrete" in self.__dict__:
            new.__dict__["discrete"] = self.__dict__["discrete"]
        return new

    @property
    def M(self) -> np.ndarray:
        if self.m_diag is not None:
            return self.m_diag
        return np.broadcast_to(self.mu, (self.grid.dimension,) + self.grid.shape)

    @property
    def support_c(self) -> np.ndarray:
        return np.abs(self.c) > 0

    @cached_property
    def exponential_mu(self) -> float:
        """The constant ``mu0`` with ``M = mu0 * a``; required by the exponential scheme."""
        d = self.grid.dimension
        a = self.coeffs.a
        for i in range(d):
            for j in range(d):
                if i != j and np.any(a[i, j] != 0):
                    raise OperatorError("exponential scheme needs a diagonal coefficient matrix")
        ratio = self.M / np.stack([a[k, k] for k in range(d)])
        mu0 = float(ratio.flat[0])
        if not np.allclose(ratio, mu0, rtol=1e-12, atol=1e-14):
            raise OperatorError("exponential scheme needs M = mu0 * a with constant mu0")
        return mu0

    @cached_property
    def discrete(self) -> "Discretization":
        return Discretization(self)


def make_problem(
    grid: Grid,
    a: FieldLike | list = 1.0,
    b: FieldLike | list = 0.0,
    c: FieldLike = 0.0,
    mu: FieldLike = 0.0,
    h: FieldLike = 0.0,
    g: FieldLike = 0.0,
    lam: float = 0.0,
    m_diag: list | None = None,
    **options,
) -> ProblemSpec:
    """Convenience constructor sampling every field on ``grid``."""
    coeffs = a if isinstance(a, OperatorCoefficients) else OperatorCoefficients.build(grid, a, b)
    md = None if m_diag is None else np.stack([sample(grid, m) for m in m_diag])
    return ProblemSpec(
        grid=grid,
        coeffs=coeffs,
        c=sample(grid, c),
        mu=sample(grid, mu),
        h=sample(grid, h),
        g=sample(grid, g),
        lam=float(lam),
        m_diag=md,
        **options,
    )


# --------------------------------------------------------------------------
# sparse assembly
# --------------------------------------------------------------------------


def _shift(n: int, k: int) -> sp.csr_matrix:
    """(S u)_i = u_{i+k}."""
    return sp.eye(n, n, k, format="csr")


def _axis_op(grid: Grid, axis: int, op1d: sp.spmatrix) -> sp.csr_matrix:
    mats = [sp.identity(n, format="csr") for n in grid.counts]
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out.tocsr()


@dataclass(eq=False)
class SparseSystem:
    """Square system over interior nodes with the Dirichlet lifting applied."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: Grid
    interior: np.ndarray = field(repr=False)
    boundary: np.ndarray | None = field(default=None, repr=False)


class Discretization:
    """Difference operators of one ProblemSpec (independent of ``lam``)."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        grid = spec.grid
        self.grid = grid
        self.I = grid.interior_index
        self.B = np.flatnonzero(~grid.interior.ravel())
        d = grid.dimension
        hs = grid.spacing
        a, b = spec.coeffs.a, spec.coeffs.b

        if not spec.upwind:
            lam_min = check_ellipticity(spec.coeffs, grid)[0]
            for k in range(d):
                pe = hs[k] * np.max(np.abs(b[k])) / (2 * lam_min)
                if pe >= 1:
                    raise PecletError(
                        f"cell Peclet number {pe:.3g} >= 1 on axis {k}; refine the mesh or enable upwinding"
                    )

        diag = lambda f: sp.diags(f.ravel())  # noqa: E731
        D1, Dfwd, Dbwd = [], [], []
        L = sp.csr_matrix((grid.size, grid.size))
        for k in range(d):
            n, hk = grid.counts[k], hs[k]
            Sp, Sm, Id = _shift(n, 1), _shift(n, -1), sp.identity(n, format="csr")
            D1.append(_axis_op(grid, k, (Sp - Sm) / (2 * hk)))
            Dfwd.append(_axis_op(grid, k, (Sp - Id) / hk))
            Dbwd.append(_axis_op(grid, k, (Id - Sm) / hk))
            D2 = _axis_op(grid, k, (Sp - 2 * Id + Sm) / hk**2)
            L = L + diag(a[k, k]) @ D2
            if spec.upwind:
                L = L + diag(np.maximum(b[k], 0)) @ Dfwd[k] + diag(np.minimum(b[k], 0)) @ Dbwd[k]
            else:
                L = L + diag(b[k]) @ D1[k]
        if d == 2:
            a01 = 0.5 * (a[0, 1] + a[1, 0])
            if np.any(a01 != 0):
                L = L + self._cross(a01)
        self.L_full = L.tocsr()[self.I]
        self.D1 = [D.tocsr()[self.I] for D in D1]
        self.L_II = self.L_full[:, self.I].tocsr()
        self.L_norm = float(abs(self.L_full).sum(axis=1).max())
        self.L_IB = self.L_full[:, self.B].tocsr()
        coo = self.L_full.tocoo()
        rows_global = self.I[coo.row]
        off = rows_global != coo.col
        self.off_rows = coo.row[off]
        self.off_cols = coo.col[off]
        self.off_vals = coo.data[off]

    def _cross(self, a01: np.ndarray) -> sp.csr_matrix:
        grid = self.grid
        (n0, n1), (h0, h1) = grid.counts, grid.spacing
        diag = lambda f: sp.diags(f.ravel())  # noqa: E731
        S0p, S0m = _shift(n0, 1), _shift(n0, -1)
        S1p, S1m = _shift(n1, 1), _shift(n1, -1)
        I0, I1 = sp.identity(n0), sp.identity(n1)
        if self.spec.cross_stencil == "nine-point":
            Dxy = sp.kron((S0p - S0m) / (2 * h0), (S1p - S1m) / (2 * h1))
            return diag(2 * a01) @ Dxy
        # seven-point: corners chosen by the sign of a01 so off-diagonals keep their sign
        ax = sp.kron(S0p + S0m, I1) + sp.kron(I0, S1p + S1m)
        Id = sp.identity(n0 * n1)
        P = (sp.kron(S0p, S1p) + sp.kron(S0m, S1m) + 2 * Id - ax) / (2 * h0 * h1)
        N = (-sp.kron(S0p, S1m) - sp.kron(S0m, S1p) - 2 * Id + ax) / (2 * h0 * h1)
        return diag(2 * np.maximum(a01, 0)) @ P + diag(2 * np.minimum(a01, 0)) @ N

    def full(self, u_int: np.ndarray) -> np.ndarray:
        u = self.spec.g.ravel().copy()
        u[self.I] = u_int
        return u


def assemble_linear(spec: ProblemSpec) -> SparseSystem:
    """Matrix of ``-L0 - lam*c`` on interior nodes and the lifted right-hand side ``h``."""
    D = spec.discrete
    c_I = spec.c.ravel()[D.I]
    A = (-D.L_II - sp.diags(spec.lam * c_I)).tocsr()
    rhs = spec.h.ravel()[D.I] + D.L_IB @ spec.g.ravel()[D.B]
    return SparseSystem(A, rhs, spec.grid, D.I, spec.g.copy())


# --------------------------------------------------------------------------
# matrix-free stencil
# --------------------------------------------------------------------------


def _stencil(spec: ProblemSpec):
    """Yield ``(offset, coefficient on the interior block)`` pairs of ``L_h``.

    Coefficients of the neighbours only; ``L_h`` has zero row sums so the
    centre coefficient is implied when the stencil acts on differences.
    """
    grid = spec.grid
    d = grid.dimension
    hs = grid.spacing
    inner = tuple(slice(1, -1) for _ in range(d))
    a = spec.coeffs.a[(slice(None), slice(None)) + inner]
    b = spec.coeffs.b[(slice(None),) + inner]
    acc: dict[tuple[int, ...], np.ndarray] = {}

    def add(off, coef):
        acc[off] = acc.get(off, 0.0) + coef

    for k in range(d):
        e = [0] * d
        e[k] = 1
        ep, em = tuple(e), tuple(-x for x in e)
        add(ep, a[k, k] / hs[k] ** 2)
        add(em, a[k, k] / hs[k] ** 2)
        if spec.upwind:
            add(ep, np.maximum(b[k], 0) / hs[k])
            add(em, -np.minimum(b[k], 0) / hs[k])
        else:
            add(ep, b[k] / (2 * hs[k]))
            add(em, -b[k] / (2 * hs[k]))
    if d == 2:
        a01 = 0.5 * (a[0, 1] + a[1, 0])
        h2 = hs[0] * hs[1]
        if spec.cross_stencil == "nine-point":
            for off, s in (((1, 1), 1), ((-1, -1), 1), ((1, -1), -1), ((-1, 1), -1)):
                add(off, s * a01 / (2 * h2))
        else:
            pos, neg = np.maximum(a01, 0) / h2, np.minimum(a01, 0) / h2
            add((1, 1), pos)
            add((-1, -1), pos)
            add((1, -1), -neg)
            add((-1, 1), -neg)
            for off in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                add(off, -pos + neg)
    return acc.items()


def _shifted(u: np.ndarray, off: tuple[int, ...]) -> np.ndarray:
    return u[tuple(slice(1 + o, u.shape[k] - 1 + o) for k, o in enumerate(off))]


def apply_stencil(spec: ProblemSpec, u: np.ndarray, fn=None) -> np.ndarray:
    """``sum_j L_ij fn(u_j - u_i)`` on the interior block (``fn`` defaults to identity)."""
    centre = _shifted(u, (0,) * u.ndim)
    out = np.zeros(centre.shape)
    for off, coef in _stencil(spec):
        diff = _shifted(u, off) - centre
        out += coef * (diff if fn is None else fn(diff))
    return out


def _psi(mu0: float):
    if mu0 == 0:
        return None
    return lambda d: np.expm1(mu0 * d) / mu0


def _phi(v: np.ndarray, mu0: float) -> np.ndarray:
    """``(1 + mu v) log(1 + mu v) / mu``, the transformed reaction."""
    w = mu0 * v
    return (1 + w) * np.log1p(w) / mu0


def apply_L(spec: ProblemSpec, u: GridFunction | np.ndarray) -> GridFunction:
    """``L0 u`` on interior nodes; boundary nodes copy the nearest interior value."""
    vals = np.asarray(u, dtype=float).reshape(spec.grid.shape)
    inner = apply_stencil(spec, vals)
    pad = np.pad(inner, 1, mode="edge")
    return GridFunction(spec.grid, pad)


def _check_boundary(spec: ProblemSpec, u: np.ndarray):
    bmask = ~spec.grid.interior
    err = np.abs(u[bmask] - spec.g[bmask])
    if err.size and err.max() > BOUNDARY_TOL:
        k = int(np.argmax(err))
        node = tuple(int(i) for i in np.argwhere(bmask)[k])
        raise BoundaryDataError(f"boundary value mismatch {err[k]:.3e} at node {node}")


def _residual_block(spec: ProblemSpec, u: np.ndarray, lam: float) -> np.ndarray:
    """Matrix-free residual on the interior block of the full field ``u``."""
    grid = spec.grid
    inner = tuple(slice(1, -1) for _ in range(grid.dimension))
    uc = u[inner]
    c, h = spec.c[inner], spec.h[inner]
    if spec.reaction_mu is not None:
        m0 = spec.reaction_mu
        return -apply_stencil(spec, u) - lam * c * _phi(uc, m0) - h * (1 + m0 * uc)
    if spec.gradient_scheme == "exponential":
        return -apply_stencil(spec, u, _psi(spec.exponential_mu)) - lam * c * uc - h
    F = -apply_stencil(spec, u) - lam * c * uc - h
    M = spec.M[(slice(None),) + inner]
    for k in range(grid.dimension):
        e = [0] * grid.dimension
        e[k] = 1
        grad = (_shifted(u, tuple(e)) - _shifted(u, tuple(-x for x in e))) / (2 * grid.spacing[k])
        F -= M[k] * grad**2
    return F


def residual(spec: ProblemSpec, u: GridFunction) -> GridFunction:
    """Nonlinear residual ``-L0 u - lam c u - <M grad u, grad u> - h`` (zero on the boundary)."""
    vals = np.asarray(u, dtype=float).reshape(spec.grid.shape)
    _check_boundary(spec, vals)
    out = np.zeros(spec.grid.shape)
    out[tuple(slice(1, -1) for _ in range(spec.grid.dimension))] = _residual_block(spec, vals, spec.lam)
    return GridFunction(spec.grid, out)


def pointwise_residual(spec: ProblemSpec, u: GridFunction | np.ndarray) -> np.ndarray:
    """Residual at interior nodes of any field (boundary values are not checked)."""
    vals = np.asarray(u, dtype=float).reshape(spec.grid.shape)
    out = np.zeros(spec.grid.shape)
    out[tuple(slice(1, -1) for _ in range(spec.grid.dimension))] = _residual_block(spec, vals, spec.lam)
    return out


def residual_vector(spec: ProblemSpec, u_int: np.ndarray, lam: float | None = None) -> np.ndarray:
    """Matrix-free residual as a vector over interior nodes (C order)."""
    lam = spec.lam if lam is None else lam
    u = spec.discrete.full(u_int).reshape(spec.grid.shape)
    return _residual_block(spec, u, lam).ravel()


def residual_assembled(spec: ProblemSpec, u_int: np.ndarray, lam: float | None = None) -> np.ndarray:
    """Same residual through the sparse matrices; used as an independent check."""
    lam = spec.lam if lam is None else lam
    D = spec.discrete
    u = D.full(u_int)
    c, h = spec.c.ravel()[D.I], spec.h.ravel()[D.I]
    if spec.reaction_mu is not None:
        m0 = spec.reaction_mu
        return -(D.L_full @ u) - lam * c * _phi(u_int, m0) - h * (1 + m0 * u_int)
    if spec.gradient_scheme == "exponential":
        mu0 = spec.exponential_mu
        diff = u[D.off_cols] - u[D.I[D.off_rows]]
        val = diff if mu0 == 0 else np.expm1(mu0 * diff) / mu0
        Lpsi = np.bincount(D.off_rows, weights=D.off_vals * val, minlength=D.I.size)
        return -Lpsi - lam * c * u_int - h
    F = -(D.L_full @ u) - lam * c * u_int - h
    M = spec.M.reshape(spec.grid.dimension, -1)[:, D.I]
    for k, Dk in enumerate(D.D1):
        F -= M[k] * (Dk @ u) ** 2
    return F


def residual_floor(spec: ProblemSpec, u_int: np.ndarray, lam: float | None = None) -> float:
    """Size of the rounding error in one residual evaluation at ``u``.

    Second differences of values of size ``|u|`` cost ``eps * ||L_h|| * |u|``;
    absolute tolerances below this cannot be met in double precision.
    """
    lam = spec.lam if lam is None else lam
    usup = float(np.max(np.abs(u_int), initial=0.0))
    zero = abs(lam) * float(np.max(np.abs(spec.c))) * usup + float(np.max(np.abs(spec.h)))
    return 4 * np.finfo(float).eps * (spec.discrete.L_norm * usup + zero)


def jacobian_matrix(spec: ProblemSpec, u_int: np.ndarray, lam: float | None = None) -> sp.csr_matrix:
    lam = spec.lam if lam is None else lam
    D = spec.discrete
    c = spec.c.ravel()[D.I]
    if spec.reaction_mu is not None:
        m0 = spec.reaction_mu
        h = spec.h.ravel()[D.I]
        dphi = np.log1p(m0 * u_int) + 1
        return (-D.L_II - sp.diags(lam * c * dphi + m0 * h)).tocsr()
    if spec.gradient_scheme == "exponential" and spec.exponential_mu != 0:
        mu0 = spec.exponential_mu
        u = D.full(u_int)
        w = D.off_vals * np.exp(mu0 * (u[D.off_cols] - u[D.I[D.off_rows]]))
        diag = np.bincount(D.off_rows, weights=w, minlength=D.I.size) - lam * c
        pos = np.full(spec.grid.size, -1)
        pos[D.I] = np.arange(D.I.size)
        col = pos[D.off_cols]
        keep = col >= 0
        J = sp.coo_matrix((-w[keep], (D.off_rows[keep], col[keep])), shape=(D.I.size,) * 2)
        return (J + sp.diags(diag)).tocsr()
    J = -D.L_II - sp.diags(lam * c)
    if spec.gradient_scheme == "central":
        u = D.full(u_int)
        M = spec.M.reshape(spec.grid.dimension, -1)[:, D.I]
        for k, Dk in enumerate(D.D1):
            J = J - sp.diags(2 * M[k] * (Dk @ u)) @ Dk[:, D.I]
    return J.tocsr()


def jacobian(spec: ProblemSpec, u: GridFunction) -> SparseSystem:
    """Frechet derivative of the residual at ``u`` (rhs holds ``-F(u)``)."""
    vals = np.asarray(u, dtype=float).ravel()
    _check_boundary(spec, vals.reshape(spec.grid.shape))
    D = spec.discrete
    u_int = vals[D.I]
    return SparseSystem(jacobian_matrix(spec, u_int), -residual_vector(spec, u_int), spec.grid, D.I)


def dF_dlambda(spec: ProblemSpec, u_int: np.ndarray) -> np.ndarray:
    c = spec.c.ravel()[spec.discrete.I]
    if spec.reaction_mu is not None:
        return -c * _phi(u_int, spec.reaction_mu)
    return -c * u_int
