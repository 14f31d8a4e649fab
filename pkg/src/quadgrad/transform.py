"""Exponential changes of the dependent variable and the shift to nonnegative data.

Positive case: ``v = (exp(mu u) - 1) / mu``.  Negative case:
``v = (1 - exp(-mu1 u)) / mu1`` with ``mu1 = |mu|``, so ``v < 1/mu1`` and ``v``
still increases with ``u``.  Both are ``(exp(s u) - 1)/s`` for the signed
exponent ``s`` (``s = mu`` resp. ``s = -mu1``).

The negative-case formula is often printed as ``mu1^-1 (1 - exp(mu_i u))``;
the index and sign there are inconsistent with ``v < 1`` and monotonicity, and
the convention above is the one implemented.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .grid import GridFunction
from .operators import OperatorCoefficients, ProblemSpec, _phi, assemble_linear
from .solver import OVERFLOW, SingularMatrixError, linear_solve

IDENTITY_BELOW = 1e-8


class TransformOverflow(ArithmeticError):
    """``exp`` argument beyond the double-precision range: a blow-up signal."""

    def __init__(self, node, value):
        super().__init__(f"exponent {value:.1f} exceeds {OVERFLOW} at node {node}")
        self.node = node


class TransformDomainError(ValueError):
    def __init__(self, node, value):
        super().__init__(f"1 + s*v = {value:.3e} <= 0 at node {node}")
        self.node = node


@dataclass(frozen=True)
class TransformSpec:
    mu: float
    direction: str = "positive"

    def __post_init__(self):
        if self.direction not in ("positive", "negative"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.mu == 0:
            raise ValueError("transform exponent must be nonzero")

    @property
    def exponent(self) -> float:
        """Signed exponent ``s`` in ``v = (exp(s u) - 1)/s``."""
        return self.mu if self.direction == "positive" else -abs(self.mu)

    @property
    def is_identity(self) -> bool:
        return abs(self.mu) < IDENTITY_BELOW


def _node(grid, flat):
    return tuple(int(i) for i in np.unravel_index(int(flat), grid.shape))


def forward(u: GridFunction, t: TransformSpec) -> GridFunction:
    if t.is_identity:
        warnings.warn(f"|mu| = {abs(t.mu):.1e} below {IDENTITY_BELOW}; using the identity", stacklevel=2)
        return GridFunction(u.grid, u.values.copy())
    s = t.exponent
    arg = s * u.values
    k = int(np.argmax(arg))
    if arg.flat[k] > OVERFLOW:
        raise TransformOverflow(_node(u.grid, k), float(arg.flat[k]))
    return GridFunction(u.grid, np.expm1(arg) / s)


def inverse(v: GridFunction, t: TransformSpec) -> GridFunction:
    if t.is_identity:
        warnings.warn(f"|mu| = {abs(t.mu):.1e} below {IDENTITY_BELOW}; using the identity", stacklevel=2)
        return GridFunction(v.grid, v.values.copy())
    s = t.exponent
    arg = 1 + s * v.values
    k = int(np.argmin(arg))
    if arg.flat[k] <= 0:
        raise TransformDomainError(_node(v.grid, k), float(arg.flat[k]))
    return GridFunction(v.grid, np.log1p(s * v.values) / s)


def transformed_reaction(v, t: TransformSpec) -> np.ndarray:
    """``(1 + s v) log(1 + s v) / s``; multiplied by ``lam c`` it is the reaction of the transformed problem."""
    return _phi(np.asarray(v, dtype=float), t.exponent)


def transformed_problem(spec: ProblemSpec, t: TransformSpec) -> ProblemSpec:
    """Semilinear problem solved by ``forward(u)`` when ``u`` solves ``spec``.

    ``-L0 v = lam c (1 + s v) log(1 + s v)/s + (1 + s v) h`` with ``v = g_v`` on
    the boundary.  Requires ``M = s * a`` with ``s`` constant (for ``a = I``
    this is ``M = mu I``).  With the ``"exponential"`` gradient scheme the
    correspondence of discrete residuals is exact, with ``"central"`` it holds
    up to O(h^2).
    """
    if spec.reaction_mu is not None:
        raise ValueError("problem is already in transformed form")
    mu0 = spec.exponential_mu  # raises unless M = mu0 * a, mu0 constant
    s = t.exponent
    if not np.isclose(mu0, s, rtol=1e-12, atol=0):
        raise ValueError(f"transform exponent {s} does not match the gradient coefficient {mu0}")
    g_v = forward(GridFunction(spec.grid, spec.g), t).values
    return replace(
        spec,
        mu=np.zeros(spec.grid.shape),
        m_diag=None,
        g=g_v,
        gradient_scheme="central",
        reaction_mu=s,
        mu_bound=None,
    )


def derived_exponent(t1: TransformSpec, t2: TransformSpec) -> float:
    """``A = mu2 / mu1`` linking ``v2 ~ v1**A`` for large ``u``."""
    if t1.direction != "positive" or t2.direction != "positive":
        raise ValueError("derived exponent is defined for positive-case transforms")
    if t1.mu <= 0:
        raise ValueError("mu1 must be positive")
    if t2.mu < t1.mu:
        raise ValueError("expected mu1 <= mu2")
    return t2.mu / t1.mu


def reduce_to_positive(spec: ProblemSpec) -> tuple[ProblemSpec, GridFunction]:
    """Shift ``u = psi + v`` where ``-L0 psi = lam c psi + h``, ``psi = g`` on the boundary.

    Expanding ``<M grad(psi + v), grad(psi + v)>`` gives the problem for ``v``:
    drift ``b + 2 M grad psi``, source ``<M grad psi, grad psi>`` (nonnegative
    when ``M >= 0``) and zero boundary data.  Gradients of ``psi`` use the same
    central differences as the residual, so for the central scheme the
    equivalence is exact at the discrete level.
    """
    try:
        psi = linear_solve(assemble_linear(spec))
    except SingularMatrixError as exc:
        raise SingularMatrixError(exc.pivot, 1.0) from exc
    grid = spec.grid
    grads = np.stack(np.gradient(psi.values, *grid.spacing, edge_order=2)) if grid.dimension > 1 else np.gradient(
        psi.values, grid.spacing[0], edge_order=2
    )[None]
    M = np.array(spec.M)
    b_new = spec.coeffs.b + 2 * M * grads
    h_new = np.sum(M * grads**2, axis=0)
    reduced = replace(
        spec,
        coeffs=OperatorCoefficients(spec.coeffs.a.copy(), b_new),
        h=h_new,
        g=np.zeros(grid.shape),
        gradient_scheme="central",
    )
    return reduced, psi
