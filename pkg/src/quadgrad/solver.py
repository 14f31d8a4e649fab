"""Damped and deflated Newton iterations for the discrete problem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridFunction
from .operators import (
    ProblemSpec,
    SparseSystem,
    _check_boundary,
    jacobian_matrix,
    residual_assembled,
    residual_floor,
    residual_vector,
)

log = logging.getLogger(__name__)

OVERFLOW = 700.0
SUP_LIMIT = 1e6

CONVERGED = "converged"
DIVERGED = "diverged"
BLOWUP = "blowup-detected"


class SingularMatrixError(RuntimeError):
    def __init__(self, pivot: float, scale: float):
        super().__init__(f"singular matrix: smallest pivot {pivot:.3e} (matrix scale {scale:.3e})")
        self.pivot = pivot


class NoNewSolution(RuntimeError):
    """Deflated Newton exhausted its restarts without a new root."""


@dataclass
class Solution:
    u: GridFunction
    lam: float
    residual: float
    iterations: int
    status: str
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def sup(self) -> float:
        return float(np.max(self.u.values))

    def quadratic_ratio(self) -> float:
        """``r_{k+1} / r_k^2`` over the last two nonzero residuals."""
        r = [x for x in self.history if x > 0]
        if len(r) < 2:
            return 0.0
        return r[-1] / r[-2] ** 2


def factorize(A: sp.spmatrix):
    """Sparse LU with an explicit pivot-size check."""
    A = sp.csc_matrix(A)
    scale = float(abs(A).max()) if A.nnz else 0.0
    try:
        lu = spla.splu(A)
    except RuntimeError:
        raise SingularMatrixError(0.0, scale) from None
    pivot = float(np.min(np.abs(lu.U.diagonal())))
    if pivot < 1e-14 * scale:
        raise SingularMatrixError(pivot, scale)
    return lu


def solve_sparse(A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    lu = factorize(A)
    x = lu.solve(b)
    # one step of iterative refinement
    x += lu.solve(b - A @ x)
    return x


def linear_solve(system: SparseSystem) -> GridFunction:
    """Direct solve of an assembled system, embedded back into the grid."""
    x = solve_sparse(system.matrix, system.rhs)
    vals = np.zeros(system.grid.size) if system.boundary is None else system.boundary.ravel().copy()
    vals[system.interior] = x
    return GridFunction(system.grid, vals)


def _blown_up(spec: ProblemSpec, u_int: np.ndarray) -> bool:
    if not np.all(np.isfinite(u_int)):
        return True
    mu = spec.M.reshape(spec.grid.dimension, -1)[:, spec.discrete.I].max(axis=0)
    if spec.reaction_mu is not None:
        mu = np.zeros_like(mu)
    return bool(np.max(mu * u_int, initial=0.0) > OVERFLOW or np.max(np.abs(u_int), initial=0.0) > SUP_LIMIT)


def _to_solution(spec, u_int, lam, res, it, status, hist) -> Solution:
    u = spec.discrete.full(np.where(np.isfinite(u_int), u_int, 0.0))
    return Solution(GridFunction(spec.grid, u), float(lam), float(res), it, status, hist)


def _sq(F: np.ndarray) -> float:
    with np.errstate(over="ignore"):
        return float(F @ F)


def _safe_residual(spec, x, lam):
    with np.errstate(over="ignore", invalid="ignore"):
        F = residual_vector(spec, x, lam)
    return F if np.all(np.isfinite(F)) else None


def effective_tol(spec: ProblemSpec, u_int: np.ndarray, lam: float, tol: float) -> float:
    """``tol`` raised to the rounding floor of the residual at ``u``."""
    return max(tol, residual_floor(spec, u_int, lam))


def newton(
    spec: ProblemSpec,
    u0: GridFunction,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> Solution:
    """Newton with Armijo backtracking (factor 1/2, smallest step 2**-20).

    Convergence is declared when both the matrix-free and the assembled
    residuals are below ``tol`` in the sup norm.  For large ``u`` on fine
    grids ``tol`` is raised to the residual's rounding floor
    (:func:`quadgrad.operators.residual_floor`).
    """
    vals = np.asarray(u0, dtype=float).reshape(spec.grid.shape)
    _check_boundary(spec, vals)
    lam = spec.lam
    x = vals.ravel()[spec.discrete.I].copy()
    hist: list[float] = []
    F = _safe_residual(spec, x, lam)
    if F is None:
        return _to_solution(spec, x, lam, np.inf, 0, BLOWUP, hist)
    for it in range(max_iter + 1):
        r = float(np.max(np.abs(F), initial=0.0))
        hist.append(r)
        tol_k = effective_tol(spec, x, lam, tol)
        if r <= tol_k:
            r_check = float(np.max(np.abs(residual_assembled(spec, x, lam)), initial=0.0))
            if r_check <= tol_k:
                return _to_solution(spec, x, lam, max(r, r_check), it, CONVERGED, hist)
        if _blown_up(spec, x):
            return _to_solution(spec, x, lam, r, it, BLOWUP, hist)
        if it == max_iter:
            break
        delta = solve_sparse(jacobian_matrix(spec, x, lam), -F)
        f0 = float(F @ F)
        t = 1.0
        while t >= 2.0**-20:
            xn = x + t * delta
            Fn = _safe_residual(spec, xn, lam)
            if Fn is not None and _sq(Fn) <= (1 - 1e-4 * t) ** 2 * f0:
                break
            t /= 2
        else:
            if _blown_up(spec, x + delta):
                return _to_solution(spec, x, lam, r, it + 1, BLOWUP, hist)
            log.debug("line search failed at iteration %d (residual %.3e)", it, r)
            return _to_solution(spec, x, lam, r, it + 1, DIVERGED, hist)
        x, F = xn, Fn
    return _to_solution(spec, x, lam, hist[-1], max_iter, DIVERGED, hist)


@dataclass(frozen=True)
class DeflationSet:
    """Known roots at one ``lam`` and the shifted-norm deflation parameters."""

    solutions: tuple[Solution, ...] = ()
    power: float = 2.0
    shift: float = 1.0
    separation: float = 1e-4

    def __post_init__(self):
        if self.solutions:
            lam = self.solutions[0].lam
            for s in self.solutions:
                if not s.converged or s.lam != lam:
                    raise ValueError("deflation members must be converged roots at one lambda")
            for i, s in enumerate(self.solutions):
                for t in self.solutions[:i]:
                    if np.max(np.abs(s.u.values - t.u.values)) <= self.separation:
                        raise ValueError("deflation members are not distinct")

    def add(self, sol: Solution) -> "DeflationSet":
        return DeflationSet(self.solutions + (sol,), self.power, self.shift, self.separation)

    def distance(self, u: np.ndarray) -> float:
        """Sup-distance from the closest member (``inf`` if empty)."""
        return min(
            (float(np.max(np.abs(u - s.u.values.ravel()))) for s in self.solutions),
            default=np.inf,
        )


def _deflation(defl: DeflationSet, x: np.ndarray, knowns: list[np.ndarray], w: float):
    """Deflation factor ``eta(x)`` and ``grad(log eta)``."""
    eta = 1.0
    glog = np.zeros_like(x)
    p, s = defl.power, defl.shift
    for k in knowns:
        d = x - k
        n2 = w * float(d @ d)
        if n2 == 0:
            return np.inf, glog
        m = n2 ** (-p / 2) + s
        eta *= m
        glog += -p * n2 ** (-p / 2 - 1) * w * d / m
    return eta, glog


def deflated_newton(
    spec: ProblemSpec,
    deflation: DeflationSet,
    u0: GridFunction | Sequence[GridFunction],
    tol: float = 1e-10,
    max_iter: int = 100,
) -> Solution:
    """Newton on ``eta(u) F(u)`` with ``eta = prod_k (||u - u_k||^-p + shift)``.

    ``u0`` may be a list of initial guesses tried in order (restarts).  The
    returned solution is a root of the undeflated residual that is farther
    than ``deflation.separation`` from every known root.
    """
    guesses = [u0] if isinstance(u0, GridFunction) else list(u0)
    if not deflation.solutions:
        for g in guesses:
            sol = newton(spec, g, tol, max_iter)
            if sol.converged:
                return sol
        raise NoNewSolution("newton failed from every initial guess")
    D = spec.discrete
    knowns = [s.u.values.ravel()[D.I] for s in deflation.solutions]
    w = float(np.prod(spec.grid.spacing))
    lam = spec.lam
    for attempt, g in enumerate(guesses):
        vals = np.asarray(g, dtype=float).reshape(spec.grid.shape)
        _check_boundary(spec, vals)
        x = vals.ravel()[D.I].copy()
        hist: list[float] = []
        F = _safe_residual(spec, x, lam)
        status = DIVERGED
        for it in range(max_iter + 1):
            if F is None:
                break
            r = float(np.max(np.abs(F), initial=0.0))
            hist.append(r)
            tol_k = effective_tol(spec, x, lam, tol)
            if r <= tol_k:
                full = D.full(x)
                if deflation.distance(full) <= deflation.separation:
                    log.debug("attempt %d returned to a known root", attempt)
                    break
                r_check = float(np.max(np.abs(residual_assembled(spec, x, lam)), initial=0.0))
                if r_check <= tol_k:
                    return _to_solution(spec, x, lam, max(r, r_check), it, CONVERGED, hist)
            if _blown_up(spec, x):
                status = BLOWUP
                break
            if it == max_iter:
                break
            try:
                dN = solve_sparse(jacobian_matrix(spec, x, lam), -F)
            except SingularMatrixError:
                break
            eta, glog = _deflation(deflation, x, knowns, w)
            denom = 1.0 - float(glog @ dN)
            tau = 1.0 / denom if abs(denom) > 1e-12 else 1.0
            delta = tau * dN
            f0 = eta**2 * float(F @ F)
            t = 1.0
            while t >= 2.0**-20:
                xn = x + t * delta
                Fn = _safe_residual(spec, xn, lam)
                if Fn is not None:
                    en, _ = _deflation(deflation, xn, knowns, w)
                    if en**2 * _sq(Fn) <= (1 - 1e-4 * t) ** 2 * f0:
                        break
                t /= 2
            else:
                break
            x, F = xn, Fn
        log.debug("deflation attempt %d ended with status %s", attempt, status)
    raise NoNewSolution(f"no new solution found after {len(guesses)} initial guesses")


def bump(grid, amplitude: float) -> np.ndarray:
    """``amplitude * prod_k 4 x_k (L_k - x_k) / L_k^2`` (unit peak)."""
    out = np.ones(grid.shape)
    for x, L in zip(grid.coords, grid.extents):
        out = out * 4 * x * (L - x) / L**2
    return amplitude * out


def seeded_guesses(base: Solution, amplitudes: Sequence[float] = (1.0, 5.0, 25.0)) -> list[GridFunction]:
    """Additive bump seeds around a known solution, for deflated restarts."""
    grid = base.u.grid
    return [GridFunction(grid, base.u.values + bump(grid, a)) for a in amplitudes]
