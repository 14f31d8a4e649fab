"""Pseudo-arclength continuation in ``lam``, fold detection and diagram classes.

The unknown is ``(u, lam)`` with the discrete L2 inner product on ``u``.
Tangents come from the bordered system

    [ J        dF/dlam ] [z]   [0]
    [ t_u^T W  t_lam   ] [s] = [1]

so they stay well defined at turning points, and the corrector solves
``F = 0`` together with the arclength constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import GridFunction
from .operators import ProblemSpec, dF_dlambda, jacobian_matrix, residual_assembled, residual_vector
from .solver import (
    CONVERGED,
    OVERFLOW,
    SUP_LIMIT,
    SingularMatrixError,
    Solution,
    _blown_up,
    factorize,
    newton,
    effective_tol,
    solve_sparse,
)

log = logging.getLogger(__name__)

FIRST = "first"  # fold to the right, upper branch blows up as lam -> 0+
SECOND = "second"  # monotone branch blowing up at lam_1
THIRD = "third"  # monotone branch continuing boundedly past lam_1
INCONCLUSIVE = "inconclusive"


class ContinuationError(RuntimeError):
    pass


@dataclass
class BranchPoint:
    s: float
    lam: float
    m_u: float
    sup_u: float
    solution: Solution
    t_lam: float = 0.0


@dataclass
class Branch:
    points: list[BranchPoint]
    termination: str
    observation: tuple[int, ...]
    lambda1: float | None = None
    folds: list[tuple[int, float]] = field(default_factory=list)

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def m_u(self) -> np.ndarray:
        return np.array([p.m_u for p in self.points])

    @property
    def sup_u(self) -> np.ndarray:
        return np.array([p.sup_u for p in self.points])

    @property
    def s(self) -> np.ndarray:
        return np.array([p.s for p in self.points])

    def restrict(self, lo: float, hi: float) -> list[BranchPoint]:
        return [p for p in self.points if lo - 1e-12 <= p.lam <= hi + 1e-12]


def principal_eigenvalue(spec: ProblemSpec, tol: float = 1e-12, max_iter: int = 1000) -> float:
    """Smallest ``lam`` with ``-L0 phi = lam c phi`` solvable, by inverse power iteration."""
    D = spec.discrete
    A = (-D.L_II).tocsc()
    c = spec.c.ravel()[D.I]
    if not np.any(c > 0):
        return np.inf
    lu = factorize(A)
    x = np.ones(D.I.size) / np.sqrt(D.I.size)
    lam_old = np.inf
    for _ in range(max_iter):
        y = lu.solve(c * x)
        lam = float(x @ y) / float(y @ y)
        x = y / np.linalg.norm(y)
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
    log.warning("inverse power iteration did not converge; returning last estimate")
    return lam


def _measure(spec: ProblemSpec, u_int: np.ndarray, obs: tuple[int, ...]) -> tuple[float, float]:
    full = spec.discrete.full(u_int).reshape(spec.grid.shape)
    return float(full[obs]), float(np.max(full))


def _is_blowup(spec: ProblemSpec, u_int: np.ndarray) -> bool:
    return _blown_up(spec, u_int)


def trace(
    spec: ProblemSpec,
    start: Solution,
    lam_range: tuple[float, float],
    ds: float = 0.1,
    ds_min: float = 1e-6,
    ds_max: float | None = None,
    max_steps: int = 5000,
    tol: float = 1e-10,
    observation: tuple[int, ...] | None = None,
    max_corrector: int = 12,
    lambda1: float | None = None,
) -> Branch:
    """Trace the solution branch through ``start`` while ``lam`` stays in ``lam_range``.

    The step halves on corrector failure (down to ``ds_min``) and grows by
    1.3 after three consecutive successes.  Points that would leave
    ``lam_range`` are replaced by a solve exactly at the range end.
    """
    if not start.converged:
        raise ContinuationError("start solution is not converged")
    if ds <= 0:
        raise ContinuationError("ds must be positive")
    lo, hi = lam_range
    D = spec.discrete
    grid = spec.grid
    obs = grid.centroid_node if observation is None else tuple(observation)
    w = float(np.prod(grid.spacing))
    n = D.I.size

    u = start.u.values.ravel()[D.I].copy()
    lam = float(start.lam)
    m, su = _measure(spec, u, obs)
    points = [BranchPoint(0.0, lam, m, su, start, 1.0)]

    # initial tangent, pointing towards increasing lam
    J = jacobian_matrix(spec, u, lam)
    z = solve_sparse(J, -dF_dlambda(spec, u))
    tu, tl = z, 1.0
    nrm = np.sqrt(w * tu @ tu + tl * tl)
    tu, tl = tu / nrm, tl / nrm
    if lam >= hi:
        tu, tl = -tu, -tl
    points[0].t_lam = tl

    s = 0.0
    successes = 0
    termination = "max-steps"
    first = True
    for _ in range(max_steps):
        accepted = None
        while ds >= ds_min:
            up, lp = u + ds * tu, lam + ds * tl
            x_u, x_l = up.copy(), lp
            ok = False
            for _it in range(max_corrector):
                with np.errstate(over="ignore", invalid="ignore"):
                    F = residual_vector(spec, x_u, x_l)
                if not np.all(np.isfinite(F)):
                    break
                g = w * tu @ (x_u - up) + tl * (x_l - lp)
                tol_k = effective_tol(spec, x_u, x_l, tol)
                if np.max(np.abs(F)) <= tol_k and abs(g) <= 1e-12 * max(1.0, ds):
                    ok = True
                    break
                J = jacobian_matrix(spec, x_u, x_l)
                Fl = dF_dlambda(spec, x_u)
                bord = sp.bmat([[J, Fl[:, None]], [w * tu[None, :], np.array([[tl]])]], format="csc")
                try:
                    delta = solve_sparse(bord, -np.append(F, g))
                except SingularMatrixError:
                    break
                x_u = x_u + delta[:n]
                x_l = x_l + delta[n]
                if not np.all(np.isfinite(x_u)):
                    break
            if ok:
                r_check = float(np.max(np.abs(residual_assembled(spec, x_u, x_l))))
                ok = r_check <= tol_k
            if ok:
                accepted = (x_u, x_l)
                break
            ds /= 2
            successes = 0
        if accepted is None:
            if first:
                raise ContinuationError("corrector failed at the first step")
            termination = "step-failure"
            break
        first = False
        x_u, x_l = accepted

        if x_l < lo or x_l > hi:
            lam_b = lo if x_l < lo else hi
            theta = (lam_b - lam) / (x_l - lam)
            guess = u + theta * (x_u - u)
            sol = newton(spec.with_lambda(lam_b), GridFunction(grid, D.full(guess)), tol)
            if sol.converged:
                ub = sol.u.values.ravel()[D.I]
                s += np.sqrt(w * (ub - u) @ (ub - u) + (lam_b - lam) ** 2)
                m, su = _measure(spec, ub, obs)
                points.append(BranchPoint(s, lam_b, m, su, sol, tl))
            termination = "lambda-range"
            break

        # new tangent from the bordered system at the accepted point
        J = jacobian_matrix(spec, x_u, x_l)
        Fl = dF_dlambda(spec, x_u)
        bord = sp.bmat([[J, Fl[:, None]], [w * tu[None, :], np.array([[tl]])]], format="csc")
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        try:
            t = solve_sparse(bord, rhs)
        except SingularMatrixError:
            termination = "step-failure"
            break
        nrm = np.sqrt(w * t[:n] @ t[:n] + t[n] ** 2)
        tu, tl = t[:n] / nrm, t[n] / nrm

        s += ds
        u, lam = x_u, x_l
        with np.errstate(over="ignore", invalid="ignore"):
            r = float(np.max(np.abs(residual_vector(spec, u, lam))))
        sol = Solution(GridFunction(grid, D.full(u)), lam, r, 0, CONVERGED)
        m, su = _measure(spec, u, obs)
        points.append(BranchPoint(s, lam, m, su, sol, tl))

        if _is_blowup(spec, u):
            termination = "blowup"
            break
        successes += 1
        if successes >= 3:
            ds *= 1.3
            if ds_max is not None:
                ds = min(ds, ds_max)
            successes = 0

    branch = Branch(points, termination, obs, lambda1)
    branch.folds = detect_folds(branch)
    return branch


def detect_folds(branch: Branch) -> list[tuple[int, float]]:
    """Turning points in ``lam``: ``(index, lam*)`` with ``lam*`` from a quadratic fit of ``lam(s)``."""
    lam = branch.lams
    s = branch.s
    if lam.size < 3:
        return []
    dl = np.diff(lam)
    folds = []
    for i in range(1, lam.size - 1):
        if dl[i - 1] * dl[i] < 0:
            ss, ll = s[i - 1 : i + 2], lam[i - 1 : i + 2]
            a, b, _ = np.polyfit(ss - ss[1], ll, 2)
            if a != 0:
                sv = -b / (2 * a)
                lam_star = float(np.polyval([a, b, _], sv)) if abs(sv) <= abs(ss[2] - ss[0]) else float(ll[1])
            else:
                lam_star = float(ll[1])
            folds.append((i, lam_star))
    return folds


def asymptote_estimate(branch: Branch, n_last: int = 5) -> float | None:
    """``lam`` where ``1/sup u`` extrapolates to zero over the last points."""
    pts = branch.points[-n_last:]
    if len(pts) < 2:
        return None
    lam = np.array([p.lam for p in pts])
    inv = 1.0 / np.array([max(p.sup_u, 1e-300) for p in pts])
    k, c0 = np.polyfit(lam, inv, 1)
    if k >= 0:
        return None
    return float(-c0 / k)


@dataclass
class DiagramClass:
    kind: str
    fold_lambda: float | None = None
    asymptote: float | None = None
    lambda1: float | None = None
    evidence: dict = field(default_factory=dict)


def classify(branches: Branch | list[Branch], margin: float = 1.0, rel_tol: float = 0.05) -> DiagramClass:
    """Match traced branches to one of the three bifurcation-diagram shapes.

    first  -- a fold, and past it the branch heads back to ``lam -> 0+`` with
              growing ``u`` until blow-up is detected;
    second -- no fold, blow-up with the ``1/sup u`` asymptote within
              ``rel_tol`` of ``lam_1``;
    third  -- no fold, the branch reaches ``lam_1 + margin`` with bounded ``u``.
    Anything else is reported as inconclusive.
    """
    if isinstance(branches, Branch):
        branches = [branches]
    for br in branches:
        folds = br.folds or detect_folds(br)
        lam1 = br.lambda1
        ev = {"termination": br.termination, "points": len(br.points), "folds": len(folds)}
        if folds:
            i, lam_star = folds[-1]
            tail = br.points[i:]
            lam_tail = np.array([p.lam for p in tail])
            sup_tail = np.array([p.sup_u for p in tail])
            growing = bool(np.all(np.diff(lam_tail) <= 1e-14) and sup_tail[-1] > sup_tail[0])
            ev.update(lam_end=float(lam_tail[-1]), sup_end=float(sup_tail[-1]), growing=growing)
            if len(folds) == 1 and growing and br.termination == "blowup" and lam_tail[-1] < 0.5 * lam_star:
                return DiagramClass(FIRST, lam_star, None, lam1, ev)
            continue
        lam_end = float(br.lams[-1])
        ev["lam_end"] = lam_end
        if br.termination == "blowup":
            asym = asymptote_estimate(br)
            ev["asymptote"] = asym
            if asym is not None and lam1 is not None and abs(asym - lam1) <= rel_tol * lam1:
                return DiagramClass(SECOND, None, asym, lam1, ev)
            continue
        if br.termination == "lambda-range" and lam1 is not None and lam_end >= lam1 + margin - 1e-9:
            sup_max = float(np.max(br.sup_u))
            ev["sup_max"] = sup_max
            if np.all(np.diff(br.lams) > 0) and sup_max < SUP_LIMIT:
                return DiagramClass(THIRD, None, None, lam1, ev)
    return DiagramClass(INCONCLUSIVE, None, None, branches[0].lambda1 if branches else None, ev)


def model_branch(
    spec: ProblemSpec,
    lam_range: tuple[float, float],
    ds: float = 0.1,
    tol: float = 1e-10,
    **kwargs,
) -> Branch:
    """Newton at ``lam_range[0]`` from zero, then :func:`trace`; ``lam_1`` attached."""
    lam0 = lam_range[0]
    s0 = newton(spec.with_lambda(lam0), GridFunction(spec.grid, spec.g.copy()), tol)
    if not s0.converged:
        raise ContinuationError(f"no start solution at lam = {lam0} ({s0.status})")
    lam1 = principal_eigenvalue(spec)
    return trace(spec.with_lambda(lam0), s0, lam_range, ds, tol=tol, lambda1=lam1, **kwargs)


__all__ = [
    "Branch",
    "BranchPoint",
    "ContinuationError",
    "DiagramClass",
    "FIRST",
    "INCONCLUSIVE",
    "OVERFLOW",
    "SECOND",
    "THIRD",
    "asymptote_estimate",
    "classify",
    "detect_folds",
    "model_branch",
    "principal_eigenvalue",
    "trace",
]
