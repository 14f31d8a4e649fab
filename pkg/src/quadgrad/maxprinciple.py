"""Comparison, localization and the integrability test for strong maximum principles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .continuation import Branch
from .grid import GridFunction, Region
from .operators import ProblemSpec, pointwise_residual, residual_floor
from .solver import Solution
from .transform import TransformSpec, forward

NEAR_ZERO = 1e-12
T0 = float(np.exp(-1.0))


class PreconditionError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Nonlinearity1D:
    """A nonnegative ``f`` on ``(0, t_max]`` with primitive ``F(t) = int_0^t f``.

    ``small`` is an analytic primitive used below ``NEAR_ZERO``; tables have
    none and cannot be integrated below their first abscissa.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    small: Callable[[float], float] | None = None
    t_min: float = 0.0
    t_max: float = T0
    exact: Callable[[float], float] | None = None

    @classmethod
    def tlogt(cls) -> "Nonlinearity1D":
        # exact primitive of t|log t| on (0, 1)
        return cls("t|log t|", lambda t: t * np.abs(np.log(t)), lambda t: t * t * (0.5 * np.log(1 / t) + 0.25))

    @classmethod
    def power(cls, p: float) -> "Nonlinearity1D":
        if p <= 0:
            raise ValueError("power must be positive")
        return cls(f"t^{p:g}", lambda t: t**p, lambda t: t ** (p + 1) / (p + 1))

    @classmethod
    def linear(cls, c0: float = 1.0) -> "Nonlinearity1D":
        return cls(f"{c0:g}*t", lambda t: c0 * t, lambda t: c0 * t * t / 2)

    @classmethod
    def table(cls, t, values, name: str = "table") -> "Nonlinearity1D":
        t = np.asarray(t, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise ValueError("table needs increasing positive abscissae matching the values")
        if np.any(v < 0):
            raise ValueError("table values must be nonnegative")
        # the interpolant is piecewise linear, so trapezoids integrate it exactly
        cum = 0.5 * t[0] * v[0] + integrate.cumulative_trapezoid(v, t, initial=0.0)

        def exact(x: float) -> float:
            k = min(max(int(np.searchsorted(t, x, side="right")) - 1, 0), t.size - 2)
            fx = np.interp(x, t, v)
            return float(cum[k] + 0.5 * (x - t[k]) * (v[k] + fx))

        return cls(name, lambda x: np.interp(x, t, v), None, float(t[0]), float(t[-1]), exact)

    def primitive(self, t: float) -> float:
        t = float(t)
        if self.small is not None:
            if t <= NEAR_ZERO:
                return float(self.small(t))
            tail, _ = integrate.quad(self.f, NEAR_ZERO, t, limit=200, epsabs=0, epsrel=1e-12)
            return float(self.small(NEAR_ZERO)) + tail
        if t < self.t_min:
            raise QuadratureError(f"{self.name}: no near-zero asymptotics below t = {self.t_min:g}")
        # primitive from the first abscissa, with f extended linearly to 0
        if self.exact is not None:
            return self.exact(t)
        head = 0.5 * self.t_min * float(self.f(self.t_min))
        tail, _ = integrate.quad(self.f, self.t_min, t, limit=200, epsabs=0, epsrel=1e-12)
        return head + tail


@dataclass
class VazquezCertificate:
    nonlinearity: str
    diverges: bool
    deltas: np.ndarray
    integrals: np.ndarray
    slopes: np.ndarray = field(repr=False)


def _inv_sqrt_primitive(f: Nonlinearity1D):
    def g(s):
        t = np.exp(s)
        F = f.primitive(t)
        if F <= 0:
            raise QuadratureError(f"{f.name}: nonpositive primitive at t = {t:.3e}")
        return t / np.sqrt(F)

    return g


def vazquez_certificate(
    f: Nonlinearity1D,
    delta_min: float = 1e-40,
    threshold: float = 0.05,
    decades: int = 4,
) -> VazquezCertificate:
    """``I(delta) = int_delta^{t0} dt / sqrt(F(t))`` at ``delta = 10^-k`` down to ``delta_min``.

    The integral is evaluated in ``s = log t`` one decade at a time.  It is
    declared divergent when ``dI/dlog(1/delta)`` exceeds ``threshold`` on each
    of the last ``decades`` decades.
    """
    t0 = f.t_max
    k_hi = int(np.floor(-np.log10(delta_min) + 1e-9))
    k_lo = int(np.ceil(-np.log10(t0) + 1e-9))
    if k_hi - k_lo < decades:
        raise ValueError("delta_min too large for the requested number of decades")
    deltas = 10.0 ** -np.arange(k_lo, k_hi + 1)
    g = _inv_sqrt_primitive(f)
    edges = np.log(np.concatenate([[t0], deltas]))
    pieces = []
    for a, b in zip(edges[1:], edges[:-1]):
        val, err = integrate.quad(g, a, b, limit=200, epsabs=0, epsrel=1e-10)
        if not np.isfinite(val):
            raise QuadratureError(f"{f.name}: quadrature failed on [{np.exp(a):.1e}, {np.exp(b):.1e}]")
        pieces.append(val)
    integrals = np.cumsum(pieces)
    slopes = np.diff(integrals) / np.log(10.0)
    diverges = bool(np.all(slopes[-decades:] > threshold))
    return VazquezCertificate(f.name, diverges, deltas, integrals, slopes)


@dataclass
class ComparisonResult:
    holds: bool
    violations: list[tuple[int, ...]]
    worst: float


def _inner_mask(G: Region) -> np.ndarray:
    return G.node_mask() & ~G.boundary_mask()


def comparison_check(u: GridFunction, w: GridFunction, spec: ProblemSpec, G: Region, tol: float = 1e-8) -> ComparisonResult:
    """Certify ``u`` sub- and ``w`` supersolution inside ``G``, ``u <= w`` on its faces; compare inside."""
    uv = np.asarray(u, dtype=float).reshape(spec.grid.shape)
    wv = np.asarray(w, dtype=float).reshape(spec.grid.shape)
    inner = _inner_mask(G) & spec.grid.interior
    D = spec.discrete
    for name, vals, sign in (("subsolution", uv, 1.0), ("supersolution", wv, -1.0)):
        F = pointwise_residual(spec, vals)
        t = max(tol, residual_floor(spec, vals.ravel()[D.I]))
        bad = inner & (sign * F > t)
        if np.any(bad):
            raise PreconditionError(
                f"{name} inequality fails at {int(bad.sum())} node(s), first {tuple(np.argwhere(bad)[0])}"
            )
    edge = G.boundary_mask()
    if np.any(uv[edge] > wv[edge] + tol):
        raise PreconditionError("u exceeds w on the boundary of the region")
    diff = uv - wv
    bad = G.node_mask() & (diff > tol)
    viol = [tuple(int(i) for i in n) for n in np.argwhere(bad)]
    worst = float(np.max(diff[G.node_mask()]))
    return ComparisonResult(not viol, viol, worst)


@dataclass
class LocalizationReport:
    lam: float
    sup_inside: float
    sup_edge: float
    u0_norm: float
    slack: float
    comparison: ComparisonResult

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-8


def localization_check(u: Solution, u0: Solution, spec: ProblemSpec, O: Region) -> LocalizationReport:
    """``sup_O u <= sup_{dO} u + 2 ||u0||_inf`` where ``c = 0`` on ``O``.

    On ``O`` the equations at ``lam`` and at ``0`` coincide, so
    ``u0 + sup_{dO} u - inf_{dO} u0`` is a solution there that dominates ``u``
    on ``dO``; the comparison is checked as well.
    """
    if np.any(spec.c[O.node_mask()] != 0):
        raise PreconditionError("c does not vanish on the region")
    if not (u.converged and u0.converged):
        raise PreconditionError("both solutions must be converged")
    if u0.lam != 0:
        raise PreconditionError("reference solution must be taken at lam = 0")
    uv, u0v = u.u.values, u0.u.values
    edge = O.boundary_mask()
    sup_in = float(np.max(uv[O.node_mask()]))
    sup_edge = float(np.max(uv[edge]))
    norm0 = float(np.max(np.abs(u0v)))
    w = GridFunction(spec.grid, u0v + sup_edge - float(np.min(u0v[edge])))
    cmp = comparison_check(u.u, w, spec.with_lambda(u.lam), O)
    return LocalizationReport(u.lam, sup_in, sup_edge, norm0, sup_edge + 2 * norm0 - sup_in, cmp)


@dataclass
class NegativeCaseReport:
    mu1: float
    lams: np.ndarray
    sup_u: np.ndarray
    lipschitz: np.ndarray
    z_min: np.ndarray
    certificate: VazquezCertificate

    @property
    def lipschitz_max(self) -> float:
        return float(np.max(self.lipschitz))

    @property
    def z_floor(self) -> float:
        return float(np.min(self.z_min))


def negative_case_bound(spec: ProblemSpec, branch: Branch) -> NegativeCaseReport:
    """Checks behind the upper bound when ``M <= -mu1 I``.

    With ``v = (1 - exp(-mu1 u))/mu1`` and ``z = 1 - mu1 v = exp(-mu1 u)``:
    the ratio ``v / dist(x, boundary)`` at interior nodes and ``min z`` per
    branch point.  The integrability test for ``t|log t|`` is attached.
    """
    M = spec.M
    mu1 = float(np.min(-M))
    if mu1 <= 0:
        raise PreconditionError("need mu <= -mu1 < 0 everywhere")
    t = TransformSpec(mu1, "negative")
    grid = spec.grid
    dist = grid.boundary_distance
    inner = grid.interior
    lams, sups, lips, zs = [], [], [], []
    for p in branch.points:
        v = forward(p.solution.u, t).values
        lams.append(p.lam)
        sups.append(p.sup_u)
        lips.append(float(np.max(v[inner] / dist[inner])))
        zs.append(float(np.min(1 - mu1 * v)))
    cert = vazquez_certificate(Nonlinearity1D.tlogt())
    return NegativeCaseReport(mu1, np.array(lams), np.array(sups), np.array(lips), np.array(zs), cert)
