"""Empirical checks of boundary and interior Harnack-type inequalities.

Every ``verify_*`` function first certifies the discrete differential
inequality it relies on, then evaluates both sides of the inequality and the
*empirical constant*, the ratio that makes it tight.  Regions are node boxes
(:class:`~quadgrad.grid.Region`); boundary versions use boxes resting on the
flat face ``x_n = 0`` from :func:`~quadgrad.grid.half_boxes`, ordered
``(B1, B3/2, B2)``.

``L^n`` norms use ``n`` = grid dimension.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import Grid, GridFunction, Region, boundary_quotient, half_boxes, lp_mean
from .operators import (
    OperatorCoefficients,
    ProblemSpec,
    apply_L,
    assemble_linear,
    check_ellipticity,
    make_problem,
)
from .solver import Solution, linear_solve
from .transform import TransformSpec, derived_exponent, forward

log = logging.getLogger(__name__)

CERT_TOL = 1e-8
SIGN_TOL = 1e-10

LOWER = "lower"  # lhs >= C * rhs
UPPER = "upper"  # lhs <= C * rhs


class CertificationError(ValueError):
    """A differential-inequality or sign precondition fails at some nodes."""

    def __init__(self, what: str, nodes: list[tuple[int, ...]], worst: float):
        shown = ", ".join(map(str, nodes[:5])) + (" ..." if len(nodes) > 5 else "")
        super().__init__(f"{what} fails at {len(nodes)} node(s) [{shown}]; worst violation {worst:.3e}")
        self.nodes = nodes
        self.worst = worst


class HypothesisError(ValueError):
    """Hypotheses of the a priori chain do not hold on the region."""


@dataclass(frozen=True)
class HarnackReport:
    inequality: str
    exponent: float
    lhs: float
    rhs: float
    constant: float
    direction: str
    regions: tuple[Region, ...] = ()
    budget: float | None = None
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("lhs", "rhs"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if np.isnan(self.constant) or self.constant < 0:
            raise ValueError(f"constant must be nonnegative, got {self.constant}")

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.constant))

    @property
    def passed(self) -> bool:
        if self.budget is None:
            return True
        if self.direction == LOWER:
            return self.constant >= self.budget
        return self.constant <= self.budget

    def row(self) -> dict:
        return {
            "inequality": self.inequality,
            "exponent": self.exponent,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "constant": self.constant,
        }


def _ratio(lhs: float, rhs: float, direction: str) -> float:
    if rhs > 0:
        return lhs / rhs
    if direction == LOWER:
        return np.inf
    return np.inf if lhs > 0 else 0.0


def _operator(op, grid: Grid) -> ProblemSpec:
    if isinstance(op, ProblemSpec):
        if not op.grid.same_as(grid):
            raise ValueError("operator lives on a different grid")
        return op
    if isinstance(op, OperatorCoefficients):
        return make_problem(grid, a=op)
    raise TypeError(f"expected OperatorCoefficients or ProblemSpec, got {type(op).__name__}")


def _values(grid: Grid, f) -> np.ndarray:
    if f is None:
        return np.zeros(grid.shape)
    if isinstance(f, GridFunction):
        return f.values
    return np.array(np.broadcast_to(np.asarray(f, dtype=float), grid.shape))


def _boxes(grid: Grid, regions) -> tuple[Region, Region, Region]:
    if regions is None:
        regions = half_boxes(grid)
    if isinstance(regions, dict):
        regions = [regions[k] for k in sorted(regions)]
    b1, b32, b2 = regions
    if not (b2.contains(b32) and b32.contains(b1)):
        raise ValueError("regions must be nested B1 <= B3/2 <= B2")
    return b1, b32, b2


def _certify(violation: np.ndarray, where: np.ndarray, tol: float, what: str):
    bad = where & (violation > tol)
    if np.any(bad):
        nodes = [tuple(int(i) for i in n) for n in np.argwhere(bad)]
        raise CertificationError(what, nodes, float(violation[bad].max()))


def _minus_L(op: ProblemSpec, u: np.ndarray) -> np.ndarray:
    return -apply_L(op, u).values


def _tol(tol: float, mLu: np.ndarray) -> float:
    # absolute tolerance, raised to the rounding level of -L u for large fields
    return max(tol, 64 * np.finfo(float).eps * float(np.max(np.abs(mLu))))


def _face_check(u: np.ndarray):
    face = u[..., 0]
    scale = max(float(np.max(np.abs(u))), 1.0)
    if np.any(np.abs(face) > SIGN_TOL * scale):
        nodes = [tuple(int(i) for i in n) + (0,) for n in np.argwhere(np.abs(face) > SIGN_TOL * scale)]
        raise CertificationError("vanishing on the flat face", nodes, float(np.abs(face).max()))


def _sup_cert(u, mLu, f, grid, region, tol):
    """``-L u >= f - tol`` at interior nodes of ``region`` and ``u >= 0`` on it."""
    where = region.node_mask()
    _certify(f - mLu, where & grid.interior, _tol(tol, mLu), "supersolution inequality")
    _certify(-u, where, SIGN_TOL, "nonnegativity")


def _region_min(f: np.ndarray, r: Region) -> float:
    return float(np.min(f[r.slices]))


def _region_max(f: np.ndarray, r: Region) -> float:
    return float(np.max(f[r.slices]))


def verify_bqsmp(
    u: GridFunction,
    coeffs,
    grid: Grid,
    eps: float,
    regions=None,
    budget: float | None = None,
    growth: tuple[float, float] | None = None,
    tol: float = CERT_TOL,
) -> HarnackReport:
    """Boundary quantitative strong maximum principle.

    ``inf_{B1} u/x_n >= c (int_{B1} (-L u)^eps)^(1/eps)`` for nonnegative
    supersolutions vanishing on the flat face.  With ``growth = (tau, m0)`` the
    measure form is evaluated as well and stored under ``details["growth"]``:
    the right side becomes ``1`` if ``|{-L u > tau} cap B1| >= m0`` and ``0``
    otherwise.
    """
    op = _operator(coeffs, grid)
    b1, b32, b2 = _boxes(grid, regions)
    vals = np.asarray(u, dtype=float).reshape(grid.shape)
    mLu = _minus_L(op, vals)
    _sup_cert(vals, mLu, np.zeros(grid.shape), grid, b2, tol)
    _face_check(vals)
    q = boundary_quotient(GridFunction(grid, vals)).values
    lhs = max(_region_min(q, b1), 0.0)
    rhs = lp_mean(np.maximum(mLu, 0.0), eps, b1)
    details = {}
    if growth is not None:
        tau, m0 = growth
        meas = float(np.sum(b1.weights() * (mLu[b1.slices] > tau)))
        g_rhs = 1.0 if meas >= m0 else 0.0
        details["growth"] = HarnackReport(
            "BQSMP-growth", eps, lhs, g_rhs, _ratio(lhs, g_rhs, LOWER), LOWER, (b1, b2), budget,
            {"measure": meas, "tau": tau, "m0": m0},
        )
    return HarnackReport("BQSMP", eps, lhs, rhs, _ratio(lhs, rhs, LOWER), LOWER, (b1, b2), budget, details)


def verify_bwhi(
    u: GridFunction,
    f,
    coeffs,
    grid: Grid,
    eps: float,
    regions=None,
    budget: float | None = None,
    tol: float = CERT_TOL,
) -> HarnackReport:
    """Boundary weak Harnack inequality.

    ``(int_{B3/2} (u/x_n)^eps)^(1/eps) <= C (inf_{B3/2} u/x_n + ||f^-||_{L^n(B2)})``
    for ``-L u >= f``.  The variant with the infimum over ``B1`` is stored in
    ``details["inner"]``.
    """
    op = _operator(coeffs, grid)
    b1, b32, b2 = _boxes(grid, regions)
    vals = np.asarray(u, dtype=float).reshape(grid.shape)
    fv = _values(grid, f)
    mLu = _minus_L(op, vals)
    _sup_cert(vals, mLu, fv, grid, b2, tol)
    _face_check(vals)
    q = np.maximum(boundary_quotient(GridFunction(grid, vals)).values, 0.0)
    lhs = lp_mean(q, eps, b32)
    fneg = lp_mean(np.maximum(-fv, 0.0), grid.dimension, b2)
    rhs = _region_min(q, b32) + fneg
    rhs_inner = _region_min(q, b1) + fneg
    inner = {"rhs": rhs_inner, "constant": _ratio(lhs, rhs_inner, UPPER)}
    return HarnackReport("BWHI", eps, lhs, rhs, _ratio(lhs, rhs, UPPER), UPPER, (b1, b32, b2), budget, {"inner": inner})


def verify_blmp(
    u: GridFunction,
    d,
    f,
    coeffs,
    grid: Grid,
    p: float = 1.0,
    q: float | None = None,
    regions=None,
    budget: float | None = None,
    tol: float = CERT_TOL,
) -> HarnackReport:
    """Boundary local maximum principle.

    ``sup_{B1} u+/x_n <= C ((int_{B3/2} (u+)^p)^(1/p) + ||f+||_{L^n(B2)})``
    for ``-L u <= d u + f`` with ``d`` in ``L^q``, ``q > n``.
    """
    op = _operator(coeffs, grid)
    b1, b32, b2 = _boxes(grid, regions)
    n = grid.dimension
    q = n + 1.0 if q is None else q
    if q <= n:
        raise ValueError(f"need q > {n}, got {q}")
    vals = np.asarray(u, dtype=float).reshape(grid.shape)
    dv, fv = _values(grid, d), _values(grid, f)
    mLu = _minus_L(op, vals)
    _certify(mLu - dv * vals - fv, b2.node_mask() & grid.interior, _tol(tol, mLu), "subsolution inequality")
    _face_check(vals)
    up = np.maximum(vals, 0.0)
    quot = boundary_quotient(GridFunction(grid, up)).values
    lhs = max(_region_max(quot, b1), 0.0)
    rhs = lp_mean(up, p, b32) + lp_mean(np.maximum(fv, 0.0), n, b2)
    details = {"d_norm": lp_mean(dv, q, b2), "q": q}
    return HarnackReport("BLMP", p, lhs, rhs, _ratio(lhs, rhs, UPPER), UPPER, (b1, b32, b2), budget, details)


def centered_box(grid: Grid, half_width: float | Sequence[float]) -> Region:
    """Box around the domain centre with the given half-widths."""
    hw = np.broadcast_to(np.asarray(half_width, dtype=float), (grid.dimension,))
    c = np.array(grid.extents) / 2
    return Region.from_coords(grid, c - hw, c + hw)


def verify_interior(
    kind: str,
    u: GridFunction,
    f,
    coeffs,
    grid: Grid,
    exponent: float,
    K: Region,
    Kp: Region,
    budget: float | None = None,
    tol: float = CERT_TOL,
) -> HarnackReport:
    """Interior versions on boxes ``K <= K'`` that stay off the boundary.

    QSMP: ``inf_K u >= c (int_K (-L u)^eps)^(1/eps)``.
    WHI:  ``(int_K' u^eps)^(1/eps) <= C (inf_K u + ||f||_n)`` for ``-L u >= f``.
    LMP:  ``sup_K u <= C ((int_K' (u+)^p)^(1/p) + ||f||_n)`` for ``-L u <= f``.
    """
    op = _operator(coeffs, grid)
    if not Kp.contains(K):
        raise ValueError("K must be contained in K'")
    if any(l < 1 or h > n - 1 for l, h, n in zip(Kp.lo, Kp.hi, grid.counts)):
        raise ValueError("K' must stay off the boundary")
    vals = np.asarray(u, dtype=float).reshape(grid.shape)
    fv = _values(grid, f)
    mLu = _minus_L(op, vals)
    where = Kp.node_mask()
    n = grid.dimension
    if kind == "QSMP":
        _sup_cert(vals, mLu, np.zeros(grid.shape), grid, Kp, tol)
        lhs = max(_region_min(vals, K), 0.0)
        rhs = lp_mean(np.maximum(mLu, 0.0), exponent, K)
        return HarnackReport(kind, exponent, lhs, rhs, _ratio(lhs, rhs, LOWER), LOWER, (K, Kp), budget)
    if kind == "WHI":
        _sup_cert(vals, mLu, fv, grid, Kp, tol)
        lhs = lp_mean(vals, exponent, Kp)
        rhs = max(_region_min(vals, K), 0.0) + lp_mean(fv, n, Kp)
        return HarnackReport(kind, exponent, lhs, rhs, _ratio(lhs, rhs, UPPER), UPPER, (K, Kp), budget)
    if kind == "LMP":
        _certify(mLu - fv, where, _tol(tol, mLu), "subsolution inequality")
        up = np.maximum(vals, 0.0)
        lhs = _region_max(up, K)
        rhs = lp_mean(up, exponent, Kp) + lp_mean(fv, n, Kp)
        return HarnackReport(kind, exponent, lhs, rhs, _ratio(lhs, rhs, UPPER), UPPER, (K, Kp), budget)
    raise ValueError(f"unknown interior inequality {kind!r}")


def combination_bound(u: GridFunction, coeffs, grid: Grid, eps: float, regions=None) -> tuple[float, float]:
    """Full boundary Harnack ratio on ``B1`` and the bound built from BWHI and BLMP.

    For ``-L u = 0``, ``u >= 0``: ``sup_{B1} q <= C_L ||u||_{eps, B3/2}
    <= C_L H ||q||_{eps, B3/2} = C_L H C_W inf_{B3/2} q <= C_L C_W H inf_{B1} q``
    with ``q = u/x_n`` and ``H = max x_n`` on ``B3/2``.
    """
    b1, b32, b2 = _boxes(grid, regions)
    w = verify_bwhi(u, 0.0, coeffs, grid, eps, (b1, b32, b2))
    m = verify_blmp(u, 0.0, 0.0, coeffs, grid, p=eps, regions=(b1, b32, b2))
    q = boundary_quotient(GridFunction(grid, np.asarray(u, dtype=float).reshape(grid.shape))).values
    ratio = _region_max(q, b1) / _region_min(q, b1)
    H = _region_max(grid.xn, b32)
    return ratio, w.constant * m.constant * H


# --------------------------------------------------------------------------
# operator families
# --------------------------------------------------------------------------


def _smooth_unit(rng: np.random.Generator, coords, extents, modes: int) -> np.ndarray:
    """Random trigonometric field with values in [0, 1]."""
    alpha = rng.dirichlet(np.ones(modes))
    out = np.full(coords[0].shape, 0.5)
    for a in alpha:
        k = rng.integers(1, 4, size=len(coords))
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(np.pi * kk * x / L for kk, x, L in zip(k, coords, extents))
        out = out + 0.5 * a * np.sin(arg + phase)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class OperatorFamily:
    """Seeded random operators with eigenvalues of ``a`` in ``[lo, hi]`` and ``|b| <= drift``.

    Sample ``k`` depends only on ``(seed, k)``.  In 2D the operators are meant
    for the seven-point cross stencil, which is monotone for every sample
    (``a_kk - |a_01| >= (2 - sqrt 2) lo`` when ``hi <= 3 lo``).
    """

    grid: Grid
    ellipticity: tuple[float, float] = (1.0, 3.0)
    drift: float = 1.0
    count: int = 50
    seed: int = 0
    modes: int = 3

    def coefficients(self, k: int) -> OperatorCoefficients:
        if not 0 <= k < self.count:
            raise IndexError(k)
        rng = np.random.default_rng([self.seed, k])
        lo, hi = self.ellipticity
        X, L = self.grid.coords, self.grid.extents
        t = lambda: _smooth_unit(rng, X, L, self.modes)  # noqa: E731
        if self.grid.dimension == 1:
            a = (lo + (hi - lo) * t())[None, None]
            b = (self.drift * (2 * t() - 1))[None]
            return OperatorCoefficients(a, b)
        e1, e2 = lo + (hi - lo) * t(), lo + (hi - lo) * t()
        th = np.pi * t()
        c, s = np.cos(th), np.sin(th)
        a = np.stack([
            np.stack([c * c * e1 + s * s * e2, c * s * (e1 - e2)]),
            np.stack([c * s * (e1 - e2), s * s * e1 + c * c * e2]),
        ])
        r, phi = self.drift * t(), 2 * np.pi * t()
        b = np.stack([r * np.cos(phi), r * np.sin(phi)])
        return OperatorCoefficients(a, b)

    def operator(self, k: int, **fields) -> ProblemSpec:
        coeffs = self.coefficients(k)
        lo, hi = check_ellipticity(coeffs, self.grid)
        if lo < self.ellipticity[0] - 1e-12 or hi > self.ellipticity[1] + 1e-12:
            raise AssertionError(f"sample {k} leaves the declared ellipticity bounds")
        return make_problem(self.grid, a=coeffs, cross_stencil="seven-point", **fields)

    def __len__(self) -> int:
        return self.count


def solve_linear(op: ProblemSpec) -> GridFunction:
    """Solve ``-L u = h`` with ``u = g`` on the boundary for the fields in ``op``."""
    return linear_solve(assemble_linear(op))


def positive_boundary_data(grid: Grid, k: int) -> np.ndarray:
    """``x_n (1 + sin(...)/2)``: positive data vanishing on the flat face."""
    phase = 2 * np.pi * k / 20
    if grid.dimension == 1:
        return grid.xn * (1 + 0.5 * np.sin(phase))
    x0 = grid.coords[0] / grid.extents[0]
    return grid.xn * (1 + 0.5 * np.sin(2 * np.pi * (1 + k % 3) * x0 + phase))


def _family_rows(family: OperatorFamily, k: int, eps_grid, kinds, regions):
    op = family.operator(k, h=1.0)
    u = solve_linear(op)
    rows = []
    for eps in eps_grid:
        if "BQSMP" in kinds:
            rows.append((k, verify_bqsmp(u, op, family.grid, eps, regions)))
        if "BWHI" in kinds:
            rows.append((k, verify_bwhi(u, 1.0, op, family.grid, eps, regions)))
        if "BLMP" in kinds:
            rows.append((k, verify_blmp(u, 0.0, 1.0, op, family.grid, p=eps, regions=regions)))
    return rows


def sweep_family(
    family: OperatorFamily,
    eps_grid: Sequence[float],
    kinds: Sequence[str] = ("BQSMP", "BWHI", "BLMP"),
    regions=None,
    threads: int = 1,
) -> list[tuple[int, HarnackReport]]:
    """Reports for the solution of ``-L_k u = 1``, ``u = 0`` on the boundary, per sample ``k``.

    Output order depends only on the family, never on ``threads``.
    """
    ks = range(family.count)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda k: _family_rows(family, k, eps_grid, kinds, regions), ks))
    else:
        parts = [_family_rows(family, k, eps_grid, kinds, regions) for k in ks]
    return [row for part in parts for row in part]


def largest_uniform_eps(rows: list[tuple[int, HarnackReport]], kind: str, cap: float = 1e6) -> float | None:
    """Largest exponent whose constants stay below ``cap`` across the family."""
    by_eps: dict[float, list[float]] = {}
    for _, r in rows:
        if r.inequality == kind:
            by_eps.setdefault(r.exponent, []).append(r.constant)
    ok = [e for e, cs in by_eps.items() if np.all(np.isfinite(cs)) and max(cs) < cap]
    return max(ok) if ok else None


# --------------------------------------------------------------------------
# a priori chain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainStep:
    name: str
    lhs: float
    rhs: float
    constant: float


@dataclass(frozen=True)
class ChainReport:
    lam: float
    sup_u: float
    exponent_A: float
    eps: float
    steps: tuple[ChainStep, ...]
    sup_v2: float
    bound: float
    estimates: dict

    @property
    def constants(self) -> np.ndarray:
        return np.array([s.constant for s in self.steps])

    @property
    def tight(self) -> float:
        """``sup v2 / bound``; at most one up to rounding."""
        return self.sup_v2 / self.bound if self.bound > 0 else np.inf


def log_power_ratio(v: np.ndarray, eps: float, n: int, cutoff: float) -> float:
    """``max (log v)^(n+1) / v^eps`` over nodes with ``v > cutoff`` (0 if none)."""
    sel = v[v > cutoff]
    if sel.size == 0:
        return 0.0
    return float(np.max(np.log(sel) ** (n + 1) / sel**eps))


def apriori_chain(
    solution: Solution,
    spec: ProblemSpec,
    mu1: float,
    mu2: float,
    regions=None,
    eps: float = 0.25,
) -> ChainReport:
    """Evaluate the four inequalities behind the a priori bound at one solution.

    With ``v_i = (exp(mu_i u) - 1)/mu_i`` and ``A = mu2/mu1``:

    1. ``inf_{B1} v1/x_n`` vs ``||-L v1||_{eps, B1}``  (quantitative SMP),
    2. ``||v1/x_n||_{eps, B3/2}`` vs ``inf_{B3/2} v1/x_n``  (weak Harnack),
    3. ``||v2||_{eps/A, B3/2}`` vs ``||v1||_{eps, B3/2}^A``  (``v2 ~ v1^A``),
    4. ``sup_{B1} v2/x_n`` vs ``||v2||_{eps/A, B3/2}``  (local maximum principle
       with ``d = (-L v2)/v2``; the growth constant ``C0`` in
       ``d <= C0 c log v2`` is reported as an estimate).

    The product of the step constants bounds ``sup_{B1} v2``.
    """
    if not solution.converged:
        raise HypothesisError(f"solution not converged ({solution.status})")
    grid = spec.grid
    b1, b32, b2 = _boxes(grid, regions)
    mask = b2.node_mask()
    M = spec.M
    if np.any(M[:, mask] < mu1 - 1e-12) or np.any(M[:, mask] > mu2 + 1e-12):
        raise HypothesisError(f"mu leaves [{mu1}, {mu2}] on the region")
    c = spec.c
    if np.any(c[mask] < 0) or not np.any(c[mask] > 0):
        raise HypothesisError("c must be nonnegative and not identically zero on the region")
    A = derived_exponent(TransformSpec(mu1), TransformSpec(mu2))
    v1 = forward(solution.u, TransformSpec(mu1)).values
    v2 = forward(solution.u, TransformSpec(mu2)).values
    op = _operator(spec, grid)
    n = grid.dimension

    r1 = verify_bqsmp(GridFunction(grid, v1), op, grid, eps, (b1, b32, b2))
    r2 = verify_bwhi(GridFunction(grid, v1), 0.0, op, grid, eps, (b1, b32, b2))
    n2 = lp_mean(v2, eps / A, b32)
    n1 = lp_mean(v1, eps, b32)
    k3 = _ratio(n2, n1**A, UPPER)

    mLv1, mLv2 = _minus_L(op, v1), _minus_L(op, v2)
    inner = grid.interior & mask
    big1 = inner & (v1 > np.e) & (c > 0)
    c0 = float(np.min(mLv1[big1] / (c[big1] * v1[big1] * np.log(v1[big1])))) if np.any(big1) else None
    big2 = inner & (v2 > np.e) & (c > 0)
    C0 = float(np.max(mLv2[big2] / (c[big2] * v2[big2] * np.log(v2[big2])))) if np.any(big2) else None
    # exact zeroth-order coefficient, so the source term vanishes
    pos = grid.interior & (v2 > 0)
    d = np.where(pos, np.maximum(mLv2, 0.0) / np.where(pos, v2, 1.0), 0.0)
    f = np.zeros(grid.shape)
    r4 = verify_blmp(GridFunction(grid, v2), d, f, op, grid, p=eps / A, regions=(b1, b32, b2))

    steps = (
        ChainStep("feq+BQSMP", r1.lhs, r1.rhs, r1.constant),
        ChainStep("BWHI", r2.lhs, r2.rhs, r2.constant),
        ChainStep("power", n2, n1**A, k3),
        ChainStep("BLMP", r4.lhs, r4.rhs, r4.constant),
    )
    H1 = _region_max(grid.xn, b1)
    H32 = _region_max(grid.xn, b32)
    fn = lp_mean(f, n, b2)
    bound = H1 * r4.constant * (k3 * (H32 * r2.constant * r1.constant * r1.rhs) ** A + fn)
    sup_v2 = _region_max(v2, b1)
    estimates = {
        "c0": c0,
        "C0": C0,
        "d_norm": r4.details["d_norm"],
        "f_norm": fn,
        "log_power": log_power_ratio(v1, eps, n, 10.0),
    }
    return ChainReport(solution.lam, solution.sup, A, eps, steps, sup_v2, bound, estimates)
