"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines go to the
terminal even when output capture is on.
"""

import math

import numpy as np
import pytest

from conftest import model_spec
from oracles import cole_hopf_sup, count_solutions, vazquez_tlogt_asymptotic
from quadgrad.config import load_config
from quadgrad.continuation import FIRST, SECOND, THIRD, classify, detect_folds, model_branch, principal_eigenvalue
from quadgrad.grid import GridFunction, Region, build_grid
from quadgrad.harnack import (
    OperatorFamily,
    apriori_chain,
    combination_bound,
    positive_boundary_data,
    solve_linear,
    sweep_family,
    verify_blmp,
    verify_bqsmp,
    verify_bwhi,
)
from quadgrad.maxprinciple import Nonlinearity1D, localization_check, vazquez_certificate
from quadgrad.operators import apply_L, assemble_linear, jacobian_matrix, make_problem, residual_vector
from quadgrad.solver import DeflationSet, deflated_newton, linear_solve, newton, seeded_guesses
from quadgrad.transform import TransformOverflow, TransformSpec, inverse, transformed_problem

PI = math.pi


@pytest.fixture
def verdict(capsys):
    def report(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\nCRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return report


def config_branch(name: str, counts: int, lam_range=None):
    cfg = load_config(name)
    cfg = cfg.model_copy(update={"grid": cfg.grid.model_copy(update={"counts": [counts]})})
    co = cfg.continuation
    spec = cfg.build_problem()
    return model_branch(spec, tuple(lam_range or co.lam_range), co.ds), spec


# 1 ---------------------------------------------------------------------------


def test_criterion_01_manufactured_convergence(verdict):
    lam = 2.0
    us = lambda x: np.sin(PI * x)  # noqa: E731
    h = lambda x: PI**2 * us(x) - lam * us(x) - (PI * np.cos(PI * x)) ** 2  # noqa: E731
    errs = []
    for n in (33, 65):
        g = build_grid(1, [1.0], [n])
        sol = newton(make_problem(g, c=1.0, mu=1.0, h=h, lam=lam), g.zeros())
        assert sol.converged
        errs.append(float(np.max(np.abs(sol.u.values - g.evaluate(us).values))))
    ratio = errs[0] / errs[1]
    verdict(1, 3.4 <= ratio <= 4.6, f"error(33)/error(65) = {ratio:.4f} (errors {errs[0]:.3e}, {errs[1]:.3e})")


# 2 ---------------------------------------------------------------------------


def test_criterion_02_cole_hopf(verdict):
    g = build_grid(1, [1.0], [65])
    direct = newton(make_problem(g, mu=1.0, h=1.0), g.zeros())
    err_sup = abs(direct.sup - cole_hopf_sup())
    spec = make_problem(g, mu=1.0, h=1.0, gradient_scheme="exponential")
    ref = newton(spec, g.zeros())
    t = TransformSpec(1.0)
    v = newton(transformed_problem(spec, t), g.zeros())
    back = inverse(v.u, t).values
    err_round = float(np.max(np.abs(back - ref.u.values)))
    ok = direct.converged and ref.converged and v.converged and err_sup < 1e-4 and err_round < 1e-8
    verdict(2, ok, f"|sup u - {cole_hopf_sup():.7f}| = {err_sup:.2e}; transformed vs direct {err_round:.2e}")


# 3 ---------------------------------------------------------------------------


def test_criterion_03_multiplicity(verdict, branches):
    lam_star = detect_folds(branches(1.0, 65))[0][1]
    lam = 0.5 * lam_star
    spec = model_spec(65, 1.0, lam=lam)
    small = newton(spec, spec.grid.zeros())
    large = deflated_newton(spec, DeflationSet((small,)), seeded_guesses(small))
    dist = float(np.max(np.abs(large.u.values - small.u.values)))
    roots = count_solutions(lam, m_max=100.0)
    ok = small.converged and large.converged and dist > 0.1 and len(roots) == 2
    verdict(
        3,
        ok,
        f"lam = {lam:.5f}: sup u = {small.sup:.6g}, {large.sup:.6g}; distance {dist:.4g}; oracle maxima {[round(r, 4) for r in roots]}",
    )


# 4 ---------------------------------------------------------------------------


def test_criterion_04_classification(verdict):
    kinds, folds, asym, lam1 = {}, [], [], []
    for name in ("model-mu-pos", "model-mu-zero", "model-mu-neg"):
        for n in (65, 129):
            br, spec = config_branch(name, n)
            cls = classify(br)
            kinds[(name, n)] = cls.kind
            if name == "model-mu-pos":
                folds.append(cls.fold_lambda)
            if name == "model-mu-zero":
                asym.append(cls.asymptote)
                lam1.append(principal_eigenvalue(spec))
    expected = {"model-mu-pos": FIRST, "model-mu-zero": SECOND, "model-mu-neg": THIRD}
    kinds_ok = all(kinds[(name, n)] == k for name, k in expected.items() for n in (65, 129))
    fold_dev = abs(folds[1] / folds[0] - 1)
    asym_dev = abs(asym[1] / asym[0] - 1)
    eig_dev = max(abs(a / l - 1) for a, l in zip(asym, lam1))
    ok = kinds_ok and fold_dev < 0.01 and asym_dev < 0.01 and eig_dev < 0.01
    verdict(
        4,
        ok,
        f"classes {[kinds[(n, 65)] for n in expected]}; lam* {folds[0]:.5f}/{folds[1]:.5f} ({fold_dev:.2e}); "
        f"asymptote {asym[0]:.5f}/{asym[1]:.5f} ({asym_dev:.2e}); vs lam_1 {eig_dev:.2e}",
    )


# 5 ---------------------------------------------------------------------------


def test_criterion_05_bound_uniformity(verdict, branches):
    pos = []
    for n in (65, 129):
        br = branches(1.0, n, (0.2, 12.0))
        lam_star = detect_folds(br)[0][1]
        pos.append(max(p.sup_u for p in br.restrict(0.2, lam_star)))
    neg = []
    for n in (65, 129):
        br = branches(-1.0, n)
        assert br.lams[-1] >= br.lambda1 + 1 - 1e-9
        neg.append(max(p.sup_u for p in br.restrict(0.0, br.lambda1 + 1)))
    dp, dn = abs(pos[1] / pos[0] - 1), abs(neg[1] / neg[0] - 1)
    verdict(
        5,
        dp < 0.02 and dn < 0.02,
        f"mu=+1 max sup u {pos[0]:.6g}/{pos[1]:.6g} ({dp:.2e}); mu=-1 {neg[0]:.6g}/{neg[1]:.6g} ({dn:.2e})",
    )


# 6 ---------------------------------------------------------------------------


def test_criterion_06_inequalities(verdict):
    grid = build_grid(2, [1.0, 1.0], [33, 33])
    fam = OperatorFamily(grid, (1.0, 3.0), 1.0, 50, 0)
    rows = sweep_family(fam, [0.25], ("BQSMP", "BWHI", "BLMP"), None, threads=1)
    finite = all(np.isfinite(r.lhs) and np.isfinite(r.rhs) for _, r in rows)
    bwhi = np.array([r.constant for _, r in rows if r.inequality == "BWHI"])
    spread = float(bwhi.max() / bwhi.min())

    worst_scale = 0.0
    for k in range(5):
        op = fam.operator(k, h=1.0)
        u = solve_linear(op)
        f = -apply_L(op, u).values
        for t in (1e-3, 1e3):
            tu = GridFunction(grid, t * u.values)
            pairs = (
                (verify_bqsmp(u, op, grid, 0.25), verify_bqsmp(tu, op, grid, 0.25)),
                (verify_bwhi(u, f, op, grid, 0.25), verify_bwhi(tu, t * f, op, grid, 0.25)),
                (verify_blmp(u, 0.0, f, op, grid), verify_blmp(tu, 0.0, t * f, op, grid)),
            )
            for a, b in pairs:
                worst_scale = max(worst_scale, abs(b.constant / a.constant - 1))

    combo_ok = True
    for k in range(20):
        op = fam.operator(k, g=positive_boundary_data(grid, k))
        ratio, bound = combination_bound(solve_linear(op), op, grid, 0.25)
        combo_ok &= bool(ratio <= bound)
    ok = finite and spread < 10 and worst_scale <= 1e-10 and combo_ok
    verdict(
        6,
        ok,
        f"{len(rows)} finite reports; BWHI spread at eps=0.25 {spread:.4f}; scaling {worst_scale:.1e}; "
        f"combination bound holds on 20 solutions: {combo_ok}",
    )


# 7 ---------------------------------------------------------------------------


def test_criterion_07_apriori_chain(verdict, branches):
    br = branches(1.0, 65, (0.2, 12.0))
    lam_star = detect_folds(br)[0][1]
    spec = model_spec(65, 1.0)
    reps = []
    for p in br.restrict(0.2, lam_star):
        try:
            reps.append(apriori_chain(p.solution, spec.with_lambda(p.lam), 1.0, 1.0))
        except TransformOverflow:
            continue
    K = np.array([r.constants for r in reps])
    var = K.max(axis=0) / K.min(axis=0)
    sup = np.array([r.sup_u for r in reps])
    sup_var = float(sup.max() / sup.min())
    tight = max(r.tight for r in reps)
    ok = bool(np.all(np.isfinite(K)) and np.all(var < 3) and sup_var > 3 and tight <= 1 + 1e-9)
    verdict(
        7,
        ok,
        f"{len(reps)} points; step-constant variation {np.round(var, 4).tolist()}; sup u variation {sup_var:.4g}",
    )


# 8 ---------------------------------------------------------------------------


def test_criterion_08_vazquez(verdict):
    tl = vazquez_certificate(Nonlinearity1D.tlogt())
    lin = vazquez_certificate(Nonlinearity1D.linear())
    sq = vazquez_certificate(Nonlinearity1D.power(0.5))
    i20 = float(tl.integrals[np.isclose(tl.deltas, 1e-20, rtol=1e-9, atol=0)][0])
    dev = abs(i20 / vazquez_tlogt_asymptotic(1e-20) - 1)
    ok = tl.diverges and lin.diverges and not sq.diverges and dev < 0.02
    verdict(
        8,
        ok,
        f"t|log t| {tl.diverges}, t {lin.diverges}, sqrt t {sq.diverges}; I(1e-20) = {i20:.5f}, "
        f"oracle {vazquez_tlogt_asymptotic(1e-20):.5f} ({dev:.2e})",
    )


# 9 ---------------------------------------------------------------------------


def test_criterion_09_localization(verdict):
    br, spec = config_branch("localization", 65)
    O = Region.from_coords(spec.grid, [0.6], [0.95])
    u0 = newton(spec.with_lambda(0.0), spec.grid.zeros())
    reps = [localization_check(p.solution, u0, spec, O) for p in br.points]
    slack = min(r.slack for r in reps)
    ok = slack >= 0 and all(r.comparison.holds for r in reps)
    verdict(9, ok, f"{len(reps)} branch points (termination {br.termination}); min slack {slack:.4g}")


# 10 --------------------------------------------------------------------------


def test_criterion_10_solver_hygiene(verdict):
    g = build_grid(2, [1.0, 1.0], [17, 17])
    spec = make_problem(g, a=[[2.0, 0.3], [0.3, 1.0]], b=[0.4, -0.2], c=1.0, lam=2.0, mu=1.0, h=1.0)
    rng = np.random.default_rng(2024)
    n = spec.discrete.I.size
    worst = 0.0
    for _ in range(10):
        u = rng.uniform(0, 1, n)
        w = rng.normal(size=n)
        t = 1e-6
        fd = (residual_vector(spec, u + t * w) - residual_vector(spec, u - t * w)) / (2 * t)
        Jw = jacobian_matrix(spec, u) @ w
        worst = max(worst, float(np.linalg.norm(fd - Jw) / np.linalg.norm(Jw)))

    umin = np.inf
    for seed in range(10):
        r = np.random.default_rng(seed)
        lin = make_problem(g, b=[0.5, 0.5], c=-r.uniform(0, 2, g.shape), lam=1.0, h=r.uniform(0, 1, g.shape))
        umin = min(umin, float(linear_solve(assemble_linear(lin)).values.min()))

    def run():
        fam = OperatorFamily(g, (1.0, 3.0), 1.0, 4, 7)
        fields = [solve_linear(fam.operator(k, h=1.0)).values for k in range(4)]
        sol = newton(model_spec(65, 1.0, lam=3.0), build_grid(1, [1.0], [65]).zeros())
        return fields + [sol.u.values]

    a, b = run(), run()
    identical = all(np.array_equal(x, y) for x, y in zip(a, b))
    ok = worst < 1e-5 and umin >= -1e-12 and identical
    verdict(10, ok, f"Jacobian FD error {worst:.2e}; min u under DMP {umin:.3e}; reruns bit-identical: {identical}")
