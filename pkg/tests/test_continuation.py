import numpy as np
import pytest

from conftest import model_spec
from oracles import fold_lambda
from quadgrad.continuation import (
    FIRST,
    INCONCLUSIVE,
    SECOND,
    THIRD,
    Branch,
    BranchPoint,
    asymptote_estimate,
    classify,
    detect_folds,
    model_branch,
    principal_eigenvalue,
)
from quadgrad.operators import assemble_linear
from quadgrad.solver import linear_solve, newton


def synthetic(lams, sups=None, termination="lambda-range", lambda1=None, s=None):
    sups = np.ones(len(lams)) if sups is None else sups
    s = np.arange(len(lams)) if s is None else s
    pts = [BranchPoint(float(k), float(l), float(m), float(m), None) for k, l, m in zip(s, lams, sups)]
    return Branch(pts, termination, (0,), lambda1)


def test_synthetic_fold():
    s = np.linspace(-1, 1, 41)
    br = synthetic(1 - s**2, s=s)
    folds = detect_folds(br)
    assert len(folds) == 1
    assert folds[0][1] == pytest.approx(1.0, abs=1e-12)


def test_monotone_branch_has_no_fold():
    assert detect_folds(synthetic(np.linspace(0, 5, 20))) == []


def test_asymptote_of_hyperbola():
    lam = np.linspace(8, 9.8, 10)
    br = synthetic(lam, 1 / (10 - lam), termination="blowup")
    assert asymptote_estimate(br) == pytest.approx(10.0, rel=1e-12)


def test_principal_eigenvalue():
    spec = model_spec(129, 0.0)
    lam1 = principal_eigenvalue(spec)
    n = 128
    exact_discrete = 4 * n * n * np.sin(np.pi / (2 * n)) ** 2
    assert lam1 == pytest.approx(exact_discrete, rel=1e-10)
    assert principal_eigenvalue(model_spec(33, 0.0, c=0.0)) == np.inf


def test_linear_branch(branches):
    br = branches(0.0, 65)
    assert br.termination == "blowup" and detect_folds(br) == []
    assert np.all(np.diff(br.m_u) > 0)
    spec = model_spec(65, 0.0)
    for p in br.points[:: max(1, len(br.points) // 10)]:
        ref = linear_solve(assemble_linear(spec.with_lambda(p.lam)))
        # conditioning grows like 1/(lam_1 - lam) near the asymptote
        np.testing.assert_allclose(p.solution.u.values, ref.values, rtol=1e-6, atol=1e-10)
    s5 = linear_solve(assemble_linear(spec.with_lambda(5.0))).values.max()
    s95 = linear_solve(assemble_linear(spec.with_lambda(9.5))).values.max()
    assert s95 > 5 * s5


def test_positive_mu_single_fold(branches):
    br = branches(1.0, 65)
    folds = detect_folds(br)
    assert len(folds) == 1
    i, lam_star = folds[0]
    assert 0 < lam_star < br.lambda1
    assert lam_star == pytest.approx(fold_lambda(), rel=0.01)
    tail = br.points[i:]
    assert np.all(np.diff([p.lam for p in tail]) <= 0)
    assert tail[-1].sup_u > tail[0].sup_u


def test_trivial_branch_when_h_zero():
    spec = model_spec(33, 1.0, h=0.0)
    br = model_branch(spec, (0.0, 5.0), ds=0.5)
    assert br.termination == "lambda-range"
    assert np.all(br.sup_u == 0) and br.lams[-1] == pytest.approx(5.0)


@pytest.mark.parametrize("mu", [1.0, -1.0])
def test_points_reverify_and_are_symmetric(branches, mu):
    br = branches(mu, 65)
    spec = model_spec(65, mu)
    for p in br.points[:: max(1, len(br.points) // 15)]:
        fresh = newton(spec.with_lambda(p.lam), p.solution.u)
        assert fresh.converged and fresh.iterations <= 2
        u = p.solution.u.values
        assert np.max(np.abs(u - u[::-1])) <= 1e-8 * max(1.0, np.max(np.abs(u)))


def test_classification(branches):
    assert classify(branches(1.0, 65)).kind == FIRST
    second = classify(branches(0.0, 65))
    assert second.kind == SECOND
    assert second.asymptote == pytest.approx(second.lambda1, rel=0.01)
    third = classify(branches(-1.0, 65))
    assert third.kind == THIRD
    assert branches(-1.0, 65).lams[-1] >= third.lambda1 + 1 - 1e-9


def test_classification_is_reproducible_from_data(branches):
    br = branches(1.0, 65)
    a, b = classify(br), classify(br)
    assert a.kind == b.kind and a.fold_lambda == b.fold_lambda


def test_inconclusive_when_nothing_matches():
    br = synthetic(np.linspace(0, 1, 10), lambda1=9.87)
    assert classify(br).kind == INCONCLUSIVE


def test_positive_mu_upper_bound_mesh_stable(branches):
    sups = []
    for n in (33, 65, 129):
        br = branches(1.0, n, (0.2, 12.0))
        lam_star = detect_folds(br)[0][1]
        sups.append(max(p.sup_u for p in br.restrict(0.2, lam_star)))
    assert max(sups) / min(sups) - 1 < 0.02
