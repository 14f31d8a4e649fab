import math

import numpy as np
import pytest

from conftest import model_spec
from oracles import vazquez_tlogt_asymptotic, vazquez_tlogt_exact
from quadgrad.continuation import model_branch
from quadgrad.grid import GridFunction, Region, build_grid
from quadgrad.maxprinciple import (
    Nonlinearity1D,
    PreconditionError,
    QuadratureError,
    comparison_check,
    localization_check,
    negative_case_bound,
    vazquez_certificate,
)
from quadgrad.operators import assemble_linear, make_problem
from quadgrad.solver import linear_solve, newton


def test_tlogt_primitive_matches_closed_form():
    f = Nonlinearity1D.tlogt()
    for t in (1e-30, 1e-12, 1e-6, 0.1, math.exp(-1)):
        exact = t * t * (0.5 * math.log(1 / t) + 0.25)
        assert f.primitive(t) == pytest.approx(exact, rel=1e-9)


def test_certificate_classifications():
    assert vazquez_certificate(Nonlinearity1D.tlogt()).diverges
    assert vazquez_certificate(Nonlinearity1D.linear()).diverges
    assert not vazquez_certificate(Nonlinearity1D.power(0.5)).diverges


def test_linear_nonlinearity_closed_form():
    cert = vazquez_certificate(Nonlinearity1D.linear())
    t0 = math.exp(-1)
    for d, val in zip(cert.deltas, cert.integrals):
        assert val == pytest.approx(math.sqrt(2) * math.log(t0 / d), rel=1e-8)


def test_sqrt_nonlinearity_converges_to_closed_form():
    cert = vazquez_certificate(Nonlinearity1D.power(0.5))
    # int_0^t0 dt / sqrt(2/3 t^(3/2)) = sqrt(3/2) * 4 t0^(1/4)
    limit = math.sqrt(1.5) * 4 * math.exp(-0.25)
    assert cert.integrals[-1] == pytest.approx(limit, rel=1e-8)


def test_tlogt_integrals_against_oracles():
    cert = vazquez_certificate(Nonlinearity1D.tlogt())
    for d, val in zip(cert.deltas, cert.integrals):
        assert val == pytest.approx(vazquez_tlogt_exact(d), rel=1e-8)
    i20 = cert.integrals[np.argmin(np.abs(np.log10(cert.deltas) + 20))]
    assert abs(i20 / vazquez_tlogt_asymptotic(1e-20) - 1) < 0.02
    # values behind the growth statement: I(1e-10) ~ 10.25, I(1e-40) ~ 23.76
    assert cert.integrals[9] == pytest.approx(10.25, abs=0.01)
    assert cert.integrals[-1] == pytest.approx(23.76, abs=0.01)


def test_table_primitive_is_exact_for_the_interpolant():
    t = np.array([0.01, 0.1, 0.2, 0.3])
    f = Nonlinearity1D.table(t, 2 * t)
    for x in (0.01, 0.05, 0.2, 0.3):
        assert f.primitive(x) == pytest.approx(x * x, rel=1e-14)


def test_table_without_asymptotics_fails_near_zero():
    t = np.linspace(1e-3, math.exp(-1), 50)
    f = Nonlinearity1D.table(t, t * np.abs(np.log(t)))
    with pytest.raises(QuadratureError):
        vazquez_certificate(f)
    with pytest.raises(ValueError):
        Nonlinearity1D.table([0.2, 0.1], [1.0, 1.0])


def test_comparison_with_constant_shift():
    g = build_grid(2, [1, 1], [17, 17])
    spec = make_problem(g, c=-1.0, lam=1.0, h=1.0)
    u = linear_solve(assemble_linear(spec))
    G = Region.from_coords(g, [0.25, 0.25], [0.75, 0.75])
    res = comparison_check(u, GridFunction(g, u.values + 0.5), spec, G)
    assert res.holds and res.worst == pytest.approx(-0.5)


def test_comparison_rejects_non_supersolution():
    g = build_grid(1, [1.0], [33])
    spec = make_problem(g, h=1.0)
    u = linear_solve(assemble_linear(spec))
    w = GridFunction(g, u.values + 0.1 - 2 * g.axes[0] * (1 - g.axes[0]))
    G = Region.from_coords(g, [0.25], [0.75])
    with pytest.raises(PreconditionError, match="supersolution"):
        comparison_check(u, w, spec, G)


def test_localization_without_reaction():
    g = build_grid(1, [1.0], [65])
    spec = make_problem(g, mu=1.0, h=1.0, gradient_scheme="exponential")
    u0 = newton(spec, g.zeros())
    u = newton(spec.with_lambda(3.0), g.zeros())
    O = Region.from_coords(g, [0.6], [0.95])
    rep = localization_check(u, u0, spec, O)
    assert rep.holds and rep.comparison.holds
    vals = u0.u.values
    osc = vals[O.node_mask()].max() - vals[O.boundary_mask()].max()
    assert rep.slack == pytest.approx(2 * np.max(np.abs(vals)) - osc, rel=1e-12)


def test_localization_along_branch():
    c = lambda x: (x <= 0.5).astype(float)  # noqa: E731
    spec = model_spec(65, 1.0, c=c)
    br = model_branch(spec, (0.0, 12.0), ds=0.2)
    u0 = br.points[0].solution
    O = Region.from_coords(spec.grid, [0.6], [0.95])
    for p in br.points[1:]:
        rep = localization_check(p.solution, u0, spec, O)
        assert rep.holds and rep.comparison.holds


def test_localization_requires_zero_reaction():
    spec = model_spec(65, 1.0, c=lambda x: (x <= 0.5).astype(float))
    u0 = newton(spec, spec.grid.zeros())
    u = newton(spec.with_lambda(1.0), spec.grid.zeros())
    with pytest.raises(PreconditionError):
        localization_check(u, u0, spec, Region.from_coords(spec.grid, [0.4], [0.9]))
    with pytest.raises(PreconditionError):
        localization_check(u0, u, spec, Region.from_coords(spec.grid, [0.6], [0.95]))


def test_negative_case_report(branches):
    reps = [negative_case_bound(model_spec(n, -1.0), branches(-1.0, n)) for n in (65, 129)]
    for rep in reps:
        assert rep.mu1 == 1.0
        assert rep.z_floor > 0 and rep.certificate.diverges
        u0 = rep.sup_u[0]
        assert rep.z_min[0] == pytest.approx(math.exp(-u0), rel=1e-12)
    assert abs(reps[1].lipschitz_max / reps[0].lipschitz_max - 1) < 0.05
    assert abs(reps[1].z_floor / reps[0].z_floor - 1) < 0.05


def test_negative_case_trivial_branch():
    spec = model_spec(33, -1.0, h=0.0)
    rep = negative_case_bound(spec, model_branch(spec, (0.0, 2.0), ds=0.5))
    assert np.all(rep.lipschitz == 0) and np.all(rep.z_min == 1)


def test_negative_case_needs_negative_mu():
    spec = model_spec(33, 1.0)
    with pytest.raises(PreconditionError):
        negative_case_bound(spec, model_branch(spec, (0.0, 1.0), ds=0.5))
