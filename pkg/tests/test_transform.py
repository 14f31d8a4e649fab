import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cole_hopf_sup
from quadgrad.grid import GridFunction, build_grid
from quadgrad.operators import make_problem, residual
from quadgrad.solver import newton
from quadgrad.transform import (
    TransformDomainError,
    TransformOverflow,
    TransformSpec,
    derived_exponent,
    forward,
    inverse,
    reduce_to_positive,
    transformed_problem,
    transformed_reaction,
)

PI = np.pi
G17 = build_grid(1, [1.0], [17])


def field(values, grid=G17):
    return GridFunction(grid, np.asarray(values, dtype=float))


def test_forward_examples():
    v = forward(field(np.full(17, np.log(2))), TransformSpec(1.0)).values
    np.testing.assert_allclose(v, 1.0, rtol=1e-15)
    w = forward(field(np.zeros(17)), TransformSpec(3.0, "negative")).values
    assert np.all(w == 0)
    z = forward(field(np.full(17, 2.0)), TransformSpec(1.0, "negative")).values
    np.testing.assert_allclose(z, 1 - np.exp(-2.0), rtol=1e-15)


def test_negative_case_stays_below_reciprocal():
    t = TransformSpec(-2.0, "negative")
    assert t.exponent == -2.0
    v = forward(field(np.linspace(0, 10, 17)), t).values
    assert np.all(v < 0.5) and np.all(np.diff(v) > 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        TransformSpec(0.0)
    with pytest.raises(ValueError):
        TransformSpec(1.0, "sideways")


def test_overflow_and_domain_errors():
    u = np.zeros(17)
    u[5] = 800.0
    with pytest.raises(TransformOverflow) as err:
        forward(field(u), TransformSpec(1.0))
    assert err.value.node == (5,)
    v = np.zeros(17)
    v[3] = 2.0
    with pytest.raises(TransformDomainError) as err:
        inverse(field(v), TransformSpec(1.0, "negative"))
    assert err.value.node == (3,)


def test_tiny_mu_falls_back_to_identity():
    u = field(np.linspace(0, 1, 17))
    with pytest.warns(UserWarning, match="identity"):
        v = forward(u, TransformSpec(1e-10))
    np.testing.assert_array_equal(v.values, u.values)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-3, 20), min_size=17, max_size=17),
    st.floats(0.1, 4.0),
    st.sampled_from(["positive", "negative"]),
)
def test_round_trip(scaled, mu, direction):
    # s*u >= -3 keeps the inverse well conditioned (its condition number is exp(-s u))
    t = TransformSpec(mu, direction)
    u = field(np.asarray(scaled) / t.exponent)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        back = inverse(forward(u, t), t).values
    np.testing.assert_allclose(back, u.values, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=17, max_size=17), st.floats(0, 3), st.floats(-3, 3))
def test_forward_monotone(values, bump, mu):
    if abs(mu) < 1e-3:
        mu = 1.0
    u1 = np.asarray(values)
    u2 = u1 + bump * np.abs(np.sin(np.arange(17)))
    t = TransformSpec(mu)
    assert np.all(forward(field(u1), t).values <= forward(field(u2), t).values)


def test_transformed_reaction_asymptotics():
    t = TransformSpec(1.0)
    for v, tol in ((1e3, 0.05), (1e6, 0.005)):
        ratio = float(transformed_reaction(v, t)) / (v * np.log(v))
        assert abs(ratio - 1) < tol


def test_transformed_problem_shape():
    g = build_grid(1, [1.0], [33])
    spec = make_problem(g, mu=1.0, c=1.0, h=1.0, gradient_scheme="exponential")
    tp = transformed_problem(spec, TransformSpec(1.0))
    assert tp.reaction_mu == 1.0 and np.all(tp.M == 0)
    with pytest.raises(ValueError):
        transformed_problem(spec, TransformSpec(2.0))
    with pytest.raises(ValueError):
        transformed_problem(tp, TransformSpec(1.0))


def _manufactured(n):
    g = build_grid(1, [1.0], [n])
    lam = 2.0
    h = lambda x: PI**2 * np.sin(PI * x) - lam * np.sin(PI * x) - (PI * np.cos(PI * x)) ** 2  # noqa: E731
    spec = make_problem(g, c=1.0, mu=1.0, h=h, lam=lam)
    return spec, g.evaluate(lambda x: np.sin(PI * x))


def test_zero_map_second_order_central():
    errs = []
    for n in (33, 65, 129):
        spec, u = _manufactured(n)
        tp = transformed_problem(spec, TransformSpec(1.0))
        errs.append(np.max(np.abs(residual(tp, forward(u, TransformSpec(1.0))).values)))
    assert 3.4 < errs[0] / errs[1] < 4.6
    assert 3.4 < errs[1] / errs[2] < 4.6


def test_zero_map_exact_with_exponential_scheme():
    g = build_grid(1, [1.0], [65])
    spec = make_problem(g, c=1.0, mu=1.0, h=1.0, lam=3.0, gradient_scheme="exponential")
    sol = newton(spec, g.zeros())
    assert sol.converged
    t = TransformSpec(1.0)
    r = residual(transformed_problem(spec, t), forward(sol.u, t)).values
    assert np.max(np.abs(r)) <= 1e-9


def test_cole_hopf_solution_matches_analytic_sup():
    g = build_grid(1, [1.0], [33])
    spec = make_problem(g, mu=1.0, h=1.0)
    sol = newton(spec, g.zeros())
    assert sol.converged
    assert sol.sup == pytest.approx(cole_hopf_sup(), abs=1e-4)


def test_derived_exponent():
    assert derived_exponent(TransformSpec(1.0), TransformSpec(1.0)) == 1.0
    assert derived_exponent(TransformSpec(1.0), TransformSpec(2.0)) == 2.0
    with pytest.raises(ValueError):
        derived_exponent(TransformSpec(2.0), TransformSpec(1.0))
    with pytest.raises(ValueError):
        derived_exponent(TransformSpec(-1.0), TransformSpec(1.0))
    u = field(np.full(17, 20.0))
    v1, v2 = forward(u, TransformSpec(1.0)).values, forward(u, TransformSpec(2.0)).values
    # log(mu v) = mu u + O(exp(-mu u)), so the normalized ratio is A to rounding
    np.testing.assert_allclose(np.log(2 * v2) / np.log(v1), 2.0, atol=1e-6)
    # the raw ratio approaches A only like log(mu2)/log(v1)
    np.testing.assert_allclose(np.log(v2) / np.log(v1), 2.0 - np.log(2) / 20, atol=1e-6)


def test_reduce_to_positive_trivial_cases():
    g = build_grid(1, [1.0], [17])
    spec = make_problem(g, mu=1.0)
    red, psi = reduce_to_positive(spec)
    assert np.all(psi.values == 0) and np.all(red.h == 0)
    lin = make_problem(g, h=1.0)
    red, psi = reduce_to_positive(lin)
    sol = newton(red, g.zeros())
    assert sol.converged and np.max(np.abs(sol.u.values)) <= 1e-12


def test_reduce_to_positive_matches_direct_solve():
    g = build_grid(1, [1.0], [65])
    spec = make_problem(g, mu=1.0, h=1.0)
    red, psi = reduce_to_positive(spec)
    x = g.axes[0]
    np.testing.assert_allclose(psi.values, x * (1 - x) / 2, atol=1e-13)
    np.testing.assert_allclose(red.h[1:-1], (0.5 - x[1:-1]) ** 2, atol=1e-12)
    assert np.all(red.h >= 0) and np.all(red.g == 0)
    direct = newton(spec, g.zeros())
    shifted = newton(red, g.zeros())
    assert direct.converged and shifted.converged
    np.testing.assert_allclose(shifted.u.values + psi.values, direct.u.values, atol=1e-8)
