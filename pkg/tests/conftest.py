import pytest

from quadgrad.continuation import model_branch
from quadgrad.grid import build_grid
from quadgrad.operators import make_problem


def model_spec(n, mu, scheme="exponential", **kw):
    grid = build_grid(1, [1.0], [n])
    return make_problem(grid, mu=mu, c=kw.pop("c", 1.0), h=kw.pop("h", 1.0), gradient_scheme=scheme, **kw)


@pytest.fixture(scope="session")
def branches():
    """Model branches keyed by (mu, nodes); traced once per session."""
    cache = {}

    def get(mu, n, lam_range=None):
        key = (mu, n, lam_range)
        if key not in cache:
            rng = lam_range or {1.0: (0.0, 12.0), 0.0: (0.0, 12.0), -1.0: (0.0, 10.87)}[mu]
            cache[key] = model_branch(model_spec(n, mu), rng, ds=0.1)
        return cache[key]

    return get
