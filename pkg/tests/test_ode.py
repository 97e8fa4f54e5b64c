import numpy as np
import pytest

from flowmanifold.errors import ContractError, IntegrationError
from flowmanifold.ode import SamplerGrid, integrate, quadratic_grid, uniform_grid
from flowmanifold.oracle import AtomicTarget, ExactField

NS = [8, 16, 32, 64, 128]


def exp_field(x, t):
    return x


def convergence_slope(scheme):
    x0 = np.array([1.0, -0.5])
    errs = [np.abs(integrate(exp_field, x0, uniform_grid(N, 1.0, scheme), keep_path=False) - np.e * x0).max()
            for N in NS]
    return -np.polyfit(np.log(NS), np.log(errs), 1)[0]


def test_quadratic_grid_small_cases():
    np.testing.assert_allclose(quadratic_grid(2, 0.0).nodes, [0.0, 0.75, 1.0])
    np.testing.assert_allclose(quadratic_grid(4, 1 / 16).nodes, [0.0, 0.4375, 0.75, 0.9375])


def test_quadratic_grid_appends_cap():
    g = quadratic_grid(4, 0.01)
    np.testing.assert_allclose(g.nodes, [0.0, 0.4375, 0.75, 0.9375, 0.99])


def test_quadratic_grid_spacing_shrinks():
    g = quadratic_grid(250, (1 / 250) ** 2)
    h = np.diff(g.nodes)
    assert np.all(np.diff(h) < 0)
    assert g.nodes[-1] <= 1 - (1 / 250) ** 2 + 1e-15


def test_grid_validation():
    with pytest.raises(ContractError):
        SamplerGrid(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ContractError):
        SamplerGrid(np.array([0.0, 1.0]), "midpoint")
    with pytest.raises(ContractError):
        quadratic_grid(0)


@pytest.mark.parametrize("scheme", ["euler", "rk4"])
def test_zero_field_is_constant(scheme):
    x0 = np.array([[1.0, 2.0], [-3.0, 0.5]])
    grid = quadratic_grid(10, 0.01, scheme)
    path = integrate(lambda x, t: np.zeros_like(x), x0, grid)
    assert path.shape == (len(grid.nodes), 2, 2)
    assert np.all(path == x0)


def test_single_atom_endpoint_rk4():
    y0 = np.array([2.0, -1.0, 0.5])
    x0 = np.array([0.3, 0.1, -1.2])
    t_min = 1e-3
    end = integrate(ExactField(AtomicTarget(y0[None])), x0, uniform_grid(500, 1 - t_min, "rk4"), keep_path=False)
    np.testing.assert_allclose(end, (1 - t_min) * y0 + t_min * x0, atol=1e-6)


@pytest.mark.parametrize("scheme,order", [("euler", 1.0), ("rk4", 4.0)])
def test_convergence_order(scheme, order):
    assert abs(convergence_slope(scheme) - order) <= 0.3


def test_time_reversal_rk4():
    x0 = np.array([0.7, -1.1])
    grid = uniform_grid(500, 1.0, "rk4")
    forward = integrate(exp_field, x0, grid, keep_path=False)
    back = integrate(lambda x, t: -x, forward, grid, keep_path=False)
    np.testing.assert_allclose(back, x0, atol=1e-6)


def test_batch_equals_independent_runs():
    rng = np.random.default_rng(0)
    atoms = rng.normal(size=(3, 2))
    field = ExactField(AtomicTarget(atoms))
    x0 = rng.normal(size=(5, 2))
    grid = quadratic_grid(40, 1e-2, "rk4")
    batch = integrate(field, x0, grid, keep_path=False)
    single = np.stack([integrate(field, x, grid, keep_path=False) for x in x0])
    np.testing.assert_allclose(batch, single, rtol=1e-12, atol=1e-12)


def test_nonfinite_state_reports_node():
    def blowup(x, t):
        return x * (np.inf if t >= 0.5 else 1.0)

    with pytest.raises(IntegrationError) as info:
        integrate(blowup, np.ones(2), uniform_grid(4, 1.0))
    assert info.value.where == 3
