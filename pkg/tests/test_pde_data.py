import json

import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings
from hypothesis import strategies as st

from fusionop.pde_data import burgers, darcy, datasets, elasticity, grf
from fusionop.pde_data.grid import Grid, GridFunction


def grid_fn(fn, n):
    g = Grid((n, n))
    x, y = np.meshgrid(g.axis(0), g.axis(1), indexing="ij")
    return GridFunction(fn(x, y), g)


def observed_orders(errors, ns):
    hs = [1.0 / (n - 1) for n in ns]
    return [np.log(errors[i] / errors[i + 1]) / np.log(hs[i] / hs[i + 1]) for i in range(len(ns) - 1)]


# ---------------------------------------------------------------- grid


def test_grid_rejects_coarse_and_3d():
    with pytest.raises(ValueError):
        Grid((3, 8))
    with pytest.raises(ValueError):
        Grid((4, 4, 4))


def test_grid_function_rejects_nonfinite():
    with pytest.raises(ValueError):
        GridFunction(np.full((4, 4), np.nan), Grid((4, 4)))


def test_grid_coordinates():
    assert Grid((5,)).axis().tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert Grid((4,), periodic=True).axis().tolist() == [0.0, 0.25, 0.5, 0.75]
    c = Grid((4, 5)).coords()
    assert c.shape == (20, 2) and c[1].tolist() == [0.0, 0.25]


# ---------------------------------------------------------------- GRFs


def test_matern_deterministic():
    a = grf.sample_grf_matern(16, 2.2, 2.2, 3)
    b = grf.sample_grf_matern(16, 2.2, 2.2, 3)
    np.testing.assert_array_equal(a.values, b.values)


def test_matern_large_tau_vanishes():
    vals = np.array([grf.sample_grf_matern(16, 2.2, 1e3, s).values for s in range(50)])
    assert vals.var(axis=0).mean() < 1e-6


def test_matern_variance_matches_truncated_spectrum():
    n, alpha, tau, N = 32, 2.2, 2.2, 2000
    vals = np.array([grf.sample_grf_matern(n, alpha, tau, s).values for s in range(N)])
    emp = vals.var(axis=0).mean()
    oracle = sum((np.pi**2 * (i * i + j * j) + tau**2) ** (-alpha) for i in range(n) for j in range(n))
    assert abs(emp / oracle - 1) < 0.10


@pytest.mark.parametrize("alpha,tau", [(1.0, 2.0), (0.5, 2.0), (2.2, 0.0)])
def test_matern_rejects_bad_params(alpha, tau):
    with pytest.raises(ValueError):
        grf.sample_grf_matern(8, alpha, tau, 0)


def test_sqexp_unit_variance():
    vals = np.array([grf.sample_grf_sqexp(8, 0.2, s).flat for s in range(2000)])
    np.testing.assert_allclose(vals.var(axis=0), 1.0, atol=0.1)


def test_sqexp_kernel_zero_distance_is_one():
    pts = np.array([[0.3, 0.7], [0.3, 0.7], [0.9, 0.1]])
    K = grf.sqexp_kernel(pts, 0.1)
    assert K[0, 1] == 1.0 and np.all(np.diag(K) == 1.0)


def test_sqexp_longer_length_more_correlated_at_lag():
    # 11 nodes per axis: neighbours are 0.1 apart
    corr = {}
    for l in (0.04, 0.12):
        vals = np.array([grf.sample_grf_sqexp(11, l, s).values for s in range(2000)])
        a, b = vals[:, 5, 5], vals[:, 6, 5]
        corr[l] = np.corrcoef(a, b)[0, 1]
        # kernel value exp(-0.01 / 2 l^2) is the exact correlation
        assert abs(corr[l] - np.exp(-0.01 / (2 * l * l))) < 0.1
    assert corr[0.12] > corr[0.04]


def test_sqexp_rejects_bad_length():
    with pytest.raises(ValueError):
        grf.sample_grf_sqexp(8, 0.0, 0)


def test_sqexp_periodic_is_translation_invariant():
    K = grf.sqexp_kernel(Grid((16,), periodic=True).coords(), 0.1, periodic=True)
    np.testing.assert_allclose(K, np.roll(np.roll(K, 3, axis=0), 3, axis=1), atol=1e-14)


# ---------------------------------------------------------------- Darcy


def test_darcy_zero_forcing():
    a = grid_fn(lambda x, y: 1 + x * y, 10)
    u = darcy.solve_darcy(a, grid_fn(lambda x, y: 0 * x, 10))
    np.testing.assert_array_equal(u.values, 0.0)


def test_darcy_manufactured_order_two():
    ns, errs = [16, 32, 64], []
    for n in ns:
        exact = grid_fn(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), n).values
        f = grid_fn(lambda x, y: 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y), n)
        u = darcy.solve_darcy(grid_fn(lambda x, y: 1 + 0 * x, n), f)
        errs.append(np.abs(u.values - exact).max())
    assert min(observed_orders(errs, ns)) >= 1.9


def test_darcy_variable_coefficient_order_two():
    # a = 1 + x y, u = sin(pi x) sin(pi y); f derived symbolically
    x, y = sy.symbols("x y")
    a_s, u_s = 1 + x * y, sy.sin(sy.pi * x) * sy.sin(sy.pi * y)
    f_s = -(sy.diff(a_s * sy.diff(u_s, x), x) + sy.diff(a_s * sy.diff(u_s, y), y))
    a_f, u_f, f_f = (sy.lambdify((x, y), e, "numpy") for e in (a_s, u_s, f_s))
    ns, errs = [16, 32, 64], []
    for n in ns:
        u = darcy.solve_darcy(grid_fn(a_f, n), grid_fn(f_f, n))
        errs.append(np.abs(u.values - grid_fn(u_f, n).values).max())
    assert min(observed_orders(errs, ns)) >= 1.9


def test_darcy_constant_coefficient_scaling():
    f = grid_fn(lambda x, y: np.exp(x) * np.cos(3 * y), 12)
    c = 3.7
    u1 = darcy.solve_darcy(grid_fn(lambda x, y: 1 + 0 * x, 12), f)
    uc = darcy.solve_darcy(grid_fn(lambda x, y: c + 0 * x, 12), GridFunction(c * f.values, f.grid))
    np.testing.assert_allclose(uc.values, u1.values, atol=1e-13)


def test_darcy_rejects_nonpositive_permeability():
    with pytest.raises(ValueError):
        darcy.solve_darcy(grid_fn(lambda x, y: x - 0.5, 8), grid_fn(lambda x, y: 1 + 0 * x, 8))


def test_darcy_rejects_mismatched_grids():
    with pytest.raises(ValueError):
        darcy.solve_darcy(grid_fn(lambda x, y: 1 + 0 * x, 8), grid_fn(lambda x, y: 1 + 0 * x, 9))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(1.2, 3.0), tau=st.floats(0.5, 5.0))
def test_property_darcy_maximum_principle(seed, alpha, tau):
    g = grf.sample_grf_matern(12, alpha, tau, seed)
    rng = np.random.default_rng(seed)
    f = GridFunction(rng.uniform(0, 2, (12, 12)), g.grid)
    u = darcy.solve_darcy(GridFunction(np.exp(g.values), g.grid), f)
    assert u.values.min() >= -1e-12


# ---------------------------------------------------------------- elasticity


def _elasticity_manufactured():
    x, y = sy.symbols("x y")
    E, nu = sy.Integer(1), sy.Rational(3, 10)
    u, v = sy.sin(sy.pi * x) * sy.sin(sy.pi * y), sy.Integer(0)
    # plane-stress constitutive law, then f = -div(sigma)
    C = E / (1 - nu**2)
    exx, eyy, gxy = sy.diff(u, x), sy.diff(v, y), sy.diff(u, y) + sy.diff(v, x)
    sxx = C * (exx + nu * eyy)
    syy = C * (nu * exx + eyy)
    sxy = C * (1 - nu) / 2 * gxy
    fx = -(sy.diff(sxx, x) + sy.diff(sxy, y))
    fy = -(sy.diff(sxy, x) + sy.diff(syy, y))
    return [sy.lambdify((x, y), e + 0 * x, "numpy") for e in (u, fx, fy)]


def test_elasticity_manufactured_order_two():
    u_f, fx_f, fy_f = _elasticity_manufactured()
    ns, errs = [16, 32, 64], []
    for n in ns:
        u, v = elasticity.solve_elasticity(grid_fn(fx_f, n), grid_fn(fy_f, n), 1.0, 0.3)
        errs.append(max(np.abs(u.values - grid_fn(u_f, n).values).max(), np.abs(v.values).max()))
    assert min(observed_orders(errs, ns)) >= 1.9


def test_elasticity_zero_force_and_linearity():
    zero = grid_fn(lambda x, y: 0 * x, 10)
    u, v = elasticity.solve_elasticity(zero, zero)
    assert not u.values.any() and not v.values.any()
    fx = grid_fn(lambda x, y: np.sin(5 * x) * y, 10)
    fy = grid_fn(lambda x, y: x - y**2, 10)
    u1, v1 = elasticity.solve_elasticity(fx, fy)
    u2, v2 = elasticity.solve_elasticity(GridFunction(2 * fx.values, fx.grid), GridFunction(2 * fy.values, fy.grid))
    np.testing.assert_allclose(u2.values, 2 * u1.values, rtol=1e-12, atol=1e-16)
    np.testing.assert_allclose(v2.values, 2 * v1.values, rtol=1e-12, atol=1e-16)


@pytest.mark.parametrize("E,nu", [(0.0, 0.3), (1.0, 0.5), (1.0, 0.0)])
def test_elasticity_rejects_bad_material(E, nu):
    f = grid_fn(lambda x, y: 1 + 0 * x, 6)
    with pytest.raises(ValueError):
        elasticity.solve_elasticity(f, f, E, nu)


# ---------------------------------------------------------------- Burgers


def test_burgers_zero_and_constant_states():
    sol = burgers.solve_burgers(np.zeros(32), 0.1)
    assert not sol.values.any()
    sol = burgers.solve_burgers(np.full(32, 0.7), 0.01, save_times=[0.5, 1.0])
    np.testing.assert_allclose(sol.values, 0.7, atol=1e-13)


def test_burgers_self_convergence():
    def run(n):
        x = np.arange(n) / n
        return burgers.solve_burgers(np.sin(2 * np.pi * x), 0.1, 1.0, n_steps=4096).values[-1]

    coarse, fine = run(256), run(512)
    assert np.abs(fine[::2] - coarse).max() < 1e-6


def test_burgers_energy_non_increasing():
    u0 = grf.sample_grf_sqexp(64, 0.1, 5, periodic=True, ndim=1).values
    sol = burgers.solve_burgers(u0, 0.01, 1.0, save_times=np.linspace(0, 1, 21))
    energy = (sol.values**2).sum(axis=-1) / 64
    assert np.all(np.diff(energy) <= 1e-10)
    assert sol.times[0] == 0.0 and len(sol.times) == 21


def test_burgers_cfl_error_suggests_steps():
    u0 = np.sin(2 * np.pi * np.arange(64) / 64)
    with pytest.raises(burgers.CFLError, match="n_steps >= 256"):
        burgers.solve_burgers(u0, 0.1, 1.0, n_steps=10)


def test_burgers_rejects_nonpositive_viscosity():
    with pytest.raises(ValueError):
        burgers.solve_burgers(np.zeros(8), 0.0)


def test_burgers_batch_matches_single():
    rng = np.random.default_rng(0)
    u0 = rng.standard_normal((3, 32)) * 0.3
    batch = burgers.solve_burgers(u0, 0.05, 0.5, n_steps=400).values[-1]
    for i in range(3):
        single = burgers.solve_burgers(u0[i], 0.05, 0.5, n_steps=400).values[-1]
        np.testing.assert_allclose(batch[i], single, atol=1e-14)


# ---------------------------------------------------------------- datasets


def test_spec_validation():
    with pytest.raises(ValueError):
        datasets.ScenarioSpec("heat")
    with pytest.raises(ValueError):
        datasets.ScenarioSpec("burgers", nu=0.0)
    with pytest.raises(ValueError):
        datasets.ScenarioSpec("elasticity", poisson=0.5)


def test_scenario_parameters():
    s, t = datasets.scenario_specs("darcy-dist-shift")
    assert (s.alpha, s.tau, t.alpha, t.tau) == (2.2, 2.2, 1.2, 1.2)
    s, t = datasets.scenario_specs("darcy-forcing")
    assert (s.forcing, t.forcing) == ("5xy", "one")
    s, t = datasets.scenario_specs("burgers-nu")
    assert (s.nu, t.nu, s.resolution) == (0.001, 0.1, 128)
    s, t = datasets.scenario_specs("burgers-nu", burgers_reverse=True)
    assert (s.nu, t.nu) == (0.1, 0.001)
    s, t = datasets.scenario_specs("elasticity-l")
    assert (s.length_scale, t.length_scale) == (0.04, 0.12)
    assert s.seed != t.seed
    with pytest.raises(ValueError):
        datasets.scenario_specs("navier-stokes")


def test_darcy_forcing_grids():
    s, t = datasets.scenario_specs("darcy-forcing", resolution=8)
    np.testing.assert_array_equal(datasets.darcy_forcing(t).values, 1.0)
    x = np.linspace(0, 1, 8)
    np.testing.assert_allclose(datasets.darcy_forcing(s).values, 5 * np.outer(x, x))


@pytest.mark.parametrize("equation,res", [("darcy", 8), ("burgers", 16), ("elasticity", 8)])
def test_make_dataset_deterministic(equation, res):
    spec = datasets.ScenarioSpec(equation, resolution=res, n_samples=3, seed=4)
    a, b = datasets.make_dataset(spec), datasets.make_dataset(spec)
    assert len(a) == 3
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.outputs, b.outputs)
    ch = 2 if equation == "elasticity" else 1
    assert a.inputs.shape == (3, ch * spec.grid.size) and a.outputs.shape == (3, ch * spec.grid.size)


def test_per_sample_seeds_independent_of_n():
    spec = datasets.ScenarioSpec("darcy", resolution=8, n_samples=4, seed=2)
    a = datasets.make_dataset(spec)
    b = datasets.make_dataset(datasets.ScenarioSpec("darcy", resolution=8, n_samples=2, seed=2))
    np.testing.assert_array_equal(a.inputs[:2], b.inputs)
    g = grf.sample_grf_matern(8, 2.2, 2.2, 2 ^ 3)
    np.testing.assert_array_equal(a.inputs[3], np.exp(g.values).ravel())


def test_darcy_dataset_inputs_positive():
    ds = datasets.make_dataset(datasets.ScenarioSpec("darcy", resolution=8, n_samples=3))
    assert np.all(ds.inputs > 0)


def test_dataset_round_trip(tmp_path):
    ds = datasets.make_dataset(datasets.ScenarioSpec("burgers", resolution=16, n_samples=4, nu=0.05))
    path = datasets.save_dataset(ds.subset([3, 1]), tmp_path / "d")
    back = datasets.load_dataset(path)
    np.testing.assert_array_equal(back.inputs, ds.inputs[[3, 1]])
    np.testing.assert_array_equal(back.outputs, ds.outputs[[3, 1]])
    assert back.spec == ds.spec and back.indices.tolist() == [3, 1]
    raw = np.fromfile(path / "outputs.f64", dtype="<f8")
    np.testing.assert_array_equal(raw, ds.outputs[[3, 1]].ravel())


def test_dataset_truncated_blob(tmp_path):
    ds = datasets.make_dataset(datasets.ScenarioSpec("burgers", resolution=8, n_samples=2))
    path = datasets.save_dataset(ds, tmp_path / "d")
    data = (path / "inputs.f64").read_bytes()
    (path / "inputs.f64").write_bytes(data[:-8])
    with pytest.raises(datasets.DatasetFormatError, match="inputs"):
        datasets.load_dataset(path)


def test_dataset_foreign_version(tmp_path):
    ds = datasets.make_dataset(datasets.ScenarioSpec("burgers", resolution=8, n_samples=2))
    path = datasets.save_dataset(ds, tmp_path / "d")
    m = json.loads((path / "manifest.json").read_text())
    m["format_version"] = "other/9"
    (path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(datasets.DatasetFormatError, match="version"):
        datasets.load_dataset(path)
    with pytest.raises(datasets.DatasetFormatError):
        datasets.load_dataset(tmp_path / "missing")


def test_split_and_accessors():
    ds = datasets.make_dataset(datasets.ScenarioSpec("burgers", resolution=8, n_samples=5))
    tr, te = ds.split(2)
    assert len(tr) == 3 and te.indices.tolist() == [3, 4]
    with pytest.raises(ValueError):
        ds.split(6)
    with pytest.raises(IndexError):
        ds.input_function(5)
    assert ds.output_function(0).values.shape == (8,)
