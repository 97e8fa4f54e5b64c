"""Acceptance suite: one test group per criterion, each at its stated tolerance.

The trained-model criteria (5-9) share module-scoped fixtures so each model is
trained once. Run just this file with ``pytest tests/test_acceptance.py -v``;
the terminal summary prints one PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from flowmanifold import data
from flowmanifold.experiments import recipe, run_cell
from flowmanifold.flow import VelocityModel, build_time_grid
from flowmanifold.metrics import dist_manifold, exact_w2, nearest_petal
from flowmanifold.nn import MlpNet
from flowmanifold.ode import integrate, quadratic_grid, uniform_grid
from flowmanifold.oracle import AtomicTarget, ExactField, exact_velocity, posterior_weights, velocity_mse
from flowmanifold.svg import scatter_svg
from flowmanifold.utils import derive_seed

pytestmark = pytest.mark.acceptance

SEEDS = [0, 1, 2, 3, 4]


def criterion(n):
    return pytest.mark.criterion(n)


# ---------------------------------------------------------------- 1. gradient exactness

NETS = [(1, 8), (2, 16), (3, 32), (4, 64), (1, 64), (2, 32), (3, 16), (4, 8), (2, 64), (3, 48)]


def central_differences(net, x, u, h):
    out = []
    for p in net.params():
        g = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            plus = np.sum(u * net.forward(x))
            p[idx] = old - h
            minus = np.sum(u * net.forward(x))
            p[idx] = old
            g[idx] = (plus - minus) / (2 * h)
        out.append(g)
    return out


@criterion(1)
def test_c1_gradients_match_central_differences(record_property):
    start = time.perf_counter()
    worst = 0.0
    for seed, (depth, width) in enumerate(NETS):
        rng = np.random.default_rng(seed)
        net = MlpNet.init([3] + [width] * depth + [2], rng)
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(4, 3))
        u = rng.normal(size=(4, 2))
        grads, _ = net.backward(x, u)
        for g, fd in zip(grads, central_differences(net, x, u, 1e-5)):
            scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)
            worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
    elapsed = time.perf_counter() - start
    record_property("measured", f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-4
    assert elapsed < 10.0


# ---------------------------------------------------------------- 2. single-atom oracle


@criterion(2)
def test_c2_single_atom_velocity_closed_form(record_property):
    rng = np.random.default_rng(0)
    y0 = np.array([0.7, -1.3, 2.0])
    x = rng.normal(size=(1000, 3)) * 3
    t = rng.uniform(0.0, 0.999, size=1000)
    got = exact_velocity(AtomicTarget(y0[None, :]), x, t)
    want = (y0 - x) / (1 - t)[:, None]
    rel = np.max(np.abs(got - want) / np.maximum(np.abs(want), 1e-300))
    record_property("measured", f"max rel err {rel:.1e}")
    np.testing.assert_allclose(got, want, rtol=2 * np.finfo(float).eps, atol=0)


@criterion(2)
def test_c2_rk4_pushforward_follows_linear_path(record_property):
    y0 = np.array([0.7, -1.3, 2.0])
    t_min = 1e-3
    x0 = np.random.default_rng(1).normal(size=(200, 3))
    start = time.perf_counter()
    end = integrate(ExactField(AtomicTarget(y0[None, :])), x0, quadratic_grid(500, t_min, "rk4"), keep_path=False)
    err = np.max(np.abs(end - ((1 - t_min) * y0 + t_min * x0)))
    record_property("measured", f"endpoint err {err:.1e}")
    assert err <= 1e-6
    assert time.perf_counter() - start < 10.0


# ---------------------------------------------------------------- 3. two-atom transport


def two_atom_w2(X, atoms):
    """Exact W2 from ``X`` to the balanced two-atom cloud: send the n/2 points that gain most to atom 0."""
    c0 = np.sum((X - atoms[0]) ** 2, axis=1)
    c1 = np.sum((X - atoms[1]) ** 2, axis=1)
    order = np.argsort(c0 - c1, kind="stable")
    half = len(X) // 2
    return np.sqrt((c0[order[:half]].sum() + c1[order[half:]].sum()) / len(X))


def pushforward(atoms, seed, n=4096):
    x0 = np.random.default_rng(seed).standard_normal((n, 2))
    return integrate(ExactField(AtomicTarget(atoms)), x0, quadratic_grid(500, 1e-3, "rk4"), keep_path=False)


@criterion(3)
def test_c3_two_atom_pushforward_w2(record_property):
    atoms = np.array([[-0.15, 0.0], [0.15, 0.0]])
    start = time.perf_counter()
    X = pushforward(atoms, seed=0)
    ref = np.repeat(atoms, 512, axis=0)
    w2 = [exact_w2(X[k * 1024 : (k + 1) * 1024], ref) for k in range(4)]
    record_property("measured", f"W2 over 1024-subsets {np.round(w2, 4).tolist()} mean {np.mean(w2):.4f}")
    assert np.mean(w2) <= 0.05
    assert time.perf_counter() - start < 120.0


@criterion(3)
def test_c3_unit_separation_matches_two_atom_closed_form(record_property):
    atoms = np.array([[-1.0, 0.0], [1.0, 0.0]])
    X = pushforward(atoms, seed=0)
    # every endpoint sits within (1 - t) |x0| of an atom
    snap = np.min(np.linalg.norm(X[:, None, :] - atoms[None], axis=2), axis=1)
    assert snap.max() < 1e-2
    frac = np.mean(X[:, 0] > 0)
    assert abs(frac - 0.5) <= 3 * np.sqrt(0.25 / len(X))
    sub, ref = X[:1024], np.repeat(atoms, 512, axis=0)
    assert exact_w2(sub, ref) == pytest.approx(two_atom_w2(sub, atoms), rel=1e-9)
    record_property("measured", f"unit atoms: W2 {exact_w2(sub, ref):.4f} (binomial floor), snap {snap.max():.1e}")


# ---------------------------------------------------------------- 4. ODE orders

NS = [8, 16, 32, 64, 128]


@criterion(4)
@pytest.mark.parametrize("scheme,order", [("euler", 1), ("rk4", 4)])
def test_c4_convergence_slopes(scheme, order, record_property):
    x0 = np.array([1.0, -0.5])
    errs = [np.max(np.abs(integrate(lambda x, t: x, x0, uniform_grid(N, 1.0, scheme), keep_path=False) - np.e * x0))
            for N in NS]
    slope = -np.polyfit(np.log(NS), np.log(errs), 1)[0]
    record_property("measured", f"{scheme} slope {slope:.3f}")
    assert abs(slope - order) <= 0.3


# ---------------------------------------------------------------- trained models (5-9)


@pytest.fixture(scope="module")
def sphere_runs():
    exp = recipe("sphere")
    return {seed: run_cell(exp, seed) for seed in SEEDS}


@pytest.fixture(scope="module")
def sphere_small_runs():
    out = {}
    for n in (128, 512):
        exp = recipe("sphere", n_train=n)
        out[n] = {seed: run_cell(exp, seed) for seed in SEEDS}
    return out


@criterion(5)
def test_c5_sphere_table_row(sphere_runs, record_property):
    w1 = np.mean([r.w1 for r in sphere_runs.values()])
    dist = np.mean([r.dist_mean for r in sphere_runs.values()])
    per_seed = max(r.timings["train"] + r.timings["sample"] for r in sphere_runs.values())
    record_property("measured", f"w1 {w1:.4f} (<= 0.08), dist {dist:.4f} (<= 0.11), max {per_seed:.0f}s/seed")
    assert w1 <= 0.08
    assert dist <= 0.11
    assert per_seed < 15 * 60


@criterion(6)
def test_c6_torus_table_row(record_property):
    exp = recipe("torus", manifold={"d": 2, "D": 6})
    runs = [run_cell(exp, seed) for seed in SEEDS]
    w1 = np.mean([r.w1 for r in runs])
    dist = np.mean([r.dist_mean for r in runs])
    per_seed = max(r.timings["train"] + r.timings["sample"] for r in runs)
    record_property("measured", f"w1 {w1:.4f} (<= 0.06), dist {dist:.4f} (<= 0.13), max {per_seed:.0f}s/seed")
    assert w1 <= 0.06
    assert dist <= 0.13
    assert per_seed < 20 * 60


@criterion(7)
def test_c7_floral_figure(tmp_path_factory, record_property):
    exp = recipe("floral")
    start = time.perf_counter()
    res = run_cell(exp, 0)
    elapsed = time.perf_counter() - start
    share = np.bincount(nearest_petal(res.generated, exp.spec), minlength=exp.spec.m) / len(res.generated)
    svg = scatter_svg([("training data", res.train_data), ("generated", res.generated)])
    out = tmp_path_factory.mktemp("c7") / "floral.svg"
    out.write_text(svg)
    record_property("measured", f"dist {res.dist_mean:.4f} (<= 0.15), min petal share {share.min():.3f}, "
                                f"{elapsed:.0f}s, svg {out}")
    assert res.dist_mean <= 0.15
    assert np.all(share >= 0.05)
    assert svg.count("<circle") >= 2 * len(res.generated)
    assert elapsed < 10 * 60


C8_KNOTS = [0.5, 0.1, 0.02, 0.004]


@criterion(8)
def test_c8_velocity_error_grows_toward_one(sphere_runs, record_property):
    table = []
    for seed, res in sphere_runs.items():
        target = AtomicTarget(res.train_data)
        row = []
        for k, tk in enumerate(C8_KNOTS):
            probe = velocity_mse(res.model, target, (1 - tk, 1 - tk / 2), 4096, derive_seed(seed, "c8", k))
            row.append(probe.mse)
        table.append(row)
    med = np.median(table, axis=0)
    record_property("measured", "median mse " + " <= ".join(f"{m:.3g}" for m in med))
    assert np.all(np.diff(med) >= 0)


@criterion(9)
def test_c9_w2_decreases_with_n(sphere_runs, sphere_small_runs, record_property):
    spec = recipe("sphere").spec
    by_n = {128: sphere_small_runs[128], 512: sphere_small_runs[512], 2048: sphere_runs}
    med = {}
    for n, runs in by_n.items():
        vals = []
        for seed, res in runs.items():
            fresh = data.sample(spec, 1024, np.random.default_rng(derive_seed(seed, "c9_fresh")))
            vals.append(exact_w2(res.generated[:1024], fresh))
        med[n] = float(np.median(vals))
    record_property("measured", "median W2 " + ", ".join(f"n={n}: {v:.4f}" for n, v in med.items()))
    assert med[128] > med[512] > med[2048]


# ---------------------------------------------------------------- 10. invariants


@criterion(10)
@settings(max_examples=60, deadline=None)
@given(n=st.integers(10, 10**9), alpha=st.floats(0, 5), d=st.integers(3, 10), beta=st.floats(2, 6),
       ratio=st.floats(1.01, 2.0))
def test_c10_time_grid_ratio_bounds(n, alpha, d, beta, ratio):
    grid = build_time_grid(n, alpha, d, beta, ratio=ratio)
    r = grid.knots[:-1] / grid.knots[1:]
    assert grid.knots[0] == 1.0 and 0 < grid.knots[-1] <= 0.5
    assert np.all(r > 1.0) and np.all(r <= 2.0 * (1 + 1e-12))


@criterion(10)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 40), t=st.floats(0.0, 1 - 1e-9), scale=st.floats(0.01, 100))
def test_c10_softmax_weights_normalised(seed, m, t, scale):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(m))
    target = AtomicTarget(rng.normal(size=(m, 3)) * scale, w / w.sum())
    W = posterior_weights(target, rng.normal(size=(16, 3)) * scale, t)
    assert np.all(W >= 0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)


@criterion(10)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), t=st.floats(0.0, 1 - 1e-6), gain=st.floats(1.0, 1e4), n=st.integers(2, 10**6))
def test_c10_clip_enforced(seed, t, gain, n):
    rng = np.random.default_rng(seed)
    model = VelocityModel.init(3, n, rng, width=16, depth=2, time_input="raw")
    model.nets[0].weights[-1] *= gain
    v = model(rng.normal(size=(32, 3)) * 10, t)
    assert np.max(np.abs(v)) <= model.c_clip * np.sqrt(np.log(n)) / (1 - t)


@criterion(10)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 30), D=st.integers(1, 4))
def test_c10_exact_w2_metric_axioms(seed, n, D):
    rng = np.random.default_rng(seed)
    A, B, C = rng.normal(size=(3, n, D)) * rng.uniform(0.1, 3, size=(3, 1, 1))
    assert exact_w2(A, A) == 0.0
    assert exact_w2(A, B) == pytest.approx(exact_w2(B, A), rel=1e-12)
    assert exact_w2(A, C) <= exact_w2(A, B) + exact_w2(B, C) + 1e-9


def _grid_min(point, embed, axes):
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes))
    cloud = np.array([embed(a) for a in mesh])
    start = mesh[np.argmin(np.linalg.norm(cloud - point, axis=1))]
    res = minimize(lambda a: np.sum((embed(a) - point) ** 2), start, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return np.sqrt(res.fun)


@criterion(10)
def test_c10_sphere_distance_vs_brute_force():
    spec = data.SphereSpec(d=2, D=4)

    def embed(a):
        return np.array([np.sin(a[0]) * np.cos(a[1]), np.sin(a[0]) * np.sin(a[1]), np.cos(a[0]), 0.0])

    pts = np.random.default_rng(10).normal(size=(100, 4)) * 0.8
    axes = [np.linspace(0, np.pi, 60), np.linspace(-np.pi, np.pi, 120)]
    bf = np.array([_grid_min(p, embed, axes) for p in pts])
    np.testing.assert_allclose(dist_manifold(pts, spec), bf, atol=1e-4)


@criterion(10)
def test_c10_torus_distance_vs_brute_force():
    spec = data.TorusSpec(d=2, D=6, seed=3)

    def embed(a):
        x = np.zeros(6)
        x[0:4:2], x[1:4:2] = np.cos(a), np.sin(a)
        return spec.O @ x

    pts = np.random.default_rng(11).normal(size=(100, 6)) * 0.8
    axes = [np.linspace(-np.pi, np.pi, 90)] * 2
    bf = np.array([_grid_min(p, embed, axes) for p in pts])
    np.testing.assert_allclose(dist_manifold(pts, spec), bf, atol=1e-4)
