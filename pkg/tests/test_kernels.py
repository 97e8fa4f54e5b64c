"""The numba and numpy kernel paths must agree."""

import numpy as np
import pytest

from flowmanifold import kernels


@pytest.mark.parametrize("seed", range(4))
def test_atom_softmax_mean_paths_agree(seed):
    rng = np.random.default_rng(seed)
    atoms = rng.normal(size=(50, 3))
    log_w = np.log(rng.dirichlet(np.ones(50)))
    x = rng.normal(size=(30, 3))
    t = rng.uniform(0, 0.99, size=30)
    np.testing.assert_allclose(
        kernels.atom_softmax_mean_nb(x, t, atoms, log_w),
        kernels.atom_softmax_mean_np(x, t, atoms, log_w),
        rtol=1e-9, atol=1e-11,
    )


def test_atom_softmax_mean_chunking(monkeypatch):
    monkeypatch.setattr(kernels, "_CHUNK_ENTRIES", 64)
    rng = np.random.default_rng(0)
    atoms = rng.normal(size=(20, 2))
    x = rng.normal(size=(37, 2))
    t = np.full(37, 0.5)
    np.testing.assert_allclose(
        kernels.atom_softmax_mean_np(x, t, atoms, np.zeros(20)),
        kernels.atom_softmax_mean_nb(x, t, atoms, np.zeros(20)),
        rtol=1e-10,
    )


def test_segment_min_dist_paths_agree():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(40, 2))
    b = a + rng.normal(scale=0.3, size=(40, 2))
    b[3] = a[3]  # degenerate segment
    p = rng.normal(size=(25, 2)) * 2
    np.testing.assert_allclose(kernels.segment_min_dist_nb(p, a, b), kernels.segment_min_dist_np(p, a, b), rtol=1e-12)


def test_segment_min_dist_simple():
    a = np.array([[0.0, 0.0]])
    b = np.array([[2.0, 0.0]])
    p = np.array([[1.0, 3.0], [-4.0, 3.0], [5.0, 0.0]])
    for fn in (kernels.segment_min_dist_nb, kernels.segment_min_dist_np):
        np.testing.assert_allclose(fn(p, a, b), [3.0, 5.0, 3.0])


@pytest.mark.parametrize("n,m", [(5, 5), (7, 3), (2, 11), (64, 48)])
def test_w1_paths_agree(n, m):
    rng = np.random.default_rng(n * m)
    a = np.sort(rng.normal(size=(6, n)), axis=1)
    b = np.sort(rng.normal(size=(6, m)), axis=1)
    np.testing.assert_allclose(kernels.w1_sorted_rows_nb(a, b), kernels.w1_sorted_rows_np(a, b), rtol=1e-12)


def test_w1_equal_sizes_is_mean_abs_difference():
    rng = np.random.default_rng(2)
    a = np.sort(rng.normal(size=(3, 9)), axis=1)
    b = np.sort(rng.normal(size=(3, 9)), axis=1)
    np.testing.assert_allclose(kernels.w1_sorted_rows(a, b), np.abs(a - b).mean(axis=1), rtol=1e-12)
