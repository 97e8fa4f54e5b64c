"""Distributional and geometric fidelity metrics."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import kernels
from .data import FLORAL_POLYLINE_POINTS
from .errors import ContractError

EXACT_W2_MAX_N = 4096
N_PROJECTIONS = 128
N_RUNS = 5


def random_directions(D, n_proj, seed):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.standard_normal((n_proj, D))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def standardize(A, B, tol=1e-12):
    """Map both clouds by the per-coordinate mean and standard deviation of the reference ``B``.

    Coordinates whose reference spread is below ``tol`` are only centred.
    """
    mu = B.mean(axis=0)
    sd = B.std(axis=0)
    if np.all(sd < tol):
        raise ContractError("reference cloud is constant in every coordinate")
    scale = np.where(sd < tol, 1.0, sd)
    return (A - mu) / scale, (B - mu) / scale


def sliced_w1(A, B, n_proj=N_PROJECTIONS, seed=0):
    """Mean exact 1D W1 over ``n_proj`` random directions, no standardisation."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if n_proj < 1:
        raise ContractError("n_proj must be >= 1")
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ContractError(f"clouds must share a dimension, got {A.shape} and {B.shape}")
    if len(A) < 2 or len(B) < 2:
        raise ContractError("each cloud needs at least two points")
    dirs = random_directions(A.shape[1], n_proj, seed)
    pa = np.sort(dirs @ A.T, axis=1)
    pb = np.sort(dirs @ B.T, axis=1)
    return float(np.mean(kernels.w1_sorted_rows(pa, pb)))


def sliced_w1_std(A, B, n_proj=N_PROJECTIONS, seed=0):
    """Sliced W1 after standardising both clouds by the reference ``B``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or len(B) < 2:
        raise ContractError("reference cloud needs at least two points")
    As, Bs = standardize(A, B)
    return sliced_w1(As, Bs, n_proj, seed)


def _dist_sphere(X, spec):
    u = X[:, : spec.d + 1]
    w = X[:, spec.d + 1 :]
    r = np.linalg.norm(u, axis=1)
    return np.sqrt((r - 1.0) ** 2 + np.einsum("ij,ij->i", w, w))


def _dist_torus(X, spec):
    Y = X @ spec.O  # rows are x0 O^T, so x0 = x O
    pairs = Y[:, : 2 * spec.d].reshape(len(Y), spec.d, 2)
    tail = Y[:, 2 * spec.d :]
    radial = np.linalg.norm(pairs, axis=2) - 1.0
    return np.sqrt(np.einsum("ij,ij->i", radial, radial) + np.einsum("ij,ij->i", tail, tail))


def floral_segments(spec, n_points=FLORAL_POLYLINE_POINTS):
    """Segment endpoints ``(a, b)`` of the dense petal polylines, plus each segment's petal id."""
    starts, ends, ids = [], [], []
    for i in range(spec.m):
        P = spec.petal(i, n_points)
        starts.append(P[:-1])
        ends.append(P[1:])
        ids.append(np.full(len(P) - 1, i))
    return np.concatenate(starts), np.concatenate(ends), np.concatenate(ids)


def _dist_floral(X, spec, n_points=FLORAL_POLYLINE_POINTS):
    a, b, _ = floral_segments(spec, n_points)
    return kernels.segment_min_dist(np.ascontiguousarray(X), a, b)


def nearest_petal(X, spec, n_points=1000):
    """Index of the closest petal for each 2D point."""
    dists = np.stack([
        kernels.segment_min_dist(np.ascontiguousarray(X), P[:-1].copy(), P[1:].copy())
        for P in (spec.petal(i, n_points) for i in range(spec.m))
    ], axis=1)
    return dists.argmin(axis=1)


def dist_manifold(X, spec):
    """Per-sample Euclidean distance to the manifold described by ``spec``.

    Sphere and torus use the closed-form projection onto a sphere or a product
    of circles; the floral union is measured against dense petal polylines.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != spec.D:
        raise ContractError(f"points have dimension {X.shape[1]}, manifold lives in D={spec.D}")
    if spec.kind == "sphere":
        return _dist_sphere(X, spec)
    if spec.kind == "torus":
        return _dist_torus(X, spec)
    if spec.kind == "floral":
        return _dist_floral(X, spec)
    raise ContractError(f"unknown manifold kind {spec.kind!r}")


def exact_w2(A, B):
    """Exact W2 between two equal-size uniform empirical measures via optimal assignment."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape != B.shape:
        raise ContractError(f"exact_w2 needs equal-size clouds, got {A.shape} and {B.shape}")
    if len(A) > EXACT_W2_MAX_N:
        raise ContractError(f"exact_w2 is capped at n={EXACT_W2_MAX_N}")
    cost = cdist(A, B, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


@dataclass
class MetricReport:
    """Per-run metric values aggregated as mean and sample standard deviation."""

    w1_runs: list
    dist_runs: list
    n_projections: int = N_PROJECTIONS
    seeds: list = field(default_factory=list)
    dist_quantiles: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.w1_runs) != len(self.dist_runs) or not self.w1_runs:
            raise ContractError("need the same positive number of w1 and dist runs")
        if min(self.w1_runs) < 0 or min(self.dist_runs) < 0:
            raise ContractError("metric values must be nonnegative")

    @property
    def n_runs(self):
        return len(self.w1_runs)

    def _sd(self, v):
        return float(np.std(v, ddof=1)) if len(v) >= 2 else float("nan")

    @property
    def w1_mean(self):
        return float(np.mean(self.w1_runs))

    @property
    def w1_sd(self):
        return self._sd(self.w1_runs)

    @property
    def dist_mean(self):
        return float(np.mean(self.dist_runs))

    @property
    def dist_sd(self):
        return self._sd(self.dist_runs)

    def to_dict(self):
        return {
            "w1_slice_std": {"mean": self.w1_mean, "sd": self.w1_sd, "runs": list(self.w1_runs)},
            "dist_manifold": {"mean": self.dist_mean, "sd": self.dist_sd, "runs": list(self.dist_runs)},
            "n_projections": self.n_projections,
            "n_runs": self.n_runs,
            "seeds": list(self.seeds),
            "dist_quantiles": self.dist_quantiles,
        }


TABLE_HEADER = ["d", "D", "w1_mean", "w1_sd", "dist_mean", "dist_sd"]


def table_row(d, D, report):
    return [d, D, report.w1_mean, report.w1_sd, report.dist_mean, report.dist_sd]


def evaluate_run(samples, reference, spec, n_proj=N_PROJECTIONS, seed=0):
    """``(w1_slice_std, per-sample distances)`` for one generated cloud."""
    return sliced_w1_std(samples, reference, n_proj, seed), dist_manifold(samples, spec)


def distance_quantiles(dists, qs=(0.5, 0.9, 0.99)):
    return {f"q{int(round(q * 100))}": float(np.quantile(dists, q)) for q in qs}
