"""Numeric inner loops, each with a numba and a pure-numpy implementation.

The public names (``atom_softmax_mean``, ``segment_min_dist``,
``w1_sorted_rows``) dispatch on :data:`flowmanifold._accel.USE_NUMBA`. Both
implementations are importable directly (``*_nb`` / ``*_np``) so tests and the
benchmark can compare them.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# Upper bound on the number of float64 entries a numpy chunk may allocate.
_CHUNK_ENTRIES = 1 << 22


def _chunk_rows(n_rows, width):
    return max(1, min(n_rows, _CHUNK_ENTRIES // max(1, width)))


# ---------------------------------------------------------------------------
# Self-normalised Gaussian weights over a finite atom set.
#
# For each query x_b at time t_b the weights are
#     w_j ∝ exp(log_w_j - |x_b - t_b y_j|^2 / (2 (1 - t_b)^2))
# and the kernel returns sum_j w_j y_j. Logits are max-shifted before
# exponentiation, so the largest weight is exp(0) = 1 and the normaliser is
# never below 1.
# ---------------------------------------------------------------------------


@njit
def atom_softmax_mean_nb(x, t, atoms, log_w):
    n, dim = x.shape
    m = atoms.shape[0]
    out = np.zeros((n, dim))
    logits = np.empty(m)
    for b in range(n):
        tb = t[b]
        scale = 0.5 / ((1.0 - tb) * (1.0 - tb))
        best = -np.inf
        for j in range(m):
            sq = 0.0
            for k in range(dim):
                diff = x[b, k] - tb * atoms[j, k]
                sq += diff * diff
            logits[j] = log_w[j] - sq * scale
            if logits[j] > best:
                best = logits[j]
        total = 0.0
        for j in range(m):
            w = np.exp(logits[j] - best)
            total += w
            for k in range(dim):
                out[b, k] += w * atoms[j, k]
        for k in range(dim):
            out[b, k] /= total
    return out


def atom_log_weights_np(x, t, atoms, log_w):
    """Normalised log-weights, shape ``(n, m)``; numpy only."""
    t = t[:, None]
    sq = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * t * (x @ atoms.T)
        + t**2 * np.einsum("ij,ij->i", atoms, atoms)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    logits = log_w[None, :] - sq / (2.0 * (1.0 - t) ** 2)
    logits -= logits.max(axis=1, keepdims=True)
    logits -= np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return logits


def atom_softmax_mean_np(x, t, atoms, log_w):
    n = x.shape[0]
    out = np.empty_like(x)
    step = _chunk_rows(n, atoms.shape[0])
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        w = np.exp(atom_log_weights_np(x[lo:hi], t[lo:hi], atoms, log_w))
        out[lo:hi] = w @ atoms
    return out


# ---------------------------------------------------------------------------
# Minimum Euclidean distance from 2D points to a set of line segments.
# ---------------------------------------------------------------------------


@njit
def segment_min_dist_nb(points, seg_a, seg_b):
    n = points.shape[0]
    s = seg_a.shape[0]
    out = np.empty(n)
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        best = np.inf
        for j in range(s):
            ax = seg_a[j, 0]
            ay = seg_a[j, 1]
            dx = seg_b[j, 0] - ax
            dy = seg_b[j, 1] - ay
            den = dx * dx + dy * dy
            u = 0.0
            if den > 0.0:
                u = ((px - ax) * dx + (py - ay) * dy) / den
                if u < 0.0:
                    u = 0.0
                elif u > 1.0:
                    u = 1.0
            qx = ax + u * dx - px
            qy = ay + u * dy - py
            d2 = qx * qx + qy * qy
            if d2 < best:
                best = d2
        out[i] = np.sqrt(best)
    return out


def segment_min_dist_np(points, seg_a, seg_b):
    direction = seg_b - seg_a
    den = np.einsum("ij,ij->i", direction, direction)
    safe = np.where(den > 0.0, den, 1.0)
    n = points.shape[0]
    out = np.empty(n)
    step = _chunk_rows(n, 4 * seg_a.shape[0])
    for lo in range(0, n, step):
        p = points[lo : lo + step, None, :]
        rel = p - seg_a[None]
        u = np.einsum("ijk,jk->ij", rel, direction) / safe
        u = np.where(den > 0.0, np.clip(u, 0.0, 1.0), 0.0)
        q = rel - u[..., None] * direction[None]
        out[lo : lo + step] = np.sqrt(np.einsum("ijk,ijk->ij", q, q).min(axis=1))
    return out


# ---------------------------------------------------------------------------
# Exact 1D Wasserstein-1 between uniform empirical measures, row by row.
#
# Rows of ``a`` (length n) and ``b`` (length m) must be sorted. The quantile
# functions are step functions with jumps at i/n and j/m; on the common
# denominator n*m these are the integers i*m and j*n, so the merged grid is
# exact.
# ---------------------------------------------------------------------------


@njit
def w1_sorted_rows_nb(a, b):
    rows, n = a.shape
    m = b.shape[1]
    total = float(n * m)
    out = np.zeros(rows)
    for r in range(rows):
        i = 0
        j = 0
        prev = 0
        acc = 0.0
        while i < n and j < m:
            next_a = (i + 1) * m
            next_b = (j + 1) * n
            nxt = next_a if next_a < next_b else next_b
            acc += abs(a[r, i] - b[r, j]) * (nxt - prev)
            prev = nxt
            if next_a == nxt:
                i += 1
            if next_b == nxt:
                j += 1
        out[r] = acc / total
    return out


def _merged_quantile_index(n, m):
    edges = np.union1d(np.arange(n + 1) * m, np.arange(m + 1) * n)
    left = edges[:-1]
    widths = np.diff(edges).astype(np.float64) / (n * m)
    # left edge k lies in [i*m, (i+1)*m) for i = k // m
    return left // m, left // n, widths


def w1_sorted_rows_np(a, b):
    ia, ib, widths = _merged_quantile_index(a.shape[1], b.shape[1])
    return np.abs(a[:, ia] - b[:, ib]) @ widths


if USE_NUMBA:
    atom_softmax_mean = atom_softmax_mean_nb
    segment_min_dist = segment_min_dist_nb
    w1_sorted_rows = w1_sorted_rows_nb
else:
    atom_softmax_mean = atom_softmax_mean_np
    segment_min_dist = segment_min_dist_np
    w1_sorted_rows = w1_sorted_rows_np
