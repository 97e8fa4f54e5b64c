"""Ground-truth velocity fields and the model-vs-truth discrepancy.

For a target that is a weighted set of atoms ``y_j`` the linear-path velocity
is available in closed form,

    v(x, t) = (sum_j w_j(x, t) y_j - x) / (1 - t),
    w_j(x, t) ∝ pi_j exp(-|x - t y_j|^2 / (2 (1 - t)^2)),

which is what :func:`exact_velocity` evaluates (in log space). For a
continuous target, :func:`mc_velocity` applies the same formula to fresh draws
from the target.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError
from .flow import interpolate


@dataclass
class AtomicTarget:
    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=np.float64))
        m = len(self.atoms)
        if m < 1:
            raise ContractError("need at least one atom")
        if not np.all(np.isfinite(self.atoms)):
            raise ContractError("atoms must be finite")
        if self.weights is None:
            self.weights = np.full(m, 1.0 / m)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (m,) or np.any(self.weights < 0):
            raise ContractError("need one nonnegative weight per atom")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ContractError(f"weights sum to {self.weights.sum()!r}, not 1")

    @property
    def dim(self):
        return self.atoms.shape[1]

    @property
    def log_weights(self):
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def sample(self, n, rng):
        return self.atoms[rng.choice(len(self.atoms), size=n, p=self.weights)]

    def mean(self):
        return self.weights @ self.atoms


def _batch(x, t, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ContractError(f"query points have dimension {x.shape[1]}, target has {dim}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(x),)).copy()
    if np.any(t >= 1.0) or np.any(t < 0.0):
        raise ContractError("velocity is defined only for 0 <= t < 1")
    return np.ascontiguousarray(x), t, single


def posterior_weights(target, x, t):
    """Normalised weights ``w_j(x, t)`` over atoms, shape ``(n, m)``."""
    x, t, _ = _batch(x, t, target.dim)
    return np.exp(kernels.atom_log_weights_np(x, t, target.atoms, target.log_weights))


def exact_velocity(target, x, t):
    """Closed-form velocity of an atomic target at ``x`` (``(D,)`` or ``(n, D)``) and time ``t``."""
    x, t, single = _batch(x, t, target.dim)
    mean = kernels.atom_softmax_mean(x, t, target.atoms, target.log_weights)
    v = (mean - x) / (1.0 - t)[:, None]
    return v[0] if single else v


def mc_velocity(sampler, x, t, m, rng):
    """Self-normalised Monte Carlo velocity from ``m`` draws ``sampler(rng, m)`` of the target."""
    if m < 1:
        raise ContractError("need m >= 1 draws")
    draws = np.atleast_2d(np.asarray(sampler(rng, m), dtype=np.float64))
    return exact_velocity(AtomicTarget(draws), x, t)


class ExactField:
    """Callable wrapper so the exact velocity can stand in for a trained model."""

    def __init__(self, target):
        self.target = target

    def __call__(self, x, t):
        return exact_velocity(self.target, x, t)


def zero_field(x, t):
    return np.zeros_like(np.asarray(x, dtype=np.float64))


@dataclass
class ProbeResult:
    t_lo: float
    t_hi: float
    mse: float
    stderr: float
    n_mc: int
    seed: int

    def row(self):
        return [self.t_lo, self.t_hi, self.mse, self.stderr, self.n_mc, self.seed]


PROBE_HEADER = ["t_lo", "t_hi", "mse", "stderr", "n_mc", "seed"]


def velocity_mse(model, target, slab, n_mc, seed, chunk=4096):
    """Monte Carlo ``E |model(X_t, t) - v(X_t, t)|^2`` with ``t ~ U(slab)`` and ``X_t`` on the linear path.

    ``X_t`` interpolates a fresh standard-normal source point with a fresh
    target draw, so it is distributed exactly as the path marginal.
    """
    t_lo, t_hi = map(float, slab)
    if not t_hi > t_lo:
        raise ContractError(f"empty slab ({t_lo}, {t_hi})")
    if t_lo < 0.0 or t_hi >= 1.0:
        raise ContractError("slab must lie inside [0, 1)")
    if n_mc < 2:
        raise ContractError("need n_mc >= 2 for a standard error")
    rng = np.random.default_rng(seed)
    t = rng.uniform(t_lo, t_hi, size=n_mc)
    x0 = rng.standard_normal((n_mc, target.dim))
    x1 = target.sample(n_mc, rng)
    xt = interpolate(x0, x1, t)
    sq = np.empty(n_mc)
    for lo in range(0, n_mc, chunk):
        sl = slice(lo, lo + chunk)
        diff = model(xt[sl], t[sl]) - exact_velocity(target, xt[sl], t[sl])
        sq[sl] = np.einsum("ij,ij->i", diff, diff)
    return ProbeResult(t_lo, t_hi, float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_mc)), int(n_mc), seed)
