"""Linear-path flow matching: interpolation, time grids, the velocity model class and training."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ContractError, NonFiniteError, TrainingDivergedError
from .nn import AdamW, MlpNet, TimeEmbedding, cosine_lr
from .utils import config_hash, derive_seed

log = logging.getLogger(__name__)

# Early-stopping level matching the last knot of a 250-step quadratic sampling grid.
DEFAULT_T_MIN = (1.0 / 250) ** 2


def interpolate(x0, x1, t):
    """``t * x1 + (1 - t) * x0``; ``t`` may be a scalar or one value per row."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ContractError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1 and x0.ndim == 2:
        t = t[:, None]
    return t * x1 + (1.0 - t) * x0


# ---------------------------------------------------------------------------
# Time grids
# ---------------------------------------------------------------------------


@dataclass
class TimeGrid:
    """Strictly decreasing knots ``1 = t_0 > t_1 > ... > t_K = t_min``.

    Slab ``k`` (1-based) covers process times ``[1 - t_{k-1}, 1 - t_k)``.
    """

    knots: np.ndarray
    t_b: float = None
    t_b_index: int = None

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=np.float64)
        k = self.knots
        if k.ndim != 1 or len(k) < 2:
            raise ContractError("a time grid needs at least two knots")
        if k[0] != 1.0:
            raise ContractError("first knot must be exactly 1")
        if k[-1] <= 0.0:
            raise ContractError("last knot must be positive")
        ratios = k[:-1] / k[1:]
        if not np.all(ratios > 1.0) or not np.all(ratios <= 2.0 * (1 + 1e-12)):
            raise ContractError(f"knot ratios must lie in (1, 2], got range [{ratios.min()}, {ratios.max()}]")

    @property
    def t_min(self):
        return float(self.knots[-1])

    @property
    def n_slabs(self):
        return len(self.knots) - 1

    def boundaries(self):
        """Process-time slab edges ``1 - t_k``, increasing from 0 to ``1 - t_min``."""
        return 1.0 - self.knots

    def slabs(self):
        b = self.boundaries()
        return list(zip(b[:-1], b[1:]))

    def slab_index(self, s):
        """0-based slab holding process time ``s`` (left-closed slabs; ``1 - t_min`` maps to the last)."""
        idx = np.searchsorted(self.boundaries(), np.asarray(s, dtype=np.float64), side="right") - 1
        return np.clip(idx, 0, self.n_slabs - 1)

    def to_dict(self):
        return {"knots": self.knots.tolist(), "t_b": self.t_b, "t_b_index": self.t_b_index}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["knots"]), d.get("t_b"), d.get("t_b_index"))


def geometric_grid(t_min, ratio=2.0):
    """Knots ``ratio**-k`` while above ``t_min``, closed by ``t_min`` itself."""
    if not 0.0 < t_min < 1.0:
        raise ContractError(f"t_min must lie in (0, 1), got {t_min}")
    if not 1.0 < ratio <= 2.0:
        raise ContractError(f"ratio must lie in (1, 2], got {ratio}")
    knots = [1.0]
    k = 1
    while True:
        nxt = ratio ** (-k)
        if nxt <= t_min * (1.0 + 1e-12):
            break
        knots.append(nxt)
        k += 1
    knots.append(t_min)
    return TimeGrid(np.array(knots))


def early_stop_level(n, alpha, d, beta):
    """Unclamped early-stopping level ``n^(-beta/(2 alpha + d)) * log(n)^(beta + 1)``."""
    return n ** (-beta / (2 * alpha + d)) * math.log(n) ** (beta + 1)


def build_time_grid(n, alpha, d, beta, ratio=2.0, clamp=True):
    """Geometric grid ending at the sample-size-dependent early-stopping level.

    The level is clamped to 0.5 when the formula exceeds it (small ``n``); with
    ``clamp=False`` a level of 1 or more raises instead. The knot closest to
    ``n^(-2/(2 alpha + d))`` is recorded as the ``t_b`` marker.
    """
    if n < 2:
        raise ContractError("need n >= 2")
    if alpha < 0 or d < 3 or beta < 2:
        raise ContractError("need alpha >= 0, d >= 3, beta >= 2")
    raw = early_stop_level(n, alpha, d, beta)
    if raw >= 1.0 and not clamp:
        raise ContractError(f"early-stopping level {raw:.4g} >= 1: n={n} too small for alpha={alpha}, beta={beta}")
    t_min = min(raw, 0.5)
    grid = geometric_grid(t_min, ratio)
    t_b = n ** (-2.0 / (2 * alpha + d))
    grid.t_b = float(t_b)
    grid.t_b_index = int(np.argmin(np.abs(grid.knots - t_b)))
    return grid


# ---------------------------------------------------------------------------
# Velocity model
# ---------------------------------------------------------------------------


class VelocityModel:
    """Time-conditioned vector field ``(x, t) -> R^D`` built from MLPs on ``(x, embed(t))``.

    ``mode="single"`` uses one network for all times. ``mode="piecewise"``
    keeps one network per slab of ``grid`` and routes each evaluation to the
    slab containing its time. Outputs are clipped coordinate-wise to
    ``c_clip * sqrt(log n) / (1 - t)``.
    """

    def __init__(self, nets, embedding, dim, n_train, c_clip=10.0, mode="single", grid=None):
        if mode not in ("single", "piecewise"):
            raise ContractError(f"unknown model mode {mode!r}")
        if mode == "single" and len(nets) != 1:
            raise ContractError("single mode takes exactly one network")
        if mode == "piecewise":
            if grid is None or len(nets) != grid.n_slabs:
                raise ContractError("piecewise mode needs one network per grid slab")
        if n_train < 2:
            raise ContractError("clip bound needs n_train >= 2")
        for net in nets:
            if net.in_dim != dim + embedding.dim or net.out_dim != dim:
                raise ContractError(f"network dims {net.layer_dims} do not fit D={dim}, embed={embedding.dim}")
        self.nets = list(nets)
        self.embedding = embedding
        self.dim = int(dim)
        self.n_train = int(n_train)
        self.c_clip = float(c_clip)
        self.mode = mode
        self.grid = grid

    @classmethod
    def init(cls, dim, n_train, rng, width=256, depth=4, embed_dim=64, c_clip=10.0, mode="single", grid=None,
             time_input="sinusoidal"):
        emb = TimeEmbedding.raw() if time_input == "raw" else TimeEmbedding(embed_dim)
        dims = [dim + emb.dim] + [width] * depth + [dim]
        n_nets = 1 if mode == "single" else grid.n_slabs
        nets = [MlpNet.init(dims, rng) for _ in range(n_nets)]
        return cls(nets, emb, dim, n_train, c_clip=c_clip, mode=mode, grid=grid)

    def copy(self):
        return VelocityModel(
            [n.copy() for n in self.nets], self.embedding, self.dim, self.n_train, self.c_clip, self.mode, self.grid
        )

    def clip_bound(self, t):
        return self.c_clip * math.sqrt(math.log(self.n_train)) / (1.0 - np.asarray(t, dtype=np.float64))

    def params(self):
        return [p for net in self.nets for p in net.params()]

    def param_names(self):
        return [f"net{i}.{name}" for i, net in enumerate(self.nets) for name in net.param_names()]

    def route(self, t):
        if self.mode == "single":
            return np.zeros(np.shape(t), dtype=np.intp)
        return self.grid.slab_index(t)

    def _prepare(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ContractError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        if np.any(t >= 1.0):
            raise ContractError("velocity model is undefined at t >= 1")
        return x, t, single

    def forward_cached(self, x, t):
        x, t, single = self._prepare(x, t)
        feats = np.concatenate([x, self.embedding(t)], axis=1)
        raw = np.empty_like(x)
        slab = self.route(t)
        caches = {}
        for k in np.unique(slab):
            rows = np.flatnonzero(slab == k) if self.mode == "piecewise" else slice(None)
            raw[rows], caches[int(k)] = self.nets[int(k)].forward_cached(feats[rows])
        cap = self.clip_bound(t)[:, None]
        out = np.clip(raw, -cap, cap)
        active = np.abs(raw) <= cap
        return (out[0] if single else out), (slab, caches, active, single)

    def __call__(self, x, t):
        return self.forward_cached(x, t)[0]

    def backward_cached(self, cache, upstream):
        """Parameter gradients (``params()`` order) of ``<upstream, model(x, t)>``."""
        slab, caches, active, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        g = g * active
        grads = []
        for k, net in enumerate(self.nets):
            if k not in caches:
                grads.extend(np.zeros_like(p) for p in net.params())
                continue
            rows = np.flatnonzero(slab == k) if self.mode == "piecewise" else slice(None)
            net_grads, _ = net.backward_cached(caches[k], g[rows])
            grads.extend(net_grads)
        return grads

    def to_dict(self):
        d = {
            "version": 1,
            "mode": self.mode,
            "dim": self.dim,
            "n_train": self.n_train,
            "c_clip": self.c_clip,
            "time_embedding": self.embedding.to_dict(),
        }
        if self.mode == "single":
            d.update(self.nets[0].to_dict())
        else:
            d["grid"] = self.grid.to_dict()
            d["nets"] = [net.to_dict() for net in self.nets]
        return d

    @classmethod
    def from_dict(cls, d):
        if int(d.get("version", 0)) != 1:
            raise ContractError(f"unsupported checkpoint version {d.get('version')!r}")
        emb = TimeEmbedding.from_dict(d["time_embedding"])
        mode = d.get("mode", "single")
        if mode == "single":
            nets, grid = [MlpNet.from_dict(d)], None
        else:
            nets, grid = [MlpNet.from_dict(n) for n in d["nets"]], TimeGrid.from_dict(d["grid"])
        dim = int(d.get("dim", nets[0].out_dim))
        return cls(nets, emb, dim, int(d["n_train"]), float(d["c_clip"]), mode, grid)


def fm_loss_and_grads(model, x0, x1, t, t_min, weights=None):
    """Flow-matching regression loss ``mean_j w_j |u(x_t, t) - (x1 - x0)|^2`` and its parameter gradients.

    Coordinates held at the clip bound contribute no gradient.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if x0.shape != x1.shape or t.shape != (x0.shape[0],):
        raise ContractError("need one time per (x0, x1) pair")
    if np.any(t < 0.0) or np.any(t > 1.0 - t_min):
        raise ContractError(f"training times must lie in [0, 1 - t_min] = [0, {1.0 - t_min}]")
    m = x0.shape[0]
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    xt = interpolate(x0, x1, t)
    pred, cache = model.forward_cached(xt, t)
    resid = pred - (x1 - x0)
    per_pair = np.einsum("ij,ij->i", resid, resid)
    loss = float(np.dot(w, per_pair) / m)
    grads = model.backward_cached(cache, (2.0 / m) * w[:, None] * resid)
    return loss, grads


def lipschitz_probe(model, x, t, rng, h=1e-4, n_dirs=8):
    """Largest finite-difference slope ``|u(x + h e) - u(x)| / h`` over random unit ``e``.

    Reported alongside training as a post-hoc check; the Lipschitz constraint
    is never enforced during optimisation.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    base = model(x, t)
    best = 0.0
    for _ in range(n_dirs):
        e = rng.standard_normal(x.shape)
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        slope = np.linalg.norm(model(x + h * e, t) - base, axis=1) / h
        best = max(best, float(slope.max()))
    return best


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 2048
    iterations: int = 1000
    learning_rate: float = 2e-4
    lr_schedule: str = "constant"  # constant | cosine
    t_max: int = None  # cosine period; defaults to iterations
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    t_min: float = DEFAULT_T_MIN
    t_sampling: str = "uniform"  # uniform | stratified
    seed: int = 0
    mode: str = "single"  # single | piecewise
    grid_ratio: float = 2.0
    c_clip: float = 10.0
    width: int = 256
    depth: int = 4
    time_input: str = "sinusoidal"  # sinusoidal | raw
    time_embed_dim: int = 64
    source: str = "fresh"  # fresh | fixed
    replacement: bool = None  # None: only when n < batch_size
    n_target_samples: int = None  # informational; the data matrix decides

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ContractError("iterations must be >= 0")
        if not 0.0 < self.t_min < 1.0:
            raise ContractError("t_min must lie in (0, 1)")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ContractError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.t_sampling not in ("uniform", "stratified"):
            raise ContractError(f"unknown t_sampling {self.t_sampling!r}")
        if self.source not in ("fresh", "fixed"):
            raise ContractError(f"unknown source mode {self.source!r}")
        if self.mode not in ("single", "piecewise"):
            raise ContractError(f"unknown mode {self.mode!r}")
        if self.time_input not in ("sinusoidal", "raw"):
            raise ContractError(f"unknown time_input {self.time_input!r}")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def lr_at(self, step):
        if self.lr_schedule == "constant":
            return self.learning_rate
        t_max = self.t_max or self.iterations
        return cosine_lr(self.learning_rate, min(step, t_max), t_max)


@dataclass
class TrainRecord:
    seed: int
    config_hash: str
    losses: np.ndarray
    lrs: np.ndarray
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def final_loss(self):
        return float(self.losses[-1]) if len(self.losses) else float("nan")


def sample_times(rng, m, t_min, grid=None):
    """Uniform times on ``[0, 1 - t_min]``, or one-per-slab stratified times with unbiasing weights."""
    if grid is None:
        return rng.uniform(0.0, 1.0 - t_min, size=m), None
    lo, hi = np.asarray(grid.slabs()).T
    slab = np.arange(m) % grid.n_slabs
    rng.shuffle(slab)
    t = rng.uniform(lo[slab], hi[slab])
    counts = np.bincount(slab, minlength=grid.n_slabs)
    # each pair stands for (slab length / pairs in slab) of the time axis
    w = (hi - lo)[slab] / counts[slab] * m / (hi[-1] - lo[0])
    return t, w


def train(config, target, source_sampler=None, model=None, callback=None):
    """Fit a velocity model to ``target`` (``n x D``) by minibatch flow matching.

    ``source_sampler(rng, m)`` returns ``m`` source points; it defaults to a
    standard normal. Returns ``(model, TrainRecord)``.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 2 or len(target) < 2:
        raise ContractError("target must be an n x D matrix with n >= 2")
    n, dim = target.shape
    replacement = config.replacement if config.replacement is not None else n < config.batch_size
    if not replacement and n < config.batch_size:
        raise ContractError(f"n={n} < batch_size={config.batch_size} requires sampling with replacement")
    if source_sampler is None:
        def source_sampler(rng, m):
            return rng.standard_normal((m, dim))

    init_rng = np.random.default_rng(derive_seed(config.seed, "init"))
    batch_rng = np.random.default_rng(derive_seed(config.seed, "batch"))
    src_rng = np.random.default_rng(derive_seed(config.seed, "source"))
    time_rng = np.random.default_rng(derive_seed(config.seed, "time"))

    grid = None
    if config.mode == "piecewise" or config.t_sampling == "stratified":
        grid = geometric_grid(config.t_min, config.grid_ratio)
    if model is None:
        model = VelocityModel.init(
            dim, n, init_rng, width=config.width, depth=config.depth, embed_dim=config.time_embed_dim,
            c_clip=config.c_clip, mode=config.mode, grid=grid if config.mode == "piecewise" else None,
            time_input=config.time_input,
        )
    fixed_source = source_sampler(src_rng, n) if config.source == "fixed" else None
    opt = AdamW(config.learning_rate, config.beta1, config.beta2, config.eps, config.weight_decay)
    params, names = model.params(), model.param_names()
    strat_grid = grid if config.t_sampling == "stratified" else None

    losses = np.empty(config.iterations)
    lrs = np.empty(config.iterations)
    start = time.perf_counter()
    for step in range(config.iterations):
        if replacement:
            idx = batch_rng.integers(0, n, size=config.batch_size)
        else:
            idx = batch_rng.choice(n, size=config.batch_size, replace=False)
        x1 = target[idx]
        x0 = fixed_source[idx] if fixed_source is not None else source_sampler(src_rng, config.batch_size)
        t, w = sample_times(time_rng, config.batch_size, config.t_min, strat_grid)
        loss, grads = fm_loss_and_grads(model, x0, x1, t, config.t_min, w)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}", where=step)
        lr = config.lr_at(step)
        try:
            opt.step(params, grads, lr=lr, names=names)
        except NonFiniteError as exc:
            raise TrainingDivergedError(f"step {step}: {exc}", where=step) from exc
        losses[step] = loss
        lrs[step] = lr
        if callback is not None:
            callback(step, loss, lr)
        if step % 200 == 0:
            log.debug("step %d loss %.5f lr %.2e", step, loss, lr)
    record = TrainRecord(
        seed=config.seed,
        config_hash=config_hash(config.to_dict()),
        losses=losses,
        lrs=lrs,
        wall_time=time.perf_counter() - start,
    )
    return model, record
