"""Experiment recipes for the sphere, torus and floral targets, and the single-cell pipeline.

A cell is one (manifold, seed) run: draw training data, train, sample, evaluate.
All randomness is derived from the cell seed by :func:`derive_seed` with a
fixed label per component, so runs are reproducible and independent.
"""

import copy
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import data
from .errors import ContractError
from .flow import TrainConfig, train
from .metrics import N_PROJECTIONS, dist_manifold, distance_quantiles, sliced_w1_std
from .ode import quadratic_grid, integrate
from .utils import derive_seed


@dataclass
class SamplerConfig:
    scheme: str = "euler"
    steps: int = 250
    t_min: float = None  # None: the training t_min

    def __post_init__(self):
        if self.scheme not in ("euler", "rk4"):
            raise ContractError(f"unknown scheme {self.scheme!r}")
        if self.steps < 1:
            raise ContractError("steps must be >= 1")

    @classmethod
    def from_dict(cls, d):
        _check_keys(cls, d, "sampler")
        return cls(**d)


@dataclass
class ExperimentConfig:
    manifold: dict
    train: TrainConfig
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    n_train: int = 2048
    n_generate: int = 2048
    n_eval: int = 2048
    n_proj: int = N_PROJECTIONS

    def __post_init__(self):
        data.spec_from_dict(self.manifold)
        if min(self.n_train, self.n_generate, self.n_eval) < 2:
            raise ContractError("sample counts must be >= 2")

    @property
    def spec(self):
        return data.spec_from_dict(self.manifold)

    @property
    def sample_t_min(self):
        return self.train.t_min if self.sampler.t_min is None else self.sampler.t_min

    def to_dict(self):
        return {
            "manifold": self.manifold,
            "train": self.train.to_dict(),
            "sampler": asdict(self.sampler),
            "n_train": self.n_train,
            "n_generate": self.n_generate,
            "n_eval": self.n_eval,
            "n_proj": self.n_proj,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        extra = set(d) - {f.name for f in fields(cls)}
        if extra:
            raise ContractError(f"unknown experiment keys: {sorted(extra)}")
        if "manifold" not in d or "train" not in d:
            raise ContractError("experiment needs [manifold] and [train] tables")
        d["train"] = TrainConfig.from_dict(d["train"])
        d["sampler"] = SamplerConfig.from_dict(d.get("sampler", {}))
        return cls(**d)


def _check_keys(cls, d, what):
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ContractError(f"unknown {what} keys: {sorted(unknown)}")


def _t_min(steps):
    # last interior node of the quadratic grid: 1 - (1/N)^2
    return (1.0 / steps) ** 2


RECIPES = {
    "sphere": dict(
        manifold={"kind": "sphere", "d": 2, "D": 4},
        train=dict(batch_size=2048, iterations=1000, learning_rate=2e-4, weight_decay=0.01, width=256, depth=4,
                   time_input="raw", t_min=_t_min(250)),
        sampler=dict(scheme="euler", steps=250),
    ),
    "torus": dict(
        manifold={"kind": "torus", "d": 2, "D": 4},
        train=dict(batch_size=2048, iterations=1000, learning_rate=2e-4, weight_decay=0.01, width=256, depth=6,
                   time_input="raw", t_min=_t_min(250)),
        sampler=dict(scheme="euler", steps=250),
    ),
    "floral": dict(
        manifold={"kind": "floral"},
        train=dict(batch_size=512, iterations=5000, learning_rate=1e-3, weight_decay=0.0, width=256, depth=4,
                   lr_schedule="cosine", t_max=5000, time_input="sinusoidal", t_min=_t_min(500)),
        sampler=dict(scheme="rk4", steps=500),
    ),
}


def recipe(name, manifold=None, train=None, sampler=None, **top):
    """Experiment config for a named recipe with optional per-table overrides."""
    if name not in RECIPES:
        raise ContractError(f"unknown recipe {name!r}; expected one of {sorted(RECIPES)}")
    base = copy.deepcopy(RECIPES[name])
    base["manifold"].update(manifold or {})
    base["train"].update(train or {})
    base["sampler"].update(sampler or {})
    base.update(top)
    return ExperimentConfig.from_dict(base)


def generate(model, n, sampler, t_min, seed):
    """Push ``n`` fresh source draws through ``model``; returns ``(samples, source)``."""
    x0 = data.sample_source(model.dim, n, seed)
    grid = quadratic_grid(sampler.steps, t_min, sampler.scheme)
    return integrate(model, x0, grid, keep_path=False), x0


@dataclass
class CellResult:
    seed: int
    model: object
    record: object
    train_data: np.ndarray
    generated: np.ndarray
    held_out: np.ndarray
    w1: float
    dists: np.ndarray
    seeds: dict
    timings: dict

    @property
    def dist_mean(self):
        return float(self.dists.mean())

    def summary(self):
        return {
            "seed": self.seed,
            "w1_slice_std": self.w1,
            "dist_mean": self.dist_mean,
            "dist_quantiles": distance_quantiles(self.dists),
            "final_loss": self.record.final_loss,
            "seeds": self.seeds,
            "timings": self.timings,
        }


def cell_seeds(seed):
    labels = ("train_data", "held_out", "sample", "projections")
    return {k: derive_seed(seed, k) for k in labels}


def run_cell(exp, seed, train_data=None):
    """Train, sample and evaluate one run of ``exp`` under master ``seed``."""
    spec = exp.spec
    seeds = cell_seeds(seed)
    timings = {}
    if train_data is None:
        train_data = data.sample(spec, exp.n_train, np.random.default_rng(seeds["train_data"]))
    cfg = TrainConfig.from_dict({**exp.train.to_dict(), "seed": seed})
    t0 = time.perf_counter()
    model, record = train(cfg, train_data)
    timings["train"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    generated, _ = generate(model, exp.n_generate, exp.sampler, exp.sample_t_min, seeds["sample"])
    timings["sample"] = time.perf_counter() - t0
    held_out = data.sample(spec, exp.n_eval, np.random.default_rng(seeds["held_out"]))
    t0 = time.perf_counter()
    w1 = sliced_w1_std(generated, held_out, exp.n_proj, seeds["projections"])
    dists = dist_manifold(generated, spec)
    timings["eval"] = time.perf_counter() - t0
    return CellResult(seed, model, record, train_data, generated, held_out, float(w1), dists, seeds, timings)
