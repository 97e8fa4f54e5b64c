"""Fully-connected ReLU networks with hand-written reverse mode, AdamW and time embeddings.

Everything is float64. Weight matrices are stored ``(out, in)`` so a layer maps
a batch ``h`` of shape ``(batch, in)`` to ``h @ W.T + b``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NonFiniteError

CHECKPOINT_VERSION = 1


@dataclass
class MlpNet:
    """``A_{L+1} o relu o A_L o ... o relu o A_1``.

    ``layer_dims`` lists the input width, the hidden widths and the output
    width. A network with ``len(layer_dims) == 2`` is a single affine map.
    """

    layer_dims: list
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_dims = [int(k) for k in self.layer_dims]
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ContractError(f"layer_dims must have >= 2 positive entries, got {self.layer_dims}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ContractError("need one weight matrix and one bias per layer")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l + 1], self.layer_dims[l])
            if w.shape != shape or b.shape != (shape[0],):
                raise ContractError(f"layer {l}: expected W{shape} and b({shape[0]},), got {w.shape} and {b.shape}")
        self.check_finite()

    @classmethod
    def init(cls, layer_dims, rng):
        """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_dims), weights, biases)

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    @property
    def depth(self):
        """Number of hidden layers."""
        return len(self.layer_dims) - 2

    @property
    def width(self):
        return max(self.layer_dims[1:-1], default=self.out_dim)

    def params(self):
        """Parameter arrays in a fixed order ``[W_0, b_0, W_1, b_1, ...]``; live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def param_names(self):
        names = []
        for l in range(len(self.weights)):
            names.extend((f"layer{l}.weight", f"layer{l}.bias"))
        return names

    def check_finite(self):
        for name, p in zip(self.param_names(), self.params()):
            if not np.all(np.isfinite(p)):
                raise NonFiniteError(f"non-finite parameter in {name}", where=name)

    def copy(self):
        return MlpNet(list(self.layer_dims), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ContractError(f"input has shape {x.shape}, network expects {self.in_dim} features")
        return x, single

    def forward(self, x):
        out, _ = self.forward_cached(x)
        return out

    __call__ = forward

    def forward_cached(self, x):
        """Forward pass that also returns the layer inputs needed by :meth:`backward_cached`."""
        h, single = self._as_batch(x)
        acts = [h]
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if l < last:
                h = np.maximum(h, 0.0)
                acts.append(h)
        return (h[0] if single else h), (acts, single)

    def backward_cached(self, cache, upstream):
        """Vector-Jacobian product given the forward cache.

        Returns ``(grads, input_grad)`` where ``grads`` follows :meth:`params`
        ordering. Batched inputs sum parameter gradients over the batch. The
        ReLU derivative is taken as 0 where the pre-activation is exactly 0;
        a post-activation of 0 identifies those units.
        """
        acts, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != (acts[0].shape[0], self.out_dim):
            raise ContractError(f"upstream has shape {np.shape(upstream)}, expected output dim {self.out_dim}")
        grads = [None] * (2 * len(self.weights))
        for l in range(len(self.weights) - 1, -1, -1):
            a_in = acts[l]
            grads[2 * l] = g.T @ a_in
            grads[2 * l + 1] = g.sum(axis=0)
            g = g @ self.weights[l]
            if l > 0:
                g = g * (a_in > 0.0)
        return grads, (g[0] if single else g)

    def backward(self, x, upstream):
        _, cache = self.forward_cached(x)
        return self.backward_cached(cache, upstream)

    def to_dict(self):
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d):
        dims = [int(k) for k in d["layer_dims"]]
        weights = [
            np.asarray(w, dtype=np.float64).reshape(dims[l + 1], dims[l]) for l, w in enumerate(d["weights"])
        ]
        return cls(dims, weights, [np.asarray(b, dtype=np.float64) for b in d["biases"]])


def geometric_frequencies(dim, low=1.0, high=100.0):
    """``dim/2`` angular frequencies spaced geometrically from ``low`` to ``high``.

    Times live in [0, 1], so the top frequency must stay moderate; a ladder
    reaching into the thousands turns the time features into noise for the
    network.
    """
    half = dim // 2
    if half == 1:
        return np.array([float(low)])
    return np.geomspace(low, high, half)


@dataclass
class TimeEmbedding:
    """Time features appended to the network input.

    ``kind="sinusoidal"``: ``(sin f_1 t, cos f_1 t, sin f_2 t, cos f_2 t, ...)``.
    ``kind="raw"``: the scalar ``t`` itself (``dim`` is 1).
    """

    dim: int = 64
    frequencies: np.ndarray = None
    kind: str = "sinusoidal"

    def __post_init__(self):
        if self.kind == "raw":
            if self.dim != 1:
                raise ContractError("raw time input has dim 1")
            self.frequencies = np.zeros(0)
            return
        if self.kind != "sinusoidal":
            raise ContractError(f"unknown time embedding kind {self.kind!r}")
        if self.dim < 2 or self.dim % 2:
            raise ContractError(f"time embedding dim must be even and positive, got {self.dim}")
        if self.frequencies is None:
            self.frequencies = geometric_frequencies(self.dim)
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        if self.frequencies.shape != (self.dim // 2,):
            raise ContractError("need dim/2 frequencies")

    @classmethod
    def raw(cls):
        return cls(1, kind="raw")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "raw":
            return t[..., None].copy()
        phase = t[..., None] * self.frequencies
        out = np.empty(t.shape + (self.dim,))
        out[..., 0::2] = np.sin(phase)
        out[..., 1::2] = np.cos(phase)
        return out

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "frequencies": self.frequencies.tolist()}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "sinusoidal")
        if kind == "raw":
            return cls.raw()
        return cls(int(d["dim"]), np.asarray(d["frequencies"], dtype=np.float64))


def embed_time(emb, t):
    return emb(t)


def cosine_lr(base_lr, step, t_max):
    if t_max <= 0:
        raise ContractError("cosine schedule needs t_max > 0")
    if not 0 <= step <= t_max:
        raise ContractError(f"step {step} outside [0, {t_max}]")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / t_max))


@dataclass
class AdamW:
    """Adam with decoupled weight decay, operating in place on a list of arrays."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads, lr=None, names=None):
        if len(params) != len(grads):
            raise ContractError("params and grads differ in length")
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != np.shape(g):
                raise ContractError(f"param {i}: shape {p.shape} vs grad {np.shape(g)}")
            if not np.all(np.isfinite(g)):
                where = names[i] if names else f"param {i}"
                raise NonFiniteError(f"non-finite gradient in {where}", where=where)
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        lr = self.lr if lr is None else lr
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p
            p -= lr * update
        return params


def adamw_step(state, params, grads, lr=None):
    return state.step(params, grads, lr=lr)
