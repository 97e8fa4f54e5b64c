"""Seeded generators for the Gaussian source and the three synthetic manifold targets."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

TORUS_GAMMA1 = 0.35
TORUS_SIGMA1 = math.sqrt(0.35**2 + 0.15**2)
FLORAL_DEFAULTS = dict(m=5, r_in=1.0, r_out=4.0, tau=0.2, sigma_r=0.05, sigma_theta=0.05)
FLORAL_POLYLINE_POINTS = 10_000


def sample_source(D, n, seed):
    """``n`` i.i.d. ``N(0, I_D)`` rows (numpy's ziggurat normal sampler)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((n, D))


def random_orthogonal(D, seed):
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs of ``diag(R)`` folded into Q."""
    if D < 1:
        raise ContractError("D must be >= 1")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((D, D)))
    return q * np.sign(np.diag(r))


@dataclass
class SphereSpec:
    """Projected Gaussian on the unit d-sphere in the first d+1 of D coordinates."""

    d: int = 2
    D: int = 4
    gamma: np.ndarray = None
    seed: int = 0
    kind: str = field(default="sphere", init=False)

    def __post_init__(self):
        if self.d < 1 or self.D < self.d + 1:
            raise ContractError(f"sphere needs D >= d + 1, got d={self.d}, D={self.D}")
        self.gamma = np.zeros(self.d + 1) if self.gamma is None else np.asarray(self.gamma, dtype=np.float64)
        if self.gamma.shape != (self.d + 1,):
            raise ContractError("gamma must have d + 1 entries")

    def to_dict(self):
        return {"kind": "sphere", "d": self.d, "D": self.D, "gamma": self.gamma.tolist(), "seed": self.seed}


@dataclass
class TorusSpec:
    """Axis-aligned product of d unit circles in R^D, rotated by an orthogonal ``O``."""

    d: int = 2
    D: int = 4
    gamma1: float = TORUS_GAMMA1
    sigma1: float = TORUS_SIGMA1
    O: np.ndarray = None
    seed: int = 0
    phi_continuous: bool = False
    kind: str = field(default="torus", init=False)

    def __post_init__(self):
        if self.d < 1 or self.D < 2 * self.d:
            raise ContractError(f"torus needs D >= 2d, got d={self.d}, D={self.D}")
        if self.O is None:
            self.O = random_orthogonal(self.D, self.seed)
        self.O = np.asarray(self.O, dtype=np.float64)
        if self.O.shape != (self.D, self.D):
            raise ContractError("O must be D x D")
        if np.abs(self.O.T @ self.O - np.eye(self.D)).max() > 1e-10:
            raise ContractError("O is not orthogonal to 1e-10")

    def to_dict(self):
        return {
            "kind": "torus", "d": self.d, "D": self.D, "gamma1": self.gamma1, "sigma1": self.sigma1,
            "O": self.O.tolist(), "seed": self.seed, "phi_continuous": self.phi_continuous,
        }


@dataclass
class FloralSpec:
    """Union of ``m`` twisted spiral segments in the plane, observed with angular and isotropic noise."""

    m: int = FLORAL_DEFAULTS["m"]
    r_in: float = FLORAL_DEFAULTS["r_in"]
    r_out: float = FLORAL_DEFAULTS["r_out"]
    tau: float = FLORAL_DEFAULTS["tau"]
    sigma_r: float = FLORAL_DEFAULTS["sigma_r"]
    sigma_theta: float = FLORAL_DEFAULTS["sigma_theta"]
    seed: int = 0
    kind: str = field(default="floral", init=False)

    def __post_init__(self):
        if self.m < 2:
            raise ContractError("floral needs m >= 2 petals")
        if not 0 < self.r_in < self.r_out:
            raise ContractError("need 0 < r_in < r_out")
        if not 0 < self.tau < 1:
            raise ContractError("tau must lie in (0, 1)")

    @property
    def d(self):
        return 1

    @property
    def D(self):
        return 2

    def radius(self, s):
        return self.r_in + s * (self.r_out - self.r_in)

    def angle(self, i, s):
        return 2.0 * math.pi * np.asarray(i) / self.m + 2.0 * math.pi * self.tau * s

    def petal(self, i, n_points=FLORAL_POLYLINE_POINTS):
        """Dense polyline ``(n_points, 2)`` along petal ``i``."""
        s = np.linspace(0.0, 1.0, n_points)
        r, th = self.radius(s), self.angle(i, s)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)

    def to_dict(self):
        return {
            "kind": "floral", "m": self.m, "r_in": self.r_in, "r_out": self.r_out, "tau": self.tau,
            "sigma_r": self.sigma_r, "sigma_theta": self.sigma_theta, "seed": self.seed,
        }


_KINDS = {"sphere": SphereSpec, "torus": TorusSpec, "floral": FloralSpec}


def spec_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ContractError(f"unknown manifold kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls = _KINDS[kind]
    allowed = set(cls.__dataclass_fields__) - {"kind"}
    unknown = set(d) - allowed
    if unknown:
        raise ContractError(f"unknown {kind} parameters: {sorted(unknown)}")
    return cls(**d)


def sample_sphere(spec, n, rng=None):
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    z = rng.standard_normal((n, spec.d + 1)) + spec.gamma
    out = np.zeros((n, spec.D))
    out[:, : spec.d + 1] = z / np.linalg.norm(z, axis=1, keepdims=True)
    return out


def torus_angles(spec, n, rng):
    if spec.phi_continuous:
        phi = rng.uniform(-1.0, 1.0, size=(n, 1))
    else:
        phi = rng.choice(np.array([-1.0, 1.0]), size=(n, 1))
    i = np.arange(1, spec.d + 1)[None, :]
    eps = rng.normal(-spec.gamma1, spec.sigma1, size=(n, spec.d))
    return phi + spec.gamma1 * i + eps


def sample_torus(spec, n, rng=None):
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    theta = torus_angles(spec, n, rng)
    x0 = np.zeros((n, spec.D))
    x0[:, 0 : 2 * spec.d : 2] = np.cos(theta)
    x0[:, 1 : 2 * spec.d : 2] = np.sin(theta)
    return x0 @ spec.O.T


def sample_floral(spec, n, rng=None, return_labels=False):
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    petal = rng.integers(0, spec.m, size=n)
    s = rng.uniform(0.0, 1.0, size=n)
    z = rng.standard_normal((n, 3))
    theta = spec.angle(petal, s) + spec.sigma_theta * z[:, 0]
    r = spec.radius(s)
    X = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1) + spec.sigma_r * z[:, 1:]
    return (X, petal) if return_labels else X


def sample(spec, n, rng=None):
    """Dispatch on ``spec.kind``; without ``rng`` the spec's own seed is used."""
    if spec.kind == "sphere":
        return sample_sphere(spec, n, rng)
    if spec.kind == "torus":
        return sample_torus(spec, n, rng)
    return sample_floral(spec, n, rng)
