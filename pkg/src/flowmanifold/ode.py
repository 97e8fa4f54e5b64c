"""Fixed-grid Euler and RK4 integration of ``dx/dt = v(x, t)``."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, IntegrationError

SCHEMES = ("euler", "rk4")


@dataclass
class SamplerGrid:
    nodes: np.ndarray
    scheme: str = "euler"

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        self.scheme = self.scheme.lower()
        if self.scheme not in SCHEMES:
            raise ContractError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.nodes.ndim != 1 or len(self.nodes) < 2:
            raise ContractError("grid needs at least two nodes")
        if not np.all(np.diff(self.nodes) > 0):
            raise ContractError("grid nodes must be strictly increasing")

    @property
    def n_steps(self):
        return len(self.nodes) - 1

    def to_dict(self):
        return {"scheme": self.scheme, "nodes": self.nodes.tolist()}


def quadratic_grid(N, t_min=0.0, scheme="euler"):
    """Nodes ``1 - (1 - i/N)^2``, refined toward t = 1 and capped at ``1 - t_min``."""
    if N < 1:
        raise ContractError("N must be >= 1")
    nodes = 1.0 - (1.0 - np.arange(N + 1) / N) ** 2
    cap = 1.0 - t_min
    nodes = nodes[nodes <= cap]
    if nodes[-1] != cap and not np.isclose(nodes[-1], cap, rtol=0, atol=1e-15):
        nodes = np.append(nodes, cap)
    return SamplerGrid(nodes, scheme)


def uniform_grid(N, t_end=1.0, scheme="euler"):
    return SamplerGrid(np.linspace(0.0, t_end, N + 1), scheme)


def integrate(v, x0, grid, keep_path=True):
    """Push ``x0`` (``(D,)`` or ``(batch, D)``) through ``v`` along ``grid``.

    Returns the path ``(len(nodes), ...)`` when ``keep_path`` else only the
    endpoint. RK4 stages evaluate ``v`` at ``s_i``, ``s_i + h/2`` and
    ``s_{i+1}``.
    """
    x = np.array(x0, dtype=np.float64)
    nodes = grid.nodes
    path = [x.copy()] if keep_path else None
    for i in range(grid.n_steps):
        s, h = nodes[i], nodes[i + 1] - nodes[i]
        if grid.scheme == "euler":
            x = x + h * v(x, s)
        else:
            k1 = v(x, s)
            k2 = v(x + 0.5 * h * k1, s + 0.5 * h)
            k3 = v(x + 0.5 * h * k2, s + 0.5 * h)
            k4 = v(x + h * k3, nodes[i + 1])
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at node {i + 1} (t={nodes[i + 1]:.6g})", where=i + 1)
        if keep_path:
            path.append(x.copy())
    return np.stack(path) if keep_path else x
