"""Flow matching toward manifold-supported targets: training, sampling, oracles and metrics."""

__version__ = "0.1.0"
