"""Deterministic 2-D scatter plots written as plain SVG text."""

import numpy as np

from .errors import ContractError

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
SIZE = 600
LEGEND_HEIGHT = 40


def _extent(layers):
    # symmetric about the origin so (0, 0) always lands at the centre
    m = 0.0
    for _, X in layers:
        if len(X):
            m = max(m, float(np.abs(X).max()))
    return 1.0 if m == 0.0 else 1.05 * m


def scatter_svg(layers, size=SIZE, radius=1.6, opacity=0.6, title=None):
    """Render ``[(label, X), ...]`` with each ``X`` of shape ``(n, 2)`` to an SVG string.

    The viewport is square, centred on the origin and scaled to the largest
    absolute coordinate over all layers. Output depends only on the inputs.
    """
    clean = []
    for label, X in layers:
        X = np.asarray(X, dtype=np.float64).reshape(-1, 2) if np.size(X) == 0 else np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ContractError(f"layer {label!r}: scatter needs 2-D points, got shape {X.shape}")
        clean.append((str(label), X))
    if len(clean) > len(PALETTE):
        raise ContractError(f"at most {len(PALETTE)} layers")
    ext = _extent(clean)
    half = size / 2.0
    scale = half / ext
    height = size + LEGEND_HEIGHT
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{height}" viewBox="0 0 {size} {height}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="#999999"/>',
    ]
    if title:
        out.append(f'<title>{_escape(title)}</title>')
    for k, (label, X) in enumerate(clean):
        out.append(f'<g id="layer{k}" fill="{PALETTE[k]}" fill-opacity="{opacity}">')
        for x, y in X:
            # SVG y grows downward
            out.append(f'<circle cx="{half + scale * x:.2f}" cy="{half - scale * y:.2f}" r="{radius}"/>')
        out.append("</g>")
    out.append('<g id="legend" font-family="sans-serif" font-size="14">')
    for k, (label, X) in enumerate(clean):
        x0 = 20 + 200 * k
        y0 = size + LEGEND_HEIGHT / 2
        out.append(f'<circle cx="{x0}" cy="{y0:.0f}" r="6" fill="{PALETTE[k]}"/>')
        out.append(f'<text x="{x0 + 12}" y="{y0 + 5:.0f}">{_escape(label)} (n={len(X)})</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
