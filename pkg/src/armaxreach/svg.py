"""Minimal SVG rendering of 2-D projections of reachable sets."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .sets import project_polygon

STYLES = {
    "SS": ("#1f77b4", "6,3"),
    "ARMAX": ("#d62728", ""),
    "ARMAX-DP": ("#2ca02c", "2,2"),
    "ARMAX-ONESHOT": ("#9467bd", "4,2"),
    "ARMAX-ALG1": ("#8c564b", "8,2"),
    "ARMAX-ALG2": ("#ff7f0e", "1,3"),
}
_FALLBACK = ("#444444", "")


def render(results: dict, dims=(0, 1), points=None, width: int = 640, height: int = 480,
           margin: int = 40) -> str:
    """SVG document with one polygon per method and step.

    Args:
        results: method tag -> ReachResult.
        dims: the two output dimensions to project on.
        points: optional (N, 2) array of sampled outputs, drawn as dots.
    """
    polys = []
    for method in sorted(results):
        res = results[method]
        for k in res.steps:
            polys.append((method, k, project_polygon(res.set_at(k), tuple(dims))))
    pts = np.zeros((0, 2)) if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
    everything = np.vstack([v for *_, v in polys] + [pts]) if polys or pts.size else np.zeros((1, 2))
    lo, hi = everything.min(axis=0), everything.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    sx = (width - 2 * margin) / span[0]
    sy = (height - 2 * margin) / span[1]

    def xy(v):
        # flip y so that larger values are drawn higher up
        return margin + (v[0] - lo[0]) * sx, height - margin - (v[1] - lo[1]) * sy

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    for method, k, verts in polys:
        color, dash = STYLES.get(method, _FALLBACK)
        coords = " ".join("%.3f,%.3f" % xy(v) for v in verts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polygon points="{coords}" fill="none" stroke="{color}" stroke-width="1"{dash_attr}>'
                   f'<title>{escape(method)} k={k}</title></polygon>')
    for v in pts:
        out.append('<circle cx="%.3f" cy="%.3f" r="0.8" fill="#000000"/>' % xy(v))
    for i, method in enumerate(sorted(results)):
        color, dash = STYLES.get(method, _FALLBACK)
        y = margin / 2 + 14 * i
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{width - 150}" y1="{y}" x2="{width - 120}" y2="{y}" stroke="{color}"{dash_attr}/>'
                   f'<text x="{width - 115}" y="{y + 4}" font-size="11">{escape(method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
