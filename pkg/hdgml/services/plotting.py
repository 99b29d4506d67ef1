from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

WIDTH = 640
HEIGHT = 400
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

Series = Dict[str, Tuple[Sequence[float], Sequence[float]]]


def _fmt(value: float) -> str:
    return f"{value:.3g}"


def _bounds(values: np.ndarray) -> Tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo < 1e-300:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def svg_plot(
    series: Series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_y: bool = False,
) -> str:
    """Polyline plot with a frame, tick labels at the ends of both axes and a legend"""
    cleaned = {}
    for name, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if log_y:
            keep &= y > 0
            y = np.where(keep, np.log10(np.where(y > 0, y, 1.0)), 0.0)
        if keep.any():
            cleaned[name] = (x[keep], y[keep])
    if not cleaned:
        raise ValueError("nothing to plot")

    x0, x1 = _bounds(np.concatenate([x for x, _ in cleaned.values()]))
    y0, y1 = _bounds(np.concatenate([y for _, y in cleaned.values()]))
    inner_w = WIDTH - 2 * MARGIN
    inner_h = HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * inner_w

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * inner_h

    label = (lambda v: f"1e{v:.1f}") if log_y else _fmt
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{inner_w}" height="{inner_h}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 16 {HEIGHT / 2})">{ylabel}</text>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{_fmt(x0)}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{_fmt(x1)}</text>',
        f'<text x="{MARGIN - 6}" y="{HEIGHT - MARGIN}" text-anchor="end">{label(y0)}</text>',
        f'<text x="{MARGIN - 6}" y="{MARGIN + 4}" text-anchor="end">{label(y1)}</text>',
    ]
    for i, (name, (x, y)) in enumerate(cleaned.items()):
        color = COLORS[i % len(COLORS)]
        points = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = MARGIN + 16 + 16 * i
        parts.append(
            f'<line x1="{WIDTH - MARGIN - 110}" y1="{ly - 4}" x2="{WIDTH - MARGIN - 90}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{WIDTH - MARGIN - 85}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path: Union[str, Path], series: Series, log_y: bool = False, **labels: Optional[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_plot(series, log_y=log_y, **{k: v or "" for k, v in labels.items()}))
    logger.debug(f"Wrote plot {path}")
    return path
