"""Minimal self-contained SVG line charts (polylines plus axis labels)."""

from __future__ import annotations

import math

__all__ = ["line_chart_svg"]

_COLORS = ["#1f6fb2", "#d1495b", "#3c8d53", "#8f5bb2", "#c97b2d", "#4a4a4a"]

_WIDTH, _HEIGHT = 720, 480
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 160, 40, 55


def _finite(values):
    return [v for v in values if math.isfinite(v)]


def line_chart_svg(series, title="", xlabel="", ylabel=""):
    """Render one polyline per (label, xs, ys) triple; returns SVG text.

    Non-finite points are dropped.  Axes are linear in the supplied values,
    so pass logs for log-log plots.
    """
    xs_all, ys_all = [], []
    for _, xs, ys in series:
        xs_all.extend(_finite(xs))
        ys_all.extend(_finite(ys))
    if not xs_all or not ys_all:
        raise ValueError("nothing finite to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x):
        return _MARGIN_L + plot_w * (x - x_lo) / (x_hi - x_lo)

    def py(y):
        return _MARGIN_T + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        # axes
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" '
        f'y2="{_MARGIN_T + plot_h}" stroke="black"/>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T + plot_h}" '
        f'x2="{_MARGIN_L + plot_w}" y2="{_MARGIN_T + plot_h}" stroke="black"/>',
        f'<text x="{_MARGIN_L + plot_w / 2:.0f}" y="{_HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{xlabel}</text>',
        f'<text x="18" y="{_MARGIN_T + plot_h / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {_MARGIN_T + plot_h / 2:.0f})">{ylabel}</text>',
    ]
    # min/max tick labels
    parts.append(
        f'<text x="{_MARGIN_L}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{x_lo:.3g}</text>')
    parts.append(
        f'<text x="{_MARGIN_L + plot_w}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="11">{x_hi:.3g}</text>')
    parts.append(
        f'<text x="{_MARGIN_L - 8}" y="{_MARGIN_T + plot_h + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y_lo:.3g}</text>')
    parts.append(
        f'<text x="{_MARGIN_L - 8}" y="{_MARGIN_T + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{y_hi:.3g}</text>')

    for idx, (label, xs, ys) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        points = " ".join(
            f"{px(x):.2f},{py(y):.2f}"
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y)
        )
        if points:
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.8" '
                f'points="{points}"/>')
        ly = _MARGIN_T + 16 * (idx + 1)
        parts.append(
            f'<rect x="{_MARGIN_L + plot_w + 12}" y="{ly - 9}" width="12" height="4" '
            f'fill="{color}"/>')
        parts.append(
            f'<text x="{_MARGIN_L + plot_w + 30}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
