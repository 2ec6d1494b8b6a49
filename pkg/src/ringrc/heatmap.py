"""Deterministic SVG heatmap of sweep results.

Rendering is a pure function of the tabulated grid (the same rows that go
into results.csv), so regenerating the figure from the CSV reproduces the
sweep-produced file byte for byte. Power runs up the vertical axis,
detuning along the horizontal one; color is log-scaled over test NMSE with
the colorbar annotated by the extreme values; the best point is circled and
failed points are crossed out.
"""

from __future__ import annotations

import math

from .errors import ValidationError

# Anchor colors of a viridis-like gradient, dark (low) to bright (high).
_STOPS = (
    (68, 1, 84), (72, 36, 117), (65, 68, 135), (53, 95, 141),
    (42, 120, 142), (33, 144, 141), (34, 168, 132), (66, 190, 113),
    (122, 209, 81), (189, 223, 38), (253, 231, 37),
)

_CELL = 34
_LEFT = 78
_TOP = 46
_BOTTOM = 58
_BAR_GAP = 24
_BAR_W = 18
_RIGHT = 92


def _color(fraction: float) -> str:
    f = min(max(fraction, 0.0), 1.0) * (len(_STOPS) - 1)
    i = min(int(f), len(_STOPS) - 2)
    t = f - i
    r, g, b = (round(a + (b_ - a) * t) for a, b_ in zip(_STOPS[i], _STOPS[i + 1]))
    return f"#{r:02x}{g:02x}{b:02x}"


def _fmt(value: float) -> str:
    return f"{value:g}"


def render_heatmap_svg(rows: list[dict], title: str = "test NMSE") -> str:
    """Render grid rows (power_dbm, detuning_ghz, nmse_test, status) to SVG."""
    if not rows:
        raise ValidationError("no grid points to render")
    powers = sorted({r["power_dbm"] for r in rows})
    detunings = sorted({r["detuning_ghz"] for r in rows})
    n_rows, n_cols = len(powers), len(detunings)
    row_of = {p: i for i, p in enumerate(powers)}
    col_of = {d: j for j, d in enumerate(detunings)}

    ok = [r for r in rows if r["status"] == "ok" and math.isfinite(r["nmse_test"])]
    if not ok:
        raise ValidationError("no successful grid points to render")
    floor = 1e-12
    lo = math.log10(max(min(r["nmse_test"] for r in ok), floor))
    hi = math.log10(max(max(r["nmse_test"] for r in ok), floor))
    span = hi - lo if hi > lo else 1.0
    best = min(ok, key=lambda r: (r["nmse_test"], r["power_dbm"],
                                  abs(r["detuning_ghz"])))

    plot_w = _CELL * n_cols
    plot_h = _CELL * n_rows
    width = _LEFT + plot_w + _BAR_GAP + _BAR_W + _RIGHT
    height = _TOP + plot_h + _BOTTOM

    def cell_x(d):
        return _LEFT + col_of[d] * _CELL

    def cell_y(p):
        # Highest power at the top.
        return _TOP + (n_rows - 1 - row_of[p]) * _CELL

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
               f'height="{height}" viewBox="0 0 {width} {height}">')
    out.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')
    out.append(f'<text x="{_LEFT + plot_w / 2:.1f}" y="24" font-family="sans-serif" '
               f'font-size="14" text-anchor="middle">{title}</text>')

    for r in sorted(rows, key=lambda r: (r["power_dbm"], r["detuning_ghz"])):
        x, y = cell_x(r["detuning_ghz"]), cell_y(r["power_dbm"])
        if r["status"] == "ok" and math.isfinite(r["nmse_test"]):
            frac = (math.log10(max(r["nmse_test"], floor)) - lo) / span
            out.append(f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
                       f'fill="{_color(frac)}"/>')
        else:
            out.append(f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
                       f'fill="#d9d9d9" class="failed"/>')
            out.append(f'<path d="M{x + 6} {y + 6} L{x + _CELL - 6} {y + _CELL - 6} '
                       f'M{x + _CELL - 6} {y + 6} L{x + 6} {y + _CELL - 6}" '
                       f'stroke="#888888" stroke-width="2" class="failed"/>')

    bx, by = cell_x(best["detuning_ghz"]), cell_y(best["power_dbm"])
    out.append(f'<circle cx="{bx + _CELL / 2:.1f}" cy="{by + _CELL / 2:.1f}" '
               f'r="{_CELL * 0.32:.1f}" fill="none" stroke="#e81010" '
               f'stroke-width="2.5" class="best-point"/>')

    out.append(f'<rect x="{_LEFT}" y="{_TOP}" width="{plot_w}" height="{plot_h}" '
               f'fill="none" stroke="#000000" stroke-width="1"/>')

    col_stride = max(1, math.ceil(n_cols / 11))
    for j, d in enumerate(detunings):
        if j % col_stride and j != n_cols - 1:
            continue
        x = _LEFT + j * _CELL + _CELL / 2
        out.append(f'<text x="{x:.1f}" y="{_TOP + plot_h + 18}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="middle">{_fmt(d)}</text>')
    out.append(f'<text x="{_LEFT + plot_w / 2:.1f}" y="{_TOP + plot_h + 40}" '
               f'font-family="sans-serif" font-size="12" text-anchor="middle">'
               f'detuning (GHz)</text>')

    row_stride = max(1, math.ceil(n_rows / 11))
    for i, p in enumerate(powers):
        if i % row_stride and i != n_rows - 1:
            continue
        y = _TOP + (n_rows - 1 - i) * _CELL + _CELL / 2 + 4
        out.append(f'<text x="{_LEFT - 8}" y="{y:.1f}" font-family="sans-serif" '
                   f'font-size="11" text-anchor="end">{_fmt(p)}</text>')
    out.append(f'<text x="20" y="{_TOP + plot_h / 2:.1f}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 20 {_TOP + plot_h / 2:.1f})">'
               f'total power (dBm)</text>')

    bar_x = _LEFT + plot_w + _BAR_GAP
    n_seg = 64
    seg_h = plot_h / n_seg
    for s in range(n_seg):
        frac = 1.0 - (s + 0.5) / n_seg
        y = _TOP + s * seg_h
        out.append(f'<rect x="{bar_x}" y="{y:.2f}" width="{_BAR_W}" '
                   f'height="{seg_h + 0.5:.2f}" fill="{_color(frac)}"/>')
    out.append(f'<rect x="{bar_x}" y="{_TOP}" width="{_BAR_W}" height="{plot_h}" '
               f'fill="none" stroke="#000000" stroke-width="1"/>')
    out.append(f'<text x="{bar_x + _BAR_W + 6}" y="{_TOP + 10}" font-family="sans-serif" '
               f'font-size="11">{10.0 ** hi:.3g}</text>')
    out.append(f'<text x="{bar_x + _BAR_W + 6}" y="{_TOP + plot_h}" '
               f'font-family="sans-serif" font-size="11">{10.0 ** lo:.3g}</text>')
    out.append(f'<text x="{bar_x + _BAR_W + 6}" y="{_TOP + plot_h / 2:.1f}" '
               f'font-family="sans-serif" font-size="11">NMSE</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"
