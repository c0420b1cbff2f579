"""Tiny hand-rolled SVG output: heatmaps and survival step curves.

No plotting dependency; output is deterministic byte-for-byte for a given
input, which the pipeline-level determinism checks rely on."""

import os

WIDTH, HEIGHT = 640, 480
MARGIN = 50


def _diverging_color(v, vmin, vmax):
    # blue -> white -> red over [vmin, vmax]
    t = 0.0 if vmax == vmin else (v - vmin) / (vmax - vmin)
    t = min(1.0, max(0.0, t))
    if t < 0.5:
        u = t / 0.5
        r, g, b = int(40 + 215 * u), int(70 + 185 * u), 255
    else:
        u = (t - 0.5) / 0.5
        r, g, b = 255, int(255 - 185 * u), int(255 - 215 * u)
    return f"#{r:02x}{g:02x}{b:02x}"


def _write(path, parts):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
    os.replace(tmp, path)


def svg_heatmap(grid, path, vmin=-1.0, vmax=1.0, title="", comment=""):
    """Cell-per-value heatmap with a fixed (shared) color scale."""
    gh, gw = grid.shape
    cell = max(1, min((WIDTH - 2 * MARGIN) // gw, (HEIGHT - 2 * MARGIN) // gh))
    w = gw * cell + 2 * MARGIN
    h = gh * cell + 2 * MARGIN
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    if comment:
        parts.append(f"<!-- {comment} -->")
    if title:
        parts.append(f'<text x="{MARGIN}" y="{MARGIN - 14}" font-size="14">{title}</text>')
    for i in range(gh):
        for j in range(gw):
            color = _diverging_color(float(grid[i, j]), vmin, vmax)
            parts.append(
                f'<rect x="{MARGIN + j * cell}" y="{MARGIN + i * cell}" '
                f'width="{cell}" height="{cell}" fill="{color}"/>')
    parts.append("</svg>")
    _write(path, parts)


_CURVE_COLORS = ("#c0392b", "#2471a3", "#1e8449", "#884ea0", "#b7950b")


def svg_step_curves(curves, path, title="", xlabel="days", comment="",
                    annotations=()):
    """Right-continuous step curves on a unit-probability y axis.

    curves: list of (label, times, surv) with S(0) = 1 implied.
    """
    xmax = max((float(t[-1]) for _, t, _ in curves if len(t)), default=1.0)
    xmax = max(xmax, 1.0)

    def sx(x):
        return MARGIN + (WIDTH - 2 * MARGIN) * x / xmax

    def sy(y):
        return HEIGHT - MARGIN - (HEIGHT - 2 * MARGIN) * y

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">']
    if comment:
        parts.append(f"<!-- {comment} -->")
    parts.append(f'<line x1="{MARGIN}" y1="{sy(0)}" x2="{WIDTH - MARGIN}" '
                 f'y2="{sy(0)}" stroke="black"/>')
    parts.append(f'<line x1="{MARGIN}" y1="{sy(0)}" x2="{MARGIN}" '
                 f'y2="{sy(1)}" stroke="black"/>')
    if title:
        parts.append(f'<text x="{MARGIN}" y="{MARGIN - 20}" font-size="14">{title}</text>')
    parts.append(f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" font-size="12">{xlabel}</text>')
    for idx, (label, times, surv) in enumerate(curves):
        color = _CURVE_COLORS[idx % len(_CURVE_COLORS)]
        pts = [(0.0, 1.0)]
        for t, s in zip(times, surv):
            pts.append((float(t), pts[-1][1]))
            pts.append((float(t), float(s)))
        pts.append((xmax, pts[-1][1]))
        d = " ".join(f"{'M' if i == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}"
                     for i, (x, y) in enumerate(pts))
        parts.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - MARGIN - 150}" y="{MARGIN + 16 * idx}" '
                     f'font-size="12" fill="{color}">{label}</text>')
    for i, note in enumerate(annotations):
        parts.append(f'<text x="{MARGIN + 8}" y="{MARGIN + 16 * i}" '
                     f'font-size="12">{note}</text>')
    parts.append("</svg>")
    _write(path, parts)
