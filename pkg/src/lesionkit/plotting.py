"""Minimal line charts rendered with Pillow (training curves)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from PIL import Image, ImageDraw

COLORS = [(31, 119, 180), (214, 39, 40), (44, 160, 44), (148, 103, 189)]


def line_plot(path, series: dict[str, Sequence[float]], title: str = "", ylabel: str = "",
              size: tuple[int, int] = (480, 320)) -> None:
    """Draw each series against epoch 1..n with axes, min/max ticks and a legend."""
    w, h = size
    left, right, top, bottom = 56, 16, 28, 36
    img = Image.new("RGB", size, "white")
    draw = ImageDraw.Draw(img)
    values = [float(v) for s in series.values() for v in s]
    n = max((len(s) for s in series.values()), default=0)
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    x0, y0, x1, y1 = left, top, w - right, h - bottom

    def sx(i):
        return x0 + (x1 - x0) * (i / max(n - 1, 1))

    def sy(v):
        return y1 - (y1 - y0) * ((v - lo) / (hi - lo))

    draw.rectangle([x0, y0, x1, y1], outline=(0, 0, 0))
    draw.text((x0, 6), title, fill=(0, 0, 0))
    draw.text((4, y0), f"{hi:.3g}", fill=(0, 0, 0))
    draw.text((4, y1 - 10), f"{lo:.3g}", fill=(0, 0, 0))
    draw.text((x0, y1 + 6), "1", fill=(0, 0, 0))
    draw.text((x1 - 20, y1 + 6), str(n), fill=(0, 0, 0))
    draw.text(((x0 + x1) // 2 - 16, y1 + 18), "epoch", fill=(0, 0, 0))
    if ylabel:
        draw.text((4, (y0 + y1) // 2), ylabel, fill=(0, 0, 0))
    for k, (name, s) in enumerate(series.items()):
        color = COLORS[k % len(COLORS)]
        pts = [(sx(i), sy(float(v))) for i, v in enumerate(s)]
        if len(pts) > 1:
            draw.line(pts, fill=color, width=2)
        elif pts:
            draw.ellipse([pts[0][0] - 2, pts[0][1] - 2, pts[0][0] + 2, pts[0][1] + 2], fill=color)
        draw.text((x1 - 120, y0 + 6 + 12 * k), name, fill=color)
    img.save(Path(path), format="PNG")
