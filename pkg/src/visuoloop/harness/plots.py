"""Deterministic SVG chart emission.

Hand-rolled rather than a plotting library so that regenerating a chart from
the same CSV is byte-identical (no embedded timestamps, hashes, or font
caches). Plots are presentation only; every asserted number lives in the CSV
written next to the figure.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

W, H = 480, 320
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 58, 16, 28, 44
COLORS = ("#2563eb", "#dc2626", "#059669", "#d97706", "#7c3aed", "#0891b2")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** (len(f"{int(span)}") - 1) if span >= 1 else span / n
    raw = span / n
    # round the step to 1/2/5 * 10^k
    import math

    mag = 10 ** math.floor(math.log10(raw)) if raw > 0 else 1
    for m in (1, 2, 5, 10):
        if m * mag >= raw:
            step = m * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-12:
        out.append(round(v, 10))
        v += step
    return out or [lo, hi]


class SvgChart:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series: list[tuple[str, list[float], list[float], str]] = []  # name, xs, ys, kind

    def add_line(self, name: str, xs, ys) -> None:
        self.series.append((name, [float(x) for x in xs], [float(y) for y in ys], "line"))

    def add_bars(self, name: str, xs, ys) -> None:
        self.series.append((name, [float(x) for x in xs], [float(y) for y in ys], "bar"))

    def _bounds(self):
        xs = [x for _, sx, _, _ in self.series for x in sx]
        ys = [y for _, _, sy, _ in self.series for y in sy]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys + [0.0]), max(ys)
        if x1 == x0:
            x1 = x0 + 1
        if y1 == y0:
            y1 = y0 + 1
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()
        iw = W - MARGIN_L - MARGIN_R
        ih = H - MARGIN_T - MARGIN_B

        def px(x):
            return MARGIN_L + (x - x0) / (x1 - x0) * iw

        def py(y):
            return MARGIN_T + ih - (y - y0) / (y1 - y0) * ih

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W/2:.1f}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{self.title}</text>',
        ]
        # axes
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{H-MARGIN_B}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{MARGIN_L}" y1="{H-MARGIN_B}" x2="{W-MARGIN_R}" y2="{H-MARGIN_B}" stroke="black" stroke-width="1"/>'
        )
        for tx in _ticks(x0, x1):
            parts.append(
                f'<text x="{px(tx):.1f}" y="{H-MARGIN_B+16}" font-family="sans-serif" font-size="10" text-anchor="middle">{_fmt(tx)}</text>'
            )
            parts.append(
                f'<line x1="{px(tx):.1f}" y1="{H-MARGIN_B}" x2="{px(tx):.1f}" y2="{H-MARGIN_B+4}" stroke="black" stroke-width="1"/>'
            )
        for ty in _ticks(y0, y1):
            parts.append(
                f'<text x="{MARGIN_L-6}" y="{py(ty)+3:.1f}" font-family="sans-serif" font-size="10" text-anchor="end">{_fmt(ty)}</text>'
            )
            parts.append(
                f'<line x1="{MARGIN_L-4}" y1="{py(ty):.1f}" x2="{MARGIN_L}" y2="{py(ty):.1f}" stroke="black" stroke-width="1"/>'
            )
        parts.append(
            f'<text x="{W/2:.1f}" y="{H-10}" font-family="sans-serif" font-size="11" text-anchor="middle">{self.xlabel}</text>'
        )
        parts.append(
            f'<text x="14" y="{H/2:.1f}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 14 {H/2:.1f})">{self.ylabel}</text>'
        )
        if not self.series or all(not sx for _, sx, _, _ in self.series):
            parts.append(
                f'<text x="{W/2:.1f}" y="{H/2:.1f}" font-family="sans-serif" font-size="14" fill="#888" text-anchor="middle">no data</text>'
            )
        for i, (name, xs, ys, kind) in enumerate(self.series):
            color = COLORS[i % len(COLORS)]
            if kind == "bar" and xs:
                bw = max(4.0, iw / max(1, len(xs)) * 0.6)
                for x, y in zip(xs, ys):
                    parts.append(
                        f'<rect x="{px(x)-bw/2:.1f}" y="{py(y):.1f}" width="{bw:.1f}" '
                        f'height="{py(y0)-py(y):.1f}" fill="{color}" fill-opacity="0.8"/>'
                    )
            elif xs:
                pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
                parts.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
                )
                for x, y in zip(xs, ys):
                    parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.4" fill="{color}"/>')
            parts.append(
                f'<text x="{W-MARGIN_R-4}" y="{MARGIN_T+14*(i+1)}" font-family="sans-serif" '
                f'font-size="10" text-anchor="end" fill="{color}">{name}</text>'
            )
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_csv(path: str | Path, header: list[str], rows: list) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    os.replace(tmp, path)


def plot_emit(chart: SvgChart, out_base: str | Path, header: list[str], rows: list) -> tuple[Path, Path]:
    """Write <base>.svg and <base>.csv atomically; returns both paths."""
    out_base = Path(out_base)
    svg_path = out_base.with_suffix(".svg")
    csv_path = out_base.with_suffix(".csv")
    atomic_write_text(svg_path, chart.render())
    write_csv(csv_path, header, rows)
    return svg_path, csv_path
