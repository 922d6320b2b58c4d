"""Minimal self-contained SVG charts for reports and statistic paths.

Only three chart kinds are needed, so the markup is written directly rather
than through a plotting library.  Every chart is a single ``<svg>`` element
with inline styling and no external references.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigurationError

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=78, right=24, top=40, bottom=56)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    markers: bool = True
    dashed: bool = False


class _Axis:
    def __init__(self, lo: float, hi: float, log: bool, pixel_lo: float, pixel_hi: float):
        if log and lo <= 0:
            raise ConfigurationError("log axis needs positive data")
        self.log = log
        a, b = (math.log10(lo), math.log10(hi)) if log else (lo, hi)
        if a == b:
            a, b = a - 0.5, b + 0.5
        pad = 0.05 * (b - a)
        self.a, self.b = a - pad, b + pad
        self.p0, self.p1 = pixel_lo, pixel_hi

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        u = np.log10(v) if self.log else v
        return self.p0 + (u - self.a) / (self.b - self.a) * (self.p1 - self.p0)

    def ticks(self):
        if self.log:
            lo, hi = math.floor(self.a), math.ceil(self.b)
            if hi - lo < 2:
                vals = [10**e * m for e in range(lo, hi + 1) for m in (1, 2, 5)]
            else:
                vals = [10.0**e for e in range(lo, hi + 1)]
            return [v for v in vals if self.a <= math.log10(v) <= self.b]
        span = self.b - self.a
        step = 10 ** math.floor(math.log10(span / 5))
        for m in (1, 2, 5, 10):
            if span / (m * step) <= 6:
                step *= m
                break
        start = math.ceil(self.a / step) * step
        return list(np.arange(start, self.b + 1e-12 * span, step))


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:.4g}"


def render_chart(
    series: Sequence[Series],
    title: str,
    xlabel: str,
    ylabel: str,
    *,
    logx: bool = False,
    logy: bool = False,
) -> str:
    """An SVG document for one or more line series on shared axes."""
    if not series:
        raise ConfigurationError("nothing to plot")
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = [np.asarray(s.y, dtype=float) for s in series]
    ys += [np.asarray(s.lower, dtype=float) for s in series if s.lower is not None]
    ys += [np.asarray(s.upper, dtype=float) for s in series if s.upper is not None]
    yall = np.concatenate(ys)
    if logy:
        yall = yall[yall > 0]
    xs = xs[np.isfinite(xs)]
    yall = yall[np.isfinite(yall)]
    if xs.size == 0 or yall.size == 0:
        raise ConfigurationError("no finite data to plot")
    left, right = MARGIN["left"], WIDTH - MARGIN["right"]
    top, bottom = MARGIN["top"], HEIGHT - MARGIN["bottom"]
    ax = _Axis(float(xs.min()), float(xs.max()), logx, left, right)
    ay = _Axis(float(yall.min()), float(yall.max()), logy, bottom, top)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="#444"/>',
    ]
    for v in ax.ticks():
        px = float(ax(v))
        out.append(f'<line x1="{px:.2f}" y1="{top}" x2="{px:.2f}" y2="{bottom}" stroke="#ddd"/>')
        out.append(f'<text x="{px:.2f}" y="{bottom + 16}" text-anchor="middle">{_fmt(v)}</text>')
    for v in ay.ticks():
        py = float(ay(v))
        out.append(f'<line x1="{left}" y1="{py:.2f}" x2="{right}" y2="{py:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{py + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>'
    )

    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y) & ((y > 0) if logy else True)
        px, py = ax(x[ok]), ay(y[ok])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>')
        if s.lower is not None and s.upper is not None:
            lo = np.asarray(s.lower, dtype=float)[ok]
            hi = np.asarray(s.upper, dtype=float)[ok]
            for a, l, h in zip(px, lo, hi):
                if logy and (l <= 0 or h <= 0):
                    continue
                out.append(f'<line x1="{a:.2f}" y1="{float(ay(l)):.2f}" x2="{a:.2f}" y2="{float(ay(h)):.2f}" '
                           f'stroke="{color}" stroke-width="1"/>')
        if s.markers:
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>' for a, b in zip(px, py))
        ly = top + 16 + 16 * k
        out.append(f'<line x1="{right - 150}" y1="{ly - 4}" x2="{right - 130}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{right - 124}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _per_n(report: dict) -> list:
    if not isinstance(report, dict) or not report.get("per_n"):
        raise ConfigurationError("report has no per-n data")
    return report["per_n"]


def error_vs_n(report: dict) -> str:
    """Median error (with its 95% interval) against n on log-log axes."""
    entries = _per_n(report)
    try:
        ns = np.array([e["n"] for e in entries], dtype=float)
        med = np.array([e["error"]["median"] for e in entries], dtype=float)
        lo = np.array([e["error"]["median_ci95"][0] for e in entries], dtype=float)
        hi = np.array([e["error"]["median_ci95"][1] for e in entries], dtype=float)
        sup = np.array([e["sup_error"]["median"] for e in entries], dtype=float)
    except (KeyError, TypeError, IndexError):
        raise ConfigurationError("error-vs-n needs a consistency report (per_n[].error)") from None
    name = report.get("config", {}).get("functional", "f")
    return render_chart(
        [Series("median |V - c L| at T", ns, med, lo, hi), Series("median sup over time grid", ns, sup, dashed=True)],
        f"Consistency of V({name}): error against n", "n", "error", logx=True, logy=True,
    )


def variance_slope(report: dict) -> str:
    """Variance of S_n(T) against n on log-log axes with the fitted slope."""
    entries = _per_n(report)
    try:
        ns = np.array([e["n"] for e in entries], dtype=float)
        var = np.array([e["S"]["variance"] for e in entries], dtype=float)
        lo = np.array([e["S"]["variance_ci95"][0] for e in entries], dtype=float)
        hi = np.array([e["S"]["variance_ci95"][1] for e in entries], dtype=float)
    except (KeyError, TypeError, IndexError):
        raise ConfigurationError("variance-slope needs a regime report (per_n[].S)") from None
    series = [Series("Var S_n(T)", ns, var, lo, hi)]
    reg = report.get("regressions", {}).get("log_variance_S_vs_log_n", {})
    if reg.get("slope") is not None and len(ns) > 1:
        fit = np.exp(reg["intercept"] + reg["slope"] * np.log(ns))
        series.append(Series(f"fit, slope {reg['slope']:.3f}", ns, fit, markers=False, dashed=True))
    return render_chart(series, "Variance growth of S_n(T)", "n", "variance", logx=True, logy=True)


def path_overlay(curves: Sequence[tuple], title: str = "Statistic paths") -> str:
    """Overlay of (label, times, values) curves on linear axes."""
    if not curves:
        raise ConfigurationError("path-overlay needs at least one curve")
    series = []
    for label, t, v in curves:
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if t.size == 0 or t.shape != v.shape:
            raise ConfigurationError(f"curve {label!r} is empty or has mismatched columns")
        series.append(Series(label, t, v, markers=t.size <= 40, dashed=bool(series)))
    return render_chart(series, title, "t", "value")


def write_svg(svg: str, dest) -> None:
    with open(dest, "w") as fh:
        fh.write(svg)
