"""Minimal, deterministic SVG line charts and heat maps.

Figures are rendered from the CSV tables alone (see :func:`render_table_svg`), so
re-rendering a saved CSV reproduces the emitted SVG byte for byte.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .records import parse_table, read_table

PALETTE = ("#1b9e77", "#222222", "#7570b3", "#d95f02", "#e7298a", "#66a61e", "#e6ab02")
WIDTH, HEIGHT = 760, 440
MARGIN = dict(left=80, right=200, top=40, bottom=60)


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.4g}"


class _Frame:
    def __init__(self, xlim, ylim, title, xlabel, ylabel):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]
        self.xlabel, self.ylabel = xlabel, ylabel

    def px(self, x):
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return MARGIN["top"] + (1 - (y - self.y0) / (self.y1 - self.y0)) * self.ph

    def axes(self):
        l, t = MARGIN["left"], MARGIN["top"]
        p = self.parts
        p.append(f'<rect x="{l}" y="{t}" width="{self.pw}" height="{self.ph}" fill="none" stroke="black"/>')
        for xt in _nice_ticks(self.x0, self.x1):
            X = _fmt(self.px(xt))
            p.append(f'<line x1="{X}" y1="{t + self.ph}" x2="{X}" y2="{t + self.ph + 5}" stroke="black"/>')
            p.append(f'<text x="{X}" y="{t + self.ph + 18}" text-anchor="middle">{_label(xt)}</text>')
        for yt in _nice_ticks(self.y0, self.y1):
            Y = _fmt(self.py(yt))
            p.append(f'<line x1="{l - 5}" y1="{Y}" x2="{l}" y2="{Y}" stroke="black"/>')
            p.append(f'<text x="{l - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">{_label(yt)}</text>')
        p.append(f'<text x="{l + self.pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(self.xlabel)}</text>')
        p.append(f'<text x="18" y="{t + self.ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 18 {t + self.ph / 2:.1f})">{escape(self.ylabel)}</text>')

    def polyline(self, x, y, color, dash=None, width=1.5):
        segs, cur = [], []
        for a, b in zip(x, y):
            if a is None or b is None or not (math.isfinite(a) and math.isfinite(b)):
                if cur:
                    segs.append(cur)
                cur = []
            else:
                cur.append(f"{_fmt(self.px(a))},{_fmt(self.py(b))}")
        if cur:
            segs.append(cur)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        for s in segs:
            self.parts.append(f'<polyline points="{" ".join(s)}" fill="none" stroke="{color}" '
                              f'stroke-width="{width}"{extra}/>')

    def band(self, x, lo, hi, color):
        pts = [(a, b, c) for a, b, c in zip(x, lo, hi)
               if None not in (a, b, c) and math.isfinite(b) and math.isfinite(c)]
        if len(pts) < 2:
            return
        upper = [f"{_fmt(self.px(a))},{_fmt(self.py(c))}" for a, _, c in pts]
        lower = [f"{_fmt(self.px(a))},{_fmt(self.py(b))}" for a, b, _ in reversed(pts)]
        self.parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                          f'fill-opacity="0.25" stroke="none"/>')

    def markers(self, x, y, err, color):
        for a, b, e in zip(x, y, err):
            if None in (a, b) or not math.isfinite(b):
                continue
            X, Y = _fmt(self.px(a)), _fmt(self.py(b))
            if e:
                self.parts.append(f'<line x1="{X}" y1="{_fmt(self.py(b - e))}" x2="{X}" '
                                  f'y2="{_fmt(self.py(b + e))}" stroke="{color}"/>')
            self.parts.append(f'<circle cx="{X}" cy="{Y}" r="2.5" fill="{color}"/>')

    def legend(self, entries):
        x = WIDTH - MARGIN["right"] + 12
        for k, (name, color, dash) in enumerate(entries):
            y = MARGIN["top"] + 10 + 18 * k
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 22}" y2="{y}" stroke="{color}" '
                              f'stroke-width="2"{extra}/>')
            self.parts.append(f'<text x="{x + 28}" y="{y}" dominant-baseline="middle">{escape(name)}</text>')

    def close(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _limits(values, pad=0.05):
    arr = np.array([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if arr.size == 0:
        return (0.0, 1.0)
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        lo, hi = lo - 0.5 * (abs(lo) or 1), hi + 0.5 * (abs(hi) or 1)
    span = hi - lo
    return (lo - pad * span, hi + pad * span)


def line_chart(curves: Sequence[dict], title: str, xlabel: str, ylabel: str,
               bands: Sequence[dict] = (), points: Sequence[dict] = ()) -> str:
    """Curves ``{name, x, y, dash?}``, shaded ``{x, lo, hi, color_of}`` bands and ``{name, x, y, err}`` markers."""
    xs = [v for c in list(curves) + list(points) for v in c["x"]]
    ys = [v for c in curves for v in c["y"]]
    ys += [v for b in bands for v in list(b["lo"]) + list(b["hi"])]
    ys += [v for p in points for v in p["y"]]
    f = _Frame(_limits(xs, 0.0), _limits(ys), title, xlabel, ylabel)
    colors = {c["name"]: PALETTE[k % len(PALETTE)] for k, c in enumerate(curves)}
    for k, p in enumerate(points):
        colors.setdefault(p["name"], PALETTE[(len(curves) + k) % len(PALETTE)])
    for b in bands:
        f.band(b["x"], b["lo"], b["hi"], colors.get(b["color_of"], "#999999"))
    for c in curves:
        f.polyline(c["x"], c["y"], colors[c["name"]], c.get("dash"))
    for p in points:
        f.markers(p["x"], p["y"], p.get("err") or [None] * len(p["x"]), colors[p["name"]])
    f.axes()
    f.legend([(c["name"], colors[c["name"]], c.get("dash")) for c in curves]
             + [(p["name"], colors[p["name"]], None) for p in points])
    return f.close()


def _color_scale(v, lo, hi):
    # diverging blue-white-red around 1 (cooling below, heating above)
    if v is None or not math.isfinite(v):
        return "#bbbbbb"
    if v < 1:
        a = 0.0 if lo >= 1 else min(1.0, (1 - v) / (1 - lo))
        r = g = int(round(255 * (1 - a)))
        return f"#{r:02x}{g:02x}ff"
    a = 0.0 if hi <= 1 else min(1.0, (v - 1) / (hi - 1))
    g = b = int(round(255 * (1 - a)))
    return f"#ff{g:02x}{b:02x}"


def heatmap(xs: Sequence[float], ys: Sequence[float], z: np.ndarray, title: str, xlabel: str,
            ylabel: str, overlay: Optional[tuple] = None) -> str:
    """Cells centered on the ``xs`` by ``ys`` grid; ``z[j, i]`` belongs to ``(xs[i], ys[j])``."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)

    def edges(c):
        if c.size == 1:
            return np.array([c[0] - 0.5, c[0] + 0.5])
        mid = 0.5 * (c[1:] + c[:-1])
        return np.concatenate([[c[0] - (mid[0] - c[0])], mid, [c[-1] + (c[-1] - mid[-1])]])

    ex, ey = edges(xs), edges(ys)
    f = _Frame((ex[0], ex[-1]), (ey[0], ey[-1]), title, xlabel, ylabel)
    finite = z[np.isfinite(z)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 2.0)
    for j in range(ys.size):
        for i in range(xs.size):
            x0, x1 = f.px(ex[i]), f.px(ex[i + 1])
            y0, y1 = f.py(ey[j + 1]), f.py(ey[j])
            f.parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                           f'height="{_fmt(y1 - y0)}" fill="{_color_scale(z[j, i], lo, hi)}"/>')
    if overlay is not None:
        f.polyline(overlay[0], overlay[1], "black", width=2)
    f.axes()
    f.legend([(f"T/T0 min {lo:.3f}", _color_scale(lo, lo, hi), None),
              (f"T/T0 max {hi:.3f}", _color_scale(hi, lo, hi), None)]
             + ([("cooling boundary", "black", None)] if overlay is not None else []))
    return f.close()


# ---------------------------------------------------------------------------
# figure renderers working on CSV tables


def _col(rows, name):
    out = []
    for r in rows:
        v = r.get(name, "")
        out.append(float(v) if v not in ("", None) else None)
    return out


def _tau_pi(rows):
    return [None if t is None else t / math.pi for t in _col(rows, "tau_realized")]


def _theory_rows(rows):
    return [r for r in rows if r.get("source") in ("closed", "quadrature") and r.get("role", "curve") == "curve"]


def _sim_rows(rows):
    return [r for r in rows if r.get("source") == "simulation"]


def _rate_series(th, sim, x, xs, suffix=""):
    curves = [
        {"name": "s_pump" + suffix, "x": x, "y": _col(th, "s_pump")},
        {"name": "w_ext" + suffix, "x": x, "y": _col(th, "w_ext")},
        {"name": "s_vfb" + suffix, "x": x, "y": _col(th, "s_vfb"), "dash": "6,4"},
        {"name": "s_highq" + suffix, "x": x, "y": _col(th, "s_highq"), "dash": "2,3"},
    ]
    bands = []
    if th and "s_pump_lo" in th[0]:
        bands = [{"x": x, "lo": _col(th, f"{q}_lo"), "hi": _col(th, f"{q}_hi"), "color_of": q + suffix}
                 for q in ("s_pump", "w_ext")]
    points = []
    if sim:
        points = [{"name": f"{q}{suffix} (sim)", "x": xs, "y": _col(sim, q), "err": _col(sim, f"se_{q}")}
                  for q in ("s_pump", "w_ext")]
    return curves, bands, points


def _render_rates(meta, rows, xkey="tau"):
    if xkey == "tau":
        th, sim = _theory_rows(rows), _sim_rows(rows)
        curves, bands, points = _rate_series(th, sim, _tau_pi(th), _tau_pi(sim))
        return line_chart(curves, meta.get("title", ""), "tau_realized / pi", "rate", bands, points)
    cases = sorted({r.get("tau_case", "") for r in rows})
    curves, bands, points = [], [], []
    for case in cases:
        part = [r for r in rows if r.get("tau_case", "") == case]
        th, sim = _theory_rows(part), _sim_rows(part)
        suffix = f" [tau case {case}]" if len(cases) > 1 else ""
        c, b, p = _rate_series(th, sim, _col(th, "q0"), _col(sim, "q0"), suffix)
        curves += c
        bands += b
        points += p
    return line_chart(curves, meta.get("title", ""), "q0", "rate", bands, points)


def _render_fig4(meta, rows):
    th, sim = _theory_rows(rows), _sim_rows(rows)
    curves = [{"name": "corr", "x": _tau_pi(th), "y": _col(th, "corr")}]
    points = [{"name": "corr (sim)", "x": _tau_pi(sim), "y": _col(sim, "corr"),
               "err": _col(sim, "se_corr")}] if sim else []
    return line_chart(curves, meta.get("title", ""), "tau_realized / pi", "corr", points=points)


def _render_fig5(meta, rows):
    quantity = meta.get("quantity", "sigma_q2")
    grid = [r for r in rows if r.get("role") == "map"]
    taus = sorted({float(r["tau_realized"]) for r in grid})
    qs = sorted({float(r["q0"]) for r in grid})
    z = np.full((len(qs), len(taus)), np.nan)
    ti = {t: i for i, t in enumerate(taus)}
    qi = {q: j for j, q in enumerate(qs)}
    for r in grid:
        v = r.get(quantity, "")
        z[qi[float(r["q0"])], ti[float(r["tau_realized"])]] = float(v) if v else np.nan
    bnd = [r for r in rows if r.get("role") == "boundary" and r.get("tau_realized")]
    overlay = None
    if bnd:
        overlay = ([float(r["tau_realized"]) / math.pi for r in bnd], [float(r["q0"]) for r in bnd])
    return heatmap(np.array(taus) / math.pi, qs, z, meta.get("title", ""), "tau_realized / pi", "q0",
                   overlay=overlay)


def _render_bound(meta, rows):
    th = _theory_rows(rows)
    x = _tau_pi(th)
    curves = [{"name": "s_pump", "x": x, "y": _col(th, "s_pump")},
              {"name": "bound_nm", "x": x, "y": _col(th, "bound_nm")},
              {"name": "w_ext", "x": x, "y": _col(th, "w_ext")},
              {"name": "s_vfb", "x": x, "y": _col(th, "s_vfb"), "dash": "6,4"}]
    return line_chart(curves, meta.get("title", ""), "tau_realized / pi", "rate")


def _render_sweep(meta, rows):
    th = _theory_rows(rows)
    x = _tau_pi(th)
    curves = [{"name": q, "x": x, "y": _col(th, q)} for q in ("sigma_q2", "sigma_v2")]
    sim = _sim_rows(rows)
    points = [{"name": f"{q} (sim)", "x": _tau_pi(sim), "y": _col(sim, q), "err": _col(sim, f"se_{q}")}
              for q in ("sigma_q2", "sigma_v2")] if sim else []
    return line_chart(curves, meta.get("title", ""), "tau_realized / pi", "T_eff / T0", points=points)


RENDERERS = {"fig3": _render_rates, "fig4": _render_fig4, "fig5": _render_fig5,
             "suppBound": _render_bound, "sweep-delay": _render_sweep,
             "suppQ": lambda m, r: _render_rates(m, r, xkey="q0"),
             "sweep-q": lambda m, r: _render_rates(m, r, xkey="q0")}


def render_table_svg(meta: dict, rows: list[dict]) -> str:
    kind = meta.get("figure") or meta.get("command")
    if kind not in RENDERERS:
        raise ValueError(f"no renderer for {kind!r}")
    return RENDERERS[kind](meta, rows)


def render_csv(path) -> str:
    """SVG for a figure or sweep CSV written by the command line tool."""
    meta, rows = read_table(path)
    return render_table_svg(meta, rows)


def render_text(text: str) -> str:
    meta, rows = parse_table(text)
    return render_table_svg(meta, rows)
