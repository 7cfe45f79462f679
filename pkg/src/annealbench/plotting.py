"""Minimal hand-written SVG: log10 TTS against N for one solver and problem class."""
import math
from collections import defaultdict
from xml.sax.saxutils import escape

import numpy as np

from .scaling import BoundaryFlag, Family, ScalingFit

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 50
CURVE_COLORS = ("#9ecae1", "#a1d99b", "#fdae6b", "#bcbddc", "#fc9272", "#c7e9c0", "#d9d9d9")


def _fit_from_dict(d):
    if d.get("status") != "fitted":
        return None
    return ScalingFit(Family(d["family"]), d["params"], {}, math.nan, d["fitted_range"], math.nan, 0)


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def render_svg(fixed_t, envelope=None, fit=None, title=""):
    """SVG text for one slice.

    ``fixed_t`` maps t -> {N: TTS}. ``envelope`` is an EnvelopeCurve or None,
    ``fit`` a parsed fits.txt block or None. Output contains no timestamps.
    """
    fit_model = _fit_from_dict(fit) if fit else None
    xs, ys = [], []
    for pts in fixed_t.values():
        for n, v in pts.items():
            if v > 0 and math.isfinite(v):
                xs.append(n)
                ys.append(math.log10(v))
    fit_lines = []
    if fit_model is not None:
        lo, hi = fit_model.n_range
        inside = np.linspace(lo, hi, 40)
        beyond = np.linspace(hi, 2 * hi, 40)
        fit_lines = [(inside, np.log10(fit_model.predict(inside)), False),
                     (beyond, np.log10(fit_model.predict(beyond)), True)]
        xs += [lo, 2 * hi]
        for _, ly, _ in fit_lines:
            ys += [float(v) for v in ly if math.isfinite(v)]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    has_envelope = envelope is not None and envelope.points
    if not xs or not ys or not has_envelope:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT / 2:.1f}" text-anchor="middle" fill="#b00">'
                   "insufficient data</text>")
    if not xs or not ys:
        out.append("</svg>")
        return "\n".join(out) + "\n"

    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(n):
        return LEFT + (n - x0) / (x1 - x0) * pw

    def py(ly):
        return TOP + (1 - (ly - y0) / (y1 - y0)) * ph

    # axes
    out.append(f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>')
    for v in _ticks(x0, x1):
        out.append(f'<text x="{px(v):.1f}" y="{TOP + ph + 15}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{LEFT - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">N</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">log10 TTS</text>')

    legend = []
    for k, t in enumerate(sorted(fixed_t)):
        pts = [(n, v) for n, v in sorted(fixed_t[t].items()) if v > 0 and math.isfinite(v)]
        color = CURVE_COLORS[k % len(CURVE_COLORS)]
        coords = " ".join(f"{px(n):.1f},{py(math.log10(v)):.1f}" for n, v in pts)
        out.append(f'<polyline class="fixed-t" points="{coords}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        legend.append((f"t = {t:g}", color, "", 1.2))

    if has_envelope:
        pts = sorted(envelope.points.items())
        coords = " ".join(f"{px(n):.1f},{py(math.log10(p.tts_min)):.1f}" for n, p in pts)
        out.append(f'<polyline class="envelope" points="{coords}" fill="none" stroke="black" stroke-width="3"/>')
        for n, p in pts:
            hollow = p.boundary_flag is not BoundaryFlag.INTERIOR
            fill = "white" if hollow else "black"
            out.append(f'<circle cx="{px(n):.1f}" cy="{py(math.log10(p.tts_min)):.1f}" r="4" '
                       f'fill="{fill}" stroke="black"/>')
        legend.append(("envelope", "black", "", 3))

    for nx, ly, dashed in fit_lines:
        ok = np.isfinite(ly)
        d = " ".join(("M" if i == 0 else "L") + f"{px(a):.1f},{py(b):.1f}"
                     for i, (a, b) in enumerate(zip(nx[ok], ly[ok])))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        cls = "fit-extrapolated" if dashed else "fit"
        out.append(f'<path class="{cls}" d="{d}" fill="none" stroke="#d62728" stroke-width="1.5"{dash}/>')
    if fit_lines:
        legend.append((f"fit {fit_model.family.value}", "#d62728", "", 1.5))
        legend.append(("extrapolated", "#d62728", "6,4", 1.5))
    if has_envelope and any(p.boundary_flag is not BoundaryFlag.INTERIOR for p in envelope.points.values()):
        legend.append(("hollow: grid-edge optimum", None, "", 0))

    lx = WIDTH - RIGHT + 15
    for i, (label, color, dash, width) in enumerate(legend):
        y = TOP + 10 + 16 * i
        if color:
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 22}" y2="{y}" stroke="{color}" '
                       f'stroke-width="{width}"{dash_attr}/>')
        out.append(f'<text x="{lx + 28}" y="{y + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def group_fixed_t(curve_points):
    """``{(solver, class): {t: {N: TTS}}}`` from metrics CurvePoints."""
    out = defaultdict(lambda: defaultdict(dict))
    for pt in curve_points:
        out[pt.solver.value, pt.problem_class.value][pt.t_effort][pt.n] = pt.tts.tts
    return out
