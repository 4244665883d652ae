import math

import jinja2
import numpy as np

WIDTH = 480
HEIGHT = 320
MARGIN = 48

_FRAME = """\
<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}" \
viewBox="0 0 {{ width }} {{ height }}" font-family="sans-serif" font-size="11">
<title>{{ title }}</title>
<rect x="0" y="0" width="{{ width }}" height="{{ height }}" fill="white"/>
<text x="{{ width / 2 }}" y="18" text-anchor="middle" font-size="13">{{ title }}</text>
<line x1="{{ left }}" y1="{{ bottom }}" x2="{{ right }}" y2="{{ bottom }}" stroke="black"/>
<line x1="{{ left }}" y1="{{ top }}" x2="{{ left }}" y2="{{ bottom }}" stroke="black"/>
{% for tick in xticks %}\
<text x="{{ '%.2f' % tick.pos }}" y="{{ bottom + 14 }}" text-anchor="middle">{{ tick.label }}</text>
{% endfor %}\
{% for tick in yticks %}\
<text x="{{ left - 4 }}" y="{{ '%.2f' % tick.pos }}" text-anchor="end">{{ tick.label }}</text>
{% endfor %}\
<text x="{{ (left + right) / 2 }}" y="{{ height - 6 }}" text-anchor="middle">{{ xlabel }}</text>
<text x="12" y="{{ (top + bottom) / 2 }}" text-anchor="middle" \
transform="rotate(-90 12 {{ (top + bottom) / 2 }})">{{ ylabel }}</text>
{% block body %}{% endblock %}\
</svg>
"""

_HISTOGRAM = """\
{% extends "frame" %}{% block body %}\
{% for series in layers %}\
{% for bar in series.bars %}\
<rect x="{{ '%.2f' % bar.x }}" y="{{ '%.2f' % bar.y }}" width="{{ '%.2f' % bar.w }}" \
height="{{ '%.2f' % bar.h }}" fill="{{ series.color }}" fill-opacity="0.5" stroke="{{ series.color }}"/>
{% endfor %}\
<text x="{{ right - 4 }}" y="{{ top + 12 + 14 * loop.index0 }}" text-anchor="end" \
fill="{{ series.color }}">{{ series.name }}</text>
{% endfor %}\
{% endblock %}
"""

_RATE = """\
{% extends "frame" %}{% block body %}\
{% for p in points %}\
<circle cx="{{ '%.2f' % p.x }}" cy="{{ '%.2f' % p.y }}" r="3" fill="#1f77b4"/>
{% endfor %}\
{% if fit %}\
<line x1="{{ '%.2f' % fit.x1 }}" y1="{{ '%.2f' % fit.y1 }}" x2="{{ '%.2f' % fit.x2 }}" \
y2="{{ '%.2f' % fit.y2 }}" stroke="#d62728" stroke-dasharray="4 3"/>
<text x="{{ right - 4 }}" y="{{ top + 12 }}" text-anchor="end" fill="#d62728">slope {{ fit.label }}</text>
{% endif %}\
{% endblock %}
"""

_BARS = """\
{% extends "frame" %}{% block body %}\
{% for bar in bars %}\
<rect x="{{ '%.2f' % bar.x }}" y="{{ '%.2f' % bar.y }}" width="{{ '%.2f' % bar.w }}" \
height="{{ '%.2f' % bar.h }}" fill="#2ca02c" fill-opacity="0.6"/>
<line x1="{{ '%.2f' % bar.cx }}" y1="{{ '%.2f' % bar.lo }}" x2="{{ '%.2f' % bar.cx }}" \
y2="{{ '%.2f' % bar.hi }}" stroke="black"/>
<text x="{{ '%.2f' % bar.cx }}" y="{{ bottom + 14 }}" text-anchor="middle">{{ bar.name }}</text>
{% endfor %}\
{% endblock %}
"""

COLORS = "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"

_env = jinja2.Environment(
    loader=jinja2.DictLoader(dict(frame=_FRAME, histogram=_HISTOGRAM, rate=_RATE, bars=_BARS)),
    undefined=jinja2.StrictUndefined,
    autoescape=True,
)


class _Axes:
    def __init__(self, xlim, ylim):
        self.left, self.right = MARGIN, WIDTH - MARGIN / 2
        self.top, self.bottom = MARGIN / 2 + 8, HEIGHT - MARGIN
        self.xlim = _widen(xlim)
        self.ylim = _widen(ylim)

    def x(self, v):
        lo, hi = self.xlim
        return self.left + (v - lo) / (hi - lo) * (self.right - self.left)

    def y(self, v):
        lo, hi = self.ylim
        return self.bottom - (v - lo) / (hi - lo) * (self.bottom - self.top)

    def ticks(self, count=5, fmt="{:.3g}", transform=lambda v: v):
        xs = np.linspace(*self.xlim, count)
        ys = np.linspace(*self.ylim, count)
        return (
            [dict(pos=self.x(v), label=fmt.format(transform(v))) for v in xs],
            [dict(pos=self.y(v) + 4, label=fmt.format(transform(v))) for v in ys],
        )

    def context(self, title, xlabel, ylabel, xticks, yticks):
        return dict(
            width=WIDTH, height=HEIGHT, left=self.left, right=self.right, top=self.top, bottom=self.bottom,
            title=title, xlabel=xlabel, ylabel=ylabel, xticks=xticks, yticks=yticks,
        )


def _widen(lim):
    lo, hi = float(lim[0]), float(lim[1])
    if hi <= lo:
        pad = abs(lo) * 0.5 or 0.5
        return lo - pad, hi + pad
    return lo, hi


def _finite(values):
    values = np.asarray(values, dtype=np.float64).ravel()
    return values[np.isfinite(values)]


def histogram(series, *, title, xlabel, bins=20):
    """Overlaid histograms over shared bin edges; `series` maps a name to its values."""
    named = [(name, _finite(values)) for name, values in series.items()]
    pooled = np.concatenate([v for _, v in named]) if named else np.zeros(0)
    if pooled.size == 0:
        pooled = np.zeros(1)

    edges = np.histogram_bin_edges(pooled, bins=bins, range=_widen((pooled.min(), pooled.max())))
    counts = [np.histogram(v, bins=edges)[0] for _, v in named]
    peak = max([int(c.max()) for c in counts if c.size] + [1])
    axes = _Axes((edges[0], edges[-1]), (0, peak))

    layers = []
    for (name, _), c, color in zip(named, counts, _cycle(COLORS)):
        bars = [
            dict(x=axes.x(edges[i]), y=axes.y(n), w=axes.x(edges[i + 1]) - axes.x(edges[i]), h=axes.y(0) - axes.y(n))
            for i, n in enumerate(c) if n
        ]
        layers.append(dict(name=name, color=color, bars=bars))

    xticks, yticks = axes.ticks()
    return _env.get_template("histogram").render(
        axes.context(title, xlabel, "count", xticks, yticks), layers=layers)


def rate_plot(grid, minima, *, title, xlabel, ylabel, slope=None, intercept=None):
    """Log-log scatter plus the fitted line ln y = intercept + slope ln x."""
    lx = np.log10(np.asarray(grid, dtype=np.float64))
    ly = np.log10(np.asarray(minima, dtype=np.float64))
    keep = np.isfinite(lx) & np.isfinite(ly)
    lx, ly = lx[keep], ly[keep]
    if lx.size == 0:
        lx = ly = np.zeros(1)

    axes = _Axes((lx.min(), lx.max()), (ly.min(), ly.max()))
    points = [dict(x=axes.x(a), y=axes.y(b)) for a, b in zip(lx, ly)]

    fit = None
    if slope is not None and intercept is not None and math.isfinite(slope):
        x1, x2 = axes.xlim
        fit = dict(
            x1=axes.x(x1), y1=axes.y(intercept * math.log10(math.e) + slope * x1),
            x2=axes.x(x2), y2=axes.y(intercept * math.log10(math.e) + slope * x2),
            label="{:.3f}".format(slope),
        )

    xticks, yticks = axes.ticks(fmt="{:.2g}", transform=lambda v: 10 ** v)
    return _env.get_template("rate").render(
        axes.context(title, xlabel, ylabel, xticks, yticks), points=points, fit=fit)


def bar_chart(names, means, stds, *, title, ylabel):
    means = np.asarray(means, dtype=np.float64)
    stds = np.nan_to_num(np.asarray(stds, dtype=np.float64))
    lo = min(0.0, float(np.min(means - stds)) if means.size else 0.0)
    hi = max(0.0, float(np.max(means + stds)) if means.size else 1.0)
    axes = _Axes((0, max(1, len(names))), (lo, hi))

    slot = axes.x(1) - axes.x(0)
    bars = []
    for i, (name, m, s) in enumerate(zip(names, means, stds)):
        top, base = axes.y(max(m, 0.0)), axes.y(min(m, 0.0))
        bars.append(dict(
            name=name, x=axes.x(i) + slot * 0.2, w=slot * 0.6, y=top, h=base - top,
            cx=axes.x(i + 0.5), lo=axes.y(m - s), hi=axes.y(m + s),
        ))

    _, yticks = axes.ticks()
    return _env.get_template("bars").render(
        axes.context(title, "", ylabel, [], yticks), bars=bars)


def _cycle(items):
    while True:
        for i in items:
            yield i
