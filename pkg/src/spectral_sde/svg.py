"""Minimal self-drawn SVG: panels with axes, bars, polylines and threshold lines.

Output is a pure function of the input values; numbers are written with fixed
precision and nothing time- or id-dependent is embedded.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .spectral import SUBSPACES, SpectralReport

PANEL_WIDTH = 360
PANEL_HEIGHT = 260
MARGIN = 44
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
SUBSPACE_COLORS = {"strong": "#1f77b4", "weak": "#ff7f0e", "noise": "#7f7f7f"}


def _num(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class Panel:
    """A plotting area at ``(left, top)`` mapping data limits onto pixels."""

    left: float
    top: float
    title: str
    xlim: Tuple[float, float] = (0.0, 1.0)
    ylim: Tuple[float, float] = (0.0, 1.0)
    width: float = PANEL_WIDTH
    height: float = PANEL_HEIGHT
    elements: List[str] = field(default_factory=list)

    @property
    def plot_box(self) -> Tuple[float, float, float, float]:
        return (
            self.left + MARGIN,
            self.top + MARGIN / 2,
            self.width - 1.5 * MARGIN,
            self.height - 1.5 * MARGIN,
        )

    def px(self, x: float) -> float:
        x0, _, w, _ = self.plot_box
        lo, hi = self.xlim
        span = hi - lo if hi != lo else 1.0
        return x0 + (x - lo) / span * w

    def py(self, y: float) -> float:
        _, y0, _, h = self.plot_box
        lo, hi = self.ylim
        span = hi - lo if hi != lo else 1.0
        return y0 + h - (y - lo) / span * h

    def axes(self, xlabel: str = "", ylabel: str = "") -> None:
        x0, y0, w, h = self.plot_box
        self.elements.append(
            f'<text x="{_num(self.left + self.width / 2)}" y="{_num(self.top + 14)}" '
            f'text-anchor="middle" font-size="12">{escape(self.title)}</text>'
        )
        self.elements.append(
            f'<polyline points="{_num(x0)},{_num(y0)} {_num(x0)},{_num(y0 + h)} {_num(x0 + w)},{_num(y0 + h)}" '
            'fill="none" stroke="#000" stroke-width="1"/>'
        )
        for value, anchor in ((self.ylim[0], y0 + h), (self.ylim[1], y0)):
            self.elements.append(
                f'<text x="{_num(x0 - 4)}" y="{_num(anchor + 3)}" text-anchor="end" font-size="9">{value:.3g}</text>'
            )
        for value, anchor in ((self.xlim[0], x0), (self.xlim[1], x0 + w)):
            self.elements.append(
                f'<text x="{_num(anchor)}" y="{_num(y0 + h + 12)}" text-anchor="middle" font-size="9">{value:.3g}</text>'
            )
        if xlabel:
            self.elements.append(
                f'<text x="{_num(x0 + w / 2)}" y="{_num(y0 + h + 26)}" text-anchor="middle" font-size="10">'
                f"{escape(xlabel)}</text>"
            )
        if ylabel:
            self.elements.append(
                f'<text x="{_num(self.left + 10)}" y="{_num(y0 + h / 2)}" font-size="10" '
                f'transform="rotate(-90 {_num(self.left + 10)} {_num(y0 + h / 2)})" text-anchor="middle">'
                f"{escape(ylabel)}</text>"
            )

    def bars(self, labels: Sequence[str], values: Sequence[float], colors: Sequence[str]) -> None:
        _, _, w, _ = self.plot_box
        slot = w / max(len(values), 1)
        base = self.py(self.ylim[0])
        for i, (label, value, color) in enumerate(zip(labels, values, colors)):
            left = self.px(self.xlim[0]) + i * slot + slot * 0.15
            top = self.py(value)
            self.elements.append(
                f'<rect x="{_num(left)}" y="{_num(top)}" width="{_num(slot * 0.7)}" '
                f'height="{_num(base - top)}" fill="{color}"/>'
            )
            self.elements.append(
                f'<text x="{_num(left + slot * 0.35)}" y="{_num(base + 12)}" text-anchor="middle" '
                f'font-size="9">{escape(label)}</text>'
            )

    def polyline(self, xs: Sequence[float], ys: Sequence[float], color: str, dashed: bool = False) -> None:
        points = " ".join(f"{_num(self.px(x))},{_num(self.py(y))}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="4 3"' if dashed else ""
        self.elements.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>'
        )

    def hline(self, y: float, color: str, label: str = "") -> None:
        x0, _, w, _ = self.plot_box
        yy = self.py(y)
        self.elements.append(
            f'<line x1="{_num(x0)}" y1="{_num(yy)}" x2="{_num(x0 + w)}" y2="{_num(yy)}" '
            f'stroke="{color}" stroke-width="1" stroke-dasharray="2 2"/>'
        )
        if label:
            self.elements.append(
                f'<text x="{_num(x0 + w - 2)}" y="{_num(yy - 3)}" text-anchor="end" font-size="9" '
                f'fill="{color}">{escape(label)}</text>'
            )

    def legend(self, entries: Sequence[Tuple[str, str]]) -> None:
        x0, y0, w, _ = self.plot_box
        for i, (label, color) in enumerate(entries):
            y = y0 + 10 + 12 * i
            self.elements.append(
                f'<line x1="{_num(x0 + w - 70)}" y1="{_num(y)}" x2="{_num(x0 + w - 58)}" y2="{_num(y)}" '
                f'stroke="{color}" stroke-width="2"/>'
            )
            self.elements.append(
                f'<text x="{_num(x0 + w - 54)}" y="{_num(y + 3)}" font-size="9">{escape(label)}</text>'
            )


def render(panels: Sequence[Panel]) -> str:
    width = max(p.left + p.width for p in panels)
    height = max(p.top + p.height for p in panels)
    body = "\n".join(e for p in panels for e in p.elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
        f'viewBox="0 0 {_num(width)} {_num(height)}" font-family="sans-serif">\n'
        f'<rect width="100%" height="100%" fill="#fff"/>\n{body}\n</svg>\n'
    )


def _limits(*series: Sequence[float], floor: Optional[float] = 0.0) -> Tuple[float, float]:
    values = np.concatenate([np.asarray(s, dtype=np.float64) for s in series if len(s)] or [np.zeros(1)])
    lo = float(values.min()) if floor is None else min(floor, float(values.min()))
    hi = float(values.max())
    return (lo, hi if hi > lo else lo + 1.0)


def report_figure(report: SpectralReport, sigma: Sequence[float]) -> str:
    """Component proportions, sorted spectrum with thresholds, cumulative energy."""
    sigma = np.asarray(sigma, dtype=np.float64)
    index = np.arange(1, sigma.size + 1, dtype=np.float64)

    proportions = Panel(0, 0, "Component proportions", xlim=(0, 1), ylim=(0, 1))
    proportions.axes(ylabel="fraction")
    proportions.bars(
        list(SUBSPACES),
        [report.proportions[name] for name in SUBSPACES],
        [SUBSPACE_COLORS[name] for name in SUBSPACES],
    )

    ymax = max(float(sigma.max()) if sigma.size else 1.0, report.noise_edge, report.strong_threshold)
    spectrum = Panel(PANEL_WIDTH, 0, "Singular values", xlim=(1, max(sigma.size, 2)), ylim=(0, ymax))
    spectrum.axes(xlabel="index", ylabel="sigma")
    spectrum.polyline(index, sigma, PALETTE[0])
    spectrum.hline(report.noise_edge, SUBSPACE_COLORS["noise"], "noise edge")
    spectrum.hline(report.strong_threshold, PALETTE[1], "strong threshold")

    energy = Panel(2 * PANEL_WIDTH, 0, "Cumulative energy", xlim=(1, max(sigma.size, 2)), ylim=(0, 1))
    energy.axes(xlabel="index", ylabel="energy")
    energy.polyline(index, report.cumulative_energy, PALETTE[2])
    return render([proportions, spectrum, energy])


def spectra_figure(before: Sequence[float], after: Sequence[float]) -> str:
    """Sorted spectra before and after enhancement on shared axes."""
    before = np.asarray(before, dtype=np.float64)
    after = np.asarray(after, dtype=np.float64)
    r = max(before.size, after.size, 2)
    panel = Panel(0, 0, "Singular values before and after enhancement", xlim=(1, r), ylim=_limits(before, after))
    panel.axes(xlabel="index", ylabel="sigma")
    panel.polyline(np.arange(1, before.size + 1), before, PALETTE[0])
    panel.polyline(np.arange(1, after.size + 1), after, PALETTE[1], dashed=True)
    panel.legend([("before", PALETTE[0]), ("after", PALETTE[1])])
    return render([panel])


def schedule_figure(table: Sequence[Tuple[int, float, float]]) -> str:
    """alpha(t) and lambda(t) curves side by side."""
    steps = [row[0] for row in table]
    alphas = [row[1] for row in table]
    lambdas = [row[2] for row in table]
    xlim = (float(steps[0]), float(max(steps[-1], 1)))
    alpha = Panel(0, 0, "alpha(t)", xlim=xlim, ylim=_limits(alphas))
    alpha.axes(xlabel="step", ylabel="alpha")
    alpha.polyline(steps, alphas, PALETTE[0])
    lam = Panel(PANEL_WIDTH, 0, "lambda(t)", xlim=xlim, ylim=_limits(lambdas))
    lam.axes(xlabel="step", ylabel="lambda")
    lam.polyline(steps, lambdas, PALETTE[1])
    return render([alpha, lam])


def series_figure(title: str, series: Dict[str, Sequence[float]], ylabel: str = "") -> str:
    """Several curves over a shared step axis, e.g. training losses."""
    names = list(series)
    length = max((len(series[n]) for n in names), default=1)
    panel = Panel(0, 0, title, xlim=(0, max(length - 1, 1)), ylim=_limits(*series.values(), floor=None))
    panel.axes(xlabel="step", ylabel=ylabel)
    for i, name in enumerate(names):
        values = series[name]
        panel.polyline(range(len(values)), values, PALETTE[i % len(PALETTE)])
    panel.legend([(name, PALETTE[i % len(PALETTE)]) for i, name in enumerate(names)])
    return render([panel])


def proportions_figure(sides: Dict[str, Dict[str, Sequence[float]]]) -> str:
    """Strong/weak/noise proportion over training steps, one panel per modality."""
    panels = []
    for i, (side, shares) in enumerate(sides.items()):
        length = max((len(v) for v in shares.values()), default=1)
        panel = Panel(i * PANEL_WIDTH, 0, f"Component proportions ({side})", xlim=(0, max(length - 1, 1)))
        panel.axes(xlabel="step", ylabel="proportion")
        for name in SUBSPACES:
            panel.polyline(range(len(shares[name])), shares[name], SUBSPACE_COLORS[name])
        panel.legend([(name, SUBSPACE_COLORS[name]) for name in SUBSPACES])
        panels.append(panel)
    return render(panels)
