"""Semilog figures over the sweep and spectrum schemas.

Style is pinned (fixed size, dpi, grid, markers) so identical inputs
render identical images.
"""

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import FigureDataError, read_spectrum, read_sweep

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 11,
    "axes.grid": True,
    "grid.alpha": 0.35,
    "lines.linewidth": 1.6,
    "lines.markersize": 6,
}

_MARKERS = ("o", "s", "^", "d", "v", "*")

KINDS = ("convergence", "spectrum")


@dataclass
class FigureSpec:
    """One figure request: input CSVs, figure kind, output image path."""

    csv_paths: list
    kind: str
    out: str
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in KINDS:
            raise FigureDataError(
                f"unknown figure kind {self.kind!r}; expected one of {KINDS}"
            )
        if not self.csv_paths:
            raise FigureDataError("no input CSV given")
        if self.kind == "convergence" and len(self.csv_paths) != 1:
            raise FigureDataError("convergence figures take exactly one CSV")
        return self


def _series_by_method(rows):
    series = {}
    for row in rows:
        series.setdefault(row["method"], []).append(row)
    for method, items in series.items():
        items.sort(key=lambda r: r["m"])
    return series


def plot_convergence(csv_path, out=None):
    """Two-panel semilog-y error plot: energy norm left, L2 right.

    One line per method, m on the x axis.  Returns the figure; also writes
    it when out is given.
    """
    rows = read_sweep(csv_path)
    series = _series_by_method(rows)
    problem = rows[0]["problem"]
    with plt.rc_context(_STYLE):
        fig, (ax_h, ax_l2) = plt.subplots(1, 2, figsize=(9.6, 4.0))
        for idx, (method, items) in enumerate(sorted(series.items())):
            marker = _MARKERS[idx % len(_MARKERS)]
            for ax, key in ((ax_h, "e_H"), (ax_l2, "e_L2")):
                ms = [r["m"] for r in items if r[key] is not None]
                es = [r[key] for r in items if r[key] is not None]
                if not ms:
                    continue
                ax.semilogy(ms, es, marker=marker, label=method)
        ax_h.set_ylabel(r"relative energy error $e_H$")
        ax_l2.set_ylabel(r"relative $L^2$ error $e_{L^2}$")
        for ax in (ax_h, ax_l2):
            ax.set_xlabel(r"edge basis size $m$")
            ax.legend()
        fig.suptitle(problem)
        fig.tight_layout()
    if out is not None:
        fig.savefig(out)
    return fig


def _decay_fit(js, lams):
    """Least-squares slope of log lambda against j^(1/3).

    The fit stops at the numerical floor where the spectrum flattens;
    returns (slope, n_used) or (None, 0) when fewer than two values remain.
    """
    js = np.asarray(js, dtype=float)
    lams = np.asarray(lams, dtype=float)
    keep = lams > max(1e-300, 1e-12 * lams.max())
    if keep.sum() < 2:
        return None, 0
    slope = np.polyfit(js[keep] ** (1.0 / 3.0), np.log(lams[keep]), 1)[0]
    return float(slope), int(keep.sum())


def plot_spectrum(csv_paths, out=None):
    """Semilog-y singular value decay, one curve per input CSV.

    Each curve's legend entry carries its fitted cube-root decay slope.
    """
    if isinstance(csv_paths, (str, bytes)) or hasattr(csv_paths, "__fspath__"):
        csv_paths = [csv_paths]
    if not csv_paths:
        raise FigureDataError("no input CSV given")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.6, 4.2))
        for idx, path in enumerate(csv_paths):
            js, lams = read_spectrum(path)
            slope, used = _decay_fit(js, lams)
            label = str(path)
            if slope is not None:
                label += f"  (slope {slope:.2f} over {used} values)"
            ax.semilogy(
                js, lams, marker=_MARKERS[idx % len(_MARKERS)], label=label
            )
        ax.set_xlabel(r"index $j$")
        ax.set_ylabel(r"singular value $\lambda_j$")
        ax.legend(fontsize=8)
        fig.tight_layout()
    if out is not None:
        fig.savefig(out)
    return fig


def render(spec):
    """Dispatch a validated FigureSpec to its plot function."""
    spec.validate()
    if spec.kind == "convergence":
        return plot_convergence(spec.csv_paths[0], out=spec.out)
    return plot_spectrum(spec.csv_paths, out=spec.out)
