"""
Static figures for spectra, mixing maps and 1-D curve families.

Figures are a convenience view of the CSV/JSON outputs and carry no numerical
authority. Everything is drawn on bare ``Figure`` objects (no pyplot state),
and SVG output is made reproducible by fixing the hash salt and dropping the
date stamp.
"""

import math
import os

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from . import units

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.hashsalt": "cascade-qwm",
    "svg.fonttype": "path",
}


def _save(fig, path):
    tmp = f"{path}.tmp{os.path.splitext(path)[1]}"
    with matplotlib.rc_context(STYLE):
        fig.savefig(tmp, metadata={"Date": None} if path.endswith(".svg") else None,
                    bbox_inches="tight")
    os.replace(tmp, path)
    return path


def _figure(width=4.0, height=3.0):
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, height), layout="constrained")
    return fig


def plot_spectrum(spec, path, floor_dbm=units.DEFAULT_FLOOR_DBM, reference=None, title=None,
                  **power_kw):
    """
    Stem plot of line powers (dBm) versus harmonic order.

    ``reference`` is an optional second spectrum (e.g. the classical
    counterpart) drawn as open markers next to the first.
    """
    fig = _figure()
    ax = fig.add_subplot(111)
    for s, marker, label, dx in ((spec, "o", "simulated", -0.12), (reference, "s", "reference", 0.12)):
        if s is None:
            continue
        p = units.apply_floor(s.power_dbm(**power_kw), floor_dbm)
        x = s.orders + (dx if reference is not None else 0.0)
        ax.vlines(x, floor_dbm, p, lw=1.0, color="C0" if marker == "o" else "C1")
        ax.plot(x, p, marker, ms=4, label=label, mfc="C0" if marker == "o" else "none",
                color="C0" if marker == "o" else "C1")
    ax.axhline(floor_dbm, color="0.6", lw=0.8, ls="--")
    ax.set_xticks(spec.orders)
    ax.set_xlabel(r"order $k$ (line at $\omega_d + k\,\delta\omega$)")
    ax.set_ylabel("power (dBm)")
    if reference is not None:
        ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_map(mmap, path, floor=units.DEFAULT_FLOOR_DBM, orders=None, ncols=4):
    """One heat map per order, axis1 on x and axis2 on y, clipped at ``floor``."""
    orders = list(mmap.orders if orders is None else orders)
    if mmap.axis1.size == 1 or mmap.axis2.size == 1:
        return _plot_map_slice(mmap, path, floor, orders)
    nrows = math.ceil(len(orders) / ncols)
    fig = _figure(2.4 * min(ncols, len(orders)), 2.2 * nrows)
    finite = mmap.power_db[np.isfinite(mmap.power_db)]
    vmax = float(finite.max()) if finite.size else floor + 1.0
    vmin = floor if floor is not None else float(finite.min())
    im = None
    for n, k in enumerate(orders):
        ax = fig.add_subplot(nrows, min(ncols, len(orders)), n + 1)
        z = np.where(mmap.mask, mmap[k], np.nan).T
        if floor is not None:
            z = np.maximum(z, floor)
        im = ax.pcolormesh(mmap.axis1, mmap.axis2, z, shading="nearest", vmin=vmin, vmax=vmax,
                           cmap="viridis")
        ax.set_title(rf"$k={int(k):+d}$", fontsize=8)
        if n % ncols == 0:
            ax.set_ylabel(mmap.axis_names[1], fontsize=7)
        if n >= len(orders) - ncols:
            ax.set_xlabel(mmap.axis_names[0], fontsize=7)
    if im is not None:
        fig.colorbar(im, ax=fig.axes, shrink=0.8, label=mmap.unit)
    return _save(fig, path)


def _plot_map_slice(mmap, path, floor, orders):
    # a 1-D sweep reads better as one curve per order
    along1 = mmap.axis1.size > 1 or mmap.axis2.size == 1
    x = mmap.axis1 if along1 else mmap.axis2
    name = mmap.axis_names[0] if along1 else mmap.axis_names[1]
    curves = {}
    for k in orders:
        y = np.where(mmap.mask, mmap[k], np.nan)
        y = y[:, 0] if along1 else y[0, :]
        curves[rf"$k={int(k):+d}$"] = y if floor is None else np.maximum(y, floor)
    return plot_curves(x, curves, path, name, mmap.unit, hline=floor)


def plot_curves(x, curves, path, xlabel, ylabel, logx=False, hline=None, title=None):
    """Family of curves ``curves = {label: y}`` sharing ``x``."""
    fig = _figure()
    ax = fig.add_subplot(111)
    for label, y in curves.items():
        ax.plot(x, y, lw=1.2, label=label)
    if hline is not None:
        ax.axhline(hline, color="0.6", lw=0.8, ls="--")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(curves) > 1:
        ax.legend(frameon=False, ncol=2 if len(curves) > 4 else 1, fontsize=7)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_transmission(traces, model, path):
    """Measured |t| (points) with a fitted model curve per trace.

    ``model(trace) -> complex array`` on the trace's frequency grid.
    """
    fig = _figure(4.0, 3.2)
    ax = fig.add_subplot(111)
    for n, tr in enumerate(traces):
        f = np.asarray(tr.freq_hz) / 1e9
        ax.plot(f, np.abs(tr.values), ".", ms=2, color=f"C{n}")
        ax.plot(f, np.abs(model(tr)), "-", lw=1.0, color=f"C{n}",
                label=f"probe det. {units.rad_to_mhz(tr.probe_detuning):+.2f} MHz")
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel(r"$|t|$")
    ax.legend(frameon=False)
    return _save(fig, path)
