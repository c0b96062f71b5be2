"""Optional PNG renderings of command outputs.

Figures are built on the object-oriented matplotlib API with the Agg canvas,
so no display or global pyplot state is involved.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .classical import ImpedanceCurve
from .spectra import Spectrum
from .tvimp import TimeVaryingImpedance


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_curve(curve: ImpedanceCurve, path, title: str = "") -> Path:
    """Bode magnitude and phase next to a Nyquist plot (``-Im`` upwards)."""
    fig = Figure(figsize=(11, 4), layout="constrained")
    ax_m, ax_p, ax_n = fig.subplots(1, 3)
    f, z = curve.frequencies, curve.values
    ax_m.loglog(f, np.abs(z), "o-", ms=3)
    ax_m.set_xlabel("frequency [Hz]")
    ax_m.set_ylabel("|Z| [ohm]")
    ax_p.semilogx(f, np.degrees(np.angle(z)), "o-", ms=3)
    ax_p.set_xlabel("frequency [Hz]")
    ax_p.set_ylabel("phase [deg]")
    ax_n.plot(z.real, -z.imag, "o-", ms=3)
    ax_n.set_xlabel("Re Z [ohm]")
    ax_n.set_ylabel("-Im Z [ohm]")
    ax_n.set_aspect("equal", adjustable="datalim")
    for ax in (ax_m, ax_p, ax_n):
        ax.grid(True, which="both", alpha=0.3)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_spectrum(X: Spectrum, path, excited: Sequence[int] = (), title: str = "") -> Path:
    """One-sided amplitude spectrum in dB with excited bins marked."""
    fig = Figure(figsize=(8, 4), layout="constrained")
    ax = fig.subplots()
    k = np.arange(1, X.N // 2 + 1)
    amp = 20 * np.log10(np.maximum(np.abs(X.bins[k]), 1e-300))
    ax.semilogx(X.freqs[k], amp, ".", ms=2, color="0.5", label="all bins")
    exc = np.asarray(excited, dtype=int)
    if exc.size:
        ax.semilogx(X.freqs[exc], amp[exc - 1], "o", ms=3, color="C3", label="excited")
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("|X| [dB]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_tv(tv: TimeVaryingImpedance, path, n_curves: int = 6) -> Path:
    """Nyquist curves at a few times and ``|Z|`` against time at a few frequencies."""
    fig = Figure(figsize=(10, 4), layout="constrained")
    ax_n, ax_t = fig.subplots(1, 2)
    L, M = tv.times.size, tv.frequencies.size
    for l in np.unique(np.linspace(0, L - 1, min(n_curves, L)).astype(int)):
        f, z = tv.slice_at(int(l))
        ax_n.plot(z.real, -z.imag, "-", label=f"t = {tv.times[l]:.4g} s")
    ax_n.set_xlabel("Re Z [ohm]")
    ax_n.set_ylabel("-Im Z [ohm]")
    ax_n.legend(fontsize="small")
    for m in np.unique(np.linspace(0, M - 1, min(n_curves, M)).astype(int)):
        ax_t.plot(tv.times, np.abs(tv.values[m]), label=f"{tv.frequencies[m]:.4g} Hz")
    ax_t.set_xlabel("time [s]")
    ax_t.set_ylabel("|Z| [ohm]")
    ax_t.legend(fontsize="small")
    for ax in (ax_n, ax_t):
        ax.grid(True, alpha=0.3)
    fig.suptitle(f"time-varying impedance ({tv.method})")
    return _save(fig, path)


def plot_trajectory(points, path) -> Path:
    """Circuit parameters against time, one panel each."""
    from .ecm import PARAM_NAMES

    fig = Figure(figsize=(12, 6), layout="constrained")
    axes = fig.subplots(2, 4).ravel()
    t = np.array([p.t for p in points])
    for ax, name in zip(axes, PARAM_NAMES):
        ax.plot(t, [getattr(p.theta, name) for p in points], "o-", ms=3)
        ax.set_title(name)
        ax.grid(True, alpha=0.3)
    axes[-1].plot(t, [100 * p.mean_rel_error for p in points], "o-", ms=3)
    axes[-1].set_title("mean rel. error [%]")
    axes[-1].grid(True, alpha=0.3)
    for ax in axes[4:]:
        ax.set_xlabel("time [s]")
    return _save(fig, path)


def plot_timeseries(rec, path) -> Path:
    fig = Figure(figsize=(9, 5), layout="constrained")
    ax_i, ax_v = fig.subplots(2, 1, sharex=True)
    t = rec.time
    ax_i.plot(t, rec.current, lw=0.6)
    ax_i.set_ylabel("current [A]")
    if rec.has_voltage:
        ax_v.plot(t, rec.voltage, lw=0.6, color="C1")
    ax_v.set_ylabel("voltage [V]")
    ax_v.set_xlabel("time [s]")
    for ax in (ax_i, ax_v):
        ax.grid(True, alpha=0.3)
    return _save(fig, path)
