"""Leading-order nonlinear impedance and best linear approximation (BLA).

For a single-sine current ``I cos(omega t + phi)`` the ``h``-th voltage
harmonic has one-sided amplitude ``V_h``. The leading-order coefficient is
estimated as ``V_h / I^h`` with both amplitudes taken one-sided, that is
``2 V(hP) / (2 I(P))^h`` in terms of DFT bins. The phase reference
``exp(j h phi)`` cancels in this ratio.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .classical import ImpedanceCurve, impedance_periodic
from .detect import classify_bins, noise_floor
from .signals import MultisineSpec, TimeSeriesRecord
from .spectra import dft

log = logging.getLogger(__name__)
TWO_PI = 2.0 * np.pi


@dataclass
class NonlinearCoefficients:
    omega: float
    coeffs: dict[int, complex]
    amplitude_used: float
    P: int

    @property
    def frequency(self) -> float:
        return self.omega / TWO_PI

    def unit_exponent(self, h: int) -> int:
        """Coefficient ``h`` is in ohm per ampere to this power."""
        return h - 1


def _single_line(rec: TimeSeriesRecord, spec: Optional[MultisineSpec]) -> tuple[int, int]:
    """Return ``(P, k_exc)`` for a single-sine record."""
    if spec is not None:
        if spec.harmonics.size != 1:
            raise ValueError("leading-order estimation needs a single-sine record, "
                             f"got {spec.harmonics.size} excited harmonics")
        return rec.n_periods, rec.n_periods * int(spec.harmonics[0])
    I = np.abs(np.fft.rfft(rec.current - np.mean(rec.current)))
    I[0] = 0.0
    peak = I.max()
    strong = np.flatnonzero(I > 1e-6 * peak)
    if strong.size != 1:
        raise ValueError("current holds more than one line; multisine input is ambiguous")
    return rec.n_periods, int(strong[0])


def leading_order_coeffs(rec: TimeSeriesRecord, h_max: int = 5,
                         spec: Optional[MultisineSpec] = None) -> NonlinearCoefficients:
    """Leading-order coefficients ``Z_{h,h}`` for ``h = 1..h_max``.

    Harmonics at or beyond Nyquist are dropped with a warning.
    """
    if h_max < 1:
        raise ValueError("h_max must be >= 1")
    if not rec.has_voltage:
        raise ValueError("record has no voltage channel")
    spec = spec if spec is not None else rec.spec
    P, k1 = _single_line(rec, spec)
    N = rec.n_samples
    if k1 >= N / 2:
        raise ValueError("excited line beyond Nyquist")
    V = dft(rec.voltage, rec.fs).bins
    I = dft(rec.current, rec.fs).bins
    i_amp = 2.0 * I[k1]
    if abs(i_amp) == 0:
        raise ValueError("zero excitation amplitude")
    coeffs = {}
    for h in range(1, h_max + 1):
        if h * k1 >= N / 2:
            warnings.warn(f"harmonic {h} lies beyond Nyquist and is dropped", RuntimeWarning)
            break
        coeffs[h] = complex(2.0 * V[h * k1] / i_amp**h)
    omega = TWO_PI * k1 * rec.fs / N
    return NonlinearCoefficients(omega=omega, coeffs=coeffs,
                                 amplitude_used=float(abs(i_amp)), P=P)


def amplitude_sweep_extrapolate(records: Sequence[TimeSeriesRecord], h: int,
                                spec: Optional[Sequence[MultisineSpec]] = None) -> complex:
    """Small-amplitude limit of ``V_h / I^h`` by regression on ``I^2``.

    Fits ``V_h/I^h = Z_hh + c I^2`` over at least three amplitudes and
    returns the intercept ``Z_hh``.
    """
    records = list(records)
    if len(records) < 3:
        raise ValueError("at least three amplitudes are needed")
    specs = list(spec) if spec is not None else [None] * len(records)
    amps, ratios, freqs = [], [], []
    for r, s in zip(records, specs):
        c = leading_order_coeffs(r, h_max=h, spec=s)
        if h not in c.coeffs:
            raise ValueError(f"harmonic {h} is not measurable")
        amps.append(c.amplitude_used)
        ratios.append(c.coeffs[h])
        freqs.append(c.omega)
    amps = np.asarray(amps)
    if not np.allclose(freqs, freqs[0], rtol=1e-9):
        raise ValueError("records are at different frequencies")
    x = amps**2
    if np.ptp(x) <= 1e-9 * np.max(x):
        raise ValueError("degenerate amplitude spacing")
    A = np.column_stack([np.ones_like(x), x])
    sol, *_ = np.linalg.lstsq(A, np.asarray(ratios, dtype=complex), rcond=None)
    return complex(sol[0])


@dataclass
class DistortionReport:
    """Distortion power at non-excited harmonic lines, per DFT bin."""

    even_lines: np.ndarray
    even_power: np.ndarray
    odd_lines: np.ndarray
    odd_power: np.ndarray
    noise_power_even: np.ndarray
    noise_power_odd: np.ndarray
    odd_level_at_excited: np.ndarray

    def level_db(self, parity: str) -> float:
        """Total line power over total noise power in dB."""
        p, n = ((self.even_power, self.noise_power_even) if parity == "even"
                else (self.odd_power, self.noise_power_odd))
        if p.size == 0:
            return -np.inf
        return float(10 * np.log10(max(np.sum(p), 1e-300) / max(np.sum(n), 1e-300)))

    def to_dict(self) -> dict[str, Any]:
        return {"even_level_db": self.level_db("even"), "odd_level_db": self.level_db("odd")}


def bla_estimate(rec: TimeSeriesRecord, spec: Optional[MultisineSpec] = None,
                 P: Optional[int] = None) -> tuple[ImpedanceCurve, DistortionReport]:
    """Best linear approximation and distortion report of a periodic record.

    The BLA itself is ``V(k)/I(k)`` at the excited lines. Odd distortions at
    excited lines cannot be told apart from the linear response in a single
    experiment; their level is interpolated from neighbouring odd
    non-excited lines and added (in quadrature) to the noise std.
    """
    spec = spec if spec is not None else rec.spec
    curve = impedance_periodic(rec, spec, P)
    curve.meta["estimator"] = "bla"
    P = curve.meta["P"]
    N = rec.n_samples
    V = dft(rec.voltage, rec.fs)
    I = dft(rec.current, rec.fs)
    if P >= 2:
        cls = classify_bins(N, P, spec.harmonics)
        ev, od = cls.even_lines, cls.odd_lines
        usable = np.concatenate([cls.noise, cls.skirt])
        k_min = P
    else:
        k = np.arange(1, (N + 1) // 2)
        lines = np.setdiff1d(k, spec.harmonics)
        ev, od = lines[lines % 2 == 0], lines[lines % 2 == 1]
        usable = np.zeros(0, dtype=np.int64)
        k_min = 1
    P2 = np.abs(V.bins) ** 2
    if usable.size >= 8:
        floor = noise_floor(V, np.setdiff1d(np.arange(N // 2), usable), k_min=k_min)
        n_ev, n_od = floor.at(ev), floor.at(od)
    else:
        n_ev, n_od = np.zeros(ev.size), np.zeros(od.size)

    k_exc = np.sort(P * spec.harmonics)
    if od.size:
        odd_exc = np.interp(k_exc, od, np.maximum(P2[od] - n_od, 0.0))
    else:
        odd_exc = np.zeros(k_exc.size)
    report = DistortionReport(ev, P2[ev], od, P2[od], n_ev, n_od, odd_exc)

    s_odd = np.sqrt(odd_exc / 2.0) / np.abs(I.bins[k_exc])
    base = curve.std if curve.std is not None else np.zeros(k_exc.size, dtype=complex)
    s_re = np.hypot(base.real, s_odd)
    s_im = np.hypot(base.imag, s_odd)
    curve.std = s_re + 1j * s_im
    return curve, report
