"""Classical (linear, time-invariant) impedance estimators and a Kramers-Kronig check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from scipy.signal import get_window

from .detect import classify_bins, noise_floor
from .signals import MultisineSpec, TimeSeriesRecord
from .spectra import Spectrum, dft

TWO_PI = 2.0 * np.pi


@dataclass
class ImpedanceCurve:
    """Complex impedance on strictly increasing positive frequencies (Hz)."""

    frequencies: np.ndarray
    values: np.ndarray
    std: Optional[np.ndarray] = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.std is not None:
            self.std = np.asarray(self.std, dtype=complex)
            if self.std.shape != self.values.shape:
                raise ValueError("std must match values")
        if self.frequencies.shape != self.values.shape or self.frequencies.ndim != 1:
            raise ValueError("frequencies and values must be 1-D of equal length")
        if self.frequencies.size and (np.any(self.frequencies <= 0)
                                      or np.any(np.diff(self.frequencies) <= 0)):
            raise ValueError("frequencies must be positive and strictly increasing")

    @property
    def omega(self) -> np.ndarray:
        return TWO_PI * self.frequencies

    def __len__(self):
        return self.frequencies.size

    def select(self, mask) -> "ImpedanceCurve":
        return ImpedanceCurve(self.frequencies[mask], self.values[mask],
                              None if self.std is None else self.std[mask], dict(self.meta))

    def band(self, f_lo: float, f_hi: float) -> "ImpedanceCurve":
        return self.select((self.frequencies >= f_lo) & (self.frequencies <= f_hi))


def _resolve_periods(rec: TimeSeriesRecord, spec: MultisineSpec, P: Optional[int]) -> int:
    P = rec.n_periods if P is None else int(P)
    spp = spec.samples_per_period
    if rec.n_samples != P * spp:
        raise ValueError(f"record of {rec.n_samples} samples is not {P} periods of {spp}")
    return P


def _ratio_std(X_num: Spectrum, X_den: Spectrum, P: int, spec: MultisineSpec,
               k: np.ndarray) -> Optional[np.ndarray]:
    """Noise std of ``X_num/X_den`` at ``k`` from the numerator noise floor."""
    N = X_num.N
    if P >= 2:
        cls = classify_bins(N, P, spec.harmonics)
        usable = np.concatenate([cls.noise, cls.skirt])
        k_min = P
    else:
        h = np.arange(1, N // 2)
        usable = np.setdiff1d(h, spec.harmonics)
        k_min = 1
    if usable.size < 8:
        return None
    excl = np.setdiff1d(np.arange(N // 2), usable)
    floor = noise_floor(X_num, exclusion=excl, k_min=k_min).at(k)
    s = np.sqrt(floor / 2.0) / np.abs(X_den.bins[k])
    return s + 1j * s


def impedance_periodic(rec: TimeSeriesRecord, spec: Optional[MultisineSpec] = None,
                       P: Optional[int] = None) -> ImpedanceCurve:
    """``V(k)/I(k)`` at the excited bins of an integer-period record.

    The std channel holds the per-component noise standard deviation obtained
    from the voltage noise floor on non-harmonic bins, divided by ``|I(k)|``.
    """
    spec = spec if spec is not None else rec.spec
    if spec is None:
        raise ValueError("a multisine spec is required")
    if not rec.has_voltage:
        raise ValueError("record has no voltage channel")
    P = _resolve_periods(rec, spec, P)
    V = dft(rec.voltage, rec.fs)
    I = dft(rec.current, rec.fs)
    k = P * spec.harmonics
    if np.any(k >= rec.n_samples / 2):
        raise ValueError("excited bins beyond Nyquist")
    order = np.argsort(k)
    k = k[order]
    Ik = I.bins[k]
    floor = 1e-12 * np.max(np.abs(I.bins[1:rec.n_samples // 2 + 1]), initial=0.0)
    if np.any(np.abs(Ik) <= max(floor, np.finfo(float).tiny)):
        raise ValueError("current vanishes at an excited bin")
    Z = V.bins[k] / Ik
    std = _ratio_std(V, I, P, spec, k)
    return ImpedanceCurve(k * rec.fs / rec.n_samples, Z, std,
                          {"estimator": "periodic", "P": P})


def admittance_periodic(rec: TimeSeriesRecord, spec: Optional[MultisineSpec] = None,
                        P: Optional[int] = None) -> ImpedanceCurve:
    """Channel-swapped estimator ``I(k)/V(k)``."""
    swapped = TimeSeriesRecord(rec.fs, rec.n_periods, rec.voltage, rec.current,
                               spec if spec is not None else rec.spec)
    curve = impedance_periodic(swapped, spec, P)
    curve.meta["estimator"] = "admittance_periodic"
    return curve


def impedance_random(records: Sequence[TimeSeriesRecord], window: str = "hann",
                     denominator_floor: float = 1e-12) -> ImpedanceCurve:
    """Cross- over auto-spectrum estimator averaged over records.

    Each record is tapered with ``window`` (any name accepted by
    ``scipy.signal.get_window``; ``"boxcar"`` for none). Bins whose averaged
    auto-spectrum is below ``denominator_floor`` times its maximum are
    dropped. DC is never reported.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    N = records[0].n_samples
    fs = records[0].fs
    for r in records:
        if r.n_samples != N or r.fs != fs:
            raise ValueError("records must share length and sampling rate")
        if not r.has_voltage:
            raise ValueError("record has no voltage channel")
    taper = get_window(window, N, fftbins=True)
    half = N // 2
    s_vi = np.zeros(half + 1, dtype=complex)
    s_ii = np.zeros(half + 1)
    for r in records:
        V = np.fft.rfft(taper * r.voltage) / N
        I = np.fft.rfft(taper * r.current) / N
        s_vi += V * np.conj(I)
        s_ii += np.abs(I) ** 2
    s_vi /= len(records)
    s_ii /= len(records)
    k = np.arange(1, half + 1)
    if N % 2 == 0:
        k = k[:-1]
    peak = np.max(s_ii[k], initial=0.0)
    keep = k[s_ii[k] > denominator_floor * peak] if peak > 0 else k[:0]
    if keep.size == 0:
        raise ValueError("auto-spectrum underflows at every bin")
    Z = s_vi[keep] / s_ii[keep]
    return ImpedanceCurve(keep * fs / N, Z, None,
                          {"estimator": "random", "M": len(records), "window": window})


@dataclass
class KKResult:
    fit_error_real: float
    fit_error_imag: float
    verdict: str
    condition_number: float
    taus: np.ndarray
    resistances: np.ndarray

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def kk_consistency(curve: ImpedanceCurve, n_voigt: Optional[int] = None,
                   tol: float = 0.01, max_condition: float = 1e14) -> KKResult:
    """Fit a Voigt chain to the real part and test the imaginary part.

    The model is ``R0 + sum_i R_i / (1 + j omega tau_i)`` with ``tau_i``
    log-spaced over ``[1/(2 pi f_max), 1/(2 pi f_min)]``. It is linear in the
    resistances, which are fitted to ``Re Z`` only, weighted by ``1/|Z|``.
    The verdict is PASS when the predicted imaginary part is within ``tol``
    of the measured one, relative to ``|Z|``, at every point.
    """
    f = curve.frequencies
    Z = curve.values
    if f.size < 8:
        raise ValueError("at least 8 frequency points are needed")
    if f[-1] / f[0] < 100.0 * (1 - 1e-12):
        raise ValueError("the curve must span at least two decades")
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite impedance values")
    if n_voigt is None:
        n_voigt = max(1, f.size // 3)
    taus = np.geomspace(1.0 / (TWO_PI * f[-1]), 1.0 / (TWO_PI * f[0]), n_voigt)
    w = TWO_PI * f
    resp = 1.0 / (1.0 + 1j * np.outer(w, taus))
    A_re = np.column_stack([np.ones(f.size), resp.real])
    scale = 1.0 / np.abs(Z)
    A = A_re * scale[:, None]
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > max_condition:
        raise np.linalg.LinAlgError(f"ill-conditioned Voigt design (cond={cond:.3g})")
    coef, *_ = np.linalg.lstsq(A, Z.real * scale, rcond=None)
    pred = coef[0] + resp @ coef[1:]
    err_re = float(np.max(np.abs(pred.real - Z.real) / np.abs(Z)))
    err_im = float(np.max(np.abs(pred.imag - Z.imag) / np.abs(Z)))
    verdict = "PASS" if err_im <= tol else "FAIL"
    return KKResult(err_re, err_im, verdict, cond, taus, coef)
