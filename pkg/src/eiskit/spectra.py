"""DFT conventions, Gaussian windows and quadrature filters.

All spectra use the normalisation

    X(k) = 1/N sum_n x(n) exp(-j 2 pi k n / N),   f_k = k fs / N

so that a cosine of amplitude A on an exact bin shows up as A/2 on the bin
and on its mirror.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Spectrum:
    N: int
    fs: float
    bins: np.ndarray

    def __post_init__(self):
        if self.N < 1 or len(self.bins) != self.N:
            raise ValueError("Spectrum needs N >= 1 bins")

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.N) * self.fs / self.N

    @property
    def duration(self) -> float:
        return self.N / self.fs

    @property
    def bin_spacing(self) -> float:
        """Bin spacing in rad/s."""
        return TWO_PI * self.fs / self.N

    def __getitem__(self, k):
        return self.bins[k]


def dft(x: Sequence[float], fs: float = 1.0) -> Spectrum:
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("empty input")
    if fs <= 0:
        raise ValueError("fs must be positive")
    return Spectrum(N=x.size, fs=float(fs), bins=np.fft.fft(x) / x.size)


def idft(X: Spectrum | np.ndarray, real_tol: float = 1e-12) -> np.ndarray:
    """Inverse of :func:`dft`.

    The output is real when the bins are conjugate symmetric (to ``real_tol``
    relative to the peak) and complex otherwise.
    """
    bins = X.bins if isinstance(X, Spectrum) else np.asarray(X, dtype=complex)
    if bins.size == 0:
        raise ValueError("empty input")
    x = np.fft.ifft(bins) * bins.size
    mirror = np.conj(np.roll(bins[::-1], 1))
    scale = max(np.max(np.abs(bins)), np.finfo(float).tiny)
    if np.max(np.abs(bins - mirror)) <= real_tol * scale:
        return x.real
    return x


# --- windows ---------------------------------------------------------------

def stft_window_gaussian(lam: float, half_width: int, fs: float) -> np.ndarray:
    """Sampled Gaussian ``exp(-lam t^2 / 2)`` over ``2*half_width + 1`` taps.

    The centre tap is ``t = 0`` so the window is exactly symmetric.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if half_width < 0 or fs <= 0:
        raise ValueError("half_width must be >= 0 and fs positive")
    t = np.arange(-half_width, half_width + 1) / fs
    return np.exp(-0.5 * lam * t * t)


def gaussian_window_transform(lam: float, omega) -> np.ndarray:
    """Continuous Fourier transform of ``exp(-lam t^2 / 2)``."""
    omega = np.asarray(omega, dtype=float)
    return np.sqrt(TWO_PI / lam) * np.exp(-omega**2 / (2.0 * lam))


def time_frequency_spread(w: Sequence[float], fs: float,
                          pad_factor: int = 8) -> tuple[float, float]:
    """Return ``(sigma_t^2, sigma_omega^2)`` of a centred, sampled window.

    ``sigma_t^2`` is taken over the sample times and ``sigma_omega^2`` over
    a zero-padded FFT of the window, both weighted by the squared magnitude.
    """
    w = np.asarray(w, dtype=float)
    n = w.size
    t = (np.arange(n) - (n - 1) / 2.0) / fs
    e = np.abs(w) ** 2
    sig_t2 = float(np.sum(t * t * e) / np.sum(e))
    n_fft = int(2 ** np.ceil(np.log2(max(2, pad_factor * n))))
    W = np.fft.fft(w, n_fft)
    omega = TWO_PI * np.fft.fftfreq(n_fft, d=1.0 / fs)
    E = np.abs(W) ** 2
    sig_w2 = float(np.sum(omega**2 * E) / np.sum(E))
    return sig_t2, sig_w2


# --- frequency-domain filters ---------------------------------------------

class BandFilter(Protocol):
    N_W: int

    def response(self, omega: np.ndarray) -> np.ndarray: ...


def _check_width(N_W: int):
    if N_W < 2 or N_W % 2:
        raise ValueError("N_W must be even and >= 2")


@dataclass(frozen=True)
class QuadratureFilter:
    """Logistic band-pass with roll-off ``q`` and half bandwidth ``delta_omega``."""

    q: float
    delta_omega: float
    N_W: int

    def __post_init__(self):
        if self.q <= 0 or self.delta_omega <= 0:
            raise ValueError("q and delta_omega must be positive")
        _check_width(self.N_W)

    def response(self, omega) -> np.ndarray:
        x = np.asarray(omega, dtype=float) / self.delta_omega
        num = (1.0 + np.exp(-self.q**2)) ** 2
        with np.errstate(over="ignore"):
            den = (1.0 + np.exp(-self.q * (x + 1.0))) * (1.0 + np.exp(self.q * (x - 1.0)))
        return num / den


@dataclass(frozen=True)
class GaussianFilter:
    """Fourier transform of the Gaussian window, usable as a DMFA filter."""

    lam: float
    N_W: int

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        _check_width(self.N_W)

    def response(self, omega) -> np.ndarray:
        return gaussian_window_transform(self.lam, omega)


def filter_offsets(N_W: int) -> np.ndarray:
    """Bin offsets covered by a filter of width ``N_W`` (symmetric, inclusive)."""
    return np.arange(-(N_W // 2), N_W // 2 + 1)


def quadrature_filter_weights(filt: BandFilter, bin_spacing: float) -> np.ndarray:
    """Filter weights at the offsets of :func:`filter_offsets`, ``bin_spacing`` in rad/s."""
    if bin_spacing <= 0:
        raise ValueError("bin_spacing must be positive")
    return np.asarray(filt.response(filter_offsets(filt.N_W) * bin_spacing), dtype=complex)


def band_extract(
    X: Spectrum,
    center_k: int,
    filt: BandFilter,
    times: Optional[Sequence[float]] = None,
    baseband: bool = True,
) -> np.ndarray:
    """Complex envelope of the band of ``X`` around ``center_k``.

    Computes ``sum_m W(m) X(c + m) exp(j 2 pi (c + m) n / N)`` at sample
    positions ``n`` (``times`` in samples, default ``N_W`` evenly spaced over
    the record). With ``baseband`` the carrier ``exp(j 2 pi c n / N)`` is
    removed, which leaves magnitudes and V/I ratios unchanged.

    Bands reaching below DC or past Nyquist raise ``ValueError``.
    """
    N = X.N
    half = filt.N_W // 2
    c = int(center_k)
    if c - half < 0 or c + half > N // 2:
        raise ValueError(
            f"band [{c - half}, {c + half}] crosses DC or Nyquist (N={N})")
    m = filter_offsets(filt.N_W)
    w = quadrature_filter_weights(filt, X.bin_spacing)
    coef = w * X.bins[c + m]
    if times is None:
        n = np.arange(filt.N_W) * (N / filt.N_W)
    else:
        n = np.asarray(times, dtype=float)
    k = m if baseband else c + m
    phase = np.exp(1j * TWO_PI * np.outer(n, k) / N)
    return phase @ coef
