"""Time-varying impedance estimators: STFT-EIS, DMFA and operando EIS.

* STFT-EIS ratios Gaussian-windowed voltage and current transforms at the
  excited frequencies, one window per output time.
* DMFA takes one DFT of the whole record and, per excited line, ratios the
  quadrature-filtered voltage and current envelopes.
* Operando EIS models the voltage spectrum as a linear combination of
  Legendre-basis spectra centred on every harmonic line plus a drift
  expansion, and solves it by least squares in local bands.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signals import MultisineSpec, TimeSeriesRecord, legendre_basis
from .spectra import (BandFilter, GaussianFilter, QuadratureFilter, Spectrum, band_extract,
                      dft, stft_window_gaussian)

log = logging.getLogger(__name__)
TWO_PI = 2.0 * np.pi
DEFAULT_TIME_POINTS = 100


@dataclass
class TimeVaryingImpedance:
    """Impedance surface ``values[m, l]`` at ``frequencies[m]`` and ``times[l]``.

    Cells where the estimator is undefined hold NaN and are False in ``mask``.
    """

    frequencies: np.ndarray
    times: np.ndarray
    values: np.ndarray
    std: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    method: str = ""
    basis_order: Optional[tuple[int, int]] = None

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        shape = (self.frequencies.size, self.times.size)
        if self.values.shape != shape:
            raise ValueError(f"values must have shape {shape}")
        if self.mask is None:
            self.mask = np.isfinite(self.values)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.std is not None:
            self.std = np.asarray(self.std, dtype=complex)
        self.values = np.where(self.mask, self.values, np.nan + 0j)

    def slice_at(self, l: int):
        """``(frequencies, values)`` of the unmasked points at time index ``l``."""
        m = self.mask[:, l]
        return self.frequencies[m], self.values[m, l]


def _default_times(N: int, stride: Optional[int]) -> np.ndarray:
    stride = max(1, N // DEFAULT_TIME_POINTS) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(0, N, stride)


def _excited(spec: MultisineSpec) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(spec.harmonics)
    return spec.harmonics[order], spec.frequencies[order]


# --- STFT-EIS ---------------------------------------------------------------

def stft_eis(rec: TimeSeriesRecord, spec: Optional[MultisineSpec], lam: float, N_w: int,
             stride: Optional[int] = None) -> TimeVaryingImpedance:
    """Gaussian-window STFT estimate at the excited frequencies.

    Windows span ``N_w + 1`` samples centred on each output sample; only
    centres whose window lies inside the record are evaluated. Frequencies
    with less than one period per window (``f < fs / N_w``) are masked.
    """
    spec = spec if spec is not None else rec.spec
    if spec is None:
        raise ValueError("a multisine spec is required")
    N = rec.n_samples
    if N_w < 2 or N_w % 2:
        raise ValueError("N_w must be even and >= 2")
    if N_w >= N:
        raise ValueError("window longer than the record")
    _, freqs = _excited(spec)
    fs = rec.fs
    usable = freqs >= fs / N_w * (1 - 1e-12)
    if not np.any(usable):
        raise ValueError("every excited frequency is below one period per window")
    if not np.all(usable):
        warnings.warn(f"{np.count_nonzero(~usable)} frequencies below fs/N_w are masked",
                      RuntimeWarning)
    half = N_w // 2
    step = max(1, N // DEFAULT_TIME_POINTS) if stride is None else int(stride)
    centres = np.arange(half, N - half, step)
    w = stft_window_gaussian(lam, half, fs)
    m = np.arange(-half, half + 1)
    E = np.exp(-1j * TWO_PI * np.outer(m / fs, freqs[usable]))
    segs_v = sliding_window_view(rec.voltage, N_w + 1)[centres - half]
    segs_i = sliding_window_view(rec.current, N_w + 1)[centres - half]
    Vn = (segs_v * w) @ E
    In = (segs_i * w) @ E
    Z = np.full((freqs.size, centres.size), np.nan + 0j)
    Z[usable] = (Vn / In).T
    mask = np.zeros(Z.shape, dtype=bool)
    mask[usable] = True
    return TimeVaryingImpedance(freqs, centres / fs, Z, None, mask, "stft")


# --- DMFA -------------------------------------------------------------------

def default_line_filter(k: np.ndarray, idx: int, N: int, fs: float,
                        q: float = 5.0) -> QuadratureFilter:
    """Widest even band stopping halfway to the neighbouring excited lines."""
    c = int(k[idx])
    limits = [c, N // 2 - c]
    if idx > 0:
        limits.append((c - int(k[idx - 1])) // 2)
    if idx + 1 < k.size:
        limits.append((int(k[idx + 1]) - c) // 2)
    half = min(limits)
    N_W = 2 * int(half)
    if N_W < 2:
        raise ValueError(f"no room for a filter band around bin {c}")
    return QuadratureFilter(q=q, delta_omega=(N_W / 4) * TWO_PI * fs / N, N_W=N_W)


def dmfa(rec: TimeSeriesRecord, spec: Optional[MultisineSpec] = None,
         filt: Optional[BandFilter] = None, stride: Optional[int] = None,
         q: float = 5.0) -> TimeVaryingImpedance:
    """Quadrature-filter estimate from a single DFT of the record.

    With ``filt`` None each line gets :func:`default_line_filter`. A given
    filter is used for every line and must not make adjacent bands overlap.
    The ``delta_omega`` of a :class:`QuadratureFilter` is in rad/s; the bin
    spacing is ``2 pi fs / N``.
    """
    spec = spec if spec is not None else rec.spec
    if spec is None:
        raise ValueError("a multisine spec is required")
    P = rec.n_periods
    if P < 4:
        raise ValueError("DMFA needs at least four periods to resolve skirts")
    N = rec.n_samples
    if N != P * spec.samples_per_period:
        raise ValueError("record length does not match P periods of the multisine")
    h, freqs = _excited(spec)
    k = P * h
    if filt is not None and k.size > 1 and filt.N_W > np.min(np.diff(k)):
        raise ValueError(f"filter width {filt.N_W} bins makes adjacent bands overlap "
                         f"(closest lines {np.min(np.diff(k))} bins apart)")
    V = dft(rec.voltage, rec.fs)
    I = dft(rec.current, rec.fs)
    n = _default_times(N, stride)
    Z = np.empty((k.size, n.size), dtype=complex)
    for idx, c in enumerate(k):
        f_c = filt if filt is not None else default_line_filter(k, idx, N, rec.fs, q)
        v_env = band_extract(V, c, f_c, times=n)
        i_env = band_extract(I, c, f_c, times=n)
        Z[idx] = v_env / i_env
    return TimeVaryingImpedance(freqs, n / rec.fs, Z, None, None, "dmfa")


# --- operando EIS -------------------------------------------------------------

@dataclass
class BandSolution:
    centre: int
    bins: np.ndarray
    lines: np.ndarray          # harmonic line bins with regressors in this band
    columns: list               # (kind, line_or_q, p) per real parameter
    design: np.ndarray          # real-stacked regression matrix
    target: np.ndarray          # real-stacked voltage spectrum
    theta: np.ndarray           # real parameter vector
    residual: np.ndarray        # complex residual per bin
    condition: float
    noise_var: float
    cov: np.ndarray

    def line_coeffs(self, line: int, n_p: int) -> np.ndarray:
        """Complex ``theta_p(line)`` for ``p = 0..n_p`` (NaN if not estimated)."""
        out = np.full(n_p + 1, np.nan + 0j)
        for j, (kind, key, p) in enumerate(self.columns):
            if kind == "re" and key == line:
                out[p] = self.theta[j] + 1j * self.theta[j + 1]
        return out

    def drift(self, n_q: int) -> np.ndarray:
        out = np.full(n_q + 1, np.nan)
        for j, (kind, q, _) in enumerate(self.columns):
            if kind == "drift":
                out[q] = self.theta[j]
        return out


@dataclass
class OperandoResult:
    tvimp: TimeVaryingImpedance
    drift_coeffs: np.ndarray
    distortion_coeffs: dict[int, np.ndarray]
    residual_spectrum: np.ndarray
    condition_numbers: dict[int, float]
    impedance_coeffs: np.ndarray
    bands: dict[int, BandSolution] = field(default_factory=dict, repr=False)

    def sidecar(self) -> dict[str, Any]:
        return {
            "method": "operando",
            "basis_order": list(self.tvimp.basis_order),
            "drift_coeffs_v": [None if not np.isfinite(v) else float(v) for v in self.drift_coeffs],
            "distortion_coeffs": {
                str(k): [[float(z.real), float(z.imag)] for z in v]
                for k, v in sorted(self.distortion_coeffs.items())
            },
            "impedance_coeffs": [
                {"f_hz": float(f), "Zp": [[float(z.real), float(z.imag)] for z in row]}
                for f, row in zip(self.tvimp.frequencies, self.impedance_coeffs)
            ],
            "condition_numbers": {str(k): float(v) for k, v in sorted(self.condition_numbers.items())},
        }


def basis_spectra(order: int, N: int, fs: float,
                  interval: Optional[tuple[float, float]] = None) -> np.ndarray:
    """DFTs ``B_p(k)`` (rows) of the sampled basis functions ``b_p(n / fs)``."""
    t = np.arange(N) / fs
    t0, T = (0.0, N / fs) if interval is None else interval
    b = legendre_basis(order, T, t, t0=t0)
    return np.fft.fft(b, axis=0).T / N


def _solve_band(V: np.ndarray, B: np.ndarray, centre: int, hw: int, lines: np.ndarray,
                n_p: int, n_q: int, keep_tol: float, rcond: float = 1e-9,
                peak: Optional[np.ndarray] = None) -> Optional[BandSolution]:
    N = V.size
    kb = np.arange(centre - hw, centre + hw + 1)
    if peak is None:
        peak = np.max(np.abs(B), axis=1)
    cols, meta = [], []
    for kp in lines:
        for p in range(n_p + 1):
            lo = B[p, (kb - kp) % N]
            hi = B[p, (kb + kp) % N]
            if np.max(np.abs(lo)) < keep_tol * peak[p] and np.max(np.abs(hi)) < keep_tol * peak[p]:
                continue
            cols.append(lo + hi)
            meta.append(("re", int(kp), p))
            cols.append(1j * (lo - hi))
            meta.append(("im", int(kp), p))
    for q in range(n_q + 1):
        col = B[q, kb % N]
        if np.max(np.abs(col)) < keep_tol * peak[q]:
            continue
        cols.append(col)
        meta.append(("drift", q, 0))
    A_c = np.column_stack(cols)
    A = np.vstack([A_c.real, A_c.imag])
    y = np.concatenate([V[kb].real, V[kb].imag])
    if A.shape[1] >= A.shape[0]:
        raise ValueError(f"band around bin {centre} has {A.shape[1]} parameters for "
                         f"{A.shape[0]} real observations")
    # Tails of far lines and of the drift are smooth across a narrow band and
    # nearly collinear; a truncated SVD of the column-scaled design gives the
    # minimum-norm split among them without disturbing the centre line.
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    U, s, Vt = np.linalg.svd(As, full_matrices=False)
    keep = s > rcond * s[0]
    rank = int(np.count_nonzero(keep))
    Vk = Vt[keep].T
    centre_cols = [j for j, (kind, key, _) in enumerate(meta) if key == centre and kind != "drift"]
    if np.min(np.linalg.norm(Vk[centre_cols], axis=1)) < 1.0 - 1e-6:
        return None
    theta = (Vk @ ((U[:, keep].T @ y) / s[keep])) / scale
    r = y - A @ theta
    dof = max(A.shape[0] - rank, 1)
    noise_var = float(r @ r / dof)
    Vs = Vk / s[keep]
    cov = noise_var * (Vs @ Vs.T) / np.outer(scale, scale)
    cond = float(s[0] / s[keep][-1])
    n_b = kb.size
    res = r[:n_b] + 1j * r[n_b:]
    return BandSolution(centre, kb, lines, meta, A, y, theta, res, cond, noise_var, cov)


def operando_eis(rec: TimeSeriesRecord, spec: Optional[MultisineSpec] = None, N_p: int = 2,
                 N_q: int = 6, band_halfwidth: Optional[int] = None, n_neighbours: int = 2,
                 stride: Optional[int] = None,
                 basis_interval: Optional[tuple[float, float]] = None,
                 keep_tol: float = 1e-12) -> OperandoResult:
    """Operando EIS by local-band least squares.

    Bands of ``2 band_halfwidth + 1`` bins (default ``P // 2``) are centred on
    every harmonic line up to the highest excited one. Each band regresses the
    voltage spectrum on the basis spectra of the ``n_neighbours`` nearest
    harmonic lines on each side (including their mirror images) and on the
    drift basis. Columns below ``keep_tol`` of their peak inside a band are
    dropped. ``basis_interval`` ``(t0, T)`` sets the Legendre interval, which
    must contain the record.

    The std channel combines residual noise propagated through the least
    squares solution with the odd distortion level interpolated from the
    adjacent non-excited odd lines.
    """
    spec = spec if spec is not None else rec.spec
    if spec is None:
        raise ValueError("a multisine spec is required")
    if not rec.has_voltage:
        raise ValueError("record has no voltage channel")
    if N_p < 0 or N_q < 0:
        raise ValueError("basis orders must be >= 0")
    if N_q < N_p:
        warnings.warn("drift order below impedance order", RuntimeWarning)
    P = rec.n_periods
    N = rec.n_samples
    if N != P * spec.samples_per_period:
        raise ValueError("record length does not match P periods of the multisine")
    hw = P // 2 if band_halfwidth is None else int(band_halfwidth)
    if hw < 0:
        raise ValueError("band_halfwidth must be >= 0")
    fs = rec.fs
    h_exc, freqs = _excited(spec)
    if P * h_exc.max() + hw >= N // 2:
        raise ValueError("bands around the highest excited line cross Nyquist")
    if basis_interval is not None:
        t0, T = basis_interval
        if t0 > 0 or t0 + T < (N - 1) / fs:
            raise ValueError("basis interval must contain the record")

    V = np.fft.fft(rec.voltage) / N
    I = np.fft.fft(rec.current) / N
    B = basis_spectra(max(N_p, N_q), N, fs, basis_interval)
    peak = np.max(np.abs(B), axis=1)

    h_lines = np.arange(1, h_exc.max() + 1)
    exc_set = set(int(h) for h in h_exc)
    bands: dict[int, BandSolution] = {}
    coeff_of: dict[int, np.ndarray] = {}
    for h in h_lines:
        c = int(P * h)
        if c - hw < 0:
            raise ValueError("band crosses DC; reduce band_halfwidth")
        nb = np.arange(h - n_neighbours, h + n_neighbours + 1)
        nb = nb[nb >= 1] * P
        sol = _solve_band(V, B, c, hw, nb, N_p, N_q, keep_tol, peak=peak)
        if sol is None:
            if h in exc_set:
                warnings.warn(f"rank-deficient band at bin {c} skipped", RuntimeWarning)
            continue
        bands[c] = sol
        coeff_of[c] = sol.line_coeffs(c, N_p)

    t_idx = _default_times(N, stride)
    times = t_idx / fs
    t0, T = (0.0, N / fs) if basis_interval is None else basis_interval
    b_t = legendre_basis(N_p, T, times, t0=t0)          # L x (N_p+1)

    M = h_exc.size
    values = np.full((M, times.size), np.nan + 0j)
    std = np.full((M, times.size), np.nan + 0j)
    zp = np.full((M, N_p + 1), np.nan + 0j)
    conds = {}
    for m, h in enumerate(h_exc):
        c = int(P * h)
        sol = bands.get(c)
        if sol is None:
            continue
        conds[c] = sol.condition
        ic = I[c]
        zp[m] = coeff_of[c] / ic
        values[m] = b_t @ zp[m]
        inv = 1.0 / ic
        al, be = inv.real, inv.imag
        g_re = np.zeros((times.size, sol.theta.size))
        g_im = np.zeros_like(g_re)
        for j, (kind, key, p) in enumerate(sol.columns):
            if key != c or kind == "drift":
                continue
            if kind == "re":
                g_re[:, j] = al * b_t[:, p]
                g_im[:, j] = be * b_t[:, p]
            else:
                g_re[:, j] = -be * b_t[:, p]
                g_im[:, j] = al * b_t[:, p]
        s_re = np.sqrt(np.maximum(np.einsum("li,ij,lj->l", g_re, sol.cov, g_re), 0.0))
        s_im = np.sqrt(np.maximum(np.einsum("li,ij,lj->l", g_im, sol.cov, g_im), 0.0))
        s_d = _odd_distortion_std(coeff_of, h, exc_set, P, abs(ic))
        std[m] = np.hypot(s_re, s_d) + 1j * np.hypot(s_im, s_d)

    distortion = {c: v for c, v in coeff_of.items() if (c // P) not in exc_set}
    residual = np.full(N // 2 + 1, np.nan + 0j)
    for c, sol in bands.items():
        residual[sol.bins] = sol.residual
    drift = _drift_coeffs(bands, coeff_of, V, B, N_p, N_q, int(P * h_lines[0]) - hw)
    tv = TimeVaryingImpedance(freqs, times, values, std, np.isfinite(values), "operando",
                              (N_p, N_q))
    return OperandoResult(tv, drift, distortion, residual, conds, zp, bands)


def _drift_coeffs(bands: dict[int, BandSolution], coeff_of: dict[int, np.ndarray],
                  V: np.ndarray, B: np.ndarray, n_p: int, n_q: int, k_stop: int) -> np.ndarray:
    """Drift coefficients from the bins between DC and the first band.

    Inside a narrow band the drift spectrum is nearly collinear with the
    tails of the neighbouring lines, so the per-band drift terms are not
    identifiable on their own. Below the first band the drift dominates; the
    estimated line responses are subtracted there and the drift basis is
    fitted by least squares. Without such bins the lowest band's values are
    returned.
    """
    N = V.size
    k = np.arange(0, max(k_stop, 0))
    if k.size == 0 or 2 * k.size - 1 < n_q + 1:
        drift = np.full(n_q + 1, np.nan)
        if bands:
            drift = bands[min(bands)].drift(n_q)
        return drift
    y = V[k].copy()
    for c, theta in coeff_of.items():
        for p in range(n_p + 1):
            if np.isfinite(theta[p]):
                y -= theta[p] * B[p, (k - c) % N] + np.conj(theta[p]) * B[p, (k + c) % N]
    A_c = B[:n_q + 1, k].T
    A = np.vstack([A_c.real, A_c[1:].imag])
    target = np.concatenate([y.real, y[1:].imag])
    sol, *_ = np.linalg.lstsq(A, target, rcond=None)
    return sol


def _odd_distortion_std(coeff_of: dict[int, np.ndarray], h: int, exc_set: set, P: int,
                        i_abs: float) -> float:
    """Per-component std from the nearest odd non-excited lines on each side."""
    found = []
    for direction in (-1, 1):
        g = h + 2 * direction
        while g >= 1 and (g in exc_set):
            g += 2 * direction
        c = g * P
        if g >= 1 and c in coeff_of and np.isfinite(coeff_of[c][0]):
            found.append(abs(coeff_of[c][0]) ** 2)
    if not found:
        return 0.0
    return float(np.sqrt(np.mean(found) / 2.0) / i_abs)
