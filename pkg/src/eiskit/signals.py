"""Multisine excitation design and rendering, plus time-domain basis functions.

A multisine is a periodic sum of cosines at integer harmonics ``h_m`` of the
fundamental ``1/Tp``::

    i(n) = i0(n) + sum_m I_m cos(2 pi h_m n / (Tp fs) + phi_m)

Odd random phase (ORP) designs excite odd harmonics only, which keeps the
even harmonic lines free for detecting even nonlinear distortions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

AMPLITUDE_PROFILES = ("flat", "inv_sqrt_f")


@dataclass(frozen=True)
class MultisineSpec:
    """A designed periodic excitation.

    ``amplitudes`` are one-sided cosine amplitudes in amperes, ``phases`` are
    radians in ``[0, 2 pi)``. ``fs * period`` must be an integer so that every
    period holds the same samples.
    """

    period: float
    harmonics: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    fs: float
    rng_seed: Optional[int] = None
    odd_only: bool = False

    def __post_init__(self):
        h = np.asarray(self.harmonics, dtype=np.int64).ravel()
        a = np.asarray(self.amplitudes, dtype=float).ravel()
        p = np.asarray(self.phases, dtype=float).ravel()
        object.__setattr__(self, "harmonics", h)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "phases", p)
        for arr in (h, a, p):
            arr.setflags(write=False)

        if self.period <= 0 or self.fs <= 0:
            raise ValueError("period and fs must be positive")
        if h.size == 0:
            raise ValueError("a multisine needs at least one harmonic")
        if not (h.size == a.size == p.size):
            raise ValueError("harmonics, amplitudes and phases must have equal length")
        if np.any(h < 1):
            raise ValueError("harmonics must be positive integers")
        if np.unique(h).size != h.size:
            raise ValueError("harmonics must be distinct")
        if self.odd_only and np.any(h % 2 == 0):
            raise ValueError("odd_only spec contains even harmonics")
        if np.any(p < 0) or np.any(p >= TWO_PI):
            raise ValueError("phases must lie in [0, 2*pi)")
        spp = self.period * self.fs
        if abs(spp - round(spp)) > 1e-9 * max(1.0, spp) or round(spp) < 1:
            raise ValueError(f"period * fs = {spp!r} is not a positive integer")
        if self.fs <= 2.0 * h.max() / self.period:
            raise ValueError("fs violates Nyquist for the highest harmonic")

    @property
    def samples_per_period(self) -> int:
        return int(round(self.period * self.fs))

    @property
    def frequencies(self) -> np.ndarray:
        return self.harmonics / self.period

    @property
    def rms(self) -> float:
        return float(np.sqrt(0.5 * np.sum(self.amplitudes**2)))

    def excited_bins(self, n_periods: int) -> np.ndarray:
        """DFT bins of the excited lines for a record of ``n_periods``."""
        return n_periods * self.harmonics

    def to_dict(self) -> dict[str, Any]:
        return {
            "period_Tp": float(self.period),
            "excited_harmonics": [int(v) for v in self.harmonics],
            "amplitudes": [float(v) for v in self.amplitudes],
            "phases": [float(v) for v in self.phases],
            "fs": float(self.fs),
            "rng_seed": self.rng_seed,
            "odd_only": bool(self.odd_only),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MultisineSpec":
        return cls(
            period=float(d["period_Tp"]),
            harmonics=np.asarray(d["excited_harmonics"], dtype=np.int64),
            amplitudes=np.asarray(d["amplitudes"], dtype=float),
            phases=np.asarray(d["phases"], dtype=float),
            fs=float(d["fs"]),
            rng_seed=d.get("rng_seed"),
            odd_only=bool(d.get("odd_only", False)),
        )


@dataclass
class TimeSeriesRecord:
    """Uniformly sampled current/voltage pair.

    ``voltage`` is empty for a freshly rendered excitation.
    """

    fs: float
    n_periods: int
    current: np.ndarray
    voltage: np.ndarray = field(default_factory=lambda: np.zeros(0))
    spec: Optional[MultisineSpec] = None

    def __post_init__(self):
        self.current = np.asarray(self.current, dtype=float)
        self.voltage = np.asarray(self.voltage, dtype=float)
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.n_periods < 1:
            raise ValueError("n_periods must be a positive integer")
        if self.voltage.size and self.voltage.size != self.current.size:
            raise ValueError("current and voltage must have equal length")
        if self.spec is not None:
            expected = self.n_periods * self.spec.samples_per_period
            if self.current.size != expected:
                raise ValueError(
                    f"record holds {self.current.size} samples, expected "
                    f"{self.n_periods} periods x {self.spec.samples_per_period}"
                )

    @property
    def n_samples(self) -> int:
        return int(self.current.size)

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.fs

    @property
    def has_voltage(self) -> bool:
        return self.voltage.size == self.current.size and self.voltage.size > 0


def _round_to_admissible(x: np.ndarray, odd_only: bool) -> np.ndarray:
    if odd_only:
        return 2 * np.round((x - 1.0) / 2.0).astype(np.int64) + 1
    return np.round(x).astype(np.int64)


def _log_harmonics(h_lo: float, h_hi: float, n: int, lo: int, hi: int,
                   odd_only: bool) -> np.ndarray:
    if n == 1:
        targets = np.array([h_lo])
    else:
        targets = np.geomspace(h_lo, h_hi, n)
    h = np.clip(_round_to_admissible(targets, odd_only), lo, hi)
    return np.unique(h)


def design_multisine(
    f_min: float,
    f_max: float,
    n_freqs: int,
    period_Tp: float,
    fs: float,
    amplitude_profile: str = "flat",
    odd_only: bool = True,
    rng_seed: int = 0,
    rms: Optional[float] = None,
) -> MultisineSpec:
    """Design a log-spaced multisine on the harmonic grid of ``1/period_Tp``.

    Log-spaced target frequencies are rounded to the nearest admissible
    harmonic (odd when ``odd_only``) and duplicates are dropped. When rounding
    collapses targets, the grid is densified until ``n_freqs`` distinct
    harmonics are found or the band is exhausted; the returned spec may
    therefore hold fewer than ``n_freqs`` lines, which is logged.

    ``amplitude_profile`` is ``"flat"`` or ``"inv_sqrt_f"`` (amplitudes
    falling as ``1/sqrt(f)``). With ``rms`` given, amplitudes are scaled so the
    multisine has that RMS value; otherwise the largest amplitude is 1 A.
    Phases are drawn uniformly from ``[0, 2 pi)`` with ``numpy``'s PCG64
    generator seeded by ``rng_seed``.
    """
    if n_freqs < 1:
        raise ValueError("n_freqs must be >= 1")
    if f_min > f_max:
        raise ValueError(f"infeasible band: f_min={f_min} > f_max={f_max}")
    if amplitude_profile not in AMPLITUDE_PROFILES:
        raise ValueError(f"unknown amplitude profile {amplitude_profile!r}")
    f0 = 1.0 / period_Tp
    tol = 1e-9
    if f_min < f0 * (1 - tol):
        raise ValueError(f"f_min={f_min} is below the fundamental 1/Tp={f0}")
    if f_max > fs / 2 - f0 + tol * fs:
        raise ValueError("f_max must not exceed fs/2 - 1/Tp")

    h_lo = f_min * period_Tp
    h_hi = f_max * period_Tp
    lo = int(_round_to_admissible(np.array([h_lo]), odd_only)[0])
    hi_cap = int(math.floor(h_hi + tol))
    hi = int(_round_to_admissible(np.array([h_hi]), odd_only)[0])
    if hi > hi_cap:
        hi -= 2 if odd_only else 1
    lo = max(lo, 1)
    if hi < lo:
        raise ValueError("no admissible harmonic in the requested band")
    n_admissible = (hi - lo) // 2 + 1 if odd_only else hi - lo + 1

    target = min(n_freqs, n_admissible)
    m = target
    best = _log_harmonics(h_lo, h_hi, m, lo, hi, odd_only)
    while best.size < target:
        m += 1
        cand = _log_harmonics(h_lo, h_hi, m, lo, hi, odd_only)
        if cand.size > target:
            continue
        best = cand
        if m > 50 * n_admissible + 100:
            break
    if best.size < n_freqs:
        log.warning("multisine design kept %d of %d requested harmonics",
                     best.size, n_freqs)

    freqs = best / period_Tp
    if amplitude_profile == "flat":
        amps = np.ones(best.size)
    else:
        amps = np.sqrt(freqs[0] / freqs)
    if rms is not None:
        amps = amps * rms / np.sqrt(0.5 * np.sum(amps**2))

    rng = np.random.default_rng(rng_seed)
    phases = rng.uniform(0.0, TWO_PI, size=best.size)
    return MultisineSpec(
        period=float(period_Tp),
        harmonics=best,
        amplitudes=amps,
        phases=phases,
        fs=float(fs),
        rng_seed=rng_seed,
        odd_only=odd_only,
    )


def render_multisine(
    spec: MultisineSpec,
    n_periods: int,
    i0: Optional[Sequence[float] | float] = None,
) -> TimeSeriesRecord:
    """Sample ``n_periods`` periods of ``spec`` on top of an optional offset.

    ``i0`` may be a scalar DC offset or a sampled trajectory of length
    ``n_periods * spec.samples_per_period``. Harmonic phases are reduced
    modulo one period in integer arithmetic, so every period is bit-identical.
    """
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    n_pp = spec.samples_per_period
    n_total = n_periods * n_pp
    n = np.arange(n_pp, dtype=np.int64)
    one_period = np.zeros(n_pp)
    for h, amp, phi in zip(spec.harmonics, spec.amplitudes, spec.phases):
        idx = (int(h) * n) % n_pp
        one_period += amp * np.cos(TWO_PI * idx / n_pp + phi)
    current = np.tile(one_period, n_periods)
    if i0 is not None:
        offset = np.asarray(i0, dtype=float)
        if offset.ndim == 0:
            current = current + float(offset)
        else:
            if offset.size != n_total:
                raise ValueError(
                    f"i0 has {offset.size} samples, expected {n_total}")
            current = current + offset
    return TimeSeriesRecord(fs=spec.fs, n_periods=n_periods, current=current,
                            spec=spec)


def crest_factor(x: Sequence[float]) -> float:
    """Peak-to-RMS ratio ``max|x| / rms(x)``."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty signal")
    rms = np.sqrt(np.mean(x**2))
    if rms == 0:
        raise ValueError("crest factor of an all-zero signal is undefined")
    return float(np.max(np.abs(x)) / rms)


def legendre_basis(p_max: int, T: float, timestamps: Sequence[float],
                   t0: float = 0.0) -> np.ndarray:
    """Legendre polynomials rescaled to the interval ``[t0, t0 + T]``.

    Returns an array of shape ``(len(timestamps), p_max + 1)`` whose column
    ``p`` is ``L_p(2 (t - t0) / T - 1)``.
    """
    if p_max < 0:
        raise ValueError("p_max must be >= 0")
    if T <= 0:
        raise ValueError("T must be positive")
    t = np.asarray(timestamps, dtype=float)
    x = 2.0 * (t - t0) / T - 1.0
    slack = 1e-12
    if np.any(x < -1 - slack) or np.any(x > 1 + slack):
        raise ValueError("timestamps fall outside the basis interval")
    x = np.clip(x, -1.0, 1.0)
    out = np.empty(x.shape + (p_max + 1,))
    out[..., 0] = 1.0
    if p_max >= 1:
        out[..., 1] = x
    for p in range(1, p_max):
        out[..., p + 1] = ((2 * p + 1) * x * out[..., p] - p * out[..., p - 1]) / (p + 1)
    return out
