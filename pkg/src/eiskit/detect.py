"""Detection of nonlinearity and nonstationarity from a periodic record.

With an integer number of periods ``P`` of a multisine, the DFT bins split
into four groups:

* excited lines ``k = P h`` with ``h`` excited,
* non-excited harmonic lines ``k = P h`` (even and odd ``h`` kept apart),
  where only nonlinear distortions can land,
* skirt bins within ``P // 2`` of an excited line, where slow time variation
  spreads energy,
* the remaining bins, which carry noise only and set the noise floor.

Bins ``k < P`` hold drift and are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .signals import MultisineSpec, TimeSeriesRecord
from .spectra import Spectrum, dft

DEFAULT_THRESHOLD_DB = 6.0
LEVEL_FLOOR_DB = -200.0
LN2 = math.log(2.0)


@dataclass
class NoiseFloor:
    """Piecewise-constant noise power per DFT bin over log-spaced bands."""

    edges: np.ndarray     # band edges in bins, len = n_bands + 1
    power: np.ndarray     # noise power per bin in each band
    counts: np.ndarray    # bins used in each band

    def at(self, k) -> np.ndarray:
        k = np.asarray(k)
        idx = np.clip(np.searchsorted(self.edges, k, side="right") - 1, 0, self.power.size - 1)
        return self.power[idx]


def noise_floor(X: Spectrum, exclusion: Iterable[int] | np.ndarray = (),
                band_width: int = 8, k_min: int = 1,
                bands_per_octave: int = 3) -> NoiseFloor:
    """Robust per-band noise power ``E|X(k)|^2`` over non-excluded bins.

    Bands are log-spaced (``bands_per_octave`` per octave) between ``k_min``
    and Nyquist and merged until each holds at least ``band_width`` usable
    bins. The band median is divided by ``ln 2``, which makes it an unbiased
    estimate for complex Gaussian noise, where ``|X|^2`` is exponential.
    """
    if band_width < 1:
        raise ValueError("band_width must be >= 1")
    half = X.N // 2
    k_all = np.arange(max(1, k_min), half)
    keep = np.ones(X.N, dtype=bool)
    excl = np.asarray(list(exclusion) if not isinstance(exclusion, np.ndarray) else exclusion,
                      dtype=np.int64)
    excl = excl[(excl >= 0) & (excl < X.N)]
    keep[excl] = False
    usable = k_all[keep[k_all]]
    if usable.size < band_width:
        raise ValueError(f"only {usable.size} usable bins, need at least {band_width}")

    lo, hi = k_all[0], half
    n_oct = max(np.log2(hi / lo), 1e-9)
    raw = np.unique(np.round(lo * 2.0 ** (np.arange(0, math.ceil(n_oct * bands_per_octave) + 1)
                                           / bands_per_octave)).astype(np.int64))
    raw = np.clip(raw, lo, hi)
    raw = np.unique(np.concatenate([[lo], raw, [hi]]))

    edges = [lo]
    counts = []
    for e in raw[1:]:
        n_in = np.count_nonzero((usable >= edges[-1]) & (usable < e))
        if n_in >= band_width or e == hi:
            edges.append(int(e))
            counts.append(n_in)
    if counts[-1] < band_width and len(edges) > 2:
        edges.pop(-2)
        counts[-2] += counts[-1]
        counts.pop()
    edges = np.asarray(edges, dtype=np.int64)
    power = np.empty(edges.size - 1)
    mag2 = np.abs(X.bins) ** 2
    for b in range(power.size):
        sel = usable[(usable >= edges[b]) & (usable < edges[b + 1])]
        power[b] = np.median(mag2[sel]) / LN2
    return NoiseFloor(edges=edges, power=power, counts=np.asarray(counts))


def _zero_floor_mask(floor: np.ndarray, X: Spectrum) -> np.ndarray:
    peak = np.max(np.abs(X.bins)) ** 2
    return floor <= 1e-26 * max(peak, np.finfo(float).tiny)


def snr_at_excited(X: Spectrum, floor: NoiseFloor, excited: Iterable[int]) -> tuple[np.ndarray, bool]:
    """``|X(k)| / sqrt(floor(k))`` at the excited bins.

    Returns the SNR array and a flag that is True when the floor is a
    numerical zero somewhere, in which case those entries are ``inf``.
    """
    k = np.asarray(list(excited), dtype=np.int64)
    f = floor.at(k)
    zero = _zero_floor_mask(f, X)
    snr = np.full(k.size, np.inf)
    snr[~zero] = np.abs(X.bins[k[~zero]]) / np.sqrt(f[~zero])
    return snr, bool(np.any(zero))


@dataclass
class BinClasses:
    excited: np.ndarray
    even_lines: np.ndarray
    odd_lines: np.ndarray
    skirt: np.ndarray
    noise: np.ndarray


def classify_bins(N: int, P: int, harmonics: np.ndarray) -> BinClasses:
    half = (N + 1) // 2  # bins strictly below Nyquist
    if P * np.max(harmonics) >= half:
        raise ValueError("excited harmonics beyond Nyquist for this record")
    k = np.arange(P, half)
    on_line = k % P == 0
    h = k // P
    exc_h = np.zeros(h.max() + 1 if h.size else 1, dtype=bool)
    exc_h[harmonics] = True
    excited = k[on_line & exc_h[h]]
    lines = k[on_line & ~exc_h[h]]
    even_lines = lines[(lines // P) % 2 == 0]
    odd_lines = lines[(lines // P) % 2 == 1]

    near = np.zeros(N, dtype=bool)
    w = P // 2
    for c in excited:
        near[max(0, c - w): c + w + 1] = True
    off = k[~on_line]
    skirt = off[near[off]]
    noise = off[~near[off]]
    return BinClasses(excited, even_lines, odd_lines, skirt, noise)


@dataclass
class DetectionReport:
    classification: str
    noise_floor: NoiseFloor
    even_nl_level: float
    odd_nl_level: float
    skirt_level: float
    snr_at_excited: np.ndarray
    snr_infinite: bool
    dominant_parity: str
    threshold_db: float
    P: int

    @property
    def is_nonlinear(self) -> bool:
        return self.classification in ("NLTI", "NLTV")

    @property
    def is_time_varying(self) -> bool:
        return self.classification in ("LTV", "NLTV")

    def to_dict(self) -> dict[str, Any]:
        snr = self.snr_at_excited
        finite = snr[np.isfinite(snr)]
        return {
            "classification": self.classification,
            "even_nl_level_db": self.even_nl_level,
            "odd_nl_level_db": self.odd_nl_level,
            "skirt_level_db": self.skirt_level,
            "dominant_parity": self.dominant_parity,
            "threshold_db": self.threshold_db,
            "P": self.P,
            "snr_median": float(np.median(finite)) if finite.size else None,
            "snr_infinite": self.snr_infinite,
            "noise_floor": {
                "band_edges_bins": [int(e) for e in self.noise_floor.edges],
                "power": [float(p) for p in self.noise_floor.power],
            },
        }


def _db(ratio: float) -> float:
    if not np.isfinite(ratio):
        return -LEVEL_FLOOR_DB
    return float(max(10.0 * np.log10(max(ratio, 0.0) + 1e-300), LEVEL_FLOOR_DB))


def _line_level(P2: np.ndarray, lines: np.ndarray, bg_floor: np.ndarray,
                nonharm: np.ndarray, N: int) -> float:
    """Total line power over total local background, in dB."""
    if lines.size == 0:
        return LEVEL_FLOOR_DB
    bg = np.empty(lines.size)
    for i, k in enumerate(lines):
        nb = [j for j in (k - 2, k - 1, k + 1, k + 2) if 0 < j < N // 2 and nonharm[j]]
        local = np.mean(P2[nb]) if nb else 0.0
        bg[i] = max(bg_floor[i], local)
    return _db(np.sum(P2[lines]) / np.sum(bg))


def classify_record(rec: TimeSeriesRecord, spec: Optional[MultisineSpec] = None,
                    threshold_db: float = DEFAULT_THRESHOLD_DB,
                    band_width: int = 8) -> DetectionReport:
    """Classify a record as LTI, NLTI, LTV or NLTV.

    Non-excited harmonic lines are compared to the mean of up to two
    non-harmonic neighbours on each side (or the noise floor, if larger),
    so that slow modulation spreading onto lines is not mistaken for
    distortion. Skirt bins are compared to the noise floor. A group exceeding
    ``threshold_db`` triggers the corresponding flag.
    """
    spec = spec if spec is not None else rec.spec
    if spec is None:
        raise ValueError("a multisine spec is required")
    if not rec.has_voltage:
        raise ValueError("record has no voltage channel")
    P = rec.n_periods
    if P < 2:
        raise ValueError("at least two periods are needed to separate nonlinearity from nonstationarity")
    N = rec.n_samples
    if N != P * spec.samples_per_period:
        raise ValueError("record length does not match P periods of the multisine")

    V = dft(rec.voltage, rec.fs)
    cls = classify_bins(N, P, spec.harmonics)
    floor = noise_floor(V, exclusion=np.setdiff1d(np.arange(N // 2), cls.noise),
                        band_width=band_width, k_min=P)
    P2 = np.abs(V.bins) ** 2
    nonharm = np.zeros(N, dtype=bool)
    nonharm[cls.noise] = True
    nonharm[cls.skirt] = True

    def fl(k):
        return floor.at(k) if k.size else np.zeros(0)

    even = _line_level(P2, cls.even_lines, fl(cls.even_lines), nonharm, N)
    odd = _line_level(P2, cls.odd_lines, fl(cls.odd_lines), nonharm, N)
    if cls.skirt.size:
        skirt = _db(np.sum(P2[cls.skirt]) / np.sum(fl(cls.skirt)))
    else:
        skirt = LEVEL_FLOOR_DB

    snr, flagged = snr_at_excited(V, floor, cls.excited)
    nl = even > threshold_db or odd > threshold_db
    tv = skirt > threshold_db
    label = {(False, False): "LTI", (True, False): "NLTI",
             (False, True): "LTV", (True, True): "NLTV"}[(nl, tv)]
    if not nl:
        parity = "none"
    else:
        parity = "even" if even >= odd else "odd"
    return DetectionReport(classification=label, noise_floor=floor,
                           even_nl_level=even, odd_nl_level=odd, skirt_level=skirt,
                           snr_at_excited=snr, snr_infinite=flagged,
                           dominant_parity=parity, threshold_db=threshold_db, P=P)
