"""File formats: delimited text with 12 significant digits and JSON documents.

Every writer goes through :func:`atomic_write`, which writes a temporary file
in the target directory and renames it into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .classical import ImpedanceCurve
from .nleis import NonlinearCoefficients
from .signals import MultisineSpec, TimeSeriesRecord
from .spectra import Spectrum
from .tvimp import TimeVaryingImpedance

FMT = "%.12g"

TIMESERIES_HEADER = ("t_s", "i_a", "v_v")
SPECTRUM_HEADER = ("k", "f", "re", "im")
CURVE_HEADER = ("f_hz", "re_ohm", "im_ohm", "std_re", "std_im")
TV_HEADER = ("f_hz", "t_s", "re_ohm", "im_ohm", "std_re", "std_im")
NLEIS_HEADER = ("h", "f_hz", "re", "im", "unit_exponent")
TRAJECTORY_HEADER = ("t_s", "R0", "R1", "C1", "Rct", "Cct", "W", "alpha", "mre")


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return FMT % x


def write_table(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")
    atomic_write(path, buf.getvalue())


def read_table(path, header: Sequence[str]) -> dict[str, np.ndarray]:
    """Read a delimited table, checking its header. Empty cells become NaN."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if tuple(h.strip() for h in got) != tuple(header):
            raise ValueError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        cols: list[list[float]] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
            for c, v in zip(cols, row):
                v = v.strip()
                try:
                    c.append(float(v) if v else np.nan)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: not a number: {v!r}") from None
    return {h: np.asarray(c, dtype=float) for h, c in zip(header, cols)}


def write_json(path, obj: Any) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --- typed helpers ------------------------------------------------------------

def write_spec(path, spec: MultisineSpec) -> None:
    write_json(path, spec.to_dict())


def read_spec(path) -> MultisineSpec:
    return MultisineSpec.from_dict(read_json(path))


def write_timeseries(path, rec: TimeSeriesRecord) -> None:
    t = rec.time
    v = rec.voltage if rec.has_voltage else None
    rows = ((t[n], rec.current[n], None if v is None else v[n]) for n in range(rec.n_samples))
    write_table(path, TIMESERIES_HEADER, rows)


def read_timeseries(path, spec: Optional[MultisineSpec] = None,
                    fs: Optional[float] = None) -> TimeSeriesRecord:
    """Read a time-series table; ``fs`` defaults to the multisine's, then to the time step."""
    d = read_table(path, TIMESERIES_HEADER)
    t = d["t_s"]
    if t.size < 2 and fs is None and spec is None:
        raise ValueError("cannot infer the sampling rate from fewer than two samples")
    if fs is None:
        fs = spec.fs if spec is not None else 1.0 / float(np.median(np.diff(t)))
    volt = d["v_v"]
    if np.all(np.isnan(volt)):
        volt = np.zeros(0)
    elif np.any(np.isnan(volt)):
        raise ValueError(f"{path}: voltage column is partly empty")
    n_periods = 1
    if spec is not None:
        spp = spec.samples_per_period
        if t.size % spp:
            raise ValueError(f"{path}: {t.size} samples is not a whole number of "
                             f"{spp}-sample periods")
        n_periods = t.size // spp
    return TimeSeriesRecord(fs=fs, n_periods=n_periods, current=d["i_a"], voltage=volt,
                            spec=spec)


def write_spectrum(path, X: Spectrum, one_sided: bool = True) -> None:
    k = np.arange(X.N // 2 + 1 if one_sided else X.N)
    f = X.freqs
    write_table(path, SPECTRUM_HEADER,
                ((int(kk), f[kk], X.bins[kk].real, X.bins[kk].imag) for kk in k))


def write_curve(path, curve: ImpedanceCurve) -> None:
    std = curve.std if curve.std is not None else np.full(len(curve), np.nan + 1j * np.nan)
    write_table(path, CURVE_HEADER,
                ((f, z.real, z.imag, s.real, s.imag)
                 for f, z, s in zip(curve.frequencies, curve.values, std)))


def read_curve(path) -> ImpedanceCurve:
    d = read_table(path, CURVE_HEADER)
    std = d["std_re"] + 1j * d["std_im"]
    if np.all(np.isnan(std.real)):
        std = None
    return ImpedanceCurve(d["f_hz"], d["re_ohm"] + 1j * d["im_ohm"], std, {"source": str(path)})


def write_tv(path, tv: TimeVaryingImpedance) -> None:
    std = tv.std if tv.std is not None else np.full(tv.values.shape, np.nan + 1j * np.nan)

    def rows():
        for m, f in enumerate(tv.frequencies):
            for l, t in enumerate(tv.times):
                z, s = tv.values[m, l], std[m, l]
                yield f, t, z.real, z.imag, s.real, s.imag
    write_table(path, TV_HEADER, rows())


def read_tv(path, method: str = "") -> TimeVaryingImpedance:
    d = read_table(path, TV_HEADER)
    f = np.unique(d["f_hz"])
    t = np.unique(d["t_s"])
    vals = np.full((f.size, t.size), np.nan + 0j)
    std = np.full((f.size, t.size), np.nan + 0j)
    mi = np.searchsorted(f, d["f_hz"])
    li = np.searchsorted(t, d["t_s"])
    vals[mi, li] = d["re_ohm"] + 1j * d["im_ohm"]
    std[mi, li] = d["std_re"] + 1j * d["std_im"]
    if np.all(np.isnan(std.real)):
        std = None
    return TimeVaryingImpedance(f, t, vals, std, None, method)


def write_nleis(path, coeffs: NonlinearCoefficients) -> None:
    write_table(path, NLEIS_HEADER,
                ((h, coeffs.frequency, z.real, z.imag, coeffs.unit_exponent(h))
                 for h, z in sorted(coeffs.coeffs.items())))


def read_nleis(path) -> dict[int, complex]:
    d = read_table(path, NLEIS_HEADER)
    return {int(h): complex(r, i) for h, r, i in zip(d["h"], d["re"], d["im"])}


def write_trajectory(path, points) -> None:
    from .ecm import PARAM_NAMES

    write_table(path, TRAJECTORY_HEADER,
                ([p.t] + [getattr(p.theta, n) for n in PARAM_NAMES] + [p.mean_rel_error]
                 for p in points))
