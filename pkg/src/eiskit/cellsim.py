"""Synthetic electrochemical cells used as ground truth.

A :class:`CellModel` is a series connection of elements driven by a current
record. Static elements act pointwise on the sampled current, linear elements
act in the frequency domain on the periodic current, and time-varying circuit
elements use the frozen-parameter impedance at every sample time::

    v(n) = sum_k Z(omega_k, theta(t_n)) I(k) exp(j 2 pi k n / N)

This is exact for LTI elements and is the quasi-static definition of a
time-varying impedance for LTV elements, which is also what
:meth:`CellModel.impedance` reports as ground truth.

The open-circuit voltage is a constant or a piecewise-linear table of
state of charge, with state of charge obtained by Coulomb counting.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .ecm import PARAM_NAMES, EcmParams, ecm_impedance, ecm_impedance_raw
from .signals import TimeSeriesRecord

log = logging.getLogger(__name__)

R_GAS = 8.314
FARADAY = 96485.0
TWO_PI = 2.0 * np.pi
MAX_VOLTERRA_ORDER = 12


# --- Butler-Volmer -----------------------------------------------------------

@dataclass(frozen=True)
class ButlerVolmerParams:
    j0S: float
    T_kelvin: float = 298.15
    n_electrons: int = 1
    alpha_a: float = 0.5
    alpha_c: float = 0.5

    def __post_init__(self):
        if self.j0S <= 0 or self.T_kelvin <= 0:
            raise ValueError("j0S and T_kelvin must be positive")
        if self.n_electrons < 1:
            raise ValueError("n_electrons must be >= 1")
        for a in (self.alpha_a, self.alpha_c):
            if not 0 < a < 1:
                raise ValueError("transfer coefficients must lie in (0, 1)")

    @property
    def thermal_voltage(self) -> float:
        """RT/(nF) in volts."""
        return R_GAS * self.T_kelvin / (self.n_electrons * FARADAY)

    @property
    def charge_transfer_resistance(self) -> float:
        return self.thermal_voltage / self.j0S


def butler_volmer_overpotential(i, p: ButlerVolmerParams):
    """Overpotential for symmetric transfer coefficients.

    ``v = 2 RT/(nF) asinh(i / (2 j0S))``. Asymmetric coefficients have no
    closed-form inverse and raise ``ValueError``.
    """
    if p.alpha_a != 0.5 or p.alpha_c != 0.5:
        raise ValueError("closed-form overpotential requires alpha_a = alpha_c = 0.5")
    return 2.0 * p.thermal_voltage * np.arcsinh(np.asarray(i, dtype=float) / (2.0 * p.j0S))


# --- elements ----------------------------------------------------------------

@dataclass(frozen=True)
class StaticPolynomial:
    """``v = sum_n a_n i^n`` with ``coeffs = (a1, a2, ...)``."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("StaticPolynomial needs at least a1")

    def pointwise(self, i: np.ndarray) -> np.ndarray:
        v = np.zeros_like(i)
        for a in reversed(self.coeffs):
            v = (v + a) * i
        return v

    def small_signal(self, omega, t=None):
        return np.full(np.shape(omega), complex(self.coeffs[0]))

    def to_dict(self):
        return {"type": "static_polynomial", "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class ButlerVolmerStatic:
    params: ButlerVolmerParams

    def pointwise(self, i: np.ndarray) -> np.ndarray:
        return butler_volmer_overpotential(i, self.params)

    def small_signal(self, omega, t=None):
        return np.full(np.shape(omega), complex(self.params.charge_transfer_resistance))

    def to_dict(self):
        p = self.params
        return {"type": "butler_volmer", "j0S": p.j0S, "T_kelvin": p.T_kelvin,
                "n_electrons": p.n_electrons, "alpha_a": p.alpha_a, "alpha_c": p.alpha_c}


@dataclass(frozen=True)
class RCParallel:
    R: float
    C: float

    def __post_init__(self):
        if self.R <= 0 or self.C <= 0:
            raise ValueError("R and C must be positive")

    def transfer(self, omega: np.ndarray) -> np.ndarray:
        return self.R / (1.0 + 1j * omega * self.R * self.C)

    def dc_resistance(self) -> float:
        return self.R

    def small_signal(self, omega, t=None):
        return self.transfer(np.asarray(omega, dtype=float))

    def to_dict(self):
        return {"type": "rc_parallel", "R": self.R, "C": self.C}


@dataclass(frozen=True)
class EcmLti:
    """The battery circuit with constant parameters.

    The diffusion branch has infinite DC impedance; a DC current is therefore
    routed through ``R0 + Rct`` only, with the accumulated charge represented
    by the open-circuit voltage of the cell.
    """

    params: EcmParams

    def transfer(self, omega: np.ndarray) -> np.ndarray:
        return ecm_impedance(self.params, omega)

    def dc_resistance(self) -> float:
        return self.params.R0 + self.params.Rct

    def small_signal(self, omega, t=None):
        return self.transfer(np.asarray(omega, dtype=float))

    def to_dict(self):
        return {"type": "ecm_lti", "params": self.params.to_dict()}


Trajectory = Union[float, Callable[[np.ndarray], np.ndarray], "PiecewiseLinear"]


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through knots; must cover the requested times."""

    t: tuple[float, ...]
    value: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(float(v) for v in self.t))
        object.__setattr__(self, "value", tuple(float(v) for v in self.value))
        if len(self.t) != len(self.value) or len(self.t) < 1:
            raise ValueError("knot times and values must be non-empty and equal length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("knot times must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, abs(self.t[-1]))
        if np.any(t < self.t[0] - tol) or np.any(t > self.t[-1] + tol):
            raise ValueError("trajectory undefined outside its knots "
                             f"[{self.t[0]}, {self.t[-1]}]")
        return np.interp(t, self.t, self.value)

    def to_dict(self):
        return {"t": list(self.t), "value": list(self.value)}


@dataclass(frozen=True)
class EcmTimeVarying:
    """The battery circuit with parameters following trajectories in time.

    ``trajectories`` maps parameter names to a constant, a
    :class:`PiecewiseLinear` or a callable of time in seconds; parameters
    absent from the map keep their ``base`` value.
    """

    base: EcmParams
    trajectories: Mapping[str, Trajectory] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.trajectories) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown circuit parameters {sorted(unknown)}")

    def params_at(self, t) -> dict[str, np.ndarray]:
        t = np.asarray(t, dtype=float)
        out = {}
        for name in PARAM_NAMES:
            traj = self.trajectories.get(name, getattr(self.base, name))
            if callable(traj):
                val = np.asarray(traj(t), dtype=float)
                val = np.broadcast_to(val, t.shape).copy()
            else:
                val = np.full(t.shape, float(traj))
            if not np.all(np.isfinite(val)):
                raise ValueError(f"trajectory of {name} is undefined at some t")
            out[name] = val
        if np.any(out["alpha"] <= 0) or np.any(out["alpha"] > 1):
            raise ValueError("alpha trajectory leaves (0, 1]")
        for name in PARAM_NAMES[:-1]:
            if np.any(out[name] <= 0):
                raise ValueError(f"{name} trajectory is not positive")
        return out

    def transfer_at(self, omega, t) -> np.ndarray:
        """Frozen impedance, shape ``(len(omega), len(t))``."""
        omega = np.asarray(omega, dtype=float)[:, None]
        p = self.params_at(np.atleast_1d(t))
        return ecm_impedance_raw(*(p[n][None, :] for n in PARAM_NAMES), omega)

    def small_signal(self, omega, t=None):
        if t is None:
            return ecm_impedance(self.base, omega)
        return self.transfer_at(omega, t)

    def to_dict(self):
        trajs = {}
        for k, v in self.trajectories.items():
            if isinstance(v, PiecewiseLinear):
                trajs[k] = v.to_dict()
            elif callable(v):
                raise TypeError(f"trajectory of {k} is a callable and cannot be serialized")
            else:
                trajs[k] = float(v)
        return {"type": "ecm_time_varying", "base": self.base.to_dict(),
                "trajectories": trajs}


Element = Union[StaticPolynomial, ButlerVolmerStatic, RCParallel, EcmLti, EcmTimeVarying]


# --- open-circuit voltage ------------------------------------------------------

@dataclass(frozen=True)
class OcvTable:
    """Piecewise-linear OCV versus state of charge (fraction of capacity)."""

    soc: tuple[float, ...]
    ocv: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "soc", tuple(float(v) for v in self.soc))
        object.__setattr__(self, "ocv", tuple(float(v) for v in self.ocv))
        if len(self.soc) != len(self.ocv) or len(self.soc) < 2:
            raise ValueError("OCV table needs at least two points")
        if np.any(np.diff(self.soc) <= 0):
            raise ValueError("SOC knots must be strictly increasing")

    def __call__(self, soc):
        return np.interp(soc, self.soc, self.ocv)

    def slope(self, soc):
        s = np.asarray(soc, dtype=float)
        seg = np.clip(np.searchsorted(self.soc, s, side="right") - 1, 0, len(self.soc) - 2)
        soc_k, ocv_k = np.asarray(self.soc), np.asarray(self.ocv)
        return (ocv_k[seg + 1] - ocv_k[seg]) / (soc_k[seg + 1] - soc_k[seg])

    def to_dict(self):
        return {"soc": list(self.soc), "ocv": list(self.ocv)}


@dataclass(frozen=True)
class CellModel:
    """Series connection of ``elements`` on top of an open-circuit voltage.

    ``ocv`` is a constant in volts or an :class:`OcvTable`; a table requires
    ``capacity_ah`` so that the state of charge can be Coulomb counted from
    ``soc0``. ``noise_i`` and ``noise_v`` are the standard deviations of white
    Gaussian measurement noise added to the current and voltage channels.
    """

    elements: tuple[Element, ...]
    ocv: Union[float, OcvTable] = 0.0
    capacity_ah: Optional[float] = None
    soc0: float = 0.5
    noise_i: float = 0.0
    noise_v: float = 0.0

    def __post_init__(self):
        els = self.elements
        if not isinstance(els, (tuple, list)):
            els = (els,)
        object.__setattr__(self, "elements", tuple(els))
        if not self.elements:
            raise ValueError("a cell needs at least one element")
        if self.noise_i < 0 or self.noise_v < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if isinstance(self.ocv, OcvTable):
            if self.capacity_ah is None or self.capacity_ah <= 0:
                raise ValueError("an OCV table needs a positive capacity_ah")

    # ground truth -------------------------------------------------------------

    def soc(self, current: np.ndarray, fs: float) -> np.ndarray:
        if self.capacity_ah is None:
            return np.full(np.shape(current), self.soc0)
        charge = cumulative_trapezoid(current, dx=1.0 / fs, initial=0.0)
        return self.soc0 + charge / (3600.0 * self.capacity_ah)

    def impedance(self, freqs, t=None, soc=None) -> np.ndarray:
        """Small-signal impedance at ``freqs`` (Hz).

        With ``t`` given the result has shape ``(len(freqs), len(t))`` and
        time-varying elements are frozen at each ``t``. The OCV slope acts as
        a capacitor ``slope / (3600 capacity j omega)`` when ``soc`` (scalar or
        per-``t`` array) is supplied together with an OCV table.
        """
        omega = TWO_PI * np.asarray(freqs, dtype=float)
        shape = omega.shape if t is None else omega.shape + (np.size(t),)
        z = np.zeros(shape, dtype=complex)
        for el in self.elements:
            if isinstance(el, EcmTimeVarying):
                z = z + (el.transfer_at(omega, t) if t is not None
                         else ecm_impedance(el.base, omega))
            else:
                zz = el.small_signal(omega)
                z = z + (zz[:, None] if t is not None else zz)
        if isinstance(self.ocv, OcvTable) and soc is not None:
            slope = self.ocv.slope(soc)
            zc = 1.0 / (3600.0 * self.capacity_ah * 1j * omega)
            if t is not None:
                z = z + zc[:, None] * np.broadcast_to(slope, (np.size(t),))[None, :]
            else:
                z = z + zc * float(np.mean(slope))
        return z

    def to_dict(self) -> dict[str, Any]:
        return {
            "elements": [el.to_dict() for el in self.elements],
            "ocv": self.ocv.to_dict() if isinstance(self.ocv, OcvTable) else float(self.ocv),
            "capacity_ah": self.capacity_ah,
            "soc0": self.soc0,
            "noise_i": self.noise_i,
            "noise_v": self.noise_v,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CellModel":
        ocv = d.get("ocv", 0.0)
        if isinstance(ocv, Mapping):
            ocv = OcvTable(soc=ocv["soc"], ocv=ocv["ocv"])
        return cls(
            elements=tuple(element_from_dict(e) for e in d["elements"]),
            ocv=ocv,
            capacity_ah=d.get("capacity_ah"),
            soc0=float(d.get("soc0", 0.5)),
            noise_i=float(d.get("noise_i", 0.0)),
            noise_v=float(d.get("noise_v", 0.0)),
        )


def element_from_dict(d: Mapping[str, Any]) -> Element:
    kind = d.get("type")
    if kind == "static_polynomial":
        return StaticPolynomial(tuple(d["coeffs"]))
    if kind == "butler_volmer":
        return ButlerVolmerStatic(ButlerVolmerParams(
            j0S=float(d["j0S"]), T_kelvin=float(d.get("T_kelvin", 298.15)),
            n_electrons=int(d.get("n_electrons", 1)),
            alpha_a=float(d.get("alpha_a", 0.5)), alpha_c=float(d.get("alpha_c", 0.5))))
    if kind == "rc_parallel":
        return RCParallel(float(d["R"]), float(d["C"]))
    if kind == "ecm_lti":
        return EcmLti(EcmParams.from_dict(d["params"]))
    if kind == "ecm_time_varying":
        trajs = {}
        for k, v in d.get("trajectories", {}).items():
            trajs[k] = PiecewiseLinear(v["t"], v["value"]) if isinstance(v, Mapping) else float(v)
        return EcmTimeVarying(EcmParams.from_dict(d["base"]), trajs)
    raise ValueError(f"unknown element type {kind!r}")


# --- simulation ---------------------------------------------------------------

def _significant_bins(spec_i: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    half = spec_i.size // 2
    mags = np.abs(spec_i[1:half + 1])
    peak = mags.max() if mags.size else 0.0
    if peak == 0:
        return np.zeros(0, dtype=np.int64)
    return 1 + np.flatnonzero(mags > rel * peak)


def _lti_response(el, current: np.ndarray, fs: float) -> np.ndarray:
    N = current.size
    X = np.fft.rfft(current)
    k = np.arange(X.size)
    omega = TWO_PI * k * fs / N
    H = np.empty(X.size, dtype=complex)
    H[0] = el.dc_resistance()
    H[1:] = el.transfer(omega[1:])
    return np.fft.irfft(H * X, n=N)


def _ltv_response(el: EcmTimeVarying, current: np.ndarray, fs: float,
                  chunk: int = 4096) -> np.ndarray:
    N = current.size
    X = np.fft.fft(current) / N
    t = np.arange(N) / fs
    k = _significant_bins(X)
    omega = TWO_PI * k * fs / N
    coef = 2.0 * X[k]
    if N % 2 == 0 and k.size and k[-1] == N // 2:
        coef[-1] = X[N // 2]
    v = np.empty(N)
    for start in range(0, N, chunk):
        n = np.arange(start, min(N, start + chunk))
        p = el.params_at(t[n])
        dc = (p["R0"] + p["Rct"]) * X[0].real
        if k.size:
            Z = ecm_impedance_raw(*(p[name][:, None] for name in PARAM_NAMES),
                                  omega[None, :])
            phase = np.exp(1j * TWO_PI * np.outer(n, k) / N)
            v[n] = dc + np.real((Z * phase) @ coef)
        else:
            v[n] = dc
    return v


def element_response(el: Element, current: np.ndarray, fs: float) -> np.ndarray:
    if isinstance(el, (StaticPolynomial, ButlerVolmerStatic)):
        return el.pointwise(current)
    if isinstance(el, EcmTimeVarying):
        return _ltv_response(el, current, fs)
    return _lti_response(el, current, fs)


def simulate_response(model: CellModel, excitation: TimeSeriesRecord,
                      rng_seed: Optional[int] = 0) -> TimeSeriesRecord:
    """Drive ``model`` with the excitation current and record both channels.

    The voltage is computed from the noiseless current; measurement noise is
    then added to both channels from one seeded generator (voltage first,
    then current).
    """
    fs = excitation.fs
    if fs <= 0:
        raise ValueError("fs must be positive")
    i_true = np.asarray(excitation.current, dtype=float)
    v = np.zeros_like(i_true)
    for el in model.elements:
        v = v + element_response(el, i_true, fs)
    if isinstance(model.ocv, OcvTable):
        v = v + model.ocv(model.soc(i_true, fs))
    else:
        v = v + float(model.ocv)

    rng = np.random.default_rng(rng_seed)
    noise_v = rng.normal(0.0, 1.0, i_true.size) * model.noise_v
    noise_i = rng.normal(0.0, 1.0, i_true.size) * model.noise_i
    return TimeSeriesRecord(fs=fs, n_periods=excitation.n_periods,
                            current=i_true + noise_i, voltage=v + noise_v,
                            spec=excitation.spec)


# --- Volterra single-sine oracle ---------------------------------------------

def sign_patterns(n: int, h: int) -> list[tuple[int, ...]]:
    """All ``(s_1..s_n)`` in ``{-1, 1}^n`` summing to ``h``."""
    return [s for s in itertools.product((-1, 1), repeat=n) if sum(s) == h]


def volterra_single_sine_harmonics(
    orders: Mapping[int, Union[complex, Callable[..., complex]]],
    I: float,
    omega: float,
) -> dict[int, complex]:
    """Harmonic amplitudes ``V_h`` of a Volterra series under ``I cos(omega t)``.

    ``orders`` maps the order ``n`` to the kernel value ``Z_n`` (a constant for
    static kernels, or a callable of the ``n`` frequencies). The returned
    ``V_h`` are one-sided cosine amplitudes for ``h > 0`` and the DC value for
    ``h = 0``, summed over all orders.
    """
    if not orders:
        return {}
    n_max = max(orders)
    if n_max > MAX_VOLTERRA_ORDER:
        raise ValueError(f"order {n_max} exceeds the enumeration limit {MAX_VOLTERRA_ORDER}")
    if min(orders) < 1:
        raise ValueError("orders must be >= 1")
    out = {h: 0j for h in range(n_max + 1)}
    for n, kernel in orders.items():
        for h in range(n + 1):
            pats = sign_patterns(n, h)
            if not pats:
                continue
            if callable(kernel):
                total = sum(complex(kernel(*(s * omega for s in pat))) for pat in pats)
            else:
                total = len(pats) * complex(kernel)
            factor = 1.0 / 2**n if h == 0 else 1.0 / 2 ** (n - 1)
            out[h] += factor * total * I**n
    return out
