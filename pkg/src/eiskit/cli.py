"""Command-line front end: design, simulate, detect, estimate and fit.

Every command accepts ``--config FILE`` with a JSON object whose keys are the
option names (dashes or underscores); explicit flags override it. The fully
resolved configuration is written as ``<command>.config.json`` into the output
directory, so any run can be repeated from that file alone.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from . import io as eio
from .cellsim import (ButlerVolmerParams, ButlerVolmerStatic, CellModel, EcmLti, EcmTimeVarying,
                      OcvTable, PiecewiseLinear, RCParallel, StaticPolynomial, simulate_response)
from .classical import impedance_periodic, impedance_random
from .detect import classify_record
from .ecm import DEFAULT_BAND, DEFAULT_SWARM, EcmParams, fit_ecm, fit_ecm_trajectory
from .nleis import bla_estimate, leading_order_coeffs
from .signals import MultisineSpec, design_multisine, render_multisine
from .spectra import GaussianFilter, QuadratureFilter, dft
from .tvimp import dmfa, operando_eis, stft_eis

log = logging.getLogger("eiskit")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

METHODS = ("periodic", "random", "stft", "dmfa", "operando", "nleis", "bla")
SCENARIOS = ("resistor", "rc", "ecm-lti", "ecm-ltv", "charging", "quadratic", "cubic",
             "butler-volmer")

DEFAULT_THETA = EcmParams(R0=0.02, R1=0.01, C1=20.0, Rct=0.02, Cct=1.0, W=0.005, alpha=0.5)

DEFAULTS: dict[str, dict[str, Any]] = {
    "design": {"fmin": 5.6e-3, "fmax": 80.0, "n": 76, "tp": 180.0, "fs": 200.0, "odd": True,
               "profile": "flat", "rms": None, "seed": 0, "periods": 1, "offset": 0.0},
    "simulate": {"spec": None, "scenario": "ecm-lti", "model": None, "periods": 4,
                 "offset": None, "noise_v": None, "noise_i": None, "seed": 0},
    "detect": {"data": None, "spec": None, "threshold": 6.0, "band_width": 8},
    "estimate": {"method": "periodic", "data": None, "spec": None, "window": "hann",
                 "lam": None, "nw": None, "stride": None, "filter": "quadrature", "q": 5.0,
                 "filter_width": None, "np": 2, "nq": 6, "halfwidth": None, "neighbours": 2,
                 "hmax": 5},
    "fit": {"curve": None, "tv": None, "band": f"{DEFAULT_BAND[0]:g}:{DEFAULT_BAND[1]:g}",
            "seed": DEFAULT_SWARM["seed"], "particles": DEFAULT_SWARM["particles"],
            "iters": DEFAULT_SWARM["iters"], "starts": DEFAULT_SWARM["starts"],
            "weighting": "absolute", "cold": False},
}
COMMON = {"out": ".", "figures": False}


class ValidationError(ValueError):
    pass


# --- scenario presets -------------------------------------------------------------

def scenario_model(name: str, duration: float, noise_v: float = 1e-5,
                   noise_i: float = 0.0) -> CellModel:
    """Named synthetic cells used by ``simulate --scenario``."""
    th = DEFAULT_THETA
    ramp = PiecewiseLinear((0.0, duration), (th.Rct, 1.5 * th.Rct))
    kw = {"noise_v": noise_v, "noise_i": noise_i}
    if name == "resistor":
        return CellModel((StaticPolynomial((0.05,)),), **kw)
    if name == "rc":
        return CellModel((RCParallel(0.05, 1.0),), **kw)
    if name == "ecm-lti":
        return CellModel((EcmLti(th),), ocv=3.7, **kw)
    if name == "ecm-ltv":
        return CellModel((EcmTimeVarying(th, {"Rct": ramp}),), ocv=3.7, **kw)
    if name == "charging":
        ocv = OcvTable((0.0, 0.1, 0.5, 0.9, 1.0), (3.0, 3.45, 3.7, 4.0, 4.2))
        return CellModel((EcmTimeVarying(th, {"Rct": ramp}),), ocv=ocv, capacity_ah=4.8,
                         soc0=0.2, **kw)
    if name == "quadratic":
        return CellModel((StaticPolynomial((0.05, 0.02)),), **kw)
    if name == "cubic":
        return CellModel((StaticPolynomial((0.05, 0.0, 0.02)),), **kw)
    if name == "butler-volmer":
        return CellModel((StaticPolynomial((th.R0,)), ButlerVolmerStatic(ButlerVolmerParams(1.0))),
                         **kw)
    raise ValidationError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


SCENARIO_OFFSET = {"charging": 2.4}


# --- argument handling ----------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eiskit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"eiskit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with option values (flags win)")
        sp.add_argument("--out", help="output directory (default: current directory)")
        sp.add_argument("--figures", action="store_const", const=True,
                        help="also render PNG figures next to the CSV outputs")

    d = sub.add_parser("design", help="design a multisine and render its current")
    common(d)
    d.add_argument("--fmin", type=float, help="lowest target frequency [Hz]")
    d.add_argument("--fmax", type=float, help="highest target frequency [Hz]")
    d.add_argument("--n", type=int, help="number of excited lines")
    d.add_argument("--tp", type=float, help="period [s]")
    d.add_argument("--fs", type=float, help="sampling rate [Hz]")
    d.add_argument("--odd", dest="odd", action="store_const", const=True,
                   help="odd harmonics only (default)")
    d.add_argument("--all-harmonics", dest="odd", action="store_const", const=False,
                   help="allow even harmonics")
    d.add_argument("--profile", choices=("flat", "inv_sqrt_f"))
    d.add_argument("--rms", type=float, help="RMS current [A]; default: peak line 1 A")
    d.add_argument("--seed", type=int, help="phase seed")
    d.add_argument("--periods", type=int, help="periods to render")
    d.add_argument("--offset", type=float, help="DC current offset [A]")

    s = sub.add_parser("simulate", help="drive a synthetic cell with a designed multisine")
    common(s)
    s.add_argument("--spec", help="multisine JSON from 'design'")
    s.add_argument("--scenario", choices=SCENARIOS)
    s.add_argument("--model", help="cell model JSON (overrides --scenario)")
    s.add_argument("--periods", type=int)
    s.add_argument("--offset", type=float, help="DC current offset [A]")
    s.add_argument("--noise-v", dest="noise_v", type=float, help="voltage noise std [V]")
    s.add_argument("--noise-i", dest="noise_i", type=float, help="current noise std [A]")
    s.add_argument("--seed", type=int, help="noise seed")

    t = sub.add_parser("detect", help="classify a record as LTI, NLTI, LTV or NLTV")
    common(t)
    t.add_argument("--data", help="time-series CSV")
    t.add_argument("--spec", help="multisine JSON")
    t.add_argument("--threshold", type=float, help="detection threshold [dB]")
    t.add_argument("--band-width", dest="band_width", type=int)

    e = sub.add_parser("estimate", help="estimate (time-varying) impedance")
    common(e)
    e.add_argument("--method", choices=METHODS)
    e.add_argument("--data", nargs="+", help="time-series CSV (several for 'random')")
    e.add_argument("--spec", help="multisine JSON")
    e.add_argument("--window", help="taper for 'random' (scipy window name)")
    e.add_argument("--lam", type=float, help="Gaussian parameter [1/s^2] (stft, dmfa gaussian)")
    e.add_argument("--nw", type=int, help="STFT window length in samples (even)")
    e.add_argument("--stride", type=int, help="output time step in samples")
    e.add_argument("--filter", choices=("quadrature", "gaussian"), help="DMFA filter family")
    e.add_argument("--q", type=float, help="quadrature filter roll-off")
    e.add_argument("--filter-width", dest="filter_width", type=int,
                   help="DMFA filter width in bins (even)")
    e.add_argument("--np", type=int, help="operando impedance basis order")
    e.add_argument("--nq", type=int, help="operando drift basis order")
    e.add_argument("--halfwidth", type=int, help="operando band half-width in bins")
    e.add_argument("--neighbours", type=int, help="operando neighbouring lines per side")
    e.add_argument("--hmax", type=int, help="highest NLEIS harmonic")

    f = sub.add_parser("fit", help="fit the battery circuit to a curve or a time-varying surface")
    common(f)
    f.add_argument("--curve", help="impedance curve CSV")
    f.add_argument("--tv", help="time-varying impedance CSV")
    f.add_argument("--band", help="fit band 'lo:hi' in Hz")
    f.add_argument("--seed", type=int)
    f.add_argument("--particles", type=int)
    f.add_argument("--iters", type=int)
    f.add_argument("--starts", type=int, help="local refinements from distinct swarm points")
    f.add_argument("--weighting", choices=("absolute", "relative"))
    f.add_argument("--cold", action="store_const", const=True,
                   help="run the swarm for every time slice instead of warm starting")
    return p


def resolve_config(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = {**COMMON, **DEFAULTS[command]}
    if getattr(args, "config", None):
        try:
            loaded = eio.read_json(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ValidationError("config must be a JSON object")
        loaded = {k.replace("-", "_"): v for k, v in loaded.items() if k != "command"}
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ValidationError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    for k, v in vars(args).items():
        if k in cfg and v is not None:
            cfg[k] = v
    cfg["command"] = command
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, "", []):
            raise ValidationError(f"--{k.replace('_', '-')} is required")


def _out(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, cfg: dict[str, Any]) -> None:
    doc = dict(cfg)
    doc["version"] = __version__
    eio.write_json(out / f"{cfg['command']}.config.json", doc)


def _data_paths(cfg) -> list[str]:
    d = cfg["data"]
    return [d] if isinstance(d, str) else list(d)


def _load_record(path, spec: Optional[MultisineSpec]):
    try:
        return eio.read_timeseries(path, spec)
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None


def _read_spec(path) -> MultisineSpec:
    try:
        return eio.read_spec(path)
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed multisine document ({exc})") from None


# --- commands -------------------------------------------------------------------

def cmd_design(cfg) -> int:
    spec = design_multisine(cfg["fmin"], cfg["fmax"], int(cfg["n"]), cfg["tp"], cfg["fs"],
                            amplitude_profile=cfg["profile"], odd_only=bool(cfg["odd"]),
                            rng_seed=int(cfg["seed"]), rms=cfg["rms"])
    rec = render_multisine(spec, int(cfg["periods"]), i0=cfg["offset"] or None)
    out = _out(cfg)
    eio.write_spec(out / "multisine.json", spec)
    eio.write_timeseries(out / "excitation.csv", rec)
    _write_config(out, cfg)
    print("h,f_hz,I_a,phi_rad")
    for h, f, a, ph in zip(spec.harmonics, spec.frequencies, spec.amplitudes, spec.phases):
        print(f"{int(h)},{f:.12g},{a:.12g},{ph:.12g}")
    log.info("%d excited lines, rms %.6g A", spec.harmonics.size, spec.rms)
    if cfg["figures"]:
        from .plotting import plot_timeseries

        plot_timeseries(rec, out / "excitation.png")
    return EXIT_OK


def cmd_simulate(cfg) -> int:
    _require(cfg, "spec")
    spec = _read_spec(cfg["spec"])
    P = int(cfg["periods"])
    if P < 1:
        raise ValidationError("--periods must be >= 1")
    duration = P * spec.samples_per_period / spec.fs
    if cfg["model"]:
        try:
            model = CellModel.from_dict(eio.read_json(cfg["model"]))
        except FileNotFoundError:
            raise ValidationError(f"no such file: {cfg['model']}") from None
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed model document ({exc})") from None
        if cfg["noise_v"] is not None or cfg["noise_i"] is not None:
            d = model.to_dict()
            for k in ("noise_v", "noise_i"):
                if cfg[k] is not None:
                    d[k] = cfg[k]
            model = CellModel.from_dict(d)
    else:
        model = scenario_model(cfg["scenario"], duration,
                               1e-5 if cfg["noise_v"] is None else cfg["noise_v"],
                               0.0 if cfg["noise_i"] is None else cfg["noise_i"])
    offset = cfg["offset"]
    if offset is None:
        offset = SCENARIO_OFFSET.get(cfg["scenario"], 0.0) if not cfg["model"] else 0.0
    exc = render_multisine(spec, P, i0=offset or None)
    rec = simulate_response(model, exc, rng_seed=int(cfg["seed"]))
    out = _out(cfg)
    eio.write_timeseries(out / "timeseries.csv", rec)
    eio.write_json(out / "model.json", model.to_dict())
    _write_config(out, cfg)
    print(f"wrote {rec.n_samples} samples ({P} periods) to {out / 'timeseries.csv'}")
    if cfg["figures"]:
        from .plotting import plot_timeseries

        plot_timeseries(rec, out / "timeseries.png")
    return EXIT_OK


def cmd_detect(cfg) -> int:
    _require(cfg, "data", "spec")
    spec = _read_spec(cfg["spec"])
    rec = _load_record(_data_paths(cfg)[0], spec)
    rep = classify_record(rec, spec, threshold_db=float(cfg["threshold"]),
                          band_width=int(cfg["band_width"]))
    out = _out(cfg)
    X = dft(rec.voltage, rec.fs)
    eio.write_spectrum(out / "spectrum.csv", X)
    eio.write_json(out / "detection.json", rep.to_dict())
    _write_config(out, cfg)
    print(f"verdict: {rep.classification} (threshold {rep.threshold_db:g} dB, "
          f"dominant parity {rep.dominant_parity})")
    print("quantity,level_db")
    for name, v in (("even_nonlinear", rep.even_nl_level), ("odd_nonlinear", rep.odd_nl_level),
                    ("skirt", rep.skirt_level)):
        print(f"{name},{v:.4f}")
    if cfg["figures"]:
        from .plotting import plot_spectrum

        plot_spectrum(X, out / "spectrum.png", spec.excited_bins(rec.n_periods),
                      title=rep.classification)
    return EXIT_OK


def _default_lam(spec: MultisineSpec) -> float:
    return (2 * math.pi / spec.period) ** 2 / 14.0


def _default_nw(lam: float, fs: float, N: int) -> int:
    half = math.ceil(5.0 / math.sqrt(lam) * fs)
    nw = 2 * half
    return min(nw, (N - 2) // 2 * 2)


def cmd_estimate(cfg) -> int:
    _require(cfg, "data", "spec")
    spec = _read_spec(cfg["spec"])
    paths = _data_paths(cfg)
    recs = [_load_record(p, spec) for p in paths]
    method = cfg["method"]
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    if method != "random" and len(recs) != 1:
        raise ValidationError(f"method {method} takes exactly one record")
    rec = recs[0]
    out = _out(cfg)
    stride = cfg["stride"]
    fig_curve = fig_tv = None
    if method in ("periodic", "random", "bla"):
        if method == "periodic":
            curve = impedance_periodic(rec, spec)
        elif method == "random":
            curve = impedance_random(recs, window=cfg["window"])
        else:
            curve, report = bla_estimate(rec, spec)
            eio.write_json(out / "distortion.json", report.to_dict())
        eio.write_curve(out / "impedance.csv", curve)
        fig_curve = curve
        print(f"wrote {len(curve)} frequencies to {out / 'impedance.csv'}")
    elif method == "nleis":
        coeffs = leading_order_coeffs(rec, h_max=int(cfg["hmax"]), spec=spec)
        eio.write_nleis(out / "nleis.csv", coeffs)
        print(f"wrote {len(coeffs.coeffs)} coefficients to {out / 'nleis.csv'}")
    else:
        sidecar: dict[str, Any] = {"method": method}
        if method == "stft":
            lam = cfg["lam"] if cfg["lam"] is not None else _default_lam(spec)
            nw = cfg["nw"] if cfg["nw"] is not None else _default_nw(lam, rec.fs, rec.n_samples)
            tv = stft_eis(rec, spec, lam, int(nw), stride)
            sidecar.update(lam=lam, nw=int(nw))
        elif method == "dmfa":
            filt = None
            if cfg["filter"] == "gaussian":
                lam = cfg["lam"] if cfg["lam"] is not None else _default_lam(spec)
                width = cfg["filter_width"]
                if width is None:
                    raise ValidationError("--filter gaussian needs --filter-width")
                filt = GaussianFilter(lam, int(width))
                sidecar.update(filter="gaussian", lam=lam, filter_width=int(width))
            elif cfg["filter_width"] is not None:
                w = int(cfg["filter_width"])
                filt = QuadratureFilter(float(cfg["q"]), (w / 4) * 2 * math.pi / rec.duration, w)
                sidecar.update(filter="quadrature", q=float(cfg["q"]), filter_width=w)
            else:
                sidecar.update(filter="quadrature per line", q=float(cfg["q"]))
            tv = dmfa(rec, spec, filt, stride, q=float(cfg["q"]))
        else:
            res = operando_eis(rec, spec, N_p=int(cfg["np"]), N_q=int(cfg["nq"]),
                               band_halfwidth=cfg["halfwidth"],
                               n_neighbours=int(cfg["neighbours"]), stride=stride)
            tv = res.tvimp
            sidecar = res.sidecar()
        eio.write_tv(out / "tv_impedance.csv", tv)
        eio.write_json(out / "tv_impedance.json", sidecar)
        fig_tv = tv
        print(f"wrote {tv.frequencies.size} x {tv.times.size} surface to "
              f"{out / 'tv_impedance.csv'}")
    _write_config(out, cfg)
    if cfg["figures"]:
        from .plotting import plot_curve, plot_tv

        if fig_curve is not None:
            plot_curve(fig_curve, out / "impedance.png", title=method)
        if fig_tv is not None:
            plot_tv(fig_tv, out / "tv_impedance.png")
    return EXIT_OK


def parse_band(text) -> tuple[float, float]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        lo, hi = text
    else:
        parts = str(text).split(":")
        if len(parts) != 2:
            raise ValidationError(f"band must look like 'lo:hi', got {text!r}")
        try:
            lo, hi = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValidationError(f"band must look like 'lo:hi', got {text!r}") from None
    lo, hi = float(lo), float(hi)
    if not (0 < lo < hi):
        raise ValidationError("band needs 0 < lo < hi")
    return lo, hi


def cmd_fit(cfg) -> int:
    if bool(cfg["curve"]) == bool(cfg["tv"]):
        raise ValidationError("give exactly one of --curve and --tv")
    band = parse_band(cfg["band"])
    swarm = {"particles": int(cfg["particles"]), "iters": int(cfg["iters"]),
             "seed": int(cfg["seed"]), "starts": int(cfg["starts"])}
    out = _out(cfg)
    try:
        if cfg["curve"]:
            curve = eio.read_curve(cfg["curve"])
        else:
            tv = eio.read_tv(cfg["tv"])
    except FileNotFoundError as exc:
        raise ValidationError(f"no such file: {exc.filename}") from None
    if cfg["curve"]:
        res = fit_ecm(curve, band=band, swarm=swarm, weighting=cfg["weighting"])
        doc = res.to_dict()
        doc["band_hz"] = list(band)
        eio.write_json(out / "theta.json", doc)
        print(" ".join(f"{k}={v:.6g}" for k, v in res.theta.to_dict().items())
              + f" mre={res.mean_rel_error:.4g}")
        if cfg["figures"]:
            from .classical import ImpedanceCurve
            from .ecm import ecm_impedance
            from .plotting import plot_curve

            sel = curve.band(*band)
            plot_curve(sel, out / "fit_data.png", title="fitted band")
            plot_curve(ImpedanceCurve(sel.frequencies, ecm_impedance(res.theta, sel.omega)),
                       out / "fit_model.png", title="fitted circuit")
    else:
        pts = fit_ecm_trajectory(tv, warm_start=not cfg["cold"], band=band, swarm=swarm,
                                 weighting=cfg["weighting"])
        eio.write_trajectory(out / "trajectory.csv", pts)
        print(f"fitted {len(pts)} time slices; max mre "
              f"{max(p.mean_rel_error for p in pts):.4g}")
        if cfg["figures"]:
            from .plotting import plot_trajectory

            plot_trajectory(pts, out / "trajectory.png")
    _write_config(out, cfg)
    return EXIT_OK


COMMANDS = {"design": cmd_design, "simulate": cmd_simulate, "detect": cmd_detect,
            "estimate": cmd_estimate, "fit": cmd_fit}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = resolve_config(args.command, args)
        with np.errstate(over="ignore", under="ignore"):
            return COMMANDS[args.command](cfg)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"eiskit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"eiskit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
