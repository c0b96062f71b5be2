import numpy as np
import pytest

from eiskit.cellsim import CellModel, EcmLti, RCParallel, StaticPolynomial, simulate_response
from eiskit.classical import (ImpedanceCurve, admittance_periodic, impedance_periodic,
                              impedance_random, kk_consistency)
from eiskit.ecm import ecm_impedance
from eiskit.signals import MultisineSpec, TimeSeriesRecord, design_multisine, render_multisine

SPEC = design_multisine(0.1, 20.0, 30, 10.0, 100.0, rng_seed=4, rms=0.5)


def periodic(model, P=4, seed=0, spec=SPEC):
    return simulate_response(model, render_multisine(spec, P), rng_seed=seed)


def white(model, N, seed, fs=100.0):
    rng = np.random.default_rng(seed)
    exc = TimeSeriesRecord(fs, 1, rng.standard_normal(N))
    return simulate_response(model, exc, rng_seed=seed + 1000)


# --- curve type -------------------------------------------------------------------

def test_curve_invariants():
    with pytest.raises(ValueError):
        ImpedanceCurve([0.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        ImpedanceCurve([2.0, 1.0], [1, 1])
    with pytest.raises(ValueError):
        ImpedanceCurve([1.0, 2.0], [1, 1], std=[1])
    c = ImpedanceCurve([1.0, 2.0, 3.0], [1, 2, 3])
    assert len(c.band(1.5, 3.0)) == 2
    assert c.omega[0] == pytest.approx(2 * np.pi)


# --- periodic ---------------------------------------------------------------------

def test_resistor_exact():
    c = impedance_periodic(periodic(CellModel((StaticPolynomial((0.05,)),))), SPEC)
    assert np.max(np.abs(c.values - 0.05)) < 1e-12
    assert c.meta["P"] == 4


def test_rc_closed_form_at_one_rad_per_second():
    spec = MultisineSpec(2 * np.pi, [1, 3], [1.0, 1.0], [0.0, 1.0], 64 / (2 * np.pi))
    c = impedance_periodic(periodic(CellModel((RCParallel(0.05, 1.0),)), P=2, spec=spec))
    assert c.frequencies[0] == pytest.approx(1 / (2 * np.pi))
    assert c.values[0] == pytest.approx(0.049875311720698 - 0.0024937655860349j, abs=1e-9)
    assert c.values[0] == pytest.approx(0.05 / (1 + 0.05j), abs=1e-12)


def test_ecm_matches_truth_noiseless(theta):
    c = impedance_periodic(periodic(CellModel((EcmLti(theta),), ocv=3.7)))
    truth = ecm_impedance(theta, c.omega)
    assert np.max(np.abs(c.values - truth) / np.abs(truth)) < 1e-10


def test_error_halves_with_four_times_the_periods():
    model = CellModel((RCParallel(0.05, 1.0),), noise_v=1e-4)
    rms = {}
    for P in (10, 40):
        errs = []
        for s in range(20):
            c = impedance_periodic(periodic(model, P=P, seed=s))
            truth = RCParallel(0.05, 1.0).transfer(c.omega)
            errs.append(np.mean(np.abs(c.values - truth) ** 2))
        rms[P] = np.sqrt(np.mean(errs))
    assert rms[10] / rms[40] == pytest.approx(2.0, rel=0.3)


def test_std_channel_tracks_actual_scatter():
    model = CellModel((RCParallel(0.05, 1.0),), noise_v=1e-4)
    dev, pred = [], []
    for s in range(40):
        c = impedance_periodic(periodic(model, P=8, seed=s))
        dev.append(c.values.real - RCParallel(0.05, 1.0).transfer(c.omega).real)
        pred.append(c.std.real)
    ratio = np.std(dev, axis=0) / np.mean(pred, axis=0)
    assert np.median(ratio) == pytest.approx(1.0, rel=0.3)


def test_ocv_offset_invariance(theta):
    a = impedance_periodic(periodic(CellModel((EcmLti(theta),))))
    b = impedance_periodic(periodic(CellModel((EcmLti(theta),), ocv=3.7)))
    assert np.max(np.abs(a.values - b.values)) < 1e-12


def test_admittance_reciprocal(theta):
    rec = periodic(CellModel((EcmLti(theta),)))
    Z = impedance_periodic(rec).values
    Y = admittance_periodic(rec).values
    assert np.max(np.abs(Y * Z - 1)) < 1e-9


def test_mirror_bin_conjugate_symmetry(theta):
    rec = periodic(CellModel((EcmLti(theta),)))
    k = 4 * SPEC.harmonics
    V = np.fft.fft(rec.voltage)
    I = np.fft.fft(rec.current)
    N = rec.n_samples
    assert np.allclose(V[N - k] / I[N - k], np.conj(V[k] / I[k]), rtol=1e-12)


def test_periodic_errors(theta):
    rec = periodic(CellModel((EcmLti(theta),)))
    with pytest.raises(ValueError):
        impedance_periodic(rec, SPEC, P=3)
    with pytest.raises(ValueError):
        impedance_periodic(TimeSeriesRecord(rec.fs, 4, rec.current), SPEC)
    silent = TimeSeriesRecord(rec.fs, 4, np.zeros(rec.n_samples), rec.voltage)
    with pytest.raises(ValueError):
        impedance_periodic(silent, SPEC)


# --- random excitation ---------------------------------------------------------------

def test_random_resistor_white_noise():
    model = CellModel((StaticPolynomial((0.05,)),), noise_v=1e-3)
    c = impedance_random([white(model, 2048, s) for s in range(20)])
    mid = c.band(1.0, 40.0)
    assert np.max(np.abs(mid.values - 0.05) / 0.05) < 0.02


def test_random_rc_white_noise():
    rc = RCParallel(0.05, 1.0)
    c = impedance_random([white(CellModel((rc,), noise_v=1e-4), 4096, s) for s in range(50)])
    mid = c.band(0.5, 20.0)
    truth = rc.transfer(mid.omega)
    assert np.max(np.abs(mid.values - truth) / np.abs(truth)) < 0.02


def test_random_single_periodic_record_equals_periodic(theta):
    rec = periodic(CellModel((EcmLti(theta),)))
    per = impedance_periodic(rec)
    rnd = impedance_random([rec], window="boxcar")
    idx = np.searchsorted(rnd.frequencies, per.frequencies)
    assert np.allclose(rnd.frequencies[idx], per.frequencies)
    assert np.max(np.abs(rnd.values[idx] - per.values)) < 1e-10


def test_random_errors():
    a = TimeSeriesRecord(10.0, 1, np.ones(64), np.ones(64))
    b = TimeSeriesRecord(10.0, 1, np.ones(32), np.ones(32))
    with pytest.raises(ValueError):
        impedance_random([a, b])
    with pytest.raises(ValueError):
        impedance_random([])
    z = TimeSeriesRecord(10.0, 1, np.zeros(64), np.ones(64))
    with pytest.raises(ValueError):
        impedance_random([z])


# --- Kramers-Kronig ----------------------------------------------------------------------

def rc_curve(n=60):
    f = np.geomspace(0.01, 100.0, n)
    return ImpedanceCurve(f, 0.02 + RCParallel(0.05, 1.0).transfer(2 * np.pi * f))


def test_kk_passes_on_lti_model():
    r = kk_consistency(rc_curve())
    assert r.passed
    assert r.fit_error_imag < 0.005
    assert r.taus.size == 20


def test_kk_default_voigt_count_needs_dense_curves():
    # a third of the points as Voigt elements resolves R//C only on dense grids
    assert kk_consistency(rc_curve(45)).fit_error_imag < 0.005
    assert kk_consistency(rc_curve(15)).verdict == "FAIL"


def test_kk_reports_on_battery_model(theta):
    # the diffusion tail extends below the lowest frequency, where a real-part
    # fit has no time constants to absorb it; the check is advisory here
    f = np.geomspace(0.01, 100.0, 60)
    r = kk_consistency(ImpedanceCurve(f, ecm_impedance(theta, 2 * np.pi * f)))
    assert r.fit_error_real < 1e-3
    assert np.isfinite(r.fit_error_imag) and r.verdict in ("PASS", "FAIL")


def test_kk_fails_on_half_sign_flip():
    c = rc_curve()
    Z = c.values.copy()
    Z[::2] = Z[::2].real - 1j * Z[::2].imag
    r = kk_consistency(ImpedanceCurve(c.frequencies, Z))
    assert r.verdict == "FAIL"


def test_kk_preconditions():
    with pytest.raises(ValueError):
        kk_consistency(rc_curve(7))
    f = np.geomspace(1.0, 50.0, 20)
    with pytest.raises(ValueError):
        kk_consistency(ImpedanceCurve(f, np.ones(20)))
    with pytest.raises(np.linalg.LinAlgError):
        kk_consistency(rc_curve(), n_voigt=29, max_condition=1e3)
