import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import get_window

from eiskit.signals import MultisineSpec, legendre_basis, render_multisine
from eiskit.spectra import (GaussianFilter, QuadratureFilter, Spectrum, band_extract, dft,
                            filter_offsets, gaussian_window_transform, idft,
                            quadrature_filter_weights, stft_window_gaussian,
                            time_frequency_spread)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
signals = arrays(np.float64, st.integers(1, 64), elements=finite)


def direct_dft(x):
    N = len(x)
    n = np.arange(N)
    return np.array([np.sum(x * np.exp(-2j * np.pi * k * n / N)) for k in range(N)]) / N


# --- dft / idft --------------------------------------------------------------------

def test_dft_constant():
    X = dft(np.full(10, 3.5)).bins
    assert X[0] == pytest.approx(3.5)
    assert np.max(np.abs(X[1:])) < 1e-15


def test_dft_cosine_euler_split():
    N = 8
    X = dft(np.cos(2 * np.pi * np.arange(N) / N)).bins
    assert X[1] == pytest.approx(0.5) and X[7] == pytest.approx(0.5)
    assert np.max(np.abs(np.delete(X, [1, 7]))) < 1e-15


def test_dft_of_rendered_two_line_multisine_matches_direct_sum():
    s = MultisineSpec(1.0, [1, 3], [1.0, 1.0], [0.4, 2.0], 32.0)
    x = render_multisine(s, 1).current
    X = dft(x, s.fs).bins
    assert np.allclose(X, direct_dft(x), atol=1e-14)
    assert abs(X[1]) == pytest.approx(0.5) and abs(X[3]) == pytest.approx(0.5)


def test_idft_examples():
    X = np.zeros(16, dtype=complex)
    X[0] = 2.0
    assert np.allclose(idft(X), 2.0)
    assert np.isrealobj(idft(X))
    X = np.zeros(16, dtype=complex)
    X[1] = 0.5
    n = np.arange(16)
    assert np.allclose(idft(X), 0.5 * np.exp(2j * np.pi * n / 16), atol=1e-15)


def test_round_trip_random(rng):
    x = rng.standard_normal(128)
    assert np.max(np.abs(idft(dft(x)) - x)) < 1e-10


def test_empty_input_errors():
    with pytest.raises(ValueError):
        dft([])
    with pytest.raises(ValueError):
        idft(np.zeros(0))


@given(signals)
def test_dft_matches_direct_sum(x):
    assert np.allclose(dft(x).bins, direct_dft(x), atol=1e-9 * max(1.0, np.max(np.abs(x))))


@given(signals)
def test_parseval_and_conjugate_symmetry(x):
    X = dft(x).bins
    e_t = np.sum(x**2) / x.size
    e_f = np.sum(np.abs(X) ** 2)
    assert e_f == pytest.approx(e_t, rel=1e-10, abs=1e-300)
    mirror = np.conj(np.roll(X[::-1], 1))
    assert np.max(np.abs(X - mirror)) <= 1e-12 * max(1.0, np.max(np.abs(X)))


@given(signals, finite, finite)
def test_linearity(x, a, b):
    y = np.cos(np.arange(x.size))
    lhs = dft(a * x + b * y).bins
    rhs = a * dft(x).bins + b * dft(y).bins
    scale = max(1.0, np.max(np.abs(a * x)) + np.max(np.abs(b * y)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_spectrum_grid():
    X = dft(np.zeros(100), fs=50.0)
    assert X.freqs[1] == pytest.approx(0.5)
    assert X.bin_spacing == pytest.approx(2 * np.pi * 0.5)
    assert X.duration == pytest.approx(2.0)


# --- Gaussian window -------------------------------------------------------------------

def test_gaussian_window_peak_and_symmetry():
    w = stft_window_gaussian(2.0, 50, 10.0)
    assert w.size == 101
    assert w[50] == 1.0
    assert np.array_equal(w, w[::-1])
    with pytest.raises(ValueError):
        stft_window_gaussian(0.0, 5, 1.0)


def test_gaussian_window_transform_matches_numeric_ft():
    lam, fs = 3.0, 200.0
    w = stft_window_gaussian(lam, 2000, fs)
    t = np.arange(-2000, 2001) / fs
    omega = np.linspace(-2 * np.sqrt(lam), 2 * np.sqrt(lam), 41)
    numeric = (w[None, :] * np.exp(-1j * omega[:, None] * t[None, :])).sum(axis=1) / fs
    exact = gaussian_window_transform(lam, omega)
    assert np.max(np.abs(numeric - exact) / exact) < 1e-6


def test_gabor_product_and_lambda_scaling():
    fs = 100.0
    st1, sw1 = time_frequency_spread(stft_window_gaussian(1.0, 1500, fs), fs)
    st2, _ = time_frequency_spread(stft_window_gaussian(2.0, 1500, fs), fs)
    assert st1 * sw1 == pytest.approx(0.25, abs=1e-4)
    assert st2 == pytest.approx(st1 / 2, rel=1e-6)
    # continuous values: sigma_t^2 = 1/(2 lam), sigma_w^2 = lam/2
    assert st1 == pytest.approx(0.5, rel=1e-6)
    assert sw1 == pytest.approx(0.5, rel=1e-6)


@pytest.mark.parametrize("name", ["hann", "hamming", "blackman", "boxcar", "bartlett",
                                  ("kaiser", 8.0), ("tukey", 0.5)])
def test_gabor_inequality_for_common_windows(name):
    w = get_window(name, 401, fftbins=False)
    st2, sw2 = time_frequency_spread(w, 100.0)
    assert st2 * sw2 >= 0.25 - 1e-6


# --- quadrature filter ---------------------------------------------------------------------

def test_quadrature_filter_values():
    f = QuadratureFilter(q=5.0, delta_omega=2.0, N_W=8)
    # closed form at omega = 0 is (1 + e^-q^2)^2 / (1 + e^-q)^2 for q = 5 (frozen)
    assert f.response(0.0) == pytest.approx(0.9866590924323306, rel=1e-12)
    assert f.response(2.0) == pytest.approx(0.49997730107953614, rel=1e-12)
    assert abs(f.response(2.0) - 0.5) < 0.01
    sharp = QuadratureFilter(q=50.0, delta_omega=2.0, N_W=8)
    assert sharp.response(3.0) < 1e-10
    assert sharp.response(0.0) == pytest.approx(1.0, abs=1e-15)


def test_quadrature_filter_monotone_outside_band():
    f = QuadratureFilter(q=5.0, delta_omega=1.0, N_W=40)
    om = np.linspace(1.0, 10.0, 200)
    r = f.response(om)
    assert np.all(np.diff(r) < 0)
    assert np.allclose(f.response(-om), r)


@pytest.mark.parametrize("kw", [dict(q=0, delta_omega=1, N_W=4), dict(q=1, delta_omega=-1, N_W=4),
                                dict(q=1, delta_omega=1, N_W=3), dict(q=1, delta_omega=1, N_W=0)])
def test_quadrature_filter_invariants(kw):
    with pytest.raises(ValueError):
        QuadratureFilter(**kw)


def test_filter_weights_on_symmetric_offsets():
    assert list(filter_offsets(4)) == [-2, -1, 0, 1, 2]
    f = QuadratureFilter(q=5.0, delta_omega=1.0, N_W=4)
    w = quadrature_filter_weights(f, 0.5)
    assert np.allclose(w, f.response(np.array([-1.0, -0.5, 0.0, 0.5, 1.0])))
    with pytest.raises(ValueError):
        quadrature_filter_weights(f, 0.0)


# --- band extraction --------------------------------------------------------------------------

def test_band_extract_stationary_sine_constant_envelope():
    N, c = 1024, 100
    x = 0.7 * np.cos(2 * np.pi * c * np.arange(N) / N + 0.3)
    X = dft(x)
    brick = QuadratureFilter(q=50.0, delta_omega=8 * X.bin_spacing, N_W=32)
    env = band_extract(X, c, brick)
    assert np.allclose(np.abs(env), abs(X.bins[c]), rtol=1e-12)


def test_band_extract_tracks_amplitude_modulation():
    N, c, fs = 4096, 400, 1.0
    t = np.arange(N) / fs
    a = 1 + 0.1 * legendre_basis(1, N / fs, t)[:, 1]
    X = dft(a * np.cos(2 * np.pi * c * t / N))
    filt = QuadratureFilter(q=50.0, delta_omega=100 * X.bin_spacing, N_W=256)
    n = np.arange(0, N, 16)
    env = 2 * np.abs(band_extract(X, c, filt, times=n))
    inner = (n > 0.1 * N) & (n < 0.9 * N)
    assert np.max(np.abs(env[inner] / a[n[inner]] - 1)) < 0.01


def test_band_extract_zero_band_and_edges():
    X = Spectrum(64, 1.0, np.zeros(64, dtype=complex))
    f = QuadratureFilter(5.0, 1.0, 8)
    assert np.all(band_extract(X, 10, f) == 0)
    with pytest.raises(ValueError):
        band_extract(X, 3, f)
    with pytest.raises(ValueError):
        band_extract(X, 30, f)


def test_band_extract_baseband_only_removes_carrier():
    rng = np.random.default_rng(0)
    X = dft(rng.standard_normal(256))
    f = GaussianFilter(lam=1e-3, N_W=16)
    n = np.arange(0, 256, 8)
    a = band_extract(X, 40, f, times=n)
    b = band_extract(X, 40, f, times=n, baseband=False)
    assert np.allclose(b, a * np.exp(2j * np.pi * 40 * n / 256))
