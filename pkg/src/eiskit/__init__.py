"""Impedance estimation toolkit for electrochemical cells.

Classical, nonlinear and time-varying impedance estimators, a synthetic cell
simulator to check them against, and an equivalent circuit fitter.
"""

__version__ = "0.1.0"

from .signals import (MultisineSpec, TimeSeriesRecord, crest_factor, design_multisine,
                      legendre_basis, render_multisine)
from .spectra import (GaussianFilter, QuadratureFilter, Spectrum, band_extract, dft, idft,
                      stft_window_gaussian, time_frequency_spread)
from .cellsim import (ButlerVolmerParams, ButlerVolmerStatic, CellModel, EcmLti,
                      EcmTimeVarying, OcvTable, PiecewiseLinear, RCParallel, StaticPolynomial,
                      simulate_response, volterra_single_sine_harmonics)
from .detect import DetectionReport, classify_record, noise_floor, snr_at_excited
from .classical import (ImpedanceCurve, KKResult, admittance_periodic, impedance_periodic,
                        impedance_random, kk_consistency)
from .nleis import (DistortionReport, NonlinearCoefficients, amplitude_sweep_extrapolate,
                    bla_estimate, leading_order_coeffs)
from .tvimp import OperandoResult, TimeVaryingImpedance, dmfa, operando_eis, stft_eis
from .ecm import (EcmFitResult, EcmParams, ecm_impedance, fit_ecm, fit_ecm_trajectory)

__all__ = [
    "MultisineSpec", "TimeSeriesRecord", "crest_factor", "design_multisine", "legendre_basis",
    "render_multisine", "GaussianFilter", "QuadratureFilter", "Spectrum", "band_extract", "dft",
    "idft", "stft_window_gaussian", "time_frequency_spread", "ButlerVolmerParams",
    "ButlerVolmerStatic", "CellModel", "EcmLti", "EcmTimeVarying", "OcvTable",
    "PiecewiseLinear", "RCParallel", "StaticPolynomial", "simulate_response",
    "volterra_single_sine_harmonics", "DetectionReport", "classify_record", "noise_floor",
    "snr_at_excited", "ImpedanceCurve", "KKResult", "admittance_periodic",
    "impedance_periodic", "impedance_random", "kk_consistency", "DistortionReport",
    "NonlinearCoefficients", "amplitude_sweep_extrapolate", "bla_estimate",
    "leading_order_coeffs", "OperandoResult", "TimeVaryingImpedance", "dmfa", "operando_eis",
    "stft_eis", "EcmFitResult", "EcmParams", "ecm_impedance", "fit_ecm", "fit_ecm_trajectory",
]
