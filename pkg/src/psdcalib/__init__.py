"""Parametric PSD fitting for thermally driven harmonic oscillators.

Periodogram tools, NLS / log-periodogram / Whittle estimators of the SHO
model, Fisher's g-test denoising, spectral synthesis and a Monte-Carlo
study harness.
"""

__version__ = "0.1.0"

from .denoise import DenoiseReport, denoise, g_statistic, g_tail_prob, solve_cutoff, two_stage_fit
from .estimators import FitOptions, FitResult, fit, fit_periodogram, fit_two_step_1f, objective, profile_tau, std_errors
from .models import ProfiledParams, ShoParams, psd_eval, to_profiled, to_sho
from .simulate import JitteredSine, Sine, SimSpec, amplitude_for_ratio, inject_sine, simulate, synthesize
from .spectral import BinnedPeriodogram, Periodogram, TimeSeries, bin_periodogram, periodogram, select_range, sqrt2_range

__all__ = [
    "__version__",
    "TimeSeries",
    "Periodogram",
    "BinnedPeriodogram",
    "periodogram",
    "bin_periodogram",
    "select_range",
    "sqrt2_range",
    "ShoParams",
    "ProfiledParams",
    "psd_eval",
    "to_profiled",
    "to_sho",
    "FitOptions",
    "FitResult",
    "fit",
    "fit_periodogram",
    "fit_two_step_1f",
    "objective",
    "profile_tau",
    "std_errors",
    "DenoiseReport",
    "denoise",
    "g_statistic",
    "g_tail_prob",
    "solve_cutoff",
    "two_stage_fit",
    "JitteredSine",
    "Sine",
    "SimSpec",
    "amplitude_for_ratio",
    "inject_sine",
    "simulate",
    "synthesize",
]
