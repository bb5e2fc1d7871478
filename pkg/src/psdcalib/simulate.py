"""Spectral synthesis of stationary Gaussian series and sine-wave injection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .models import ShoParams, psd_eval
from .spectral import TimeSeries

__all__ = [
    "MAX_SAMPLES",
    "CapacityError",
    "Sine",
    "JitteredSine",
    "SimSpec",
    "synthesize",
    "inject_sine",
    "amplitude_for_ratio",
    "draw_sine",
    "simulate",
]

#: Largest series synthesize() will allocate (about 4 GB of float64 work arrays).
MAX_SAMPLES = 2**28


class CapacityError(MemoryError):
    """Requested series is too long to synthesize in memory."""


@dataclass(frozen=True)
class Sine:
    """Fixed tone ``D sin(2 pi zeta t + phi)``; ``D`` in fm, ``zeta`` in Hz."""

    amplitude: float
    freq: float
    phase: float = 0.0


@dataclass(frozen=True)
class JitteredSine:
    """Random tone: ``zeta ~ Normal(f0, freq_sd)``, ``phi ~ Uniform(0, 2 pi)``.

    The amplitude is chosen by :func:`amplitude_for_ratio` so that the tone
    lifts the ``bin_size``-binned periodogram to ``ratio`` times the PSD peak.
    """

    ratio: float = 10.0
    freq_sd: float = 10.0
    bin_size: int = 1


@dataclass(frozen=True)
class SimSpec:
    model: ShoParams
    duration: float
    fs: float
    sine: Optional[Union[Sine, JitteredSine]] = None
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        n = self.duration * self.fs
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError("duration * fs must be an integer number of samples")
        return int(round(n))

    def __post_init__(self):
        if not (self.fs > 0 and self.duration > 0):
            raise ValueError("fs and duration must be positive")
        if self.n < 2:
            raise ValueError("a simulation needs at least two samples")


def _seed_sequence(seed) -> np.random.SeedSequence:
    # a fresh copy, so spawning below never advances the caller's object
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synthesize(spec: SimSpec, rng=None) -> TimeSeries:
    """Draw a zero-mean Gaussian series whose periodogram is ``fs S(f_k) Expo(1)``.

    Independent complex normal Fourier coefficients with ``E|X_k|^2 = N fs S(f_k)``
    are placed on the positive frequencies (DC and Nyquist left at zero) and
    inverse transformed; the result is real by construction.  The sine term
    of ``spec`` is not applied here, see :func:`simulate`.
    """
    n = spec.n
    if n > MAX_SAMPLES:
        raise CapacityError(f"N = {n} exceeds the synthesis limit of {MAX_SAMPLES} samples")
    rng = _rng(spec.seed if rng is None else rng)
    kmax = (n - 1) // 2
    k = np.arange(1, kmax + 1)
    s = psd_eval(spec.model, k * spec.fs / n)
    sd = np.sqrt(0.5 * n * spec.fs * s)
    coef = np.zeros(n // 2 + 1, dtype=complex)
    z = rng.standard_normal((2, kmax))
    coef[1 : kmax + 1] = sd * (z[0] + 1j * z[1])
    x = np.fft.irfft(coef, n=n)
    return TimeSeries(x, spec.fs)


def inject_sine(ts: TimeSeries, amplitude: float, freq: float, phase: float = 0.0) -> TimeSeries:
    """Add ``amplitude * sin(2 pi freq n / fs + phase)`` sample-wise (amplitude in fm)."""
    if not 0 < freq < ts.fs / 2:
        raise ValueError("tone frequency must lie strictly between 0 and fs/2")
    if amplitude == 0:
        return ts
    t = np.arange(ts.n) / ts.fs
    return TimeSeries(ts.samples + amplitude * np.sin(2 * np.pi * freq * t + phase), ts.fs)


def amplitude_for_ratio(model: ShoParams, ratio: float, n: int, fs: float, bin_size: int = 1) -> float:
    """Tone amplitude ``D`` (fm) reaching ``ratio`` times the peak PSD.

    An on-grid tone adds ``N D^2 / 4`` to one ordinate, hence
    ``N D^2 / (4 B) = ratio * fs * S(f0)``.  ``B = 1`` measures the ratio on
    the raw periodogram, larger ``B`` on the ``B``-binned periodogram.
    """
    if ratio < 0:
        raise ValueError("ratio must be non-negative")
    peak = float(psd_eval(model, model.f0))
    return float(np.sqrt(4.0 * bin_size * ratio * fs * peak / n))


def draw_sine(spec: SimSpec, rng) -> Sine:
    """Resolve the sine recipe of ``spec`` to a concrete tone."""
    sine = spec.sine
    if sine is None or isinstance(sine, Sine):
        return sine
    rng = _rng(rng)
    zeta = rng.normal(spec.model.f0, sine.freq_sd)
    phi = rng.uniform(0.0, 2 * np.pi)
    d = amplitude_for_ratio(spec.model, sine.ratio, spec.n, spec.fs, sine.bin_size)
    return Sine(d, float(zeta), float(phi))


def simulate(spec: SimSpec, seed=None) -> tuple[TimeSeries, TimeSeries, Optional[Sine]]:
    """Synthesize the clean series and, if requested, its tone-contaminated copy.

    Two independent child streams of ``seed`` (an int or SeedSequence, default
    ``spec.seed``) drive the Gaussian process and the tone draw, so the clean
    series does not depend on whether a tone is added.

    Returns
    -------
    clean, contaminated, tone
        ``contaminated is clean`` and ``tone is None`` without a sine recipe.
    """
    base_ss, tone_ss = _seed_sequence(spec.seed if seed is None else seed).spawn(2)
    clean = synthesize(spec, np.random.default_rng(base_ss))
    tone = draw_sine(spec, np.random.default_rng(tone_ss))
    if tone is None:
        return clean, clean, None
    return clean, inject_sine(clean, tone.amplitude, tone.freq, tone.phase), tone
