"""Frequency-domain primitives: periodogram, binning and range selection.

All displacement values are held in femtometers, so periodogram ordinates are
in fm^2 and ``ordinates / fs`` is a PSD level in fm^2/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "UNIT_TO_FM",
    "TimeSeries",
    "Periodogram",
    "BinnedPeriodogram",
    "periodogram",
    "bin_periodogram",
    "select_range",
    "sqrt2_range",
    "EmptyBinningError",
    "RangeError",
]

#: Conversion factors from supported input units to femtometers.
UNIT_TO_FM = {"m": 1e15, "um": 1e9, "nm": 1e6, "pm": 1e3, "fm": 1.0}


class EmptyBinningError(ValueError):
    """Bin size larger than the number of available ordinates."""


class RangeError(ValueError):
    """Frequency window selects no ordinates."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled displacement record.

    Parameters
    ----------
    samples : array_like
        Displacement values in ``unit``; converted to femtometers on construction.
    fs : float
        Sampling frequency in Hz.
    unit : str
        Unit of ``samples``; one of ``UNIT_TO_FM``.
    """

    samples: np.ndarray
    fs: float
    unit: str = "fm"

    def __post_init__(self):
        if self.unit not in UNIT_TO_FM:
            raise ValueError(f"unknown displacement unit {self.unit!r}")
        x = np.asarray(self.samples, dtype=float).ravel() * UNIT_TO_FM[self.unit]
        if not np.isfinite(self.fs) or self.fs <= 0:
            raise ValueError("fs must be a positive finite number")
        if x.size < 2:
            raise ValueError("a time series needs at least two samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("time series contains non-finite samples")
        object.__setattr__(self, "samples", _frozen(x))
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "unit", "fm")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.n / self.fs


@dataclass(frozen=True)
class Periodogram:
    """Periodogram ordinates ``Y_k = |X_k|^2 / N`` at ``f_k = k fs / N``.

    DC and Nyquist are never included.
    """

    freqs: np.ndarray
    ordinates: np.ndarray
    fs: float
    n_source: int
    index: np.ndarray = field(default=None)

    def __post_init__(self):
        f = _frozen(self.freqs)
        y = _frozen(self.ordinates)
        if f.shape != y.shape or f.ndim != 1:
            raise ValueError("freqs and ordinates must be 1-d arrays of equal length")
        if f.size and np.any(np.diff(f) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if np.any(y < 0):
            raise ValueError("periodogram ordinates must be non-negative")
        idx = self.index
        if idx is None:
            idx = np.rint(f * self.n_source / self.fs)
        idx = np.asarray(idx, dtype=np.int64)
        idx.flags.writeable = False
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "ordinates", y)
        object.__setattr__(self, "index", idx)

    def __len__(self):
        return self.freqs.size

    @property
    def psd(self) -> np.ndarray:
        """Ordinates rescaled to a one-sided PSD level (fm^2/Hz)."""
        return self.ordinates / self.fs

    def with_ordinates(self, ordinates) -> "Periodogram":
        return replace(self, ordinates=ordinates)

    def scaled(self, c: float) -> "Periodogram":
        return self.with_ordinates(c * self.ordinates)


@dataclass(frozen=True)
class BinnedPeriodogram:
    """Means of ``bin_size`` consecutive periodogram ordinates."""

    bin_freqs: np.ndarray
    bin_means: np.ndarray
    bin_size: int
    fs: float

    def __post_init__(self):
        object.__setattr__(self, "bin_freqs", _frozen(self.bin_freqs))
        object.__setattr__(self, "bin_means", _frozen(self.bin_means))

    @property
    def n_bins(self) -> int:
        return self.bin_means.size

    def __len__(self):
        return self.n_bins


def periodogram(ts: TimeSeries) -> Periodogram:
    """Periodogram of a mean-centred series, ordinates ``k = 1 .. floor((N-1)/2)``."""
    x = ts.samples - ts.samples.mean()
    n = x.size
    kmax = (n - 1) // 2
    xf = np.fft.rfft(x)[1 : kmax + 1]
    y = (xf.real**2 + xf.imag**2) / n
    k = np.arange(1, kmax + 1)
    return Periodogram(freqs=k * ts.fs / n, ordinates=y, fs=ts.fs, n_source=n, index=k)


def bin_periodogram(p: Periodogram, bin_size: int) -> BinnedPeriodogram:
    """Average ``bin_size`` consecutive ordinates; a trailing partial bin is dropped."""
    b = int(bin_size)
    if b != bin_size or b < 1:
        raise ValueError("bin size must be a positive integer")
    nb = len(p) // b
    if nb == 0:
        raise EmptyBinningError(f"bin size {b} exceeds the {len(p)} available ordinates")
    m = nb * b
    if b == 1:
        return BinnedPeriodogram(p.freqs.copy(), p.ordinates.copy(), 1, p.fs)
    fb = p.freqs[:m].reshape(nb, b).mean(axis=1)
    yb = p.ordinates[:m].reshape(nb, b).mean(axis=1)
    return BinnedPeriodogram(fb, yb, b, p.fs)


def select_range(p: Periodogram, f_lo: float, f_hi: float) -> Periodogram:
    """Keep ordinates with ``f_lo <= f_k <= f_hi``."""
    if not (0 < f_lo < f_hi):
        raise ValueError("need 0 < f_lo < f_hi")
    keep = (p.freqs >= f_lo) & (p.freqs <= f_hi)
    if not keep.any():
        raise RangeError(f"no periodogram frequencies in [{f_lo}, {f_hi}] Hz")
    return Periodogram(p.freqs[keep], p.ordinates[keep], p.fs, p.n_source, p.index[keep])


def sqrt2_range(f0: float) -> tuple[float, float]:
    """The customary fitting window ``f0 +/- f0/sqrt(2)``."""
    half = f0 / np.sqrt(2.0)
    return f0 - half, f0 + half
