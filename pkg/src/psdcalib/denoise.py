"""Fisher's g-test and the two-stage fit with periodic-noise removal.

The g-statistic ``M = max_k W_k / sum_j W_j`` with ``W_k = Y_k / S_k`` has an
exact null distribution when the ``W_k`` are iid Expo(1).  :func:`denoise`
repeatedly tests the in-range periodogram against a preliminary model and
replaces the most significant ordinate by a fresh ``S_k * Expo(1)`` draw
until the test stops rejecting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import mpmath
import numpy as np
from scipy.special import gammaln

from .estimators import FitOptions, FitResult, fit, fit_periodogram
from .models import DEFAULT_TEMPERATURE, ShoParams, psd_eval
from .spectral import Periodogram, bin_periodogram

__all__ = [
    "g_statistic",
    "g_tail_prob",
    "solve_cutoff",
    "FlaggedOrdinate",
    "DenoiseReport",
    "denoise",
    "clean_periodogram",
    "two_stage_fit",
]

log = logging.getLogger(__name__)

# Largest alternating-series term tolerated in double precision; beyond it
# cancellation would cost more than ~1e-14 absolute accuracy.
_MAX_DOUBLE_TERM = 1e2


def g_statistic(y, s) -> tuple[float, int]:
    """Fisher's g-statistic of ordinates ``y`` against model values ``s``.

    Returns
    -------
    M : float
        Largest share ``W_k / sum(W)``, in ``[1/K, 1]``.
    index : int
        Position of the first maximizer.
    """
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    if y.shape != s.shape or y.ndim != 1 or y.size < 2:
        raise ValueError("y and s must be 1-d arrays of equal length >= 2")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("model values must be strictly positive")
    w = y / s
    total = w.sum()
    if not total > 0:
        raise ValueError("all normalized ordinates are zero")
    i = int(np.argmax(w))
    return float(w[i] / total), i


def _tail_terms_log(a: float, K: int) -> np.ndarray:
    kmax = min(K, math.ceil(1.0 / a) - 1)
    k = np.arange(1, kmax + 1, dtype=float)
    k = k[k * a < 1.0]
    if k.size == 0:
        return k
    return gammaln(K + 1) - gammaln(k + 1) - gammaln(K - k + 1) + (K - 1) * np.log1p(-k * a)


def _tail_mp(a: float, K: int, digits: int) -> float:
    with mpmath.workdps(digits):
        am = mpmath.mpf(a)
        total = mpmath.mpf(0)
        k = 1
        while k <= K and k * am < 1:
            term = mpmath.binomial(K, k) * (1 - k * am) ** (K - 1)
            total += term if k % 2 else -term
            k += 1
        return float(total)


def g_tail_prob(a: float, K: int) -> float:
    """Null tail probability ``Pr(M > a)`` for ``K`` ordinates.

    Exact alternating series ``sum_k (-1)^(k+1) C(K, k) (1 - k a)_+^(K-1)``.
    Term magnitudes are formed in log space and summed with compensation;
    when the largest term would cancel catastrophically in double precision
    the sum is recomputed with mpmath at sufficient working precision.
    """
    K = int(K)
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0 < a < 1:
        if a >= 1:
            return 0.0
        return 1.0
    if K == 1 or a <= 1.0 / K:
        return 1.0
    logs = _tail_terms_log(a, K)
    if logs.size == 0:
        return 0.0
    peak = float(logs.max())
    if peak > math.log(_MAX_DOUBLE_TERM):
        digits = 30 + int(peak / math.log(10))
        return float(min(1.0, max(0.0, _tail_mp(a, K, digits))))
    mags = np.exp(logs)
    signed = np.where(np.arange(mags.size) % 2 == 0, mags, -mags)
    # stop once terms are past their peak and negligible against the running sum
    running = np.cumsum(signed)
    past = np.arange(mags.size) > int(np.argmax(mags))
    small = past & (mags < 1e-16 * np.abs(running))
    if small.any():
        signed = signed[: int(np.argmax(small))]
    total = math.fsum(signed)
    return float(min(1.0, max(0.0, total)))


def solve_cutoff(p_target: float, K: int, tol: float = 1e-12) -> float:
    """Cutoff ``a`` with ``Pr(M > a) = p_target`` by bisection on ``(1/K, 1)``."""
    if not 0 < p_target < 1:
        raise ValueError("p_target must lie in (0, 1)")
    K = int(K)
    if K < 2:
        raise ValueError("the g-statistic is degenerate for K < 2")
    lo, hi = 1.0 / K, 1.0
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        p = g_tail_prob(mid, K)
        if abs(p - p_target) < tol:
            break
        if p > p_target:
            lo = mid
        else:
            hi = mid
    return mid


@dataclass(frozen=True)
class FlaggedOrdinate:
    """One replaced ordinate: Fourier index, frequency (Hz), values in fm^2."""

    index: int
    freq: float
    original: float
    p_value: float
    replacement: float


@dataclass
class DenoiseReport:
    """Outcome of :func:`denoise`.

    ``p_values`` holds the test p-value of every iteration, the last one
    being the non-rejecting test when ``converged``.  ``threshold_curve`` is
    the first-iteration cutoff ``a_cut * S_k * sum_j(Y_j / S_j)`` in fm^2 at
    each in-range frequency.
    """

    flagged: list
    n_iter: int
    converged: bool
    threshold_curve: np.ndarray
    p_values: list
    a_cut: float
    K: int
    p_threshold: float
    cleaned: Optional[Periodogram] = field(default=None, repr=False)

    @property
    def flagged_freqs(self) -> list:
        return [fl.freq for fl in self.flagged]

    @property
    def n_flagged(self) -> int:
        return len(self.flagged)


def _model_values(model: Union[ShoParams, FitResult], p: Periodogram) -> np.ndarray:
    theta = model.theta_hat if isinstance(model, FitResult) else model
    return p.fs * psd_eval(theta, p.freqs)


def denoise(
    p: Periodogram,
    model: Union[ShoParams, FitResult],
    p_threshold: float = 0.01,
    rng_seed=None,
    max_iter: int = 100,
) -> tuple[Periodogram, DenoiseReport]:
    """Iteratively remove periodic outliers from an in-range periodogram.

    Each iteration computes the g-statistic against the (fixed) model, and if
    its p-value is below ``p_threshold`` replaces the maximizing ordinate by
    ``S_k * Expo(1)``.  ``K`` is the number of in-range ordinates and stays
    constant because ordinates are replaced rather than deleted.

    Parameters
    ----------
    p : Periodogram
        Ordinates already restricted to the fitting range.
    model : ShoParams or FitResult
        Preliminary fit; its PSD is evaluated at the in-range frequencies.
    rng_seed : int, SeedSequence or Generator, optional
        Seed of the replacement stream.
    max_iter : int
        Maximum number of tests.  Hitting it while still rejecting returns a
        report with ``converged=False``.
    """
    if not 0 < p_threshold < 1:
        raise ValueError("p_threshold must lie in (0, 1)")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    s = _model_values(model, p)
    y = p.ordinates.copy()
    K = y.size
    a_cut = solve_cutoff(p_threshold, K)
    curve = a_cut * s * np.sum(y / s)

    flagged, p_values = [], []
    converged = False
    n_iter = 0
    while n_iter < max_iter:
        n_iter += 1
        m, i = g_statistic(y, s)
        pv = g_tail_prob(m, K)
        p_values.append(pv)
        if pv >= p_threshold:
            converged = True
            break
        draw = 0.0
        while draw <= 0.0:
            draw = float(rng.standard_exponential())
        new = s[i] * draw
        flagged.append(FlaggedOrdinate(int(p.index[i]), float(p.freqs[i]), float(y[i]), pv, new))
        y[i] = new
    if not converged:
        log.warning("g-test still rejects after %d iterations", max_iter)
    cleaned = p.with_ordinates(y)
    report = DenoiseReport(flagged, n_iter, converged, curve, p_values, a_cut, K, p_threshold, cleaned)
    return cleaned, report


def clean_periodogram(
    p: Periodogram,
    bin_size: int = 100,
    *,
    p_threshold: float = 0.01,
    rng_seed=None,
    max_iter: int = 100,
    opts: Optional[FitOptions] = None,
    T: float = DEFAULT_TEMPERATURE,
) -> tuple[Periodogram, DenoiseReport, FitResult]:
    """Steps 1 and 2 of :func:`two_stage_fit`: preliminary LP fit and denoising.

    Returns the cleaned periodogram, the denoising report and the preliminary fit.
    """
    prelim = fit("LP", bin_periodogram(p, bin_size), opts=opts, T=T, compute_cov=False)
    if not prelim.converged:
        log.warning("preliminary LP fit did not converge: %s", prelim.message)
    cleaned, report = denoise(p, prelim, p_threshold, rng_seed, max_iter)
    return cleaned, report, prelim


def two_stage_fit(
    p: Periodogram,
    method_final: str = "LP",
    bin_size: int = 100,
    *,
    p_threshold: float = 0.01,
    rng_seed=None,
    max_iter: int = 100,
    opts: Optional[FitOptions] = None,
    T: float = DEFAULT_TEMPERATURE,
    compute_cov: bool = True,
) -> tuple[FitResult, DenoiseReport]:
    """Preliminary LP fit, g-test outlier replacement, final fit.

    Step 1 fits LP to the ``bin_size``-binned in-range periodogram; step 2
    runs :func:`denoise` on the unbinned ordinates with that model held
    fixed; step 3 refits the cleaned data with ``method_final`` (binning
    again for NLS/LP).  The final fit uses the default initializer, so with
    nothing flagged it coincides exactly with a single-stage fit.
    """
    cleaned, report, _ = clean_periodogram(
        p, bin_size, p_threshold=p_threshold, rng_seed=rng_seed, max_iter=max_iter, opts=opts, T=T
    )
    result = fit_periodogram(method_final, cleaned, bin_size, opts=opts, T=T, compute_cov=compute_cov)
    return result, report
