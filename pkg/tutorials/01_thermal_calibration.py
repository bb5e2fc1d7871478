"""Calibrating a cantilever from its thermal noise.

We synthesize half a second of thermally driven displacement for a
cantilever with k = 0.172 N/m, f0 = 33.5 kHz and Q = 100, then recover
the three physical parameters with each estimator.

Run with ``python tutorials/01_thermal_calibration.py``.
"""

import numpy as np

from psdcalib import (
    ShoParams,
    SimSpec,
    bin_periodogram,
    fit_periodogram,
    periodogram,
    psd_eval,
    select_range,
    sqrt2_range,
    synthesize,
)

truth = ShoParams(k=0.172, f0=33533.0, Q=100.0, A_w=5000.0)
fs = 2e5

# %% Simulate and look at the data
series = synthesize(SimSpec(truth, duration=0.5, fs=fs, seed=1))
print(f"{series.n} samples at {fs:g} Hz, rms displacement {series.samples.std():.0f} fm")

# The periodogram ordinates scatter exponentially around fs * S(f).  Binning
# 100 neighbours shrinks that scatter by a factor of ten.
p = select_range(periodogram(series), *sqrt2_range(truth.f0))
b = bin_periodogram(p, 100)
expected = fs * psd_eval(truth, b.bin_freqs)
print(f"{len(p)} ordinates in the fitting window, {b.n_bins} bins")
print(f"bin/model ratio: mean {np.mean(b.bin_means / expected):.3f}, sd {np.std(b.bin_means / expected):.3f}")

# %% Fit
# NLS and LP work on the binned periodogram, MLE (Whittle) on the raw one.
print(f"\n{'':6}{'f0 [Hz]':>20}{'Q':>18}{'k [N/m]':>22}")
for method in ("NLS", "LP", "MLE"):
    res = fit_periodogram(method, p, bin_size=100)
    th, se = res.theta_hat, res.std_err
    print(
        f"{method:6}{th.f0:12.1f} +/- {se['f0']:4.1f}{th.Q:10.2f} +/- {se['Q']:4.2f}"
        f"{th.k:12.4f} +/- {se['k']:.4f}"
    )
print(f"{'truth':6}{truth.f0:12.1f}{'':8}{truth.Q:10.2f}{'':8}{truth.k:12.4f}")

# LP and MLE should be close to each other; NLS is the noisy one (see
# 04_monte_carlo.py for MSE comparisons over many replicates).
