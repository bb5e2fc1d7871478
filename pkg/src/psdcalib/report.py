"""Calibration reports: JSON documents with explicit units, plus plot-ready tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .denoise import DenoiseReport
from .estimators import FitResult
from .models import psd_eval
from .spectral import Periodogram, bin_periodogram

__all__ = ["UNITS", "CalibrationReport", "fit_entry", "denoise_entry", "write_plot_data"]

UNITS = {
    "f0": "Hz",
    "Q": "1",
    "k": "N/m",
    "A_w": "fm^2/Hz",
    "A_f": "fm^2 Hz^(alpha-1)",
    "alpha": "1",
    "T": "K",
    "freq": "Hz",
    "ordinate": "fm^2",
    "psd": "fm^2/Hz",
}


def _num(x) -> Optional[float]:
    # JSON has no NaN; missing values become null
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def fit_entry(res: FitResult, stage: str = "final") -> dict:
    """Serializable summary of one fit: estimates with units and standard errors."""
    th = res.theta_hat
    se = res.std_err
    names = ["f0", "Q", "k", "A_w"] + (["A_f", "alpha"] if th.A_f is not None else [])
    est = {
        n: {"value": _num(getattr(th, n)), "se": _num(se.get(n)), "unit": UNITS[n]} for n in names
    }
    return {
        "method": res.method,
        "stage": stage,
        "converged": bool(res.converged),
        "n_iter": int(res.n_iter),
        "objective": _num(res.objective_value),
        "message": res.message,
        "temperature": {"value": th.T, "unit": UNITS["T"]},
        "estimates": est,
        "cov_names": list(res.cov_names),
        "cov": None if res.cov is None else [[_num(v) for v in row] for row in res.cov],
        "fitting_range": {"value": [float(v) for v in res.fitting_range], "unit": "Hz"},
        "bin_size": res.bin_size,
    }


def denoise_entry(rep: DenoiseReport) -> dict:
    return {
        "p_threshold": rep.p_threshold,
        "K": rep.K,
        "a_cut": rep.a_cut,
        "n_iter": rep.n_iter,
        "converged": bool(rep.converged),
        "p_values": [float(p) for p in rep.p_values],
        "flagged": [
            {
                "index": fl.index,
                "freq": fl.freq,
                "original": fl.original,
                "p_value": fl.p_value,
                "replacement": fl.replacement,
            }
            for fl in rep.flagged
        ],
        "units": {"freq": UNITS["freq"], "original": UNITS["ordinate"], "replacement": UNITS["ordinate"]},
    }


@dataclass
class CalibrationReport:
    """Everything needed to interpret and reproduce a calibration run."""

    version: str
    command: str
    seed: Optional[int]
    input: dict
    fitting_range: dict
    bin_size: int
    fits: list
    denoise: Optional[dict] = None
    options: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(f["converged"] for f in self.fits)

    @property
    def flagged_freqs(self) -> list:
        return [] if self.denoise is None else [f["freq"] for f in self.denoise["flagged"]]

    def fit(self, method: str) -> dict:
        for f in self.fits:
            if f["method"] == method.upper():
                return f
        raise KeyError(method)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationReport":
        return cls.from_dict(json.loads(text))


def write_plot_data(path, p: Periodogram, res: FitResult, bin_size: int, flagged_freqs=()) -> None:
    """Binned periodogram and fitted curve as CSV columns.

    Columns: bin-mean frequency (Hz), binned PSD and fitted binned PSD
    (fm^2/Hz), and whether any ordinate of the bin was flagged.
    """
    b = bin_periodogram(p, bin_size)
    edges = p.freqs[: b.n_bins * b.bin_size].reshape(b.n_bins, b.bin_size)
    fitted = psd_eval(res.theta_hat, edges).mean(axis=1)
    flagged = np.zeros(b.n_bins, dtype=bool)
    for f in flagged_freqs:
        hit = np.nonzero((edges[:, 0] <= f) & (edges[:, -1] >= f))[0]
        flagged[hit] = True
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_Hz", "psd_fm2_per_Hz", "fitted_fm2_per_Hz", "flagged"])
        for row in zip(b.bin_freqs, b.bin_means / b.fs, fitted, flagged):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
