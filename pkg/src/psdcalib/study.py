"""Monte-Carlo study harness: replicate simulation, fitting and MSE ratios.

A study is a list of scenarios, each simulated ``replicates`` times.  Every
replicate is fitted by each requested estimator; depending on the scenario
the harness also fits the clean (tone-free) series and the two-stage
denoised series.  Fits are identified by labels such as ``"LP"``,
``"MLE[clean]"`` or ``"NLS[2s]"``, and ratios are taken against the
configured reference label within each scenario.

Replicate ``i`` always draws from ``SeedSequence([master_seed, i])``, so
results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from joblib import Parallel, delayed

from .denoise import clean_periodogram
from .estimators import METHODS, FitOptions, FitResult, fit, fit_periodogram, fit_two_step_1f
from .models import DEFAULT_TEMPERATURE, ShoParams, psd_eval, to_profiled
from .simulate import JitteredSine, SimSpec, simulate
from .spectral import Periodogram, bin_periodogram, periodogram, select_range, sqrt2_range

__all__ = [
    "PARAMS",
    "BASELINE",
    "StudyError",
    "Scenario",
    "StudyConfig",
    "StudySummary",
    "run_study",
    "run_replicate",
    "summarize",
    "load_config",
    "bundled_config",
    "config_from_dict",
    "write_log",
    "read_log",
    "asymptotic_bias",
    "noiseless_periodogram",
    "bin_sweep",
    "sweep_table",
    "write_rows",
]

log = logging.getLogger(__name__)

#: Parameters summarized by the harness.
PARAMS = ("f0", "Q", "k")

#: Baseline oscillator (stiffness N/m, resonance Hz); Q varies by scenario.
BASELINE = dict(k=0.172, f0=33533.0)

#: White-noise floor used by the bundled scenarios, fm^2/Hz.
DEFAULT_A_W = 5000.0

_LOG_FIELDS = (
    "scenario",
    "replicate",
    "fit",
    "converged",
    "f0",
    "Q",
    "k",
    "A_w",
    "A_f",
    "alpha",
    "n_flagged",
    "tone_freq",
    "tone_flagged",
    "message",
)


class StudyError(RuntimeError):
    """A replicate could not be synthesized; the study is aborted."""


@dataclass(frozen=True)
class Scenario:
    """One data-generating setting.

    Parameters
    ----------
    name : str
        Unique label.
    model : ShoParams
        True PSD; a 1/f term makes this a pink-noise scenario.
    n, fs : int, float
        Samples per replicate and sampling rate (Hz).
    sine : JitteredSine, optional
        Tone recipe.  Tone scenarios are fitted on both the clean and the
        contaminated series.
    fit_range : (float, float), optional
        Fitting window in Hz; default ``f0 +/- f0/sqrt(2)`` around the true ``f0``.
    pink_fit : {"joint", "two_step", "ignore"}
        How a pink scenario is fitted: all five shape parameters jointly,
        by the two-step 1/f procedure, or with the misspecified SHO + white model.
    low_band : (float, float), optional
        Band (Hz) used by the two-step 1/f stage; default from the first
        ordinate up to the lower end of the fitting window.
    """

    name: str
    model: ShoParams
    n: int
    fs: float
    sine: Optional[JitteredSine] = None
    fit_range: Optional[tuple] = None
    pink_fit: str = "joint"
    low_band: Optional[tuple] = None

    def __post_init__(self):
        if self.pink_fit not in ("joint", "two_step", "ignore"):
            raise ValueError(f"unknown pink_fit {self.pink_fit!r}")
        if self.n < 2:
            raise ValueError("n must be >= 2")

    @property
    def kind(self) -> str:
        if self.sine is not None:
            return "sine"
        return "pink" if self.model.has_pink else "none"

    @property
    def spec(self) -> SimSpec:
        return SimSpec(self.model, self.n / self.fs, self.fs, sine=self.sine)

    @property
    def window(self) -> tuple:
        return tuple(self.fit_range) if self.fit_range is not None else sqrt2_range(self.model.f0)

    def truth(self, name: str) -> float:
        return float(getattr(self.model, name))


@dataclass(frozen=True)
class StudyConfig:
    scenarios: tuple
    replicates: int = 200
    estimators: tuple = METHODS
    two_stage: bool = False
    bin_size: int = 100
    reference: str = "MLE"
    master_seed: int = 0
    jobs: int = 1
    temperature: float = DEFAULT_TEMPERATURE
    p_threshold: float = 0.01
    name: str = "study"

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ValueError("scenario names must be unique")
        if not self.scenarios:
            raise ValueError("a study needs at least one scenario")
        bad = [e for e in self.estimators if e not in METHODS]
        if bad:
            raise ValueError(f"unknown estimators {bad}")
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "estimators", tuple(self.estimators))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = [_scenario_dict(s) for s in self.scenarios]
        return d

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class StudySummary:
    """Per (scenario, fit, parameter) rows plus per-scenario denoising statistics.

    Each row holds ``mse``, ``bias``, ``rel_bias`` and ``median`` over the
    fit's converged replicates, ``ratio`` (pairwise: replicates where both
    the fit and the reference converged), ``ratio_marginal`` (each over its
    own converged replicates), ``n_pairs``, ``n_converged`` and ``n_failed``.
    """

    rows: list
    scenario_stats: dict
    reference: str
    replicates: int
    config_hash: str = ""
    records: list = field(default_factory=list, repr=False)

    def row(self, scenario: str, fit_label: str, param: str) -> dict:
        for r in self.rows:
            if (r["scenario"], r["fit"], r["param"]) == (scenario, fit_label, param):
                return r
        raise KeyError((scenario, fit_label, param))

    def ratio(self, scenario: str, fit_label: str, param: str) -> float:
        return self.row(scenario, fit_label, param)["ratio"]

    def write_table(self, path, delimiter: str = ",") -> None:
        cols = list(self.rows[0]) if self.rows else []
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, delimiter=delimiter)
            w.writeheader()
            w.writerows(self.rows)

    def to_dict(self) -> dict:
        return dict(
            reference=self.reference,
            replicates=self.replicates,
            config_hash=self.config_hash,
            rows=self.rows,
            scenario_stats=self.scenario_stats,
        )


# ---------------------------------------------------------------------------
# configuration


def _scenario_dict(s: Scenario) -> dict:
    m = {k: v for k, v in asdict(s.model).items() if v is not None}
    d = dict(name=s.name, model=m, n=s.n, fs=s.fs, pink_fit=s.pink_fit)
    if s.sine is not None:
        d["sine"] = asdict(s.sine)
    if s.fit_range is not None:
        d["fit_range"] = list(s.fit_range)
    if s.low_band is not None:
        d["low_band"] = list(s.low_band)
    return d


def _scenario_from_dict(d: dict, temperature: float) -> Scenario:
    d = dict(d)
    model = dict(BASELINE, A_w=DEFAULT_A_W, T=temperature)
    model.update(d.pop("model", {}))
    # YAML 1.1 reads "1.0e7" (no exponent sign) as a string
    model = {k: None if v is None else float(v) for k, v in model.items()}
    sine = d.pop("sine", None)
    if sine is not None:
        sine = JitteredSine(float(sine.get("ratio", 10.0)), float(sine.get("freq_sd", 10.0)), int(sine.get("bin_size", 1)))
    if "duration" in d:
        d["n"] = float(d.pop("duration")) * float(d["fs"])
    d["n"] = int(round(float(d["n"])))
    d["fs"] = float(d["fs"])
    for key in ("fit_range", "low_band"):
        if d.get(key) is not None:
            d[key] = tuple(float(v) for v in d[key])
    try:
        th = ShoParams(**model)
        return Scenario(model=th, sine=sine, **d)
    except TypeError as exc:
        raise ValueError(f"scenario {d.get('name')!r}: {exc}") from exc


def config_from_dict(d: dict, **overrides) -> StudyConfig:
    """Build a :class:`StudyConfig` from a plain mapping (as read from YAML)."""
    d = dict(d)
    d.update({k: v for k, v in overrides.items() if v is not None})
    temperature = float(d.get("temperature", DEFAULT_TEMPERATURE))
    scen = [_scenario_from_dict(s, temperature) for s in d.pop("scenarios", [])]
    known = set(StudyConfig.__dataclass_fields__) - {"scenarios"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    if "estimators" in d:
        d["estimators"] = tuple(str(e).upper() for e in d["estimators"])
    return StudyConfig(scenarios=tuple(scen), **d)


def load_config(path, **overrides) -> StudyConfig:
    """Read a YAML study configuration; keyword overrides replace top-level keys."""
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    return config_from_dict(d, **overrides)


def bundled_config(name: str, **overrides) -> StudyConfig:
    """Load one of the configurations shipped with the package, e.g. ``"baseline-desk"``."""
    ref = resources.files("psdcalib") / "configs" / f"{name}.yaml"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    with resources.as_file(ref) as path:
        return load_config(path, **overrides)


# ---------------------------------------------------------------------------
# one replicate


def _record(scenario: str, i: int, label: str, res: Optional[FitResult], message: str = "", **extra) -> dict:
    rec = dict.fromkeys(_LOG_FIELDS, None)
    rec.update(scenario=scenario, replicate=i, fit=label, converged=False, message=message)
    for name in ("f0", "Q", "k", "A_w", "A_f", "alpha"):
        rec[name] = math.nan
    if res is not None:
        th = res.theta_hat
        rec.update(converged=bool(res.converged), f0=th.f0, Q=th.Q, k=th.k, A_w=th.A_w)
        if th.A_f is not None:
            rec.update(A_f=th.A_f, alpha=th.alpha)
        if not res.converged:
            rec["message"] = res.message
    rec.update(extra)
    return rec


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs), ""
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _fit_one(method: str, scen: Scenario, p: Periodogram, full: Periodogram, cfg: StudyConfig) -> FitResult:
    kw = dict(T=cfg.temperature, compute_cov=False)
    if scen.kind != "pink" or scen.pink_fit == "ignore":
        return fit_periodogram(method, p, cfg.bin_size, **kw)
    if scen.pink_fit == "joint":
        return fit_periodogram(method, p, cfg.bin_size, pink=True, **kw)
    lo = scen.low_band or (full.freqs[0], scen.window[0])
    low = bin_periodogram(select_range(full, *lo), cfg.bin_size)
    data = p if method == "MLE" else bin_periodogram(p, cfg.bin_size)
    return fit_two_step_1f(low, data, method=method, **kw)


def run_replicate(cfg: StudyConfig, scen: Scenario, i: int) -> list:
    """Simulate replicate ``i`` of ``scen`` and return one log record per fit."""
    ss = np.random.SeedSequence([cfg.master_seed, i])
    sim_ss, dn_ss = ss.spawn(2)
    try:
        clean, observed, tone = simulate(scen.spec, seed=sim_ss)
    except Exception as exc:
        raise StudyError(f"scenario {scen.name!r}, replicate {i}: synthesis failed: {exc}") from exc
    lo, hi = scen.window
    full = periodogram(observed)
    p = select_range(full, lo, hi)
    tone_freq = tone.freq if tone is not None else None
    out = []
    for e in cfg.estimators:
        res, msg = _safe(_fit_one, e, scen, p, full, cfg)
        out.append(_record(scen.name, i, e, res, msg, tone_freq=tone_freq))
    if scen.kind == "sine":
        full_clean = periodogram(clean)
        p_clean = select_range(full_clean, lo, hi)
        for e in cfg.estimators:
            res, msg = _safe(_fit_one, e, scen, p_clean, full_clean, cfg)
            out.append(_record(scen.name, i, f"{e}[clean]", res, msg))
    if cfg.two_stage:
        cleaned = _safe(
            clean_periodogram,
            p,
            cfg.bin_size,
            p_threshold=cfg.p_threshold,
            rng_seed=np.random.default_rng(dn_ss),
            T=cfg.temperature,
        )
        if cleaned[0] is None:
            for e in cfg.estimators:
                out.append(_record(scen.name, i, f"{e}[2s]", None, cleaned[1]))
        else:
            pc, report, _ = cleaned[0]
            df = scen.fs / scen.n
            hit = None
            if tone_freq is not None:
                hit = any(abs(f - tone_freq) <= 2 * df for f in report.flagged_freqs)
            for e in cfg.estimators:
                # the 1/f low band lies below the window, so denoising leaves it untouched
                res, msg = _safe(_fit_one, e, scen, pc, full, cfg)
                out.append(
                    _record(
                        scen.name,
                        i,
                        f"{e}[2s]",
                        res,
                        msg,
                        n_flagged=report.n_flagged,
                        tone_freq=tone_freq,
                        tone_flagged=hit,
                    )
                )
    return out


# ---------------------------------------------------------------------------
# summaries


def _estimates(records: list, scenario: str, label: str, param: str) -> dict:
    return {
        r["replicate"]: float(r[param])
        for r in records
        if r["scenario"] == scenario and r["fit"] == label and r["converged"]
    }


def _div(a: float, b: float) -> float:
    if b == 0 or not np.isfinite(b):
        return math.nan
    return float(a / b)


def summarize(records: list, cfg: StudyConfig) -> StudySummary:
    """MSE, bias and MSE ratios from per-replicate records.

    ``ratio`` uses the replicates where both the fit and the reference
    converged; ``ratio_marginal`` compares each over its own converged set.
    """
    rows = []
    stats = {}
    for scen in cfg.scenarios:
        labels = sorted({r["fit"] for r in records if r["scenario"] == scen.name}, key=_label_order)
        for label in labels:
            n_total = sum(1 for r in records if r["scenario"] == scen.name and r["fit"] == label)
            for param in PARAMS:
                truth = scen.truth(param)
                est = _estimates(records, scen.name, label, param)
                ref = _estimates(records, scen.name, cfg.reference, param)
                pairs = sorted(set(est) & set(ref))
                se_fit = math.fsum((est[i] - truth) ** 2 for i in pairs)
                se_ref = math.fsum((ref[i] - truth) ** 2 for i in pairs)
                vals = np.array([est[i] for i in sorted(est)])
                ref_vals = np.array([ref[i] for i in sorted(ref)])
                mse = _mse(vals, truth)
                rows.append(
                    dict(
                        scenario=scen.name,
                        fit=label,
                        param=param,
                        truth=truth,
                        mse=mse,
                        ratio=_div(se_fit, se_ref),
                        ratio_marginal=_div(mse, _mse(ref_vals, truth)),
                        bias=float(vals.mean() - truth) if vals.size else math.nan,
                        rel_bias=float(vals.mean() / truth - 1) if vals.size else math.nan,
                        median=float(np.median(vals)) if vals.size else math.nan,
                        n_pairs=len(pairs),
                        n_converged=len(est),
                        n_failed=n_total - len(est),
                    )
                )
        st = {}
        two = [r for r in records if r["scenario"] == scen.name and r["fit"].endswith("[2s]")]
        if two:
            first = {}
            for r in two:
                first.setdefault(r["replicate"], r)
            flagged = [r["n_flagged"] for r in first.values() if r["n_flagged"] is not None]
            st["mean_n_flagged"] = float(np.mean(flagged)) if flagged else math.nan
            hits = [bool(r["tone_flagged"]) for r in first.values() if r["tone_flagged"] is not None]
            if hits:
                st["tone_flag_rate"] = float(np.mean(hits))
        stats[scen.name] = st
    return StudySummary(rows, stats, cfg.reference, cfg.replicates, cfg.config_hash, records)


def _mse(vals: np.ndarray, truth: float) -> float:
    if vals.size == 0:
        return math.nan
    return math.fsum((vals - truth) ** 2) / vals.size


def _label_order(label: str):
    base, _, tag = label.partition("[")
    return (tag, METHODS.index(base) if base in METHODS else len(METHODS), label)


def run_study(cfg: StudyConfig, jobs: Optional[int] = None, progress: bool = False) -> StudySummary:
    """Run every (scenario, replicate) unit and summarize.

    Units run in ``jobs`` worker processes (default ``cfg.jobs``); records
    are merged in (scenario, replicate) order, so the summary is identical
    for any degree of parallelism.
    """
    jobs = cfg.jobs if jobs is None else jobs
    units = [(scen, i) for scen in cfg.scenarios for i in range(cfg.replicates)]
    verbose = 5 if progress else 0
    chunks = Parallel(n_jobs=jobs, verbose=verbose)(delayed(run_replicate)(cfg, s, i) for s, i in units)
    records = [r for chunk in chunks for r in chunk]
    failed = sum(1 for r in records if not r["converged"])
    if failed:
        log.info("%d of %d fits did not converge", failed, len(records))
    return summarize(records, cfg)


# ---------------------------------------------------------------------------
# estimate log


def write_log(records: list, path) -> None:
    """Write per-replicate records as CSV; floats use ``repr`` so they round-trip exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_LOG_FIELDS)
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def _parse(value: str, key: str):
    if key in ("scenario", "fit", "message"):
        return value
    if value == "":
        return None
    if key in ("converged", "tone_flagged"):
        return value == "True"
    if key in ("replicate", "n_flagged"):
        return int(value)
    return float(value)


def read_log(path) -> list:
    with open(path, newline="") as fh:
        return [{k: _parse(v, k) for k, v in row.items()} for row in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# deterministic curve fits


def noiseless_periodogram(model: ShoParams, fs: float, n: int, fit_range: Optional[tuple] = None) -> Periodogram:
    """Expected periodogram ``fs S(f_k)`` on the Fourier grid of an ``n``-sample record.

    Only the in-range part is built, so full-scale ``n`` costs nothing extra.
    """
    lo, hi = fit_range if fit_range is not None else sqrt2_range(model.f0)
    k = np.arange(math.ceil(lo * n / fs), math.floor(hi * n / fs) + 1)
    k = k[(k >= 1) & (k <= (n - 1) // 2)]
    f = k * fs / n
    return Periodogram(f, fs * psd_eval(model, f), fs, n, k)


def asymptotic_bias(
    truth: ShoParams,
    method: str = "LP",
    bin_size: int = 100,
    fs: float = 1e7,
    n: int = 50_000_000,
    fit_range: Optional[tuple] = None,
) -> tuple:
    """Relative bias of the SHO + white fit when the truth carries 1/f noise.

    Fits the misspecified model to the binned noiseless truth curve and
    returns ``(f0_hat/f0, Q_hat/Q, k_hat/k)``.
    """
    p = noiseless_periodogram(truth, fs, n, fit_range)
    data = p if method.upper() == "MLE" else bin_periodogram(p, bin_size)
    init = _truth_init(truth)
    res = fit(method, data, init, FitOptions(lp_debias=False), T=truth.T, compute_cov=False)
    if not res.converged:
        raise ArithmeticError(f"curve fit did not converge: {res.message}")
    th = res.theta_hat
    return th.f0 / truth.f0, th.Q / truth.Q, th.k / truth.k


def _truth_init(truth: ShoParams):
    # start from the SHO part of the truth; a tiny floor keeps log(R_w) finite
    a_w = max(truth.A_w, 1e-3 * truth.peak)
    return to_profiled(ShoParams(truth.k, truth.f0, truth.Q, a_w, T=truth.T))


def bin_sweep(
    p: Periodogram,
    bin_sizes: Sequence[int],
    methods: Sequence[str] = ("NLS", "LP"),
    opts: Optional[FitOptions] = None,
    T: float = DEFAULT_TEMPERATURE,
    compute_cov: bool = True,
) -> dict:
    """Fit each method at each bin size; ``{B: {method: FitResult or error string}}``.

    Every fit starts from :func:`initial_guess` on its own binned data.
    Failures are recorded and the sweep continues.
    """
    out = {}
    for b in bin_sizes:
        row = {}
        for m in methods:
            res, msg = _safe(fit_periodogram, m, p, int(b), opts=opts, T=T, compute_cov=compute_cov)
            row[m] = res if res is not None else msg
        out[int(b)] = row
    return out


def sweep_table(sweep: dict) -> list:
    """Flatten a :func:`bin_sweep` result into rows for a delimiter-separated table."""
    rows = []
    for b, row in sweep.items():
        for m, res in row.items():
            r = dict(bin_size=b, method=m, converged=False, f0=math.nan, Q=math.nan, k=math.nan)
            if isinstance(res, FitResult):
                th = res.theta_hat
                se = res.std_err
                r.update(converged=res.converged, f0=th.f0, Q=th.Q, k=th.k)
                r.update({f"se_{k}": se.get(k, math.nan) for k in PARAMS})
            rows.append(r)
    return rows


def write_rows(rows: list, path: Path, delimiter: str = ",") -> None:
    cols = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, delimiter=delimiter)
        w.writeheader()
        w.writerows(rows)
