"""``psdcalib`` command-line interface.

Subcommands: ``calibrate``, ``denoise``, ``simulate``, ``study`` and
``psd-eval``.  Exit status is 0 on success, 2 on input or configuration
errors and 3 when a fit did not converge (the report is still written).
When ``--seed`` is omitted the ``PSDCALIB_SEED`` environment variable is used.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .denoise import clean_periodogram
from .estimators import METHODS, FitOptions, fit_periodogram
from .io import read_series, write_series
from .models import DEFAULT_TEMPERATURE, ShoParams, psd_eval
from .report import CalibrationReport, denoise_entry, fit_entry, write_plot_data
from .simulate import JitteredSine, Sine, SimSpec, simulate
from .spectral import UNIT_TO_FM, bin_periodogram, periodogram, select_range, sqrt2_range
from .study import bundled_config, load_config, run_study, write_log

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INPUT", "EXIT_NOCONV"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOCONV = 3

log = logging.getLogger("psdcalib")


class UsageError(Exception):
    """Bad flag combination; reported with exit status 2."""


# ---------------------------------------------------------------------------
# argument helpers


def _seed(value: Optional[int], required: bool = False) -> Optional[int]:
    if value is not None:
        return value
    env = os.environ.get("PSDCALIB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"PSDCALIB_SEED={env!r} is not an integer") from None
    if required:
        raise UsageError("a seed is required: pass --seed or set PSDCALIB_SEED")
    return None


def _run_seed(value: Optional[int]) -> int:
    """Seed for replacement draws; a fresh one is drawn (and reported) if none is given."""
    seed = _seed(value)
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    return seed


def _range(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI in Hz, got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("need 0 < LO < HI")
    return lo, hi


def _add_model_flags(p: argparse.ArgumentParser, q_default: float = 100.0) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--k", type=float, default=0.172, help="stiffness, N/m (default %(default)s)")
    g.add_argument("--f0", type=float, default=33533.0, help="resonance frequency, Hz (default %(default)s)")
    g.add_argument("--Q", type=float, default=q_default, help="quality factor (default %(default)s)")
    g.add_argument("--A-w", dest="A_w", type=float, default=5000.0, help="white floor, fm^2/Hz")
    g.add_argument("--A-f", dest="A_f", type=float, default=None, help="1/f amplitude, fm^2 Hz^(alpha-1)")
    g.add_argument("--alpha", type=float, default=None, help="1/f exponent in (0, 2)")
    g.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE, help="K (default %(default)s)")


def _model(args) -> ShoParams:
    if (args.A_f is None) != (args.alpha is None):
        raise UsageError("--A-f and --alpha must be given together")
    return ShoParams(args.k, args.f0, args.Q, args.A_w, args.A_f, args.alpha, args.temperature)


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="time-series file (PSDC1 binary or CSV)")
    p.add_argument("--fs", type=float, help="sampling frequency in Hz, if the file lacks it")
    p.add_argument("--unit", choices=["m", "um", "nm", "pm", "fm"], help="sample unit (default fm)")
    win = p.add_mutually_exclusive_group(required=True)
    win.add_argument("--range", type=_range, help="fitting range LO:HI in Hz")
    win.add_argument("--f0-guess", type=float, help="fitting range F +/- F/sqrt(2)")
    p.add_argument("--bin-size", type=int, default=100, help="bin size B (default %(default)s)")
    p.add_argument("--p-threshold", type=float, default=0.01, help="g-test level (default %(default)s)")
    p.add_argument("--max-iter", type=int, default=100, help="denoising iterations (default %(default)s)")
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE, help="K (default %(default)s)")
    p.add_argument("--seed", type=int, help="seed of the replacement draws")
    p.add_argument("--out", help="write the JSON report here instead of stdout")


def _load(args):
    src = read_series(args.input, fs=args.fs, unit=args.unit)
    lo, hi = args.range if args.range is not None else sqrt2_range(args.f0_guess)
    p = select_range(periodogram(src.series), lo, hi)
    bin_periodogram(p, args.bin_size)  # fail early on an oversized bin
    return src, (lo, hi), p


def _emit(report: CalibrationReport, out: Optional[str]) -> None:
    text = report.to_json()
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _input_entry(src) -> dict:
    return {"file": src.path, "format": src.format, "fs": {"value": src.fs, "unit": "Hz"}, "n": src.n, "unit": src.unit}


# ---------------------------------------------------------------------------
# subcommands


def cmd_calibrate(args) -> int:
    src, window, p = _load(args)
    seed = _run_seed(args.seed)
    methods = [m.upper() for m in (args.method or ["lp"])]
    rep = None
    data = p
    if not args.no_denoise:
        data, rep, _ = clean_periodogram(
            p,
            args.bin_size,
            p_threshold=args.p_threshold,
            rng_seed=seed,
            max_iter=args.max_iter,
            T=args.temperature,
        )
    fits = []
    results = []
    for m in methods:
        res = fit_periodogram(m, data, args.bin_size, opts=FitOptions(), T=args.temperature)
        results.append(res)
        fits.append(fit_entry(res, "final" if rep is not None else "single"))
    report = CalibrationReport(
        version=__version__,
        command="calibrate",
        seed=seed,
        input=_input_entry(src),
        fitting_range={"value": [float(window[0]), float(window[1])], "unit": "Hz"},
        bin_size=args.bin_size,
        fits=fits,
        denoise=None if rep is None else denoise_entry(rep),
        options={"p_threshold": args.p_threshold, "max_iter": args.max_iter, "denoise": not args.no_denoise},
    )
    _emit(report, args.out)
    if args.plot_data:
        write_plot_data(args.plot_data, data, results[0], args.bin_size, report.flagged_freqs)
    ok = report.converged and (rep is None or rep.converged)
    return EXIT_OK if ok else EXIT_NOCONV


def cmd_denoise(args) -> int:
    src, window, p = _load(args)
    seed = _run_seed(args.seed)
    cleaned, rep, prelim = clean_periodogram(
        p, args.bin_size, p_threshold=args.p_threshold, rng_seed=seed, max_iter=args.max_iter, T=args.temperature
    )
    report = CalibrationReport(
        version=__version__,
        command="denoise",
        seed=seed,
        input=_input_entry(src),
        fitting_range={"value": [float(window[0]), float(window[1])], "unit": "Hz"},
        bin_size=args.bin_size,
        fits=[fit_entry(prelim, "preliminary")],
        denoise=denoise_entry(rep),
        options={"p_threshold": args.p_threshold, "max_iter": args.max_iter},
    )
    _emit(report, args.out)
    if args.cleaned:
        with open(args.cleaned, "w") as fh:
            fh.write("freq_Hz,ordinate_fm2\n")
            for f, y in zip(cleaned.freqs, cleaned.ordinates):
                fh.write(f"{float(f)!r},{float(y)!r}\n")
    ok = prelim.converged and rep.converged
    return EXIT_OK if ok else EXIT_NOCONV


def cmd_simulate(args) -> int:
    seed = _seed(args.seed, required=True)
    model = _model(args)
    sine = None
    if args.tone_amplitude is not None:
        if args.tone_freq is None:
            raise UsageError("--tone-amplitude needs --tone-freq")
        sine = Sine(args.tone_amplitude, args.tone_freq, args.tone_phase)
    elif args.tone_ratio is not None:
        sine = JitteredSine(args.tone_ratio, args.tone_freq_sd, args.tone_bin_size)
    spec = SimSpec(model, args.duration, args.fs, sine=sine, seed=seed)
    _, series, tone = simulate(spec)
    samples = series.samples / UNIT_TO_FM[args.unit]
    write_series(args.out, samples, spec.fs, fmt=args.format, width=args.width, unit=args.unit)
    info = {"out": args.out, "n": spec.n, "fs": spec.fs, "seed": seed, "unit": args.unit}
    if tone is not None:
        info["tone"] = {"amplitude_fm": tone.amplitude, "freq_Hz": tone.freq, "phase_rad": tone.phase}
    sys.stderr.write(json.dumps(info) + "\n")
    return EXIT_OK


def _study_config(args):
    overrides = dict(replicates=args.replicates, master_seed=_seed(args.seed), jobs=args.jobs)
    path = Path(args.config)
    if path.is_file():
        return load_config(path, **overrides)
    return bundled_config(args.config, **overrides)


def cmd_study(args) -> int:
    cfg = _study_config(args)
    summary = run_study(cfg, jobs=args.jobs, progress=args.verbose)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary.write_table(out / "summary.csv")
    write_log(summary.records, out / "estimates.csv")
    doc = dict(summary.to_dict(), version=__version__, config=cfg.to_dict(), master_seed=cfg.master_seed)
    (out / "summary.json").write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")
    for r in summary.rows:
        if r["fit"] != cfg.reference:
            sys.stdout.write(
                f"{r['scenario']:>12} {r['fit']:>12} {r['param']:>3}  R={r['ratio']:.3f}  "
                f"rel_bias={r['rel_bias']:+.4f}  failed={r['n_failed']}\n"
            )
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def cmd_psd_eval(args) -> int:
    model = _model(args)
    if args.freqs:
        f = np.array(args.freqs, dtype=float)
    else:
        lo, hi = args.grid_range if args.grid_range else sqrt2_range(model.f0)
        f = np.linspace(lo, hi, args.points)
    s = psd_eval(model, f)
    w = sys.stdout
    w.write("freq_Hz,psd_fm2_per_Hz\n")
    for fi, si in zip(f, s):
        w.write(f"{float(fi)!r},{float(si)!r}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psdcalib", description="SHO power-spectrum calibration tools")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit the SHO model to a time series")
    _add_input_flags(p)
    p.add_argument(
        "--method",
        action="append",
        type=str.lower,
        choices=[m.lower() for m in METHODS],
        help="final estimator; repeat for several (default lp)",
    )
    p.add_argument("--no-denoise", action="store_true", help="single-stage fit without the g-test step")
    p.add_argument("--plot-data", help="CSV of binned PSD, fitted curve and flags")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("denoise", help="preliminary LP fit and periodic-noise removal only")
    _add_input_flags(p)
    p.add_argument("--cleaned", help="CSV of cleaned in-range ordinates")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("simulate", help="synthesize a series from the SHO model")
    _add_model_flags(p)
    p.add_argument("--duration", type=float, default=0.5, help="seconds (default %(default)s)")
    p.add_argument("--fs", type=float, default=2e5, help="Hz (default %(default)s)")
    p.add_argument("--seed", type=int, help="RNG seed (or PSDCALIB_SEED)")
    tone = p.add_argument_group("tone")
    tone.add_argument("--tone-ratio", type=float, help="jittered tone at this multiple of the peak PSD")
    tone.add_argument("--tone-freq-sd", type=float, default=10.0, help="Hz (default %(default)s)")
    tone.add_argument("--tone-bin-size", type=int, default=1, help="bin size the ratio refers to")
    tone.add_argument("--tone-amplitude", type=float, help="fixed tone amplitude, fm")
    tone.add_argument("--tone-freq", type=float, help="fixed tone frequency, Hz")
    tone.add_argument("--tone-phase", type=float, default=0.0, help="fixed tone phase, rad")
    p.add_argument("--out", required=True, help="output file")
    p.add_argument("--format", choices=["bin", "csv"], help="default from the file suffix")
    p.add_argument("--width", type=int, choices=[4, 8], default=8, help="binary sample width")
    p.add_argument("--unit", choices=["m", "um", "nm", "pm", "fm"], default="fm", help="output unit")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a Monte-Carlo study from a YAML config")
    p.add_argument("config", help="config file or bundled name (baseline-desk, pink-desk, ...)")
    p.add_argument("--replicates", type=int, help="override the replicate count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--out-dir", default=".", help="directory for summary and estimate files")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("psd-eval", help="print the model PSD on a frequency grid")
    _add_model_flags(p)
    p.add_argument("--grid-range", type=_range, help="LO:HI in Hz (default f0 +/- f0/sqrt(2))")
    p.add_argument("--points", type=int, default=101, help="grid points (default %(default)s)")
    p.add_argument("--freqs", type=float, nargs="+", help="explicit frequencies, Hz")
    p.set_defaults(func=cmd_psd_eval)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError, yaml.YAMLError) as exc:
        # InputError, EmptyBinningError and RangeError are ValueErrors too
        sys.stderr.write(f"psdcalib: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
