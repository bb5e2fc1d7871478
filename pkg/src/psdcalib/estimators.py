"""NLS, log-periodogram (LP) and Whittle (MLE) fitting of SHO spectra.

All three objectives are linear in the overall scale ``tau``, so by default
``tau`` is eliminated in closed form and only the shape parameters ``eta``
are optimized, in log space.  NLS and LP use Levenberg-Marquardt on their
residual vectors; MLE uses a trust region with the expected (Fisher)
information as Hessian on the per-ordinate Whittle objective.

Model values supplied to each objective are periodogram-scaled,
``S_k = fs * S(f_k)``, matching the ordinates ``Y_k = |X_k|^2 / N``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import optimize, special

from .models import (
    DEFAULT_TEMPERATURE,
    ProfiledParams,
    ShoParams,
    log_shape_grad,
    shape,
    to_sho,
)
from .spectral import BinnedPeriodogram, Periodogram, bin_periodogram

__all__ = [
    "METHODS",
    "FitOptions",
    "FitResult",
    "DegenerateModelError",
    "DegenerateCovarianceError",
    "profile_tau",
    "objective",
    "initial_guess",
    "fit",
    "fit_periodogram",
    "std_errors",
    "fit_power_law",
    "fit_two_step_1f",
    "lp_offset",
]

log = logging.getLogger(__name__)

METHODS = ("NLS", "LP", "MLE")

Data = Union[BinnedPeriodogram, Periodogram]


class DegenerateModelError(ArithmeticError):
    """The model shape gives a zero or non-finite profiling denominator."""


class DegenerateCovarianceError(np.linalg.LinAlgError):
    """Hessian at the optimum is singular or not positive definite."""


@dataclass(frozen=True)
class FitOptions:
    """Stopping rules shared by all estimators."""

    ftol: float = 1e-10
    gtol: float = 1e-8
    max_iter: int = 1000
    hessian_step: float = 1e-5
    #: Subtract E[log Gamma(B, B)] = digamma(B) - log(B) from the LP responses,
    #: removing the downward bias of the fitted scale on noisy data.  Leaves
    #: the shape estimate unchanged; switch off for noise-free curves.
    lp_debias: bool = True


def lp_offset(bin_size: int) -> float:
    """Mean of ``log`` of a Gamma(B, B) variate, ``digamma(B) - log(B)``."""
    return float(special.digamma(bin_size) - np.log(bin_size))


@dataclass
class FitResult:
    theta_hat: ShoParams
    profiled: ProfiledParams
    objective_value: float
    method: str
    converged: bool
    n_iter: int
    fitting_range: tuple
    bin_size: Optional[int]
    cov: Optional[np.ndarray] = None
    cov_names: tuple = ()
    message: str = ""
    background: Optional[tuple] = field(default=None, repr=False)
    lp_offset: float = 0.0

    @property
    def std_err(self) -> dict:
        """Standard errors keyed by parameter name (empty without a covariance)."""
        if self.cov is None:
            return {}
        return dict(zip(self.cov_names, np.sqrt(np.diag(self.cov))))

    def estimate(self, name: str) -> float:
        return float(getattr(self.theta_hat, name))


# ---------------------------------------------------------------------------
# data plumbing


@dataclass(frozen=True)
class _Arrays:
    f: np.ndarray
    y: np.ndarray
    fs: float
    bin_size: Optional[int]
    background: np.ndarray  # periodogram-scaled additive term, zero if absent


def _arrays(method: str, data: Data, background=None) -> _Arrays:
    method = _check_method(method)
    if method == "MLE":
        if not isinstance(data, Periodogram):
            raise ValueError("MLE works on an unbinned Periodogram")
        f, y, b = data.freqs, data.ordinates, None
    else:
        if not isinstance(data, BinnedPeriodogram):
            raise ValueError(f"{method} works on a BinnedPeriodogram")
        f, y, b = data.bin_freqs, data.bin_means, data.bin_size
    if f.size < 2:
        raise ValueError("need at least two data points")
    bg = np.zeros_like(f) if background is None else data.fs * _background_values(background, f)
    return _Arrays(f, y, data.fs, b, bg)


def _background_values(background, f) -> np.ndarray:
    a_f, alpha = background
    return a_f * np.asarray(f, dtype=float) ** (-alpha)


def _check_method(method: str) -> str:
    m = str(method).upper()
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return m


def fit_range_of(data: Data) -> tuple:
    f = data.freqs if isinstance(data, Periodogram) else data.bin_freqs
    return float(f[0]), float(f[-1])


# ---------------------------------------------------------------------------
# objectives


def _tau_hat(method: str, y: np.ndarray, g: np.ndarray) -> float:
    if method == "NLS":
        den = g @ g
        if not (np.isfinite(den) and den > 0):
            raise DegenerateModelError("sum of squared model values is zero")
        return float((g @ y) / den)
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise DegenerateModelError("model shape must be positive")
    if method == "LP":
        return float(np.exp(np.mean(np.log(y) - np.log(g))))
    return float(np.mean(y / g))


def profile_tau(method: str, eta, data: Data) -> float:
    """Closed-form scale minimizing the ``method`` objective at fixed ``eta``.

    NLS: ``sum(G Y) / sum(G^2)``; LP: geometric mean of ``Y / G``;
    MLE: arithmetic mean of ``Y / G``.  ``G`` is periodogram-scaled.
    """
    a = _arrays(method, data)
    g = a.fs * shape(a.f, eta)
    return _tau_hat(_check_method(method), a.y, g)


def _terms(method: str, y: np.ndarray, s: np.ndarray) -> np.ndarray:
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("model PSD must be positive and finite")
    if method == "NLS":
        return (y - s) ** 2
    if method == "LP":
        return (np.log(y) - np.log(s)) ** 2
    return y / s + np.log(s)


def objective(method: str, pp: ProfiledParams, data: Data, background=None) -> float:
    """Value of the NLS, LP or (negated) Whittle objective at ``pp``.

    ``background`` is an optional fixed ``(A_f, alpha)`` 1/f term added to the model.
    """
    m = _check_method(method)
    a = _arrays(m, data, background)
    s = a.background + a.fs * pp.tau * shape(a.f, pp.eta)
    return float(np.sum(_terms(m, a.y, s)))


# ---------------------------------------------------------------------------
# initial values


def initial_guess(data: Data, n_pink: bool = False) -> ProfiledParams:
    """Peak-location / half-power-width starting values.

    ``f0`` is the frequency of the largest bin, ``Q`` comes from the half-power
    width of the peak and ``R_w`` from the median of the outer 10% of bins.
    """
    if isinstance(data, Periodogram):
        b = max(1, min(100, len(data) // 50))
        data = bin_periodogram(data, b)
    f = data.bin_freqs
    v = data.bin_means / data.fs
    n = v.size
    i = int(np.argmax(v))
    f0 = float(f[i])
    edge = max(1, int(round(0.05 * n)))
    floor = float(np.median(np.concatenate([v[:edge], v[-edge:]])))
    peak = float(v[i])
    half = floor + 0.5 * (peak - floor)
    lo = i
    while lo > 0 and v[lo - 1] > half:
        lo -= 1
    hi = i
    while hi < n - 1 and v[hi + 1] > half:
        hi += 1
    df = float(np.median(np.diff(f))) if n > 1 else f0
    width = max(f[hi] - f[lo] + df, df)
    q = max(f0 / width, 0.5)
    tau = max(peak - floor, 1e-12 * max(peak, 1e-300)) / q**2
    if not tau > 0:
        tau = 1.0
    r_w = max(floor / tau, 1e-8)
    if n_pink:
        # white level from the high edge, 1/f amplitude from the low-edge excess
        alpha = 0.5
        r_w = max(float(np.median(v[-edge:])) / tau - 1.0 / ((f[-1] / f0) ** 2 - 1.0) ** 2, 1e-8)
        f_low = float(np.mean(f[:edge]))
        sho_low = 1.0 / (((f_low / f0) ** 2 - 1.0) ** 2 + (f_low / (f0 * q)) ** 2)
        excess = float(np.median(v[:edge])) / tau - sho_low - r_w
        r_f = max(excess, 0.1 * (r_w + sho_low)) * f_low**alpha
        return ProfiledParams(tau, f0, f0 * q, r_w, r_f, alpha)
    return ProfiledParams(tau, f0, f0 * q, r_w)


# ---------------------------------------------------------------------------
# residual and gradient machinery


class _Problem:
    """Objective pieces for one (method, data, background, profiling) combination.

    Optimization variables are ``log eta`` (profiled) or ``(log tau, log eta)``.
    """

    def __init__(self, method: str, a: _Arrays, n_eta: int, profile: bool, offset: float = 0.0):
        self.method = method
        self.a = a
        self.n_eta = n_eta
        self.profile = profile and not np.any(a.background)
        self.offset = offset
        self.zed = np.log(a.y) - offset if method == "LP" else None
        # LP responses shifted by the offset are equivalent to rescaled bin means
        self.y = a.y * np.exp(-offset) if method == "LP" else a.y
        self.scale = float(np.max(np.abs(a.y))) if method == "NLS" else 1.0
        if method == "NLS" and not self.scale > 0:
            raise DegenerateModelError("all ordinates are zero")

    # parameter bookkeeping
    def split(self, x):
        x = np.asarray(x, dtype=float)
        if self.profile:
            return None, x
        return x[0], x[1:]

    def pieces(self, x):
        """Return (tau, eta, G, L) with G periodogram-scaled and L = dlogG/dlog eta."""
        log_tau, log_eta = self.split(x)
        eta = np.exp(log_eta)
        g = self.a.fs * shape(self.a.f, eta)
        tau = _tau_hat(self.method, self.y, g) if self.profile else float(np.exp(log_tau))
        return tau, eta, g

    def model(self, x):
        tau, eta, g = self.pieces(x)
        return self.a.background + tau * g

    def value(self, x) -> float:
        return float(np.sum(_terms(self.method, self.y, self.model(x))))

    def params(self, x) -> ProfiledParams:
        tau, eta, _ = self.pieces(x)
        return ProfiledParams.from_eta(tau, eta)

    # least-squares form (NLS, LP)
    def residuals(self, x):
        s = self.model(x)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            return np.full_like(s, 1e10)
        if self.method == "LP":
            return self.zed - np.log(s)
        return (self.a.y - s) / self.scale

    def jacobian(self, x):
        log_tau, log_eta = self.split(x)
        eta = np.exp(log_eta)
        lg = log_shape_grad(self.a.f, eta)
        tau, _, g = self.pieces(x)
        if self.method == "LP":
            if self.profile:
                return -(lg - lg.mean(axis=0))
            s = self.a.background + tau * g
            w = (tau * g / s)[:, None]
            return -np.hstack([w, w * lg])
        # NLS
        dg = g[:, None] * lg
        if self.profile:
            gg = g @ g
            dtau = (dg.T @ self.a.y - 2.0 * tau * (dg.T @ g)) / gg
            return -(tau * dg + np.outer(g, dtau)) / self.scale
        return -np.hstack([(tau * g)[:, None], tau * dg]) / self.scale

    # smooth-minimization form (MLE), normalized by K
    def mean_value_and_grad(self, x):
        with np.errstate(all="ignore"):
            try:
                tau, eta, g = self.pieces(x)
            except DegenerateModelError:
                return np.inf, np.zeros_like(x)
            s = self.a.background + tau * g
            if np.any(s <= 0) or not np.all(np.isfinite(s)):
                return np.inf, np.zeros_like(x)
            u = self.a.y / s
            val = float(np.mean(u + np.log(s)))
            lg = log_shape_grad(self.a.f, eta)
            if self.profile:
                grad = np.mean((1.0 - u)[:, None] * lg, axis=0)
            else:
                w = tau * g / s
                d = np.hstack([w[:, None], w[:, None] * lg])
                grad = np.mean((1.0 - u)[:, None] * d, axis=0)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(x)
        return val, grad

    def fisher(self, x):
        """Expected information of the K-normalized Whittle objective.

        Profiling ``tau`` leaves the centred outer product of ``dlog S/dlog eta``.
        """
        tau, eta, g = self.pieces(x)
        lg = log_shape_grad(self.a.f, eta)
        if self.profile:
            lc = lg - lg.mean(axis=0)
            return lc.T @ lc / lg.shape[0]
        w = tau * g / (self.a.background + tau * g)
        d = np.hstack([w[:, None], w[:, None] * lg])
        return d.T @ d / d.shape[0]


def _newton_decrement(prob: _Problem, x) -> float:
    """Predicted relative objective decrease ``g' I^-1 g / (2 |f|)`` of one scoring step.

    The gradient norm alone is not scale free: a sharp resonance makes the
    ``f0`` direction so stiff that round-off in the objective stalls the
    trust region with a visible but meaningless gradient.
    """
    val, grad = prob.mean_value_and_grad(x)
    if not np.isfinite(val):
        return np.inf
    try:
        step = np.linalg.solve(prob.fisher(x), grad)
    except np.linalg.LinAlgError:
        return np.inf
    return float(0.5 * abs(grad @ step) / max(1.0, abs(val)))


def _x0(init: ProfiledParams, profile: bool) -> np.ndarray:
    eta = init.eta.copy()
    eta[2] = max(eta[2], 1e-12)
    x = np.log(eta)
    return x if profile else np.concatenate([[np.log(init.tau)], x])


def fit(
    method: str,
    data: Data,
    init: Optional[ProfiledParams] = None,
    opts: Optional[FitOptions] = None,
    *,
    T: float = DEFAULT_TEMPERATURE,
    profile: bool = True,
    pink: bool = False,
    background: Optional[tuple] = None,
    compute_cov: bool = True,
) -> FitResult:
    """Fit the SHO (+ white [+ 1/f]) model by ``method``.

    Parameters
    ----------
    method : {"NLS", "LP", "MLE"}
    data : BinnedPeriodogram or Periodogram
        Binned data for NLS/LP, unbinned ordinates for MLE, already restricted
        to the fitting range.
    init : ProfiledParams, optional
        Starting point; defaults to :func:`initial_guess`.
    profile : bool
        Eliminate ``tau`` in closed form (3 shape parameters) instead of
        optimizing it jointly.  Ignored (always joint) when ``background`` is set.
    pink : bool
        Fit ``R_f`` and ``alpha`` of a 1/f term as extra shape parameters.
    background : (A_f, alpha), optional
        Fixed 1/f term added to the model.
    compute_cov : bool
        Attach the covariance from :func:`std_errors` when the fit converged.

    Returns
    -------
    FitResult
        ``converged`` is False (never an exception) when the stopping rules
        were not met within ``opts.max_iter`` iterations.
    """
    m = _check_method(method)
    opts = opts or FitOptions()
    a = _arrays(m, data, background)
    if m == "LP" and np.any(a.y <= 0):
        raise ValueError("LP needs strictly positive bin means")
    if init is None:
        init = initial_guess(data, n_pink=pink)
    elif not isinstance(init, ProfiledParams):
        raise ValueError("init must be ProfiledParams")
    if pink and not init.has_pink:
        raise ValueError("pink fit needs an initial value with R_f and alpha")
    if not pink and init.has_pink:
        init = ProfiledParams(init.tau, init.f0, init.gamma, init.R_w)
    n_eta = 5 if pink else 3
    offset = lp_offset(a.bin_size) if (m == "LP" and opts.lp_debias) else 0.0
    prob = _Problem(m, a, n_eta, profile, offset)
    x0 = _x0(init, prob.profile)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial parameters must be positive and finite")

    if m in ("NLS", "LP"):
        res = optimize.least_squares(
            prob.residuals,
            x0,
            jac=prob.jacobian,
            method="lm",
            ftol=opts.ftol,
            xtol=1e-15,
            gtol=opts.gtol,
            max_nfev=opts.max_iter,
        )
        x = res.x
        converged = bool(res.status > 0)
        n_iter = int(res.nfev)
        message = str(res.message)
    else:
        res = optimize.minimize(
            prob.mean_value_and_grad,
            x0,
            jac=True,
            hess=prob.fisher,
            method="trust-exact",
            options=dict(gtol=opts.gtol, maxiter=opts.max_iter),
        )
        x = res.x
        gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
        converged = bool(res.success) or gnorm < opts.gtol
        message = str(res.message)
        if not converged and _newton_decrement(prob, x) < opts.ftol:
            converged = True
            message += " (predicted relative decrease below ftol)"
        n_iter = int(res.nit)
    try:
        pp = prob.params(x)
        theta = to_sho(pp, T)
        value = prob.value(x)
    except (ValueError, DegenerateModelError) as exc:
        log.debug("fit ended at invalid parameters: %s", exc)
        pp, theta, value, converged = init, to_sho(init, T), np.inf, False
        message = f"invalid parameters at termination: {exc}"
    if not np.isfinite(value):
        converged = False
    result = FitResult(
        theta_hat=theta,
        profiled=pp,
        objective_value=value,
        method=m,
        converged=converged,
        n_iter=n_iter,
        fitting_range=fit_range_of(data),
        bin_size=a.bin_size,
        message=message,
        background=background,
        lp_offset=offset,
    )
    if compute_cov and converged:
        try:
            result.cov, result.cov_names = std_errors(m, result, data, opts=opts, T=T)
        except DegenerateCovarianceError as exc:
            result.message += f"; covariance unavailable: {exc}"
    return result


def fit_periodogram(
    method: str,
    p: Periodogram,
    bin_size: int = 100,
    init: Optional[ProfiledParams] = None,
    **kwargs,
) -> FitResult:
    """Fit an in-range periodogram, binning it first for NLS and LP."""
    m = _check_method(method)
    data = p if m == "MLE" else bin_periodogram(p, bin_size)
    if init is None:
        init = initial_guess(bin_periodogram(p, bin_size), n_pink=kwargs.get("pink", False))
    return fit(m, data, init, **kwargs)


# ---------------------------------------------------------------------------
# standard errors


def _natural_names(pink: bool) -> tuple:
    return ("f0", "Q", "k", "A_w", "A_f", "alpha") if pink else ("f0", "Q", "k", "A_w")


def _hessian(fun, x, h):
    """Central-difference Hessian; ``fun`` returns per-point terms summed after differencing."""
    n = x.size
    base = fun(x)
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            if i == j:
                d = fun(x + ei) - 2.0 * base + fun(x - ei)
                hess[i, i] = np.sum(d) / h**2
            else:
                d = (fun(x + ei + ej) - fun(x + ei - ej)) - (fun(x - ei + ej) - fun(x - ei - ej))
                hess[i, j] = hess[j, i] = np.sum(d) / (4.0 * h**2)
    return hess


def std_errors(
    method: str,
    fit_result: FitResult,
    data: Data,
    opts: Optional[FitOptions] = None,
    T: Optional[float] = None,
):
    """Covariance of ``(f0, Q, k, A_w[, A_f, alpha])`` at a fitted optimum.

    LP and MLE invert the observed information (``B`` times the Hessian of
    half the LP sum of squares, or the Hessian of the Whittle objective).
    NLS uses the sandwich ``A^-1 C A^-1`` with ``A`` the Hessian of half the
    sum of squares and ``C`` the sum of outer products of per-bin score
    contributions.  Derivatives are taken in log parameters and mapped to
    natural parameters by the delta method.  Parameters of a fixed
    background are treated as known.

    Returns
    -------
    cov : ndarray
    names : tuple of str
    """
    m = _check_method(method)
    opts = opts or FitOptions()
    T = fit_result.theta_hat.T if T is None else T
    if not fit_result.converged:
        raise DegenerateCovarianceError("fit did not converge")
    a = _arrays(m, data, fit_result.background)
    pp = fit_result.profiled
    if pp.R_w <= 0:
        raise DegenerateCovarianceError("white-noise level at the boundary R_w = 0")
    q = np.log(np.concatenate([[pp.tau], pp.eta]))
    zed = np.log(a.y) - fit_result.lp_offset if m == "LP" else None

    def model(qq):
        return a.background + a.fs * np.exp(qq[0]) * shape(a.f, np.exp(qq[1:]))

    def terms(qq):
        s = model(qq)
        if m == "LP":
            return 0.5 * (zed - np.log(s)) ** 2 - 0.5 * (zed - np.log(model(q))) ** 2
        if m == "NLS":
            return 0.5 * (a.y - s) ** 2 - 0.5 * (a.y - model(q)) ** 2
        s0 = model(q)
        return (a.y / s - a.y / s0) + (np.log(s) - np.log(s0))

    h = opts.hessian_step
    hess = _hessian(terms, q, h)
    if not np.all(np.isfinite(hess)):
        raise DegenerateCovarianceError("non-finite Hessian")
    try:
        if m == "LP":
            cov_q = np.linalg.inv(a.bin_size * hess)
        elif m == "MLE":
            cov_q = np.linalg.inv(hess)
        else:
            a_inv = np.linalg.inv(hess)
            s0 = model(q)
            lg = log_shape_grad(a.f, np.exp(q[1:]))
            sho = s0 - a.background
            grad_s = np.hstack([sho[:, None], sho[:, None] * lg])
            score = (a.y - s0)[:, None] * grad_s
            meat = score.T @ score
            cov_q = a_inv @ meat @ a_inv
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError(str(exc)) from exc
    cov_q = 0.5 * (cov_q + cov_q.T)
    if np.any(np.diag(cov_q) <= 0) or not np.all(np.isfinite(cov_q)):
        raise DegenerateCovarianceError("covariance is not positive definite")

    th = to_sho(pp, T)
    pink = pp.has_pink
    n = q.size
    jac = np.zeros((n, n))
    jac[0, 1] = th.f0
    jac[1, 1], jac[1, 2] = -th.Q, th.Q
    jac[2, 0], jac[2, 2] = -th.k, -th.k
    jac[3, 0], jac[3, 3] = th.A_w, th.A_w
    if pink:
        jac[4, 0], jac[4, 4] = th.A_f, th.A_f
        jac[5, 5] = th.alpha
    cov = jac @ cov_q @ jac.T
    return 0.5 * (cov + cov.T), _natural_names(pink)


# ---------------------------------------------------------------------------
# 1/f handling


def fit_power_law(low: BinnedPeriodogram, debias: bool = False) -> tuple:
    """LP fit of ``C + A_f f^-alpha`` to low-frequency bins.

    ``C`` absorbs the white floor and the (nearly flat) SHO tail.  Bounds keep
    ``A_f >= 0`` and ``alpha`` inside ``(0, 2)``, so an absent 1/f term can reach zero.
    ``debias`` applies the same log-Gamma offset as ``FitOptions.lp_debias``.

    Returns
    -------
    (A_f, alpha, C) with PSD-level amplitudes in fm^2/Hz units.
    """
    f = low.bin_freqs
    v = low.bin_means / low.fs
    if np.any(v <= 0):
        raise ValueError("LP needs strictly positive bin means")
    zed = np.log(v) - (lp_offset(low.bin_size) if debias else 0.0)
    f_ref = float(np.exp(np.mean(np.log(f))))
    scale = float(np.exp(np.mean(zed)))
    x_rel = f / f_ref

    def resid(p):
        c, amp, alpha = p
        s = scale * (c + amp * x_rel ** (-alpha))
        return zed - np.log(np.maximum(s, 1e-300))

    starts = ([0.5, 0.5, 0.5], [1e-3, 1.0, 1.0], [1.0, 1e-3, 0.5])
    best = None
    for p0 in starts:
        res = optimize.least_squares(
            resid, p0, bounds=([0, 0, 1e-6], [np.inf, np.inf, 2.0 - 1e-6]), xtol=1e-15, ftol=1e-15, gtol=1e-15
        )
        if best is None or res.cost < best.cost:
            best = res
    c, amp, alpha = best.x
    return float(amp * scale * f_ref**alpha), float(alpha), float(c * scale)


def fit_two_step_1f(
    low: BinnedPeriodogram,
    data: Data,
    init: Optional[ProfiledParams] = None,
    method: str = "LP",
    opts: Optional[FitOptions] = None,
    *,
    T: float = DEFAULT_TEMPERATURE,
    compute_cov: bool = True,
) -> FitResult:
    """Two-step fit for spectra with 1/f noise.

    Stage 1 estimates ``(A_f, alpha)`` from the low-frequency bins ``low``
    alone; stage 2 fits ``(k, f0, Q, A_w)`` on ``data`` with that 1/f term
    frozen in the model.
    """
    opts = opts or FitOptions()
    a_f, alpha, _ = fit_power_law(low, debias=opts.lp_debias)
    background = (a_f, alpha) if a_f > 0 else None
    res = fit(method, data, init, opts, T=T, background=background, compute_cov=compute_cov)
    th = res.theta_hat
    res.theta_hat = replace(th, A_f=a_f, alpha=alpha)
    res.background = (a_f, alpha)
    return res
