"""SHO power spectral density models in natural and profiled form.

The natural parameters are ``(k, f0, Q, A_w[, A_f, alpha])``.  Writing the
model as ``S(f) = tau * G(f | eta)`` with

    tau = kB T / (k pi f0 Q),  gamma = f0 Q,  R_w = A_w / tau,  R_f = A_f / tau,

leaves it linear in the scale ``tau``, which estimators profile out.
PSD values are in fm^2/Hz, frequencies in Hz.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "K_BOLTZMANN",
    "DEFAULT_TEMPERATURE",
    "M2_TO_FM2",
    "ShoParams",
    "ProfiledParams",
    "shape",
    "log_shape_grad",
    "psd_eval",
    "profiled_eval",
    "grad_eta",
    "to_profiled",
    "to_sho",
]

K_BOLTZMANN = 1.380649e-23  # J/K, exact SI
DEFAULT_TEMPERATURE = 298.0  # K
M2_TO_FM2 = 1e30


@dataclass(frozen=True)
class ShoParams:
    """Natural SHO + noise parameters.

    ``k`` in N/m, ``f0`` in Hz, ``Q`` unitless, ``A_w`` in fm^2/Hz, ``A_f`` in
    fm^2/Hz^(1-alpha), ``T`` in K.  The 1/f term is present when ``A_f`` is
    not None.
    """

    k: float
    f0: float
    Q: float
    A_w: float = 0.0
    A_f: Optional[float] = None
    alpha: Optional[float] = None
    T: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        for name in ("k", "f0", "Q", "T"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.A_w) and self.A_w >= 0):
            raise ValueError("A_w must be non-negative")
        if (self.A_f is None) != (self.alpha is None):
            raise ValueError("A_f and alpha must be given together")
        if self.A_f is not None:
            if not self.A_f >= 0:
                raise ValueError("A_f must be non-negative")
            if not 0 < self.alpha < 2:
                raise ValueError("alpha must lie in (0, 2)")

    @property
    def has_pink(self) -> bool:
        return self.A_f is not None

    @property
    def tau(self) -> float:
        """SHO low-frequency level kB T / (k pi f0 Q) in fm^2/Hz."""
        return K_BOLTZMANN * self.T / (self.k * np.pi * self.f0 * self.Q) * M2_TO_FM2

    @property
    def peak(self) -> float:
        """SHO value at ``f0`` (floor terms excluded), fm^2/Hz."""
        return self.tau * self.Q**2


@dataclass(frozen=True)
class ProfiledParams:
    """Scale ``tau`` (fm^2/Hz) and shape parameters ``eta``.

    ``eta = (f0, gamma, R_w)`` or, with 1/f noise, ``(f0, gamma, R_w, R_f, alpha)``.
    """

    tau: float
    f0: float
    gamma: float
    R_w: float
    R_f: Optional[float] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        for name in ("tau", "f0", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.R_w >= 0:
            raise ValueError("R_w must be non-negative")
        if (self.R_f is None) != (self.alpha is None):
            raise ValueError("R_f and alpha must be given together")

    @property
    def has_pink(self) -> bool:
        return self.R_f is not None

    @property
    def eta(self) -> np.ndarray:
        e = [self.f0, self.gamma, self.R_w]
        if self.has_pink:
            e += [self.R_f, self.alpha]
        return np.array(e, dtype=float)

    @classmethod
    def from_eta(cls, tau: float, eta) -> "ProfiledParams":
        eta = np.asarray(eta, dtype=float)
        if eta.size not in (3, 5):
            raise ValueError("eta must have 3 or 5 components")
        return cls(float(tau), *map(float, eta))


def to_profiled(p: ShoParams) -> ProfiledParams:
    tau = p.tau
    r_f = None if p.A_f is None else p.A_f / tau
    return ProfiledParams(tau, p.f0, p.f0 * p.Q, p.A_w / tau, r_f, p.alpha)


def to_sho(pp: ProfiledParams, T: float = DEFAULT_TEMPERATURE) -> ShoParams:
    """Inverse map: ``Q = gamma/f0``, ``k = kB T/(tau pi gamma)``, ``A_w = R_w tau``."""
    k = K_BOLTZMANN * T / (pp.tau / M2_TO_FM2 * np.pi * pp.gamma)
    a_f = None if pp.R_f is None else pp.R_f * pp.tau
    return ShoParams(k, pp.f0, pp.gamma / pp.f0, pp.R_w * pp.tau, a_f, pp.alpha, T)


def _check_freq(f, pink: bool) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if pink and np.any(f <= 0):
        raise ValueError("the 1/f term is undefined at f <= 0")
    if np.any(f < 0):
        raise ValueError("frequencies must be non-negative")
    return f


def shape(f, eta) -> np.ndarray:
    """``G(f | eta) = R_w [+ R_f f^-alpha] + 1 / {((f/f0)^2 - 1)^2 + (f/gamma)^2}``."""
    eta = np.asarray(eta, dtype=float)
    f0, gamma, r_w = eta[:3]
    u2 = (f / f0) ** 2
    g = r_w + 1.0 / ((u2 - 1.0) ** 2 + (f / gamma) ** 2)
    if eta.size == 5:
        g = g + eta[3] * f ** (-eta[4])
    return g


def log_shape_grad(f, eta) -> np.ndarray:
    """Gradient of ``log G`` with respect to ``log eta``; shape ``(len(f), len(eta))``."""
    eta = np.asarray(eta, dtype=float)
    f = np.asarray(f, dtype=float)
    f0, gamma, r_w = eta[:3]
    u2 = (f / f0) ** 2
    v2 = (f / gamma) ** 2
    d = (u2 - 1.0) ** 2 + v2
    g = r_w + 1.0 / d
    cols = [4.0 * u2 * (u2 - 1.0) / d**2, 2.0 * v2 / d**2, np.full_like(f, r_w)]
    if eta.size == 5:
        pink = eta[3] * f ** (-eta[4])
        g = g + pink
        cols += [pink, -eta[4] * np.log(f) * pink]
    return np.column_stack(cols) / g[:, None]


def psd_eval(params: ShoParams, f) -> np.ndarray:
    """One-sided PSD ``S(f | theta)`` in fm^2/Hz."""
    f = _check_freq(f, params.has_pink)
    return profiled_eval(to_profiled(params), f)


def profiled_eval(pp: ProfiledParams, f) -> np.ndarray:
    """``tau * G(f | eta)`` in fm^2/Hz."""
    f = _check_freq(f, pp.has_pink)
    return pp.tau * shape(f, pp.eta)


def grad_eta(pp: ProfiledParams, f) -> np.ndarray:
    """``d log G / d log eta`` evaluated at frequencies ``f``."""
    f = _check_freq(np.atleast_1d(f), pp.has_pink)
    return log_shape_grad(f, pp.eta)
