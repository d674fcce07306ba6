"""Scalar special functions and 1-Frechet distribution utilities.

Everything here is a pure function of its arguments and accepts either
scalars or numpy arrays where noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special as sps

from .errors import DomainError

SQRT_PI = math.sqrt(math.pi)
SQRT_HALF_PI = math.sqrt(math.pi / 2.0)

# Above this argument exp(-z) underflows any contribution; gamma_half is
# flat at sqrt(pi) to double precision.
_GAMMA_HALF_SATURATION = 700.0


def erf(x):
    """Gauss error function, accurate to ~1 ulp over the real line."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("erf: argument must be finite")
    out = sps.erf(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _gamma_half_raw(z):
    """gamma_{1/2}(z) without domain checks; z may contain +inf."""
    z = np.asarray(z, dtype=float)
    out = SQRT_PI * sps.erf(np.sqrt(z))
    return np.where(z >= _GAMMA_HALF_SATURATION, SQRT_PI, out)


def lower_incomplete_gamma_half(z):
    """Lower incomplete gamma of order 1/2: integral of t^(-1/2) e^(-t) on [0, z].

    Computed through the identity gamma_{1/2}(z) = sqrt(pi) * erf(sqrt(z)),
    which is well conditioned on the whole half line.  Saturates exactly at
    sqrt(pi) for z >= 700.
    """
    arr = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("lower_incomplete_gamma_half: z must be finite and >= 0")
    out = _gamma_half_raw(arr)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x) for nu, x > 0."""
    nu_arr = np.asarray(nu, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(nu_arr)) or np.any(nu_arr <= 0):
        raise DomainError("bessel_k: order nu must be finite and > 0")
    if np.any(~np.isfinite(x_arr)) or np.any(x_arr <= 0):
        raise DomainError("bessel_k: argument x must be finite and > 0")
    out = sps.kv(nu_arr, x_arr)
    scalar = (np.isscalar(nu) or nu_arr.ndim == 0) and (np.isscalar(x) or x_arr.ndim == 0)
    return float(out) if scalar else out


@dataclass(frozen=True)
class FrechetLaw:
    """1-Frechet distribution with CDF exp(-scale / x) on x > 0."""

    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"FrechetLaw: scale must be finite and > 0, got {self.scale}")


def frechet_cdf(law: FrechetLaw, x):
    """CDF of ``law`` at ``x``; 0 for x <= 0.  Accepts arrays."""
    arr = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(arr > 0, np.exp(-law.scale / np.where(arr > 0, arr, 1.0)), 0.0)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def frechet_quantile(law: FrechetLaw, p):
    """Quantile function of ``law``: -scale / log(p) for p in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0) or np.any(arr >= 1):
        raise DomainError("frechet_quantile: p must lie strictly inside (0, 1)")
    out = -law.scale / np.log(arr)
    return float(out) if np.isscalar(p) or arr.ndim == 0 else out
