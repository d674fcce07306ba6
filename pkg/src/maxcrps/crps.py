"""Closed-form CRPS for 1-Frechet forecasts and the projection objective.

The univariate score of a Frechet CDF exp(-v/r) against an observation m,
integrated with the weight r^(-1/2) dr, has the closed form

    crps_frechet(m, v) = 4 * [ sqrt(m) * (exp(-v/m) - 1/2)
                               + sqrt(v) * (gamma_half(v/m) - sqrt(pi/2)) ]

where gamma_half is the lower incomplete gamma function of order 1/2.
The multivariate objective sums this score over max-linear projections of
the data, one column per direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError, DomainError
from .special import SQRT_HALF_PI, SQRT_PI, _gamma_half_raw


@dataclass(frozen=True)
class CrpsTerm:
    """One (observed max-linear combination, model tail value) score pair."""

    m: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.m) and self.m > 0):
            raise DomainError(f"CrpsTerm: m must be finite and > 0, got {self.m}")
        if not (np.isfinite(self.v) and self.v >= 0):
            raise DomainError(f"CrpsTerm: v must be finite and >= 0, got {self.v}")

    def score(self) -> float:
        return crps_frechet(self.m, self.v)


def _validate_m_v(m, v, v_strict: bool):
    m_arr = np.asarray(m, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(m_arr)) or np.any(m_arr <= 0):
        raise DomainError("crps_frechet: m must be finite and > 0")
    if np.any(~np.isfinite(v_arr)):
        raise DomainError("crps_frechet: v must be finite")
    if v_strict:
        if np.any(v_arr <= 0):
            raise DomainError("crps_frechet_dv: v must be > 0")
    elif np.any(v_arr < 0):
        raise DomainError("crps_frechet: v must be >= 0")
    return m_arr, v_arr


def crps_frechet(m, v):
    """Closed-form Frechet CRPS; nonnegative, accepts arrays.

    ``v = 0`` is admitted with the exact limit 2*sqrt(m), so degenerate
    model evaluations during a line search stay finite.
    """
    m_arr, v_arr = _validate_m_v(m, v, v_strict=False)
    z = v_arr / m_arr
    out = 4.0 * (
        np.sqrt(m_arr) * (np.exp(-z) - 0.5)
        + np.sqrt(v_arr) * (_gamma_half_raw(z) - SQRT_HALF_PI)
    )
    scalar = np.isscalar(m) and np.isscalar(v)
    return float(out) if scalar else out


def crps_frechet_dv(m, v):
    """Partial derivative of crps_frechet with respect to the tail value v.

    Equals 2 * (gamma_half(v/m) - sqrt(pi/2)) / sqrt(v); it matches central
    finite differences of crps_frechet (the score is minimized over v where
    gamma_half(v/m) = sqrt(pi/2)).
    """
    m_arr, v_arr = _validate_m_v(m, v, v_strict=True)
    out = 2.0 * (_gamma_half_raw(v_arr / m_arr) - SQRT_HALF_PI) / np.sqrt(v_arr)
    scalar = np.isscalar(m) and np.isscalar(v)
    return float(out) if scalar else out


def expected_crps(v0, v):
    """Mean of crps_frechet(X, v) for X Frechet with scale v0.

    Closed form 2*sqrt(pi) * (2*sqrt(v0+v) - sqrt(v0) - sqrt(2v)); as a
    function of v it is minimized at v = v0, which is what makes the score
    proper on the Frechet family.
    """
    v0_arr = np.asarray(v0, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(v0_arr)) or np.any(v0_arr <= 0):
        raise DomainError("expected_crps: v0 must be finite and > 0")
    if np.any(~np.isfinite(v_arr)) or np.any(v_arr < 0):
        raise DomainError("expected_crps: v must be finite and >= 0")
    out = 2.0 * SQRT_PI * (2.0 * np.sqrt(v0_arr + v_arr) - np.sqrt(v0_arr) - np.sqrt(2.0 * v_arr))
    scalar = np.isscalar(v0) and np.isscalar(v)
    return float(out) if scalar else out


def crps_objective(projections, v_values) -> float:
    """Total CRPS of per-direction tail values against projected data.

    ``projections`` is either an (n, n_directions) array of max-linear
    combinations or a ProjectionMatrix carrying a canonical column order.
    When an order is present both the columns and ``v_values`` are reduced
    in that order, so the result is bitwise invariant under permutations of
    the direction set.  The reduction is observation-major: per-row sums in
    the fixed column order, then a compensated sum over rows.
    """
    values = np.asarray(getattr(projections, "values", projections), dtype=float)
    order = getattr(projections, "canonical_order", None)
    v_arr = np.asarray(v_values, dtype=float)
    if values.ndim != 2:
        raise ContractError(f"projections must be a 2-d array, got ndim={values.ndim}")
    if v_arr.ndim != 1 or v_arr.shape[0] != values.shape[1]:
        raise ContractError(
            f"v_values length {v_arr.shape} does not match projection columns {values.shape[1]}"
        )
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise DataError("projections must be strictly positive and finite")
    if np.any(~np.isfinite(v_arr)) or np.any(v_arr < 0):
        raise DomainError("v_values must be finite and >= 0")
    if order is not None:
        values = values[:, order]
        v_arr = v_arr[order]
    terms = crps_frechet(values, v_arr[None, :])
    row_sums = terms.sum(axis=1)
    return math.fsum(row_sums.tolist())
