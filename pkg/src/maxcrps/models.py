"""Tail dependence functions, parameter gradients, and dependence summaries.

Three max-stable families are implemented, each exposing the tail value
V(x) = -log P(X <= x), its gradient in the parameters, a parameter-space
description, and a sampler:

* multivariate logistic:   V(x) = sigma * (sum_i x_i^(-1/alpha))^alpha
* max-linear:              V(x) = sum_j max_i a_ij / x_i
* Schlather random field:  V(x) = E max_i [sqrt(2*pi) * w_i]_+ / x_i
                           for a stationary Gaussian field w, evaluated by
                           Monte Carlo with common random numbers.

All tail functions are homogeneous: V(r*x) = V(x) / r.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.special as sps

from .errors import ContractError, DomainError, NumericalError
from .linalg import cholesky
from .rng import RngStream

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Parameter-space description and coordinate transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamDomain:
    """Open box for one parameter plus a finite range for start points.

    Positive half-lines are searched in log coordinates, bounded intervals
    in logit coordinates; the optimizer works in the unconstrained scale.
    """

    name: str
    lower: float
    upper: float
    start_lo: float
    start_hi: float

    def __post_init__(self):
        if not (self.lower < self.start_lo < self.start_hi):
            raise DomainError(f"ParamDomain {self.name}: bad start range")
        if not (self.start_hi < self.upper or math.isinf(self.upper)):
            raise DomainError(f"ParamDomain {self.name}: start range exceeds upper bound")

    def contains(self, x: float) -> bool:
        return self.lower < x < self.upper

    def to_unconstrained(self, x: float) -> float:
        if not self.contains(x):
            raise DomainError(f"{self.name}={x} outside ({self.lower}, {self.upper})")
        if math.isinf(self.upper):
            return math.log(x - self.lower)
        z = (x - self.lower) / (self.upper - self.lower)
        return math.log(z) - math.log1p(-z)

    def from_unconstrained(self, y: float) -> float:
        y = min(max(y, -700.0), 700.0)
        if math.isinf(self.upper):
            return self.lower + math.exp(y)
        width = self.upper - self.lower
        if y >= 0:
            z = 1.0 / (1.0 + math.exp(-y))
        else:
            e = math.exp(y)
            z = e / (1.0 + e)
        return self.lower + width * z


class MonteCarloValue(NamedTuple):
    """A Monte Carlo estimate together with its standard error."""

    value: float
    se: float


# ---------------------------------------------------------------------------
# Multivariate logistic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticParams:
    """Scale sigma > 0 and dependence exponent alpha in (0, 1)."""

    sigma: float
    alpha: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"LogisticParams: sigma must be > 0, got {self.sigma}")
        if not (np.isfinite(self.alpha) and 0 < self.alpha < 1):
            raise DomainError(f"LogisticParams: alpha must lie in (0, 1), got {self.alpha}")


def _check_positive_vector(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ContractError(f"expected a vector, got shape {arr.shape}")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("coordinates must be strictly positive and finite")
    return arr


def _logistic_tail_values(params: LogisticParams, points: np.ndarray) -> np.ndarray:
    # Summands are sorted before reduction so that relabeling coordinates
    # (sites) leaves the floating-point result bit-identical.
    pows = points ** (-1.0 / params.alpha)
    total = np.sort(pows, axis=1).sum(axis=1)
    return params.sigma * total ** params.alpha


def v_logistic(params: LogisticParams, x) -> float:
    """Logistic tail value sigma * (sum_i x_i^(-1/alpha))^alpha."""
    arr = _check_positive_vector(x)
    return float(_logistic_tail_values(params, arr[None, :])[0])


def _logistic_tail_grads(params: LogisticParams, points: np.ndarray):
    sigma, alpha = params.sigma, params.alpha
    pows = points ** (-1.0 / alpha)
    total = np.sort(pows, axis=1).sum(axis=1)
    values = sigma * total ** alpha
    weighted_log = (pows * np.log(points)).sum(axis=1)
    d_sigma = values / sigma
    d_alpha = values * (np.log(total) + weighted_log / (alpha * total))
    return values, np.stack([d_sigma, d_alpha], axis=1)


def v_logistic_grad(params: LogisticParams, x) -> np.ndarray:
    """Gradient (dV/dsigma, dV/dalpha) of the logistic tail value."""
    arr = _check_positive_vector(x)
    _, grads = _logistic_tail_grads(params, arr[None, :])
    return grads[0]


class LogisticModel:
    """Exchangeable logistic max-stable model in dimension d."""

    family = "logistic"
    param_names = ("sigma", "alpha")

    def __init__(self, dimension: int, param_space: Sequence[ParamDomain] | None = None):
        if dimension < 1:
            raise DomainError("LogisticModel: dimension must be >= 1")
        self.dimension = int(dimension)
        self.param_space = tuple(param_space) if param_space is not None else (
            ParamDomain("sigma", 0.0, math.inf, 0.5, 20.0),
            ParamDomain("alpha", 0.0, 1.0, 0.05, 0.95),
        )

    def params(self, theta) -> LogisticParams:
        sigma, alpha = (float(t) for t in np.asarray(theta, dtype=float))
        return LogisticParams(sigma, alpha)

    def _points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ContractError(f"expected points of shape (q, {self.dimension})")
        if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
            raise DomainError("points must be strictly positive and finite")
        return pts

    def v(self, theta, x) -> float:
        return v_logistic(self.params(theta), x)

    def v_many(self, theta, points) -> np.ndarray:
        return _logistic_tail_values(self.params(theta), self._points(points))

    def v_grad(self, theta, x) -> np.ndarray:
        return v_logistic_grad(self.params(theta), x)

    def v_grad_many(self, theta, points) -> np.ndarray:
        _, grads = _logistic_tail_grads(self.params(theta), self._points(points))
        return grads

    def sample(self, theta, stream: RngStream, n: int):
        from . import sampling

        return sampling.sample_logistic(stream, self.params(theta), self.dimension, n)

    def margin_scales(self, theta) -> np.ndarray:
        return np.full(self.dimension, self.params(theta).sigma)

    def restrict(self, indices) -> "LogisticModel":
        return LogisticModel(len(tuple(indices)), self.param_space)


# ---------------------------------------------------------------------------
# Max-linear (spectrally discrete)
# ---------------------------------------------------------------------------

def _validate_coefficient_matrix(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DomainError(f"coefficient matrix must be 2-d, got shape {arr.shape}")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("coefficient matrix entries must be finite and >= 0")
    if np.any(arr.sum(axis=1) == 0):
        raise DomainError("coefficient matrix has an all-zero row (degenerate margin)")
    return arr


@dataclass(frozen=True)
class MaxLinearSpec:
    """A finite list of candidate coefficient matrices plus the active index."""

    matrices: tuple[np.ndarray, ...]
    theta: int = 0

    def __post_init__(self):
        if not self.matrices:
            raise DomainError("MaxLinearSpec: candidate list must be nonempty")
        validated = tuple(_validate_coefficient_matrix(a) for a in self.matrices)
        dims = {a.shape[0] for a in validated}
        if len(dims) != 1:
            raise ContractError(f"candidate matrices disagree on dimension: {sorted(dims)}")
        if not (0 <= self.theta < len(validated)):
            raise DomainError(f"MaxLinearSpec: theta index {self.theta} out of range")
        object.__setattr__(self, "matrices", validated)

    @property
    def dimension(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.matrices[self.theta]


def _max_linear_tail_values(a: np.ndarray, points: np.ndarray) -> np.ndarray:
    # (q, d, k) ratios -> column maxima -> sum over factors
    ratios = a[None, :, :] / points[:, :, None]
    return ratios.max(axis=1).sum(axis=1)


def v_max_linear(spec: MaxLinearSpec | np.ndarray, x) -> float:
    """Max-linear tail value sum_j max_i a_ij / x_i for the active matrix."""
    a = spec.matrix if isinstance(spec, MaxLinearSpec) else _validate_coefficient_matrix(spec)
    arr = _check_positive_vector(x)
    if arr.shape[0] != a.shape[0]:
        raise ContractError(f"x has length {arr.shape[0]}, matrix has {a.shape[0]} rows")
    return float(_max_linear_tail_values(a, arr[None, :])[0])


class MaxLinearModel:
    """Max-stable vector X_i = max_j a_ij Z_j over a finite candidate family."""

    family = "max_linear"

    def __init__(self, spec: MaxLinearSpec):
        self.spec = spec
        self.dimension = spec.dimension

    @property
    def n_candidates(self) -> int:
        return len(self.spec.matrices)

    def _points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ContractError(f"expected points of shape (q, {self.dimension})")
        if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
            raise DomainError("points must be strictly positive and finite")
        return pts

    def v_candidate(self, index: int, x) -> float:
        return v_max_linear(self.spec.matrices[index], x)

    def v_many_candidate(self, index: int, points) -> np.ndarray:
        return _max_linear_tail_values(self.spec.matrices[index], self._points(points))

    def v(self, theta, x) -> float:
        return self.v_candidate(int(theta), x)

    def v_many(self, theta, points) -> np.ndarray:
        return self.v_many_candidate(int(theta), points)

    def sample(self, theta, stream: RngStream, n: int):
        from . import sampling

        spec = self.spec if theta is None else MaxLinearSpec(self.spec.matrices, int(theta))
        return sampling.sample_max_linear(stream, spec, n)

    def margin_scales(self, theta) -> np.ndarray:
        return self.spec.matrices[int(theta)].sum(axis=1)

    def restrict(self, indices) -> "MaxLinearModel":
        idx = list(indices)
        matrices = tuple(a[idx, :] for a in self.spec.matrices)
        return MaxLinearModel(MaxLinearSpec(matrices, self.spec.theta))


# ---------------------------------------------------------------------------
# Correlation functions and site geometry
# ---------------------------------------------------------------------------

_CORRELATION_KINDS = ("stable", "matern", "cauchy")


@dataclass(frozen=True)
class CorrelationFn:
    """Isotropic correlation for the underlying Gaussian field.

    stable:  exp[-(h/theta1)^theta2],              theta1 > 0, theta2 in (0, 2]
    matern:  (t^theta2 / (Gamma(theta2) 2^(theta2-1))) K_theta2(t),
             t = sqrt(2*theta2) h / theta1,        theta1 > 0, theta2 > 0
    cauchy:  (1 + (h/theta1)^2)^(-theta2),         theta1 > 0, theta2 > 0
    """

    kind: str
    theta1: float
    theta2: float

    def __post_init__(self):
        if self.kind not in _CORRELATION_KINDS:
            raise DomainError(f"unknown correlation kind {self.kind!r}")
        if not (np.isfinite(self.theta1) and self.theta1 > 0):
            raise DomainError(f"correlation range theta1 must be > 0, got {self.theta1}")
        if not np.isfinite(self.theta2):
            raise DomainError("correlation shape theta2 must be finite")
        if self.kind == "stable" and not (0 < self.theta2 <= 2):
            raise DomainError(f"stable correlation needs theta2 in (0, 2], got {self.theta2}")
        if self.kind in ("matern", "cauchy") and not self.theta2 > 0:
            raise DomainError(f"{self.kind} correlation needs theta2 > 0, got {self.theta2}")


def correlation(fn: CorrelationFn, h):
    """Evaluate the correlation at distance(s) h >= 0."""
    arr = np.asarray(h, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("distance h must be finite and >= 0")
    if fn.kind == "stable":
        out = np.exp(-((arr / fn.theta1) ** fn.theta2))
    elif fn.kind == "cauchy":
        out = (1.0 + (arr / fn.theta1) ** 2) ** (-fn.theta2)
    else:
        t = math.sqrt(2.0 * fn.theta2) * arr / fn.theta1
        safe = np.where(t < 1e-8, 1.0, t)
        norm = sps.gamma(fn.theta2) * 2.0 ** (fn.theta2 - 1.0)
        out = np.where(t < 1e-8, 1.0, safe ** fn.theta2 * sps.kv(fn.theta2, safe) / norm)
    return float(out) if np.isscalar(h) or arr.ndim == 0 else out


@dataclass(frozen=True)
class SiteSet:
    """Planar observation sites with labels; coordinates must be distinct."""

    coordinates: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        coords = np.asarray(self.coordinates, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ContractError(f"coordinates must have shape (d, 2), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ContractError("site coordinates must be finite")
        labels = self.labels or tuple(f"site_{i + 1}" for i in range(coords.shape[0]))
        if len(labels) != coords.shape[0]:
            raise ContractError("number of labels does not match number of sites")
        dist = distance_matrix_from_coords(coords)
        off = dist[~np.eye(coords.shape[0], dtype=bool)]
        if off.size and off.min() <= 0:
            raise ContractError("site coordinates must be pairwise distinct")
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "labels", labels)

    @property
    def dimension(self) -> int:
        return self.coordinates.shape[0]

    def restrict(self, indices) -> "SiteSet":
        idx = list(indices)
        return SiteSet(self.coordinates[idx], tuple(self.labels[i] for i in idx))


def distance_matrix_from_coords(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def distance_matrix(sites: SiteSet) -> np.ndarray:
    return distance_matrix_from_coords(sites.coordinates)


def correlation_matrix(fn: CorrelationFn, sites: SiteSet) -> np.ndarray:
    mat = correlation(fn, distance_matrix(sites))
    np.fill_diagonal(mat, 1.0)
    return mat


def correlation_cholesky(fn: CorrelationFn, sites: SiteSet) -> np.ndarray:
    """Cholesky factor of the site correlation matrix.

    One jitter retry (1e-10 added to the diagonal) is allowed; anything
    larger would silently distort the correlation model, so the second
    failure is fatal and names the offending parameters.
    """
    mat = correlation_matrix(fn, sites)
    try:
        return cholesky(mat)
    except NumericalError:
        pass
    try:
        return cholesky(mat + 1e-10 * np.eye(mat.shape[0]))
    except NumericalError as exc:
        raise NumericalError(
            "correlation matrix not positive definite for "
            f"{fn.kind}(theta1={fn.theta1}, theta2={fn.theta2})"
        ) from exc


# ---------------------------------------------------------------------------
# Schlather random-field model
# ---------------------------------------------------------------------------

class SchlatherModel:
    """Schlather max-stable field observed at a finite set of sites.

    The tail value V(x) = E max_i [sqrt(2*pi) w_i]_+ / x_i has no closed
    form; it is evaluated as a Monte Carlo mean over ``mc_size`` Gaussian
    field draws.  The standard-normal draws are generated once per model
    instance from ``base_seed`` and reused for every parameter value
    (common random numbers), so the objective seen by the optimizer is a
    smooth deterministic function of theta.  By default the draws come in
    antithetic pairs (Z, -Z), which cuts the Monte Carlo variance of the
    tail values several-fold at the same cost; ``antithetic=False`` falls
    back to plain sampling.
    """

    family = "schlather"
    param_names = ("theta1", "theta2")

    def __init__(
        self,
        sites: SiteSet,
        correlation_kind: str = "stable",
        mc_size: int = 5000,
        base_seed: int = 0,
        param_space: Sequence[ParamDomain] | None = None,
        antithetic: bool = True,
    ):
        if correlation_kind not in _CORRELATION_KINDS:
            raise DomainError(f"unknown correlation kind {correlation_kind!r}")
        if mc_size < 1:
            raise DomainError("mc_size must be >= 1")
        self.sites = sites
        self.correlation_kind = correlation_kind
        self.antithetic = bool(antithetic)
        if self.antithetic:
            mc_size += mc_size % 2  # paired draws need an even count
        self.mc_size = int(mc_size)
        self.base_seed = int(base_seed)
        if param_space is not None:
            self.param_space = tuple(param_space)
        elif correlation_kind == "stable":
            self.param_space = (
                ParamDomain("theta1", 0.0, math.inf, 10.0, 250.0),
                ParamDomain("theta2", 0.0, 2.0, 0.25, 1.75),
            )
        else:
            self.param_space = (
                ParamDomain("theta1", 0.0, math.inf, 10.0, 250.0),
                ParamDomain("theta2", 0.0, math.inf, 0.25, 3.0),
            )
        self._draws: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.sites.dimension

    def correlation_fn(self, theta) -> CorrelationFn:
        t1, t2 = (float(t) for t in np.asarray(theta, dtype=float))
        return CorrelationFn(self.correlation_kind, t1, t2)

    def _standard_draws(self) -> np.ndarray:
        if self._draws is None:
            gen = RngStream(self.base_seed).generator()
            if self.antithetic:
                half = gen.standard_normal((self.mc_size // 2, self.dimension))
                self._draws = np.vstack([half, -half])
            else:
                self._draws = gen.standard_normal((self.mc_size, self.dimension))
        return self._draws

    def _positive_spectral(self, theta) -> np.ndarray:
        low = correlation_cholesky(self.correlation_fn(theta), self.sites)
        field_draws = self._standard_draws() @ low.T
        return SQRT_TWO_PI * np.clip(field_draws, 0.0, None)

    def _points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ContractError(f"expected points of shape (q, {self.dimension})")
        if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
            raise DomainError("points must be strictly positive and finite")
        return pts

    def _per_draw_maxima(self, spectral: np.ndarray, points: np.ndarray, start: int, stop: int):
        chunk = spectral[:, None, :] / points[None, start:stop, :]
        return chunk.max(axis=2)

    def v_many(self, theta, points) -> np.ndarray:
        pts = self._points(points)
        spectral = self._positive_spectral(theta)
        chunk = max(1, int(4_000_000 / (self.mc_size * self.dimension)))
        out = np.empty(pts.shape[0])
        for start in range(0, pts.shape[0], chunk):
            stop = min(start + chunk, pts.shape[0])
            out[start:stop] = self._per_draw_maxima(spectral, pts, start, stop).mean(axis=0)
        return out

    def v(self, theta, x) -> float:
        arr = _check_positive_vector(x)
        return float(self.v_many(theta, arr[None, :])[0])

    def v_with_se(self, theta, x) -> MonteCarloValue:
        arr = _check_positive_vector(x)
        spectral = self._positive_spectral(theta)
        maxima = self._per_draw_maxima(spectral, arr[None, :], 0, 1)[:, 0]
        if self.antithetic:
            half = self.mc_size // 2
            units = 0.5 * (maxima[:half] + maxima[half:])  # iid pair means
        else:
            units = maxima
        se = float(units.std(ddof=1) / math.sqrt(units.size)) if units.size > 1 else math.inf
        return MonteCarloValue(float(maxima.mean()), se)

    def v_grad_many(self, theta, points, step_scale: float = 1e-3) -> np.ndarray:
        """Central finite differences with common random numbers.

        The positive-part and max kinks make pathwise derivatives biased, so
        the gradient is estimated by re-evaluating the Monte Carlo mean at
        theta +/- h with identical Gaussian draws.  Steps that would leave
        the parameter space are shrunk (with a warning).
        """
        theta = np.asarray(theta, dtype=float)
        pts = self._points(points)
        grads = np.empty((pts.shape[0], theta.size))
        for j, domain in enumerate(self.param_space):
            step = step_scale * max(1.0, abs(theta[j]))
            room = theta[j] - domain.lower
            if not math.isinf(domain.upper):
                room = min(room, domain.upper - theta[j])
            if step >= room:
                step = 0.49 * room
                warnings.warn(
                    f"gradient step for {domain.name} shrunk to {step:.3g} to stay inside "
                    f"({domain.lower}, {domain.upper})",
                    stacklevel=2,
                )
            if step <= 0:
                raise DomainError(f"{domain.name}={theta[j]} leaves no room for a finite-difference step")
            hi = theta.copy()
            hi[j] += step
            lo = theta.copy()
            lo[j] -= step
            grads[:, j] = (self.v_many(hi, pts) - self.v_many(lo, pts)) / (2.0 * step)
        return grads

    def v_grad(self, theta, x) -> np.ndarray:
        arr = _check_positive_vector(x)
        return self.v_grad_many(theta, arr[None, :])[0]

    def sample(self, theta, stream: RngStream, n: int):
        from . import sampling

        return sampling.sample_schlather(stream, self.correlation_fn(theta), self.sites, n)

    def margin_scales(self, theta) -> np.ndarray:
        return np.ones(self.dimension)

    def restrict(self, indices) -> "SchlatherModel":
        return SchlatherModel(
            self.sites.restrict(indices),
            self.correlation_kind,
            self.mc_size,
            self.base_seed,
            self.param_space,
            self.antithetic,
        )


def v_schlather(model: SchlatherModel, theta, x) -> MonteCarloValue:
    """Monte Carlo tail value of a Schlather model with its standard error."""
    return model.v_with_se(theta, x)


def v_schlather_grad(model: SchlatherModel, theta, x) -> np.ndarray:
    """Common-random-number finite-difference gradient of the Schlather tail value."""
    return model.v_grad(theta, x)


# ---------------------------------------------------------------------------
# Dependence summaries
# ---------------------------------------------------------------------------

def extremal_coefficient(model, theta) -> float:
    """V(1, ..., 1): effective number of independent sites, in [1, d]."""
    ones = np.ones(model.dimension)
    return float(model.v(theta, ones))


def covariation(model, theta, pair) -> float:
    """Co-variation 2 - V(1, 1) of a pair of standard-margin components.

    Zero exactly when the pair is independent; equals 1 under complete
    dependence.  Requires both margins to be standard 1-Frechet.
    """
    i, j = (int(k) for k in pair)
    scales = np.asarray(model.margin_scales(theta), dtype=float)
    if np.any(np.abs(scales[[i, j]] - 1.0) > 1e-9):
        raise ContractError(
            f"covariation requires standard 1-Frechet margins; scales are {scales[[i, j]]}"
        )
    restricted = model.restrict((i, j))
    return 2.0 - restricted.v(theta, np.ones(2))
