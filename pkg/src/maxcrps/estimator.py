"""CRPS estimation: directions, projections, fitting, and sandwich intervals.

The estimation procedure is

1. draw a finite direction set on the open unit simplex,
2. form max-linear combinations M_u = max_j X_j / u_j of each observation,
3. minimize the summed Frechet CRPS of (M_u, V_theta(u)) over theta,

followed by plug-in sandwich confidence intervals built from the bread
matrix (the curvature of the expected score) and the meat matrix (the
covariance of the score gradient, estimated by Monte Carlo).

All reductions over directions run in a canonical order keyed by the
direction coordinates themselves, so permuting the rows of a direction set
changes nothing, bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize

from .crps import crps_objective
from .errors import ConfigError, ContractError, DataError, DomainError, NumericalError
from .linalg import cholesky
from .models import MaxLinearModel, MaxLinearSpec, ParamDomain
from .rng import RngStream
from .sampling import ObservationSet
from .special import SQRT_PI, _gamma_half_raw

_TINY = np.finfo(float).tiny


# ---------------------------------------------------------------------------
# Directions and projections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionSet:
    """Rows on the open simplex, plus the stream they were drawn from."""

    directions: np.ndarray
    stream: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.directions, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ContractError(f"directions must be a nonempty 2-d array, got {arr.shape}")
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise ContractError("directions must be strictly positive")
        if np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-12):
            raise ContractError("direction rows must sum to 1 within 1e-12")
        object.__setattr__(self, "directions", arr)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def dimension(self) -> int:
        return self.directions.shape[1]

    @cached_property
    def canonical_order(self) -> np.ndarray:
        """Lexicographic row order (first coordinate most significant)."""
        return np.lexsort(self.directions.T[::-1])


def build_direction_set(stream: RngStream, dimension: int, count: int) -> DirectionSet:
    """Draw ``count`` iid uniform points on the open simplex.

    Uses the normalized unit-exponential construction, which is exact and
    keeps every coordinate strictly positive.
    """
    if dimension < 1 or count < 1:
        raise ContractError("build_direction_set: dimension and count must be >= 1")
    gen = stream.generator()
    expo = np.clip(gen.standard_exponential((count, dimension)), _TINY, None)
    rows = expo / expo.sum(axis=1, keepdims=True)
    return DirectionSet(rows, stream.describe())


@dataclass(frozen=True)
class ProjectionMatrix:
    """Max-linear combinations of the data, one column per direction."""

    values: np.ndarray
    canonical_order: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise ContractError(f"projection values must be 2-d, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)


def project(data: ObservationSet | np.ndarray, dirs: DirectionSet) -> ProjectionMatrix:
    """Compute M_u = max_j X_j / u_j for every observation and direction."""
    arr = np.asarray(getattr(data, "data", data), dtype=float)
    if arr.ndim != 2:
        raise ContractError(f"data must be a 2-d array, got shape {arr.shape}")
    if arr.shape[1] != dirs.dimension:
        raise ContractError(
            f"data dimension {arr.shape[1]} does not match direction dimension {dirs.dimension}"
        )
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DataError("observations must be strictly positive and finite")
    n = arr.shape[0]
    out = np.empty((n, dirs.count))
    chunk = max(1, int(4_000_000 / max(1, n * dirs.dimension)))
    for start in range(0, dirs.count, chunk):
        stop = min(start + chunk, dirs.count)
        ratios = arr[:, None, :] / dirs.directions[None, start:stop, :]
        out[:, start:stop] = ratios.max(axis=2)
    return ProjectionMatrix(out, dirs.canonical_order)


# ---------------------------------------------------------------------------
# Fit results
# ---------------------------------------------------------------------------

@dataclass
class SandwichCovariance:
    """Bread H, meat J, and the plug-in asymptotic covariance H^-1 J H^-1 / n."""

    H: np.ndarray
    J: np.ndarray
    asym_cov: np.ndarray
    mc_size: int = 0
    mc_stream: dict = field(default_factory=dict)


@dataclass
class FitResult:
    family: str
    param_names: tuple[str, ...]
    theta_hat: np.ndarray | int
    objective_value: float
    converged: bool
    iterations: int = 0
    restarts: int = 0
    n_observations: int = 0
    n_directions: int = 0
    diagnostics: dict = field(default_factory=dict)
    sandwich: SandwichCovariance | None = None
    intervals: np.ndarray | None = None
    seeds: dict = field(default_factory=dict)


@dataclass
class FitOptions:
    """Knobs for the derivative-free search."""

    multistarts: int = 5
    max_iterations: int = 400
    x_tol: float = 1e-5
    objective_rel_tol: float = 1e-8
    stream: RngStream | None = None
    starts: tuple | None = None  # explicit start points in the original scale


# ---------------------------------------------------------------------------
# Continuous and finite fitting
# ---------------------------------------------------------------------------

def _start_points(space: tuple[ParamDomain, ...], count: int, gen: np.random.Generator) -> np.ndarray:
    """Latin-hypercube starts in the unconstrained scale of the start box."""
    lo = np.array([dom.to_unconstrained(dom.start_lo) for dom in space])
    hi = np.array([dom.to_unconstrained(dom.start_hi) for dom in space])
    quantiles = np.empty((count, len(space)))
    for j in range(len(space)):
        strata = gen.permutation(count)
        quantiles[:, j] = (strata + gen.random(count)) / count
    return lo[None, :] + quantiles * (hi - lo)[None, :]


def fit_continuous(
    data: ObservationSet | np.ndarray,
    dirs: DirectionSet,
    model,
    options: FitOptions | None = None,
) -> FitResult:
    """Minimize the projection CRPS objective over a continuous parameter space.

    Nelder-Mead simplex search in unconstrained coordinates (log for
    half-line parameters, logit for interval parameters) with multiple
    space-filling restarts; the best local minimum wins.  Deterministic
    given the options stream.
    """
    opts = options or FitOptions()
    stream = opts.stream or RngStream(0)
    space = tuple(model.param_space)
    proj = project(data, dirs)
    order = dirs.canonical_order
    m_ordered = proj.values[:, order]
    dirs_ordered = dirs.directions[order]
    n_obs = m_ordered.shape[0]

    def objective(y: np.ndarray) -> float:
        theta = np.array([dom.from_unconstrained(val) for dom, val in zip(space, y)])
        try:
            v = model.v_many(theta, dirs_ordered)
        except (DomainError, NumericalError):
            return math.inf
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            return math.inf
        return crps_objective(m_ordered, v)

    if opts.starts is not None:
        start_list = [
            np.array([dom.to_unconstrained(float(x)) for dom, x in zip(space, theta0)])
            for theta0 in opts.starts
        ]
    else:
        start_list = list(_start_points(space, opts.multistarts, stream.generator()))

    best = None
    warnings_log: list[str] = []
    per_start: list[dict] = []
    total_iterations = 0
    for start in start_list:
        f0 = objective(start)
        if not np.isfinite(f0):
            warnings_log.append("start discarded: objective not finite")
            per_start.append({"converged": False, "objective": None, "discarded": True})
            continue
        result = scipy.optimize.minimize(
            objective,
            start,
            method="Nelder-Mead",
            options={
                "xatol": opts.x_tol,
                "fatol": opts.objective_rel_tol * max(1.0, abs(f0)),
                "maxiter": opts.max_iterations,
                "maxfev": 4 * opts.max_iterations,
                "adaptive": False,
            },
        )
        total_iterations += int(result.nit)
        per_start.append(
            {"converged": bool(result.success), "objective": float(result.fun), "iterations": int(result.nit)}
        )
        if best is None or float(result.fun) < best[1]:
            best = (bool(result.success), float(result.fun), result.x.copy())

    if best is None:
        raise DataError("fit_continuous: every start point produced a non-finite objective")
    converged, objective_value, y_hat = best
    theta_hat = np.array([dom.from_unconstrained(val) for dom, val in zip(space, y_hat)])
    return FitResult(
        family=model.family,
        param_names=tuple(model.param_names),
        theta_hat=theta_hat,
        objective_value=objective_value,
        converged=converged,
        iterations=total_iterations,
        restarts=len(start_list),
        n_observations=n_obs,
        n_directions=dirs.count,
        diagnostics={"starts": per_start, "warnings": warnings_log},
    )


def fit_finite(
    data: ObservationSet | np.ndarray,
    dirs: DirectionSet,
    model: MaxLinearModel | MaxLinearSpec,
) -> FitResult:
    """Exhaustive CRPS comparison over a finite candidate list.

    Ties are broken toward the lowest candidate index and recorded in the
    diagnostics.  No sandwich covariance exists for a finite space.
    """
    if isinstance(model, MaxLinearSpec):
        model = MaxLinearModel(model)
    proj = project(data, dirs)
    order = dirs.canonical_order
    m_ordered = proj.values[:, order]
    dirs_ordered = dirs.directions[order]
    objectives = [
        crps_objective(m_ordered, model.v_many_candidate(j, dirs_ordered))
        for j in range(model.n_candidates)
    ]
    best = int(np.argmin(objectives))
    tie = sum(1 for val in objectives if val == objectives[best]) > 1
    return FitResult(
        family=model.family,
        param_names=("candidate",),
        theta_hat=best,
        objective_value=float(objectives[best]),
        converged=True,
        n_observations=m_ordered.shape[0],
        n_directions=dirs.count,
        diagnostics={"candidate_objectives": [float(v) for v in objectives], "tie": tie},
    )


# ---------------------------------------------------------------------------
# Sandwich covariance
# ---------------------------------------------------------------------------

def bread_matrix(model, dirs: DirectionSet, theta) -> np.ndarray:
    """Curvature matrix of the expected objective at theta.

    H = sqrt(pi) * sum_u (2 V(u))^(-3/2) grad V(u) grad V(u)^T, which equals
    the Hessian of the summed expected CRPS (the expected-score curve has a
    vanishing first-order term at the truth).  Raises if H is singular,
    which happens exactly when the gradients span a lower-dimensional
    hyperplane.
    """
    order = dirs.canonical_order
    dirs_ordered = dirs.directions[order]
    values = model.v_many(theta, dirs_ordered)
    grads = model.v_grad_many(theta, dirs_ordered)
    if np.any(values <= 0):
        raise NumericalError("bread_matrix: tail values must be strictly positive")
    weights = (2.0 * values) ** (-1.5)
    mat = SQRT_PI * np.einsum("u,ui,uj->ij", weights, grads, grads)
    mat = 0.5 * (mat + mat.T)
    singular = False
    try:
        cholesky(mat)
    except NumericalError:
        singular = True
    if singular or np.linalg.eigvalsh(mat)[0] <= 1e-12 * np.trace(mat):
        raise NumericalError(
            "singular bread matrix: parameter gradients lie in a lower-dimensional hyperplane"
        )
    return mat


def meat_matrix(
    model,
    dirs: DirectionSet,
    theta,
    mc_size: int = 10_000,
    stream: RngStream | None = None,
    with_se: bool = False,
):
    """Score-gradient covariance at theta, estimated by Monte Carlo.

    Simulates ``mc_size`` model draws; for each draw and direction forms
    g_u = gamma_half(V(u) / M_u), whose column means are sqrt(pi/2) at the
    truth.  With A_u = 2 grad V(u) / sqrt(V(u)) (the per-direction score
    derivative with the centered gamma factored out), the matrix is the
    empirical covariance

        J = (G_c A)^T (G_c A) / (N - 1),

    which never materializes the direction-by-direction kernel.  With
    ``with_se`` also returns the entrywise Monte Carlo standard error.
    """
    if mc_size < 1000:
        raise ConfigError(f"meat_matrix: mc_size must be >= 1000, got {mc_size}")
    stream = stream or RngStream(0)
    order = dirs.canonical_order
    dirs_ordered = dirs.directions[order]
    values = model.v_many(theta, dirs_ordered)
    grads = model.v_grad_many(theta, dirs_ordered)
    if np.any(values <= 0):
        raise NumericalError("meat_matrix: tail values must be strictly positive")

    draws = model.sample(theta, stream, mc_size)
    proj = project(draws, dirs)
    m_ordered = proj.values[:, order]
    gammas = _gamma_half_raw(values[None, :] / m_ordered)
    if np.any(~np.isfinite(gammas)):
        bad = int(np.argwhere(~np.isfinite(gammas))[0][0])
        raise DataError(f"meat_matrix: non-finite score term at simulated draw {bad}")
    centered = gammas - gammas.mean(axis=0, keepdims=True)
    score_scale = 2.0 * grads / np.sqrt(values)[:, None]
    per_draw = centered @ score_scale  # (N, p) score-gradient deviations
    meat = (per_draw.T @ per_draw) / (mc_size - 1)
    meat = 0.5 * (meat + meat.T)
    if not with_se:
        return meat
    p = meat.shape[0]
    se = np.empty((p, p))
    for i in range(p):
        for j in range(p):
            se[i, j] = np.std(per_draw[:, i] * per_draw[:, j], ddof=1) / math.sqrt(mc_size)
    return meat, se


def sandwich(
    theta_hat,
    bread: np.ndarray,
    meat: np.ndarray,
    n_observations: int,
    mc_size: int = 0,
    mc_stream: dict | None = None,
):
    """Asymptotic covariance H^-1 J H^-1 / n and 95% plug-in intervals."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    low = cholesky(bread)
    inner = scipy.linalg.cho_solve((low, True), meat)
    cov = scipy.linalg.cho_solve((low, True), inner.T)
    cov = 0.5 * (cov + cov.T) / n_observations
    diag = np.diag(cov).copy()
    if np.any(diag < -1e-12):
        raise NumericalError(f"sandwich: negative variance on the diagonal: {diag}")
    half = 1.96 * np.sqrt(np.clip(diag, 0.0, None))
    intervals = np.stack([theta_hat - half, theta_hat + half], axis=1)
    return (
        SandwichCovariance(bread, meat, cov, mc_size, dict(mc_stream or {})),
        intervals,
    )


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

def crps_estimate(
    data: ObservationSet,
    model,
    stream: RngStream,
    n_directions: int = 1000,
    options: FitOptions | None = None,
    with_intervals: bool = True,
    meat_mc_size: int = 10_000,
) -> FitResult:
    """Run the full procedure: directions, projections, fit, intervals.

    Substreams: child(0) directions, child(1) optimizer starts, child(2)
    meat-matrix simulation.  Finite candidate models skip the sandwich.
    """
    dirs = build_direction_set(stream.child(0), model.dimension, n_directions)
    if isinstance(model, MaxLinearModel):
        fit = fit_finite(data, dirs, model)
        fit.seeds = {"stream": stream.describe()}
        return fit
    opts = options or FitOptions()
    if opts.stream is None:
        opts = dataclasses.replace(opts, stream=stream.child(1))
    fit = fit_continuous(data, dirs, model, opts)
    fit.seeds = {"stream": stream.describe()}
    if with_intervals and fit.converged:
        meat_stream = stream.child(2)
        bread = bread_matrix(model, dirs, fit.theta_hat)
        meat = meat_matrix(model, dirs, fit.theta_hat, meat_mc_size, meat_stream)
        cov, intervals = sandwich(
            fit.theta_hat, bread, meat, fit.n_observations, meat_mc_size, meat_stream.describe()
        )
        fit.sandwich = cov
        fit.intervals = intervals
    return fit


def fit_result_to_dict(fit: FitResult) -> dict:
    """JSON-ready document for a fit (deterministic: no timing fields)."""
    doc: dict = {
        "schema_version": 1,
        "family": fit.family,
        "param_names": list(fit.param_names),
        "theta_hat": int(fit.theta_hat) if np.isscalar(fit.theta_hat) or isinstance(fit.theta_hat, int) else [float(x) for x in fit.theta_hat],
        "objective": fit.objective_value,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "restarts": fit.restarts,
        "n_observations": fit.n_observations,
        "n_directions": fit.n_directions,
        "seeds": fit.seeds,
        "diagnostics": fit.diagnostics,
    }
    if fit.intervals is not None:
        doc["intervals"] = {
            name: [float(fit.intervals[k, 0]), float(fit.intervals[k, 1])]
            for k, name in enumerate(fit.param_names)
        }
    if fit.sandwich is not None:
        doc["H"] = fit.sandwich.H.tolist()
        doc["J"] = fit.sandwich.J.tolist()
        doc["asym_cov"] = fit.sandwich.asym_cov.tolist()
        doc["meat_mc_size"] = fit.sandwich.mc_size
        doc["meat_mc_stream"] = fit.sandwich.mc_stream
    return doc


def write_fit_result(fit: FitResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(fit_result_to_dict(fit), indent=2) + "\n")
