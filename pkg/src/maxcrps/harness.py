"""Replication-study engine and the command implementations behind the CLI.

An experiment runs R independent simulate -> fit -> interval replicates on
streams derived from (seed, replicate index), then aggregates estimates,
coverage, or candidate error rates.  Replicates always execute in a
spawned worker pool with BLAS threading pinned to one thread, so the
written summary is byte-identical for any worker count.

Deterministic artifacts (CSV, summary JSON, fit JSON) never contain
timing; wall time goes to a run_meta.json sidecar.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataError
from .estimator import FitOptions, crps_estimate, fit_result_to_dict, write_fit_result
from .models import (
    CorrelationFn,
    LogisticModel,
    MaxLinearModel,
    MaxLinearSpec,
    SchlatherModel,
    SiteSet,
    covariation,
    extremal_coefficient,
)
from .rng import RngStream
from .sampling import read_observations

SCHEMA_VERSION = 1

_FAMILIES = ("logistic", "max_linear", "schlather")


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level document must be an object")
    return doc


def _get(doc: dict, key: str, kind, path: str, default=None, required: bool = False):
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def _check_schema(doc: dict, path: str) -> None:
    version = _get(doc, "schema_version", int, path, required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}.schema_version: expected {SCHEMA_VERSION}, got {version}")


def sample_sites(stream: RngStream, count: int, extent: float) -> SiteSet:
    """Uniformly sampled site locations on the [0, extent]^2 square."""
    gen = stream.generator()
    coords = gen.uniform(0.0, float(extent), size=(count, 2))
    return SiteSet(coords)


def build_model(model_doc: dict, path: str = "model"):
    """Construct (model, theta0) from a model config block."""
    if not isinstance(model_doc, dict):
        raise ConfigError(f"{path}: expected an object")
    family = _get(model_doc, "family", str, path, required=True)
    if family not in _FAMILIES:
        raise ConfigError(f"{path}.family: unknown family {family!r}, expected one of {_FAMILIES}")

    if family == "logistic":
        dimension = _get(model_doc, "dimension", int, path, required=True)
        theta0 = _get(model_doc, "theta0", list, path, required=True)
        if len(theta0) != 2:
            raise ConfigError(f"{path}.theta0: expected [sigma, alpha]")
        model = LogisticModel(dimension)
        theta = np.asarray(theta0, dtype=float)
        model.params(theta)  # validates against the parameter space
        return model, theta

    if family == "max_linear":
        matrices = _get(model_doc, "matrices", list, path, required=True)
        theta0 = _get(model_doc, "theta0", int, path, required=True)
        try:
            spec = MaxLinearSpec(tuple(np.asarray(m, dtype=float) for m in matrices), theta0)
        except (ValueError, ContractError) as exc:
            raise ConfigError(f"{path}.matrices: {exc}") from exc
        return MaxLinearModel(spec), int(theta0)

    # schlather
    correlation_kind = _get(model_doc, "correlation", str, path, default="stable")
    theta0 = _get(model_doc, "theta0", list, path, required=True)
    if len(theta0) != 2:
        raise ConfigError(f"{path}.theta0: expected [theta1, theta2]")
    sites_doc = model_doc.get("sites")
    if isinstance(sites_doc, list):
        sites = SiteSet(np.asarray(sites_doc, dtype=float))
    elif isinstance(sites_doc, dict):
        count = _get(sites_doc, "count", int, f"{path}.sites", required=True)
        extent = _get(sites_doc, "extent", float, f"{path}.sites", required=True)
        site_seed = _get(sites_doc, "seed", int, f"{path}.sites", default=0)
        sites = sample_sites(RngStream(site_seed), count, extent)
    else:
        raise ConfigError(f"{path}.sites: expected a coordinate list or a sampling block")
    mc_size = _get(model_doc, "mc_size", int, path, default=5000)
    base_seed = _get(model_doc, "base_seed", int, path, default=0)
    antithetic = _get(model_doc, "antithetic", bool, path, default=True)
    model = SchlatherModel(
        sites, correlation_kind, mc_size=mc_size, base_seed=base_seed, antithetic=antithetic
    )
    theta = np.asarray(theta0, dtype=float)
    model.correlation_fn(theta)  # validates parameter domains
    return model, theta


def _fit_options(doc: dict, path: str) -> FitOptions:
    opt_doc = doc.get("optimizer", {})
    if not isinstance(opt_doc, dict):
        raise ConfigError(f"{path}.optimizer: expected an object")
    return FitOptions(
        multistarts=_get(opt_doc, "multistarts", int, f"{path}.optimizer", default=5),
        max_iterations=_get(opt_doc, "max_iterations", int, f"{path}.optimizer", default=400),
        x_tol=_get(opt_doc, "x_tol", float, f"{path}.optimizer", default=1e-5),
        objective_rel_tol=_get(opt_doc, "objective_rel_tol", float, f"{path}.optimizer", default=1e-8),
    )


def _experiment_core(doc: dict, path: str = "experiment") -> dict:
    """Validate and normalize the statistical part of an experiment spec."""
    _check_schema(doc, path)
    build_model(_get(doc, "model", dict, path, required=True))
    core = {
        "schema_version": SCHEMA_VERSION,
        "model": doc["model"],
        "n": _get(doc, "n", int, path, required=True),
        "replications": _get(doc, "replications", int, path, required=True),
        "n_directions": _get(doc, "n_directions", int, path, default=1000),
        "meat_mc_size": _get(doc, "meat_mc_size", int, path, default=10_000),
        "intervals": _get(doc, "intervals", bool, path, default=True),
        "seed": _get(doc, "seed", int, path, required=True),
        "optimizer": doc.get("optimizer", {}),
    }
    for key in ("n", "replications", "n_directions"):
        if core[key] < 1:
            raise ConfigError(f"{path}.{key}: must be >= 1")
    return core


# ---------------------------------------------------------------------------
# Replicate execution
# ---------------------------------------------------------------------------

def _derive_seed(stream: RngStream) -> int:
    return int(stream.generator().integers(0, 2 ** 63 - 1))


def _run_replicate(core: dict, replicate: int) -> dict:
    base = RngStream(core["seed"]).child(replicate)
    model_doc = dict(core["model"])
    if model_doc["family"] == "schlather" and "base_seed" not in model_doc:
        # fresh Monte Carlo draws for the tail values of each replicate
        model_doc["base_seed"] = _derive_seed(base.child(2))
    model, theta0 = build_model(model_doc)
    data = model.sample(theta0, base.child(0), core["n"])
    fit = crps_estimate(
        data,
        model,
        base.child(1),
        n_directions=core["n_directions"],
        options=_fit_options(core, "experiment"),
        with_intervals=core["intervals"],
        meat_mc_size=core["meat_mc_size"],
    )
    row: dict = {"replicate": replicate, "error": ""}
    if isinstance(model, MaxLinearModel):
        row["status"] = "ok"
        row["selected"] = int(fit.theta_hat)
        row["correct"] = int(int(fit.theta_hat) == int(theta0))
        for j, value in enumerate(fit.diagnostics["candidate_objectives"]):
            row[f"objective_{j}"] = value
        return row
    row["status"] = "ok" if fit.converged else "not_converged"
    row["objective"] = fit.objective_value
    for k, name in enumerate(fit.param_names):
        row[f"theta_{name}"] = float(np.asarray(fit.theta_hat)[k])
    if fit.intervals is not None:
        for k, name in enumerate(fit.param_names):
            low, high = float(fit.intervals[k, 0]), float(fit.intervals[k, 1])
            row[f"lower_{name}"] = low
            row[f"upper_{name}"] = high
            row[f"covered_{name}"] = int(low <= float(theta0[k]) <= high)
    return row


def _replicate_worker(payload) -> dict:
    core_json, replicate = payload
    core = json.loads(core_json)
    try:
        return _run_replicate(core, replicate)
    except Exception as exc:  # recorded, excluded from aggregates
        return {
            "replicate": replicate,
            "status": "failed",
            "error": f"{type(exc).__name__}: {exc}",
        }


def _pin_blas_threads() -> None:
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


# ---------------------------------------------------------------------------
# Aggregation and reporting
# ---------------------------------------------------------------------------

def _column(rows: list[dict], key: str) -> np.ndarray:
    return np.asarray([row[key] for row in rows], dtype=float)


def summarize(core: dict, rows: list[dict]) -> dict:
    family = core["model"]["family"]
    ok_rows = [row for row in rows if row["status"] == "ok"]
    counts = {
        "replications": len(rows),
        "ok": len(ok_rows),
        "not_converged": sum(1 for row in rows if row["status"] == "not_converged"),
        "failed": sum(1 for row in rows if row["status"] == "failed"),
    }
    aggregates: dict = {}
    if family == "max_linear":
        if ok_rows:
            correct = _column(ok_rows, "correct")
            aggregates["error_rate"] = float(np.mean(1.0 - correct))
            selections: dict[str, int] = {}
            for row in ok_rows:
                key = str(row["selected"])
                selections[key] = selections.get(key, 0) + 1
            aggregates["selection_counts"] = selections
    else:
        _, theta0 = build_model(core["model"])
        names = ("sigma", "alpha") if family == "logistic" else ("theta1", "theta2")
        for k, name in enumerate(names):
            block: dict = {}
            if ok_rows:
                estimates = _column(ok_rows, f"theta_{name}")
                block["mean"] = float(np.mean(estimates))
                block["sd"] = float(np.std(estimates, ddof=1)) if len(estimates) > 1 else None
                if core["intervals"] and f"covered_{name}" in ok_rows[0]:
                    block["coverage"] = float(np.mean(_column(ok_rows, f"covered_{name}")))
            block["theta0"] = float(theta0[k])
            aggregates[name] = block
    return {
        "schema_version": SCHEMA_VERSION,
        "spec": core,
        "aggregates": aggregates,
        "counts": counts,
        "failures": counts["failed"],
    }


def _csv_columns(core: dict, rows: list[dict]) -> list[str]:
    family = core["model"]["family"]
    if family == "max_linear":
        n_candidates = len(core["model"]["matrices"])
        columns = ["replicate", "status", "selected", "correct"]
        columns += [f"objective_{j}" for j in range(n_candidates)]
    else:
        names = ("sigma", "alpha") if family == "logistic" else ("theta1", "theta2")
        columns = ["replicate", "status", "objective"]
        columns += [f"theta_{name}" for name in names]
        if core["intervals"]:
            for name in names:
                columns += [f"lower_{name}", f"upper_{name}", f"covered_{name}"]
    return columns + ["error"]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def rows_to_csv(core: dict, rows: list[dict]) -> str:
    columns = _csv_columns(core, rows)
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row.get(col)) for col in columns))
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentReport:
    core: dict
    rows: list[dict]
    summary: dict
    wall_time_seconds: float

    def write(self, out_dir: str | Path, jobs: int) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "replicates.csv").write_text(rows_to_csv(self.core, self.rows))
        (out / "summary.json").write_text(json.dumps(self.summary, indent=2) + "\n")
        meta = {"wall_time_seconds": self.wall_time_seconds, "jobs": jobs}
        (out / "run_meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def run_experiment(doc: dict, jobs: int | None = None) -> ExperimentReport:
    """Run all replicates on a spawned worker pool and aggregate.

    The pool is used even for jobs=1 so that the execution environment of
    every replicate (single-threaded BLAS in a fresh process) is identical
    regardless of the requested parallelism.
    """
    core = _experiment_core(doc)
    if jobs is None:
        jobs = _get(doc, "jobs", int, "experiment", default=1)
    if jobs < 1:
        raise ConfigError("experiment.jobs: must be >= 1")
    started = time.perf_counter()
    _pin_blas_threads()
    payloads = [(json.dumps(core), r) for r in range(core["replications"])]
    context = get_context("spawn")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=context) as pool:
        rows = list(pool.map(_replicate_worker, payloads))
    rows.sort(key=lambda row: row["replicate"])
    summary = summarize(core, rows)
    return ExperimentReport(core, rows, summary, time.perf_counter() - started)


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------

def simulate_command(doc: dict, out_dir: str | Path) -> Path:
    _check_schema(doc, "simulate")
    model, theta0 = build_model(_get(doc, "model", dict, "simulate", required=True))
    n = _get(doc, "n", int, "simulate", required=True)
    seed = _get(doc, "seed", int, "simulate", required=True)
    if n < 1:
        raise ConfigError("simulate.n: must be >= 1")
    data = model.sample(theta0, RngStream(seed), n)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "observations.csv"
    data.write_csv(path)
    return path


def fit_command(doc: dict, out_dir: str | Path) -> tuple[Path, bool]:
    _check_schema(doc, "fit")
    model, _ = build_model(_get(doc, "model", dict, "fit", required=True))
    data_path = _get(doc, "data", str, "fit", required=True)
    data = read_observations(data_path)
    if data.d != model.dimension:
        raise DataError(
            f"data has {data.d} columns but the model dimension is {model.dimension}"
        )
    seed = _get(doc, "seed", int, "fit", required=True)
    fit = crps_estimate(
        data,
        model,
        RngStream(seed),
        n_directions=_get(doc, "n_directions", int, "fit", default=1000),
        options=_fit_options(doc, "fit"),
        with_intervals=_get(doc, "intervals", bool, "fit", default=True),
        meat_mc_size=_get(doc, "meat_mc_size", int, "fit", default=10_000),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "fit.json"
    write_fit_result(fit, path)
    return path, fit.converged


def experiment_command(doc: dict, out_dir: str | Path, jobs: int | None = None) -> ExperimentReport:
    report = run_experiment(doc, jobs=jobs)
    effective_jobs = jobs if jobs is not None else _get(doc, "jobs", int, "experiment", default=1)
    report.write(out_dir, effective_jobs)
    return report


def depsummary_command(doc: dict) -> dict:
    _check_schema(doc, "depsummary")
    model, theta0 = build_model(_get(doc, "model", dict, "depsummary", required=True))
    theta_coefficient = extremal_coefficient(model, theta0)
    pairs = []
    scales = np.asarray(model.margin_scales(theta0), dtype=float)
    standard = bool(np.all(np.abs(scales - 1.0) <= 1e-9))
    for i in range(model.dimension):
        for j in range(i + 1, model.dimension):
            entry = {"pair": [i, j]}
            if standard:
                entry["covariation"] = covariation(model, theta0, (i, j))
            else:
                entry["covariation"] = None
            pairs.append(entry)
    return {
        "family": model.family,
        "dimension": model.dimension,
        "extremal_coefficient": theta_coefficient,
        "standard_margins": standard,
        "pairwise_covariation": pairs,
    }


def render_depsummary(result: dict) -> str:
    lines = [
        f"family: {result['family']} (d={result['dimension']})",
        f"extremal coefficient V(1,...,1): {result['extremal_coefficient']:.6g}",
    ]
    if not result["standard_margins"]:
        lines.append("margins are not standard 1-Frechet; pairwise co-variation unavailable")
    else:
        for entry in result["pairwise_covariation"]:
            i, j = entry["pair"]
            lines.append(f"covariation[{i},{j}] = {entry['covariation']:.6g}")
    return "\n".join(lines) + "\n"
