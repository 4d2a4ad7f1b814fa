"""Experiment runner: Monte Carlo studies, information audits and ARE curves.

Each subcommand reads a TOML config and writes a CSV whose first lines are
``#`` comments recording the package version, a hash of the effective
config, the seed and the summary conventions.  Replication ``r`` of model
row ``m`` draws from ``numpy.random.default_rng([seed, m, r])``, so the
output does not depend on the worker count.

Exit codes: 0 on success, 2 on a config error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, DomainError, EstimationError, ObsInferError
from .estimation import ecf_phase_estimator, interval_mle_benchmark, solve_z
from .inference import interval_sinusoidal, score_if, sinusoidal
from .information import are_curve, fisher_binned, hierarchy_report
from .kernels import KernelProfile
from .models import ModelFamily, family_from_config
from .observation import BinGrid, ObservationOperator, observe_many, sample_pushforward

__all__ = [
    "ExperimentConfig",
    "SimulationRow",
    "load_config",
    "run_simulate",
    "run_info_hierarchy",
    "run_are_curve",
    "run_estimate",
    "run_interval_study",
    "write_csv",
    "main",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("simulate", "info-hierarchy", "are-curve", "estimate", "interval-study")
WORKERS_ENV = "OBSINFER_WORKERS"
CONVENTIONS = "variance divisor R-1; mse divisor R; mad = median |theta_hat - theta_true|"
_POINT_ESTIMATORS = ("mean", "median", "weak", "sinusoidal", "score")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``models`` and ``estimators`` are lists of plain mappings so the config
    can be hashed and shipped to worker processes unchanged.
    """

    experiment: str
    models: tuple = ()
    operator: dict = field(default_factory=dict)
    estimators: tuple = ()
    n: int = 100
    replications: int = 1
    seed: int = 0
    workers: Optional[int] = None
    output_path: Optional[str] = None
    theta: float = 0.0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError("replications must be an integer >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers is not None and int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        for est in self.estimators:
            for key in ("u", "c"):
                if key in est and not float(est[key]) > 0:
                    raise ConfigError(f"tuning constant {key} of {est['name']} must be positive")
        for key in ("c", "c_grid", "sigma_phi", "bin_widths"):
            vals = self.operator.get(key, self.options.get(key))
            if vals is None or isinstance(vals, dict):
                continue
            for v in np.atleast_1d(vals):
                if isinstance(v, str):
                    continue
                if not float(v) > 0:
                    raise ConfigError(f"{key} entries must be positive")

    def as_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the output path."""
        d = self.as_dict()
        d.pop("output_path", None)
        d.pop("workers", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def _normalise_estimators(raw, default_u: float, default_c: Optional[float] = None) -> tuple:
    out = []
    for item in raw or ():
        est = {"name": item} if isinstance(item, str) else dict(item)
        if "name" not in est:
            raise ConfigError("every estimator needs a name")
        name = str(est["name"]).lower()
        if name not in _POINT_ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; choose from {_POINT_ESTIMATORS}")
        est["name"] = name
        if name == "weak":
            est.setdefault("u", default_u)
        if name == "sinusoidal":
            est.setdefault("c", est.pop("u", default_u if default_c is None else default_c))
        out.append(est)
    return tuple(out)


def config_from_mapping(raw: dict, experiment: Optional[str] = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed TOML mapping.

    ``experiment`` (the CLI subcommand) fills in a missing ``experiment``
    key; a conflicting key is a config error.
    """
    raw = dict(raw)
    stated = raw.pop("experiment", None)
    if stated is not None and experiment is not None and str(stated) != experiment:
        raise ConfigError(f"config is for {stated!r}, not {experiment!r}")
    experiment = str(stated if stated is not None else experiment)
    if experiment == "None":
        raise ConfigError("config needs an 'experiment' key")
    models = raw.pop("models", None)
    if models is None:
        models = [raw.pop("model")] if "model" in raw else []
    models = tuple(dict(m) for m in models)
    for m in models:
        try:
            family_from_config(m)
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad model spec {m}: {exc}") from exc
    operator = dict(raw.pop("operator", {}))
    u = float(raw.pop("u", 1.0))
    c = float(raw["c"]) if "c" in raw else None
    estimators = _normalise_estimators(raw.pop("estimators", ()), u, c)
    options = dict(raw.pop("options", {}))
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {k: raw.pop(k) for k in list(raw) if k in known}
    options.update(raw)
    try:
        return ExperimentConfig(
            experiment=experiment, models=models, operator=operator, estimators=estimators, options=options, **kwargs
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str, experiment: Optional[str] = None) -> ExperimentConfig:
    """Read a TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_mapping(raw, experiment)


@lru_cache(maxsize=32)
def _model(key: str) -> ModelFamily:
    return family_from_config(json.loads(key))


def _model_key(m: dict) -> str:
    return json.dumps(m, sort_keys=True)


def _label(m: dict) -> str:
    return _model(_model_key(m)).name


def _theta_for(m: dict, default: float) -> np.ndarray:
    model = _model(_model_key(m))
    th = m.get("theta", default)
    th = np.atleast_1d(np.asarray(th, dtype=float))
    if model.param_dim == 2 and th.size == 1:
        th = np.array([th[0], 1.0])
    return model.check_theta(th)


def _workers(cfg: ExperimentConfig, override: Optional[int]) -> int:
    if override is not None:
        return max(1, int(override))
    if cfg.workers is not None:
        return int(cfg.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer") from None
    return 1


def _parallel_map(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# --------------------------------------------------------------------- simulate


@dataclass(frozen=True)
class SimulationRow:
    """Monte Carlo summary of one estimator under one model.

    ``variance`` uses divisor ``R - 1`` and ``mse`` divisor ``R``, so
    ``mse = bias**2 + variance * (R - 1) / R``.  ``mad`` is the median of
    ``|theta_hat - theta_true|``.  ``R`` counts successful replications.
    """

    family: str
    estimator: str
    bias: float
    variance: float
    mse: float
    mad: float
    mean_sandwich_variance: float
    replications_used: int
    failures: int
    reference_variance: float = math.nan


def summarise(family: str, estimator: str, estimates, truth: float, sandwich_vars, failures: int,
              reference_variance: float = math.nan) -> SimulationRow:
    """Aggregate per-replication estimates into a :class:`SimulationRow`."""
    est = np.asarray(estimates, dtype=float)
    R = est.size
    if R == 0:
        nan = math.nan
        return SimulationRow(family, estimator, nan, nan, nan, nan, nan, 0, failures, reference_variance)
    err = est - truth
    bias = math.fsum(err) / R
    mean = math.fsum(est) / R
    variance = math.fsum((est - mean) ** 2) / (R - 1) if R > 1 else math.nan
    mse = math.fsum(err**2) / R
    mad = float(np.median(np.abs(err)))
    sv = np.asarray(sandwich_vars, dtype=float)
    sv = sv[np.isfinite(sv)]
    msv = math.fsum(sv) / sv.size if sv.size else math.nan
    return SimulationRow(family, estimator, bias, variance, mse, mad, msv, R, failures, reference_variance)


def _estimator_label(est: dict) -> str:
    name = est["name"]
    if name == "weak":
        return f"weak(u={est['u']:g})"
    if name == "sinusoidal":
        return f"sinusoidal(c={est['c']:g})"
    return name


def _draw(model: ModelFamily, theta, op_cfg: dict, n: int, rng) -> np.ndarray:
    variant = op_cfg.get("variant", "point")
    if variant == "point":
        return model.sample(theta, rng, n)
    if variant == "kernel_weighted":
        op = ObservationOperator.kernel_weighted(KernelProfile.gaussian(float(op_cfg["sigma_phi"])))
        return sample_pushforward(op, model, theta, n, rng)
    raise ConfigError(f"simulate supports point and kernel_weighted operators, not {variant!r}")


def _apply(est: dict, model: ModelFamily, y: np.ndarray) -> tuple[float, float]:
    name = est["name"]
    if name == "mean":
        m = math.fsum(y) / y.size
        return m, math.fsum((y - m) ** 2) / y.size / y.size
    if name == "median":
        # no smooth estimating equation, so no sandwich
        return float(np.median(y)), math.nan
    if name == "weak":
        res = ecf_phase_estimator(y, u=float(est["u"]))
    elif name == "sinusoidal":
        res = solve_z(sinusoidal(float(est["c"])), y, model=model)
    else:
        res = solve_z(score_if(model), y, model=model)
    return float(res.theta_hat[0]), float(res.sandwich[0, 0])


def _simulate_task(task) -> list:
    mkey, theta, op_cfg, ests, n, seed, m_idx, rep = task
    model = _model(mkey)
    rng = np.random.default_rng([seed, m_idx, rep])
    y = _draw(model, np.asarray(theta), op_cfg, n, rng)
    out = []
    for est in ests:
        try:
            out.append(_apply(est, model, y))
        except (EstimationError, DomainError, ObsInferError, np.linalg.LinAlgError) as exc:
            out.append((math.nan, math.nan, f"{type(exc).__name__}"))
    return out


def run_simulate(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[SimulationRow]:
    """Monte Carlo study of point estimators of a location parameter.

    For every model and replication, ``n`` draws are taken (through the
    configured operator), every estimator is applied, and failures are
    counted and excluded from the summaries.
    """
    if not cfg.models:
        raise ConfigError("simulate needs at least one model")
    ests = cfg.estimators or _normalise_estimators(["mean", "median", "weak"], 1.0)
    w = _workers(cfg, workers)
    rows = []
    for m_idx, m in enumerate(cfg.models):
        theta = _theta_for(m, cfg.theta)
        tasks = [
            (_model_key(m), theta.tolist(), cfg.operator, ests, int(cfg.n), int(cfg.seed), m_idx, r)
            for r in range(int(cfg.replications))
        ]
        results = _parallel_map(_simulate_task, tasks, w)
        for j, est in enumerate(ests):
            vals = [res[j] for res in results]
            ok = [v for v in vals if len(v) == 2 and math.isfinite(v[0])]
            fails = len(vals) - len(ok)
            rows.append(
                summarise(_label(m), _estimator_label(est), [v[0] for v in ok], float(theta[0]), [v[1] for v in ok], fails)
            )
    return rows


# --------------------------------------------------------------- interval study


def _grids(cfg: ExperimentConfig) -> list[BinGrid]:
    op = cfg.operator
    out = []
    try:
        for g in op.get("grids", ()):
            out.append(BinGrid(float(g["left_edge"]), float(g["bin_width"]), int(g["n_bins"]), g.get("tail_policy", "open_tails")))
        half = float(op.get("half_width", 8.0))
        for w in op.get("bin_widths", ()):
            out.append(BinGrid.symmetric(half, float(w)))
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad bin grid: {exc}") from exc
    if not out:
        raise ConfigError("interval-study needs bin_widths or grids in [operator]")
    return out


def _grid_label(g: BinGrid) -> str:
    return f"width={g.bin_width:g};left={g.left_edge:g};bins={g.n_bins}"


def _interval_task(task) -> list:
    mkey, theta, grid_t, c, n, seed, m_idx, g_idx, rep = task
    model = _model(mkey)
    grid = BinGrid(*grid_t)
    rng = np.random.default_rng([seed, m_idx, g_idx, rep])
    x = model.sample(np.asarray(theta), rng, n)
    idx = observe_many(ObservationOperator.interval(grid), x)
    counts = np.bincount(idx, minlength=grid.n_bins)
    out = []
    mids = grid.edges()[:-1] + 0.5 * grid.bin_width
    pilot = np.array([mids[int(np.median(idx))]] + list(theta[1:]))
    try:
        if np.count_nonzero(counts) < 2:
            raise EstimationError("fewer than two occupied bins")
        psi = interval_sinusoidal(c, model, grid)
        res = solve_z(psi, idx, pilot=pilot, model=model, bracket_step=grid.bin_width / 4.0)
        out.append((float(res.theta_hat[0]), float(res.sandwich[0, 0])))
    except (ObsInferError, np.linalg.LinAlgError) as exc:
        out.append((math.nan, math.nan, type(exc).__name__))
    try:
        res = interval_mle_benchmark(model, grid, counts, pilot=pilot)
        out.append((float(res.theta_hat[0]), float(res.sandwich[0, 0])))
    except (ObsInferError, np.linalg.LinAlgError) as exc:
        out.append((math.nan, math.nan, type(exc).__name__))
    return out


def run_interval_study(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[SimulationRow]:
    """Interval sinusoidal estimator against the grouped-data MLE across bin grids.

    ``reference_variance`` is ``1 / (n I_O)`` with ``I_O`` the multinomial
    Fisher information of the grid.
    """
    if not cfg.models:
        raise ConfigError("interval-study needs at least one model")
    c = float(cfg.operator.get("c", cfg.options.get("c", 1.0)))
    w = _workers(cfg, workers)
    rows = []
    for m_idx, m in enumerate(cfg.models):
        model = _model(_model_key(m))
        theta = _theta_for(m, cfg.theta)
        for g_idx, grid in enumerate(_grids(cfg)):
            try:
                i_o = float(fisher_binned(model, grid, theta)[0, 0])
                ref = 1.0 / (cfg.n * i_o) if i_o > 0 else math.inf
            except ObsInferError:
                ref = math.nan
            grid_t = (grid.left_edge, grid.bin_width, grid.n_bins, grid.tail_policy)
            tasks = [
                (_model_key(m), theta.tolist(), grid_t, c, int(cfg.n), int(cfg.seed), m_idx, g_idx, r)
                for r in range(int(cfg.replications))
            ]
            results = _parallel_map(_interval_task, tasks, w)
            fam = f"{model.name}|{_grid_label(grid)}"
            for j, name in enumerate((f"interval_sinusoidal(c={c:g})", "interval_mle")):
                vals = [res[j] for res in results]
                ok = [v for v in vals if len(v) == 2 and math.isfinite(v[0])]
                rows.append(
                    summarise(fam, name, [v[0] for v in ok], float(theta[0]), [v[1] for v in ok], len(vals) - len(ok), ref)
                )
    return rows


# ------------------------------------------------------------ information audit


def _operators(op_cfg: dict) -> list[ObservationOperator]:
    ops = []
    for k in op_cfg.get("kernels", ["classical"]):
        if isinstance(k, str):
            if k.lower() != "classical":
                raise ConfigError(f"unknown kernel {k!r}; use 'classical' or a sigma_phi value")
            ops.append(ObservationOperator.kernel_weighted(KernelProfile.classical_limit()))
        else:
            ops.append(ObservationOperator.kernel_weighted(KernelProfile.gaussian(float(k))))
    half = float(op_cfg.get("half_width", 8.0))
    for wdt in op_cfg.get("bin_widths", ()):
        try:
            ops.append(ObservationOperator.interval(BinGrid.symmetric(half, float(wdt))))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
    return ops


def _functionals(names, cs, model: ModelFamily, op: ObservationOperator):
    out = []
    for name in names:
        if name == "score":
            if op.variant == "interval":
                from .inference import interval_score_if

                out.append(interval_score_if(model, op.grid))
            elif model.has_score:
                out.append(score_if(model))
        elif name == "sinusoidal":
            for c in cs:
                out.append(interval_sinusoidal(c, model, op.grid) if op.variant == "interval" else sinusoidal(c))
        else:
            raise ConfigError(f"unknown functional {name!r}; use 'score' or 'sinusoidal'")
    return out


HIERARCHY_COLUMNS = (
    "model", "operator", "functional", "theta", "I_classical", "I_O", "G",
    "observation_cost", "estimation_cost", "ok", "message",
)


def run_info_hierarchy(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    """Hierarchy reports over models x operators x functionals."""
    if not cfg.models:
        raise ConfigError("info-hierarchy needs at least one model")
    names = [str(s).lower() for s in cfg.operator.get("functionals", ["score", "sinusoidal"])]
    cs = [float(c) for c in np.atleast_1d(cfg.operator.get("c", [1.0]))]
    tol = float(cfg.options.get("tol", 1e-6))
    rows = []
    for m in cfg.models:
        model = _model(_model_key(m))
        theta = _theta_for(m, cfg.theta)
        for op in _operators(cfg.operator):
            for psi in _functionals(names, cs, model, op):
                rep = hierarchy_report(model, op, psi, theta, tol=tol)
                rows.append(
                    {
                        "model": rep.model,
                        "operator": rep.operator,
                        "functional": rep.functional,
                        "theta": float(theta[0]),
                        "I_classical": rep.scalar("I_classical"),
                        "I_O": rep.scalar("I_O"),
                        "G": rep.scalar("G_psi"),
                        "observation_cost": rep.scalar("observation_cost"),
                        "estimation_cost": rep.scalar("estimation_cost"),
                        "ok": rep.ok,
                        "message": rep.flags.get("message", ""),
                    }
                )
    return rows


# ------------------------------------------------------------------- ARE curve


ARE_COLUMNS = ("family", "row", "c", "G", "I_classical", "ARE", "note")


def _c_grid(spec) -> list[float]:
    if isinstance(spec, dict):
        try:
            return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"])).tolist()
        except KeyError as exc:
            raise ConfigError(f"c_grid table needs start, stop and num: missing {exc}") from None
    return [float(c) for c in spec]


def run_are_curve(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    """ARE of the sinusoidal functional over a grid of ``c``, with an argmax row.

    The argmax row carries the curve's annotation: the ``c -> 0`` limit and,
    for the Cauchy family, the discrepancy note.
    """
    if not cfg.models:
        raise ConfigError("are-curve needs at least one model")
    grid = _c_grid(cfg.options.get("c_grid", cfg.operator.get("c_grid", {"start": 0.05, "stop": 3.0, "num": 60})))
    rows = []
    for m in cfg.models:
        fam = str(m.get("family", "")).lower()
        try:
            curve = are_curve(fam, grid, m.get("nu"), float(m.get("sigma", 1.0)))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        for c, G, i_c, are in curve.rows:
            rows.append({"family": curve.family, "row": "grid", "c": c, "G": G, "I_classical": i_c, "ARE": are, "note": ""})
        c_star, are_star = curve.argmax
        G_star = next(r[1] for r in curve.rows if r[0] == c_star)
        note = "; ".join(s for s in (curve.limit_note, curve.note) if s)
        rows.append(
            {"family": curve.family, "row": "argmax", "c": c_star, "G": G_star, "I_classical": curve.rows[0][2],
             "ARE": are_star, "note": note}
        )
    return rows


# -------------------------------------------------------------------- estimate


ESTIMATE_COLUMNS = ("estimator", "theta_hat", "standard_error", "n", "iterations", "residual_norm", "method")


def _estimate_data(cfg: ExperimentConfig, model: ModelFamily, theta) -> np.ndarray:
    path = cfg.options.get("data_path")
    if path:
        try:
            y = np.loadtxt(path, delimiter=",", ndmin=1, comments="#")
        except OSError as exc:
            raise ConfigError(f"cannot read data {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"data file {path} is not numeric CSV: {exc}") from exc
        return np.asarray(y, dtype=float).ravel()
    rng = np.random.default_rng([int(cfg.seed), 0, 0])
    return _draw(model, theta, cfg.operator, int(cfg.n), rng)


def run_estimate(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    """Apply each configured estimator to one data set.

    Data come from ``data_path`` (one numeric column) or, if absent, ``n``
    draws from the first model.  Estimator failures propagate.
    """
    if not cfg.models:
        raise ConfigError("estimate needs a model")
    m = cfg.models[0]
    model = _model(_model_key(m))
    y = _estimate_data(cfg, model, _theta_for(m, cfg.theta))
    ests = cfg.estimators or _normalise_estimators(["weak"], 1.0)
    rows = []
    for est in ests:
        name = est["name"]
        if name in ("mean", "median"):
            th, var = _apply(est, model, y)
            rows.append({"estimator": name, "theta_hat": th, "standard_error": math.sqrt(var) if math.isfinite(var) else math.nan,
                         "n": y.size, "iterations": 0, "residual_norm": 0.0, "method": name})
            continue
        if name == "weak":
            res = ecf_phase_estimator(y, u=float(est["u"]))
        elif name == "sinusoidal":
            res = solve_z(sinusoidal(float(est["c"])), y, model=model)
        else:
            res = solve_z(score_if(model), y, model=model)
        rows.append(
            {"estimator": _estimator_label(est), "theta_hat": float(res.theta_hat[0]),
             "standard_error": float(res.standard_errors[0]), "n": res.n, "iterations": res.iterations,
             "residual_norm": res.residual_norm, "method": res.method}
        )
    return rows


# ------------------------------------------------------------------------- CSV


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows: Sequence, columns: Sequence[str], cfg: ExperimentConfig, out) -> None:
    """Write header comments then ``rows`` (dicts or dataclasses) to ``out``.

    ``out`` is a path, ``"-"`` for standard output, or a text stream.
    """
    buf = io.StringIO()
    buf.write(f"# obsinfer {__version__}\n")
    buf.write(f"# experiment={cfg.experiment} config_sha256={cfg.digest()} seed={int(cfg.seed)}\n")
    buf.write(f"# {CONVENTIONS}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        d = asdict(r) if hasattr(r, "__dataclass_fields__") else r
        writer.writerow([_fmt(d[c]) for c in columns])
    text = buf.getvalue()
    if hasattr(out, "write"):
        out.write(text)
    elif out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)


SIMULATION_COLUMNS = tuple(f.name for f in fields(SimulationRow))

RUNNERS = {
    "simulate": (run_simulate, SIMULATION_COLUMNS),
    "interval-study": (run_interval_study, SIMULATION_COLUMNS),
    "info-hierarchy": (run_info_hierarchy, HIERARCHY_COLUMNS),
    "are-curve": (run_are_curve, ARE_COLUMNS),
    "estimate": (run_estimate, ESTIMATE_COLUMNS),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="obsinfer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--workers", type=int, help="worker processes (default: config, then $%s, then 1)" % WORKERS_ENV)
        p.add_argument("--out", help="output CSV path ('-' for stdout); defaults to output_path or stdout")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            d = cfg.as_dict()
            d["seed"] = args.seed
            cfg = ExperimentConfig(**d)
        runner, columns = RUNNERS[cfg.experiment]
        rows = runner(cfg, args.workers)
        out = args.out or cfg.output_path or "-"
        if cfg.experiment == "estimate":
            for r in rows:
                se = r["standard_error"]
                se_txt = f"{se:.3g}" if math.isfinite(se) else "n/a (no sandwich)"
                print(f"{r['estimator']}: {r['theta_hat']:.6g} +/- {se_txt}", file=sys.stdout if out != "-" else sys.stderr)
        write_csv(rows, columns, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ObsInferError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
