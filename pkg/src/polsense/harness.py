"""
polsense.harness
----------------

Experiment orchestration: build a scenario, run the estimators at every
time step, score the estimated ``|cos phi_n(k)|`` traces against ground
truth and write reproducible CSV files.

Output files of :func:`run_experiment` (all plain CSV with a header row):

``truth.csv`` / ``est_<name>.csv``
    ``k, n, gamma, phi, psi, abs_cos_phi`` -- one row per step and section
    (``n`` is 1-based).
``response.csv``
    ``k, i, re11, im11, re12, im12, re21, im21, re22, im22`` -- the noisy
    measured Jones matrix at canonical grid point ``i``.
``residuals.csv``
    ``estimator, k, residual`` -- response-level residual per step.
``metrics.csv``
    ``estimator, n, tracking_error, window_variation, verdict, margin,
    inconclusive`` -- one row per estimator and section.
``config.json``
    The resolved :class:`ExperimentConfig`.
"""

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateSectionError
from .estimates import EstimateSeries
from .isa import run_isa
from .learner import OptimizerConfig, response_jacobian, track
from .polmodel import ChannelParams, FrequencyGrid, channel_response, response_distance
from .simulator import (MeasurementSeries, Measurements, NoiseModel,
                        PerturbationProfile, ScenarioConfig, generate_scenario,
                        snr_to_sigma2)

__all__ = [
    "ExperimentConfig",
    "MetricsReport",
    "ExperimentResult",
    "estimate_isa",
    "estimate_learn",
    "compute_metrics",
    "is_degenerate",
    "run_experiment",
    "sweep",
    "config_to_dict",
    "config_from_dict",
    "load_config",
    "save_config",
    "write_params_csv",
    "read_params_csv",
    "write_response_csv",
    "read_response_csv",
    "read_metrics_csv",
    "sigma2_for_snr",
    "replace_noise",
    "nontrackable_score",
    "scan_nontrackable",
]

ESTIMATORS = ("isa", "learn")
OUT_ENV = "POLSENSE_OUT"

# A realization is flagged as degenerate when any |sin phi_n| is at most this
# (rotation too weak to identify gamma and psi) ...
MIN_ABS_SIN = 0.05
# ... or when the response Jacobian is this close to rank deficient, i.e.
# distinct parameter changes produce nearly the same response.
MIN_JACOBIAN_RATIO = 1e-3


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    estimator: str = "both"
    output_dir: Optional[str] = None
    metric_window: Tuple[int, int] = (15, 35)

    def __post_init__(self):
        if self.estimator not in ESTIMATORS + ("both",):
            raise ConfigError(f"estimator must be isa, learn or both, got {self.estimator!r}")
        k1, k2 = self.metric_window
        if not (1 <= k1 <= k2 <= self.scenario.K):
            raise ConfigError(f"metric window {self.metric_window} outside 1..{self.scenario.K}")
        object.__setattr__(self, "metric_window", (int(k1), int(k2)))

    @property
    def estimators(self) -> Tuple[str, ...]:
        return ESTIMATORS if self.estimator == "both" else (self.estimator,)

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return config_to_dict(self) == config_to_dict(other)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """
    Scores of one estimate series.

    ``verdict`` is the 1-based section with the largest total variation of
    ``|cos phi_hat_n(k)|`` inside the window; ``inconclusive`` is set when
    the top two statistics tie (``margin == 0``).
    """

    tracking_error: np.ndarray
    window_variation: np.ndarray
    verdict: int
    margin: float
    inconclusive: bool
    residuals: np.ndarray

    def success(self, section: int) -> bool:
        return self.verdict == section and not self.inconclusive


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    series: MeasurementSeries
    estimates: Dict[str, EstimateSeries]
    metrics: Dict[str, MetricsReport]
    degenerate: bool


# --------------------------------------------------------------------------
# estimators over a series


def estimate_isa(measurements: Measurements, N: int) -> EstimateSeries:
    """Independent ISA run per step; failed steps become NaN rows."""
    params, residuals, diags = [], [], []
    for resp in measurements:
        try:
            est, d = run_isa(resp, N)
        except DegenerateSectionError:
            nan = np.full(N, np.nan)
            params.append(np.stack([nan, nan, nan], axis=1))
            residuals.append(np.nan)
            diags.append(None)
            continue
        arr = np.stack([est.gamma, est.phi, est.psi], axis=1)
        params.append(arr)
        if np.all(np.isfinite(arr)):
            residuals.append(response_distance(resp, channel_response(est, resp.grid)))
        else:
            residuals.append(np.nan)
        diags.append(d)
    return EstimateSeries("isa", np.stack(params), residuals, measurements.grid.tau, diags)


def estimate_learn(measurements: Measurements, N: int, cfg: OptimizerConfig) -> EstimateSeries:
    return track(measurements.responses, cfg, N)


# --------------------------------------------------------------------------
# metrics


def compute_metrics(est: EstimateSeries, truth: np.ndarray,
                    window: Tuple[int, int]) -> MetricsReport:
    """
    Score ``est`` against ``truth``, a ``(K + 1, N, 3)`` parameter array (or
    a :class:`MeasurementSeries`).
    """
    if isinstance(truth, MeasurementSeries):
        truth = truth.truth_array()
    truth = np.asarray(truth, dtype=float)
    if truth.shape[:2] != est.params.shape[:2]:
        raise ValueError(f"estimate shape {est.params.shape} does not match truth {truth.shape}")
    k1, k2 = window
    if not (1 <= k1 <= k2 <= est.K):
        raise ValueError(f"window {window} outside 1..{est.K}")
    c_est = est.abs_cos_phi()
    c_true = np.abs(np.cos(truth[:, :, 1]))
    with np.errstate(invalid="ignore"):
        err = np.abs(c_est - c_true)
    tracking = np.array([np.nanmean(col) if np.any(np.isfinite(col)) else np.nan
                         for col in err.T])
    steps = np.abs(np.diff(c_est, axis=0))[k1 - 1:k2]
    variation = np.nansum(steps, axis=0)
    order = np.argsort(-variation, kind="stable")
    top = variation[order[0]]
    second = variation[order[1]] if variation.size > 1 else 0.0
    margin = float(top - second)
    return MetricsReport(tracking, variation, int(order[0]) + 1, margin,
                         bool(margin <= 0.0), np.array(est.residuals))


def is_degenerate(params: ChannelParams, grid: FrequencyGrid) -> bool:
    """Flag realizations that are weakly rotating or overparameterized."""
    if np.min(np.abs(np.sin(params.phi))) <= MIN_ABS_SIN:
        return True
    s = np.linalg.svd(response_jacobian(params, grid), compute_uv=False)
    return bool(s[-1] < MIN_JACOBIAN_RATIO * s[0])


def sigma2_for_snr(scenario: ScenarioConfig, snr_db: float) -> float:
    """Noise variance giving per-entry SNR ``snr_db`` on this scenario's channel."""
    clean = generate_scenario(replace_noise(scenario, 0.0)).clean
    return snr_to_sigma2(clean, snr_db)


def replace_noise(scenario: ScenarioConfig, sigma2_z: float) -> ScenarioConfig:
    return scenario.replace(noise=NoiseModel(sigma2_z))


# --------------------------------------------------------------------------
# config serialization


def config_to_dict(cfg: ExperimentConfig) -> dict:
    sc, op = cfg.scenario, cfg.optimizer
    return {
        "scenario": {
            "N": sc.N,
            "K": sc.K,
            "tau": sc.tau,
            "L": sc.L,
            "gamma_range": list(sc.gamma_range),
            "angle_range": list(sc.angle_range),
            "perturbation": {
                "sigma2": sc.perturbation.sigma2.tolist(),
                "rho2": sc.perturbation.rho2.tolist(),
            },
            "noise": {"sigma2_z": sc.noise.sigma2_z},
            "seed": sc.seed,
        },
        "optimizer": {
            "M": op.M,
            "alpha": op.alpha,
            "beta1": op.beta1,
            "beta2": op.beta2,
            "epsilon": op.epsilon,
            "M_track": op.M_track,
            "grad_tol": op.grad_tol,
            "n_model": op.n_model,
            "carry_state": op.carry_state,
        },
        "estimator": cfg.estimator,
        "output_dir": cfg.output_dir,
        "metric_window": list(cfg.metric_window),
    }


def _take(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return d


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config from a JSON-style dict. Missing keys take defaults; unknown keys are errors."""
    _take(d, ("scenario", "optimizer", "estimator", "output_dir", "metric_window"), "config")
    sc = dict(_take(d.get("scenario", {}),
                    ("N", "K", "tau", "L", "gamma_range", "angle_range",
                     "perturbation", "noise", "seed"), "scenario"))
    try:
        if "perturbation" in sc and sc["perturbation"] is not None:
            pert = _take(sc["perturbation"], ("sigma2", "rho2"), "scenario.perturbation")
            if set(pert) != {"sigma2", "rho2"}:
                raise ConfigError("scenario.perturbation needs both sigma2 and rho2")
            sc["perturbation"] = PerturbationProfile(pert["sigma2"], pert["rho2"])
        if "noise" in sc:
            sc["noise"] = NoiseModel(**_take(sc["noise"], ("sigma2_z",), "scenario.noise"))
        for key in ("gamma_range", "angle_range"):
            if key in sc:
                if len(sc[key]) != 2:
                    raise ConfigError(f"scenario.{key} must have two entries")
                sc[key] = tuple(sc[key])
        scenario = ScenarioConfig(**sc)
        op = _take(d.get("optimizer", {}),
                   ("M", "alpha", "beta1", "beta2", "epsilon", "M_track", "grad_tol", "n_model",
                    "carry_state"),
                   "optimizer")
        optimizer = OptimizerConfig(**op)
        rest = {k: d[k] for k in ("estimator", "output_dir") if k in d}
        if "metric_window" in d:
            rest["metric_window"] = tuple(d["metric_window"])
        return ExperimentConfig(scenario, optimizer, **rest)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(d)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2)
        f.write("\n")


# --------------------------------------------------------------------------
# CSV files

PARAM_HEADER = ["k", "n", "gamma", "phi", "psi", "abs_cos_phi"]
RESPONSE_HEADER = ["k", "i", "re11", "im11", "re12", "im12", "re21", "im21", "re22", "im22"]
METRICS_HEADER = ["estimator", "n", "tracking_error", "window_variation", "verdict",
                  "margin", "inconclusive"]


def _fmt(x) -> str:
    return repr(float(x))


def write_params_csv(path, params: np.ndarray) -> None:
    params = np.asarray(params, dtype=float)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PARAM_HEADER)
        for k, rows in enumerate(params):
            for n, (g, p, s) in enumerate(rows, start=1):
                w.writerow([k, n, _fmt(g), _fmt(p), _fmt(s), _fmt(abs(np.cos(p)))])


def read_params_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        r = csv.reader(f)
        if next(r) != PARAM_HEADER:
            raise ValueError(f"{path}: unexpected header")
        rows = [(int(k), int(n), float(g), float(p), float(s)) for k, n, g, p, s, _ in r]
    K = max(row[0] for row in rows) + 1
    N = max(row[1] for row in rows)
    out = np.full((K, N, 3), np.nan)
    for k, n, g, p, s in rows:
        out[k, n - 1] = (g, p, s)
    return out


def write_response_csv(path, matrices: np.ndarray) -> None:
    matrices = np.asarray(matrices, dtype=complex)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESPONSE_HEADER)
        for k, per_k in enumerate(matrices):
            for i, m in enumerate(per_k):
                vals = []
                for entry in m.ravel():
                    vals += [_fmt(entry.real), _fmt(entry.imag)]
                w.writerow([k, i] + vals)


def read_response_csv(path) -> np.ndarray:
    """Matrices as a ``(K + 1, L, 2, 2)`` complex array."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        if next(r) != RESPONSE_HEADER:
            raise ValueError(f"{path}: unexpected header")
        rows = [(int(row[0]), int(row[1]), [float(x) for x in row[2:]]) for row in r]
    K = max(row[0] for row in rows) + 1
    L = max(row[1] for row in rows) + 1
    out = np.zeros((K, L, 2, 2), dtype=complex)
    for k, i, v in rows:
        out[k, i] = (np.array(v[0::2]) + 1j * np.array(v[1::2])).reshape(2, 2)
    return out


def write_residuals_csv(path, estimates: Dict[str, EstimateSeries]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["estimator", "k", "residual"])
        for name, est in estimates.items():
            for k, r in enumerate(est.residuals):
                w.writerow([name, k, _fmt(r)])


def write_metrics_csv(path, metrics: Dict[str, MetricsReport]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for name, m in metrics.items():
            for n in range(m.tracking_error.size):
                w.writerow([name, n + 1, _fmt(m.tracking_error[n]), _fmt(m.window_variation[n]),
                            m.verdict, _fmt(m.margin), int(m.inconclusive)])


def read_metrics_csv(path) -> Dict[str, dict]:
    """Per-estimator dict of arrays and verdict fields, as written by :func:`run_experiment`."""
    out: Dict[str, dict] = {}
    with open(path, newline="") as f:
        r = csv.DictReader(f)
        if r.fieldnames != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header")
        for row in r:
            d = out.setdefault(row["estimator"], {"tracking_error": [], "window_variation": []})
            d["tracking_error"].append(float(row["tracking_error"]))
            d["window_variation"].append(float(row["window_variation"]))
            d["verdict"] = int(row["verdict"])
            d["margin"] = float(row["margin"])
            d["inconclusive"] = bool(int(row["inconclusive"]))
    for d in out.values():
        d["tracking_error"] = np.array(d["tracking_error"])
        d["window_variation"] = np.array(d["window_variation"])
    return out


# --------------------------------------------------------------------------
# experiments


def run_estimators(measurements: Measurements, N: int, cfg: ExperimentConfig
                   ) -> Dict[str, EstimateSeries]:
    """Run the configured estimators on measurements only."""
    out = {}
    for name in cfg.estimators:
        if name == "isa":
            out[name] = estimate_isa(measurements, N)
        else:
            out[name] = estimate_learn(measurements, N, cfg.optimizer)
    return out


def write_outputs(out_dir, cfg: ExperimentConfig, series: MeasurementSeries,
                  estimates: Dict[str, EstimateSeries],
                  metrics: Dict[str, MetricsReport]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    write_params_csv(out / "truth.csv", series.truth_array())
    write_response_csv(out / "response.csv", series.noisy)
    for name, est in estimates.items():
        write_params_csv(out / f"est_{name}.csv", est.params)
    if estimates:
        write_residuals_csv(out / "residuals.csv", estimates)
    if metrics:
        write_metrics_csv(out / "metrics.csv", metrics)
    return out


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """
    Generate the scenario, run the selected estimators at every step and
    score them. Files are written when ``write`` is true and an output
    directory is configured (or given by the ``POLSENSE_OUT`` variable).
    """
    series = generate_scenario(cfg.scenario)
    estimates = run_estimators(series.observed, cfg.scenario.N, cfg)
    metrics = {name: compute_metrics(est, series.truth_array(), cfg.metric_window)
               for name, est in estimates.items()}
    degenerate = is_degenerate(series.truth[0], series.grid)
    out_dir = cfg.output_dir or os.environ.get(OUT_ENV)
    if write and out_dir:
        write_outputs(out_dir, cfg, series, estimates, metrics)
    return ExperimentResult(cfg, series, estimates, metrics, degenerate)


def _experiment_row(cfg: ExperimentConfig, section: int) -> List[dict]:
    res = run_experiment(replace(cfg, output_dir=None), write=False)
    rows = []
    for name, m in res.metrics.items():
        rows.append({
            "seed": cfg.scenario.seed,
            "sigma2_z": cfg.scenario.noise.sigma2_z,
            "estimator": name,
            "degenerate": res.degenerate,
            "success": m.success(section),
            "verdict": m.verdict,
            "margin": m.margin,
            "tracking_error": float(np.nanmean(m.tracking_error)),
        })
    return rows


SWEEP_HEADER = ["axis", "value", "estimator", "runs", "excluded", "successes",
                "success_rate", "median_tracking_error"]


def sweep(template: ExperimentConfig, axis: str, values: Sequence[float],
          seeds: Optional[Sequence[int]] = None, section: int = 2,
          workers: int = 1, out_path=None) -> Tuple[List[dict], List[dict]]:
    """
    Run independent experiments over ``axis`` (``"sigma2_z"``, ``"snr_db"``
    or ``"seed"``) and aggregate localization success against ``section``.

    For noise axes every value is run at each of ``seeds`` (default: the
    template seed). Degenerate realizations are excluded from the rates.
    Returns ``(aggregate_rows, per_run_rows)``.
    """
    if len(values) == 0:
        raise ValueError("sweep axis is empty")
    if axis not in ("sigma2_z", "snr_db", "seed"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    jobs = []
    for v in values:
        run_seeds = [int(v)] if axis == "seed" else list(seeds or [template.scenario.seed])
        for s in run_seeds:
            sc = template.scenario.replace(seed=s)
            if axis == "sigma2_z":
                sc = replace_noise(sc, float(v))
            elif axis == "snr_db":
                sc = replace_noise(sc, sigma2_for_snr(sc, float(v)))
            jobs.append((v, replace(template, scenario=sc)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_experiment_row, [c for _, c in jobs],
                                    [section] * len(jobs)))
    else:
        results = [_experiment_row(c, section) for _, c in jobs]

    per_run = []
    for (v, _), rows in zip(jobs, results):
        for row in rows:
            per_run.append(dict(row, axis=axis, value=v))

    aggregate = []
    for v in values:
        for name in template.estimators:
            rows = [r for r in per_run if r["value"] == v and r["estimator"] == name]
            kept = [r for r in rows if not r["degenerate"]]
            succ = sum(r["success"] for r in kept)
            errs = [r["tracking_error"] for r in kept]
            aggregate.append({
                "axis": axis,
                "value": v,
                "estimator": name,
                "runs": len(rows),
                "excluded": len(rows) - len(kept),
                "successes": succ,
                "success_rate": succ / len(kept) if kept else float("nan"),
                "median_tracking_error": float(np.median(errs)) if errs else float("nan"),
            })
    if out_path is not None:
        with open(out_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            for r in aggregate:
                w.writerow([r["axis"], _fmt(r["value"]), r["estimator"], r["runs"], r["excluded"],
                            r["successes"], _fmt(r["success_rate"]),
                            _fmt(r["median_tracking_error"])])
    return aggregate, per_run


# --------------------------------------------------------------------------
# non-trackable realizations

# Residual below this (relative to response energy) counts as a good fit ...
NONTRACKABLE_RESIDUAL = 1e-3
# ... and a mean per-step |cos phi_hat| change above this on a section that
# is not perturbed counts as unstable parameters.
NONTRACKABLE_DRIFT = 0.04


def nontrackable_score(result: ExperimentResult, section: int = 2) -> Tuple[float, float]:
    """
    ``(relative residual, drift)`` of the learner: the worst per-step
    relative response residual and the largest mean per-step change of
    ``|cos phi_hat_n|`` over sections other than ``section``.
    """
    est = result.estimates["learn"]
    energy = np.sum(np.abs(result.series.noisy) ** 2, axis=(1, 2, 3))
    rel = float(np.max(est.residuals / energy))
    steps = np.abs(np.diff(est.abs_cos_phi(), axis=0)).mean(axis=0)
    others = np.delete(steps, section - 1)
    return rel, float(others.max()) if others.size else 0.0


def scan_nontrackable(template: ExperimentConfig, seeds: Sequence[int],
                      section: int = 2) -> List[int]:
    """Seeds whose learner fit the response well while parameters drift."""
    found = []
    for s in seeds:
        cfg = replace(template, estimator="learn", output_dir=None,
                      scenario=template.scenario.replace(seed=s))
        rel, drift = nontrackable_score(run_experiment(cfg, write=False), section)
        if rel < NONTRACKABLE_RESIDUAL and drift > NONTRACKABLE_DRIFT:
            found.append(s)
    return found
