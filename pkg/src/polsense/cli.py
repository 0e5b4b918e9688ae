"""Command-line entry point: ``polsense <command> [options]``."""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .errors import ConfigError, PolsenseError
from .polmodel import FrequencyGrid, FrequencyResponse
from .simulator import Measurements, generate_scenario

log = logging.getLogger("polsense")


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, scenario=cfg.scenario.replace(seed=args.seed))
    if getattr(args, "estimator", None):
        cfg = replace(cfg, estimator=args.estimator)
    out = args.out or cfg.output_dir or os.environ.get(harness.OUT_ENV)
    if out is None:
        raise ConfigError("no output directory: pass --out, set output_dir or "
                          f"${harness.OUT_ENV}")
    return replace(cfg, output_dir=str(out))


def cmd_simulate(args):
    cfg = _load(args)
    series = generate_scenario(cfg.scenario)
    out = harness.write_outputs(cfg.output_dir, cfg, series, {}, {})
    log.info("wrote scenario with %d steps to %s", series.K + 1, out)


def _measurements_from_dir(path: Path, cfg):
    noisy = harness.read_response_csv(path / "response.csv")
    grid = FrequencyGrid.canonical(noisy.shape[1], cfg.scenario.tau)
    meas = Measurements(grid, tuple(FrequencyResponse(grid, m) for m in noisy))
    truth_file = path / "truth.csv"
    truth = harness.read_params_csv(truth_file) if truth_file.exists() else None
    return meas, truth


def _single(args, name):
    cfg = replace(_load(args), estimator=name)
    if args.input:
        src = Path(args.input)
        if not args.config:
            cfg = replace(harness.load_config(src / "config.json"), estimator=name,
                          output_dir=cfg.output_dir)
        meas, truth = _measurements_from_dir(src, cfg)
    else:
        series = generate_scenario(cfg.scenario)
        meas, truth = series.observed, series.truth_array()
    est = harness.run_estimators(meas, cfg.scenario.N, cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    harness.save_config(cfg, out / "config.json")
    harness.write_params_csv(out / f"est_{name}.csv", est[name].params)
    harness.write_residuals_csv(out / "residuals.csv", est)
    if truth is not None:
        metrics = {name: harness.compute_metrics(est[name], truth, cfg.metric_window)}
        harness.write_metrics_csv(out / "metrics.csv", metrics)
        log.info("%s: verdict section %d (margin %.3g)", name, metrics[name].verdict,
                 metrics[name].margin)


def cmd_experiment(args):
    cfg = _load(args)
    res = harness.run_experiment(cfg)
    for name, m in res.metrics.items():
        log.info("%s: verdict section %d (margin %.3g)%s", name, m.verdict, m.margin,
                 " inconclusive" if m.inconclusive else "")


def _numbers(text):
    out = []
    for part in text.split(","):
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b)))
        else:
            out.append(float(part))
    return out


def cmd_sweep(args):
    cfg = _load(args)
    values = _numbers(args.values)
    seeds = [int(s) for s in _numbers(args.seeds)] if args.seeds else None
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    agg, _ = harness.sweep(cfg, args.axis, values, seeds=seeds, section=args.section,
                           workers=args.workers, out_path=out / "sweep.csv")
    for row in agg:
        log.info("%s=%g %s: success %d/%d", row["axis"], row["value"], row["estimator"],
                 row["successes"], row["runs"] - row["excluded"])


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help=f"output directory (default: config or ${harness.OUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="polsense",
                                description="Distributed polarization sensing experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a scenario to CSV")
    s.set_defaults(func=cmd_simulate)

    for name in ("isa", "learn"):
        s = sub.add_parser(name, parents=[common], help=f"run the {name} estimator")
        s.add_argument("--input", help="directory written by 'simulate' to read measurements from")
        s.set_defaults(func=lambda a, n=name: _single(a, n))

    s = sub.add_parser("experiment", parents=[common], help="simulate, estimate and score")
    s.add_argument("--estimator", choices=["isa", "learn", "both"])
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep", parents=[common], help="aggregate over noise levels or seeds")
    s.add_argument("--estimator", choices=["isa", "learn", "both"])
    s.add_argument("--axis", choices=["sigma2_z", "snr_db", "seed"], required=True)
    s.add_argument("--values", required=True, help="comma list; 'a:b' expands to a range")
    s.add_argument("--seeds", help="seeds for noise axes, e.g. '0:20'")
    s.add_argument("--section", type=int, default=2, help="truly perturbed section")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, PolsenseError) as exc:
        print(f"polsense: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"polsense: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
