"""Command-line entry point: ``simulate``, ``compare`` and ``diag``.

Every CSV starts with ``#`` comment lines holding the resolved configuration,
so a results directory documents how it was produced.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from .harness import monte_carlo, position_rmse, realization, run_filter, run_seed


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, command, conf, header, rows):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(f"# robust_ckf {command}\n")
            for line in conf.header_lines():
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _single_run(conf):
    setup = conf.setup
    seed = run_seed(conf.seed, 0)
    truth, z = realization(setup, seed)
    results = {
        v: run_filter(v, setup.scenario, z, setup.initial_belief(), setup.filter_noise, setup.adaptive, truth, seed)
        for v in conf.variants
    }
    return truth, results


def cmd_simulate(conf):
    truth, results = _single_run(conf)
    header = ["step", "t", "x1_true", "x3_true"]
    for v in conf.variants:
        header += [f"{v}_x1_est", f"{v}_x3_est"]
    rows = []
    for k in range(len(truth.states)):
        row = [k, truth.timestamps[k], truth.states[k, 0], truth.states[k, 2]]
        for v in conf.variants:
            est = results[v].estimates
            row += [est[k, 0], est[k, 2]] if k < len(est) else [float("nan")] * 2
        rows.append(row)
    path = write_csv(conf.out / "trajectory.csv", "simulate", conf, header, rows)
    for v in conf.variants:
        r = results[v]
        status = "diverged: " + r.error if r.diverged else f"rmse {position_rmse(r, truth):.4f} m"
        print(f"{v:8s} {status}")
    print(f"wrote {path}")
    return [path]


def cmd_compare(conf):
    table = monte_carlo(conf.variants, conf.setup, conf.runs, conf.seed, conf.workers)
    per_run = write_csv(
        conf.out / "rmse_per_run.csv",
        "compare",
        conf,
        ["run", "seed", "filter", "rmse_m", "diverged"],
        [[r["run"], r["seed"], r["filter"], r["rmse_m"], r["diverged"]] for r in table.per_run],
    )
    summary = write_csv(
        conf.out / "rmse_summary.csv",
        "compare",
        conf,
        ["filter", "mean_rmse_m", "runs", "diverged_count"],
        [[v, table.mean[v], table.runs, table.diverged[v]] for v in table.variants],
    )
    print(f"{'filter':8s} {'mean_rmse_m':>12s} {'runs':>5s} {'diverged':>8s}")
    for v in table.variants:
        print(f"{v:8s} {table.mean[v]:12.4f} {table.runs:5d} {table.diverged[v]:8d}")
    print(f"wrote {per_run} and {summary}")
    return [per_run, summary]


def cmd_diag(conf):
    _, results = _single_run(conf)
    n_w = conf.setup.adaptive.window_size
    m = len(conf.setup.filter_noise.R)
    header = ["step", "filter", "adapted"] + [f"R_{i}" for i in range(m)] + [f"w_{j}" for j in range(n_w)]
    rows = []
    for v in conf.variants:
        r = results[v]
        for k, (Rd, w) in enumerate(zip(r.R_diag, r.weights), 1):
            ws = [""] * n_w if w is None else list(w) + [""] * (n_w - len(w))
            rows.append([k, v, w is not None, *Rd, *ws])
    path = write_csv(conf.out / "adaptive_diag.csv", "diag", conf, header, rows)
    print(f"wrote {path}")
    return [path]


COMMANDS = {"simulate": cmd_simulate, "compare": cmd_compare, "diag": cmd_diag}


def build_parser():
    p = argparse.ArgumentParser(
        prog="robust-ckf",
        description="Cubature Kalman filter benchmarks: CKF vs innovation-adaptive vs robust adaptive.",
    )
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="flat 'section.key = value' file")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--outlier-prob", type=float)
    p.add_argument("--outlier-mag", type=float)
    p.add_argument("--variants", help="comma list of ckf, ackf, cmrackf")
    p.add_argument("--adapt-q", action="store_true", default=None)
    p.add_argument("--variance-mode", choices=["paper", "normalized"])
    p.add_argument("--out", type=Path)
    p.add_argument("--workers", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return p


FLAG_KEYS = {
    "runs": "experiment.runs",
    "seed": "experiment.seed",
    "window": "adaptive.window_size",
    "outlier_prob": "outliers.probability",
    "outlier_mag": "outliers.magnitude",
    "variants": "experiment.variants",
    "adapt_q": "adaptive.adapt_q",
    "variance_mode": "adaptive.variance_mode",
    "out": "experiment.out",
    "workers": "experiment.workers",
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = str(value)
    try:
        conf = cfg.load(args.config, overrides)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](conf)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
