"""Command-line entry point: ``cspe {fit,simulate,elicit,summarize}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .chain import run_chain
from .config import RunConfig, load_config, parse_config, with_overrides
from .errors import ConfigError, DataError, SamplerError
from .factorization import max_rank
from .io import load_matrix_csv, provenance_line, save_draw_store, standardize_rows
from .priors import elicit_alpha, expected_pi
from .summary import summarize, write_summary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SAMPLER = 4

log = logging.getLogger("cspe")


def fit(cfg: RunConfig):
    """Run one chain on the configured data; writes the draw store and summary to ``cfg.out``."""
    if not cfg.data:
        raise ConfigError("fit needs a data file ([run] data or --data)")
    data = load_matrix_csv(cfg.data, cfg.missing_token, cfg.header, cfg.row_labels)
    scaling = None
    if cfg.standardize:
        data, scaling = standardize_rows(data)
    K = cfg.k if cfg.k is not None else max_rank(data.J, data.T)
    if not 1 <= K <= max_rank(data.J, data.T):
        raise ConfigError(f"k={K} must lie in 1..max_rank({data.J}, {data.T}) = "
                          f"{max_rank(data.J, data.T)}")
    prior = cfg.prior.build(K)
    try:
        store = run_chain(data, prior, cfg.chain, K=K)
    except (FloatingPointError, ArithmeticError) as exc:
        raise SamplerError(str(exc)) from exc
    out = Path(cfg.out)
    save_draw_store(store, out, cfg.to_dict(), cfg.hash(), cfg.seed)
    summary = summarize(out)
    write_summary(summary, out, scaling if cfg.back_transform else None)
    return summary, store


def simulate(cfg: RunConfig) -> list:
    """Run the benchmark for every scenario in the config; writes CSV and text tables."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [experiments.run_benchmark(s, workers=cfg.scenario.workers)
               for s in cfg.scenarios()]
    head = provenance_line(cfg.hash(), cfg.seed)
    rows = [r for rep in reports for r in rep.csv_rows()]
    with open(out / "benchmark.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(head)
        keys = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (experiments.fmt_cell(v)) for k, v in r.items()})
    with open(out / "cells.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(head)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "replication", "prior", *experiments.METRICS,
                    "ae_theta_missing", "se_theta_missing", "divergence_rate", "unitarity",
                    "negative_increment_fraction", "error"])
        for rep in reports:
            for c in rep.cells:
                m = c.metrics
                vals = ([getattr(m, k) for k in experiments.METRICS]
                        + [m.ae_theta_missing, m.se_theta_missing]) if m else [np.nan] * 6
                w.writerow([rep.scenario.name, c.replication, c.label,
                            *(experiments.fmt_cell(v) for v in vals),
                            experiments.fmt_cell(c.divergence_rate),
                            experiments.fmt_cell(c.unitarity),
                            experiments.fmt_cell(c.negative_increment_fraction), c.error or ""])

    text = [head]
    by_missing = {}
    for rep in reports:
        by_missing.setdefault(rep.scenario.missing_fraction, []).append(rep)
    for miss, group in by_missing.items():
        for statistic in ("mean", "median"):
            text.append(f"\nAccuracy, {miss:.0%} missing\n")
            text.append(experiments.format_accuracy_table(group, statistic, normalized=True))
        text.append(f"\nAccuracy, {miss:.0%} missing, raw means\n")
        text.append(experiments.format_accuracy_table(group, "mean", normalized=False))
    text.append("\nComputation time\n")
    text.append(experiments.format_timing_table(reports))
    failed = [(r.scenario.name, c.replication, c.label, c.error)
              for r in reports for c in r.incomplete()]
    if failed:
        text.append("\nIncomplete cells\n")
        text += [f"{n} rep {i} {label}: {e}\n" for n, i, label, e in failed]
    (out / "report.txt").write_text("".join(text), encoding="utf-8")
    (out / "timing.txt").write_text(head + experiments.format_timing_table(reports),
                                    encoding="utf-8")
    print("".join(text[1:]))
    return reports


def elicit_report(q: float, k: int, K: int | None = None) -> str:
    alpha = elicit_alpha(q, k)
    K = K if K is not None else k + 1
    lines = [f"alpha = {alpha:.6f}  (E[pi_{k}] = {q:g})", "j  E[pi_j]"]
    lines += [f"{j:<2} {expected_pi(alpha, j):.6f}" for j in range(1, K + 1)]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cspe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="INI run configuration")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--k", type=int, help="number of components (default: max_rank)")
        p.add_argument("--z-weights", choices=("stick", "cumulative"))

    p = sub.add_parser("fit", help="fit one data matrix")
    common(p)
    p.add_argument("--data", help="comma-delimited data matrix")
    p.add_argument("--missing-token", help='marker of missing cells (default "NA")')

    p = sub.add_parser("simulate", help="run the simulation benchmark")
    common(p)

    p = sub.add_parser("elicit", help="concentration parameter from a target spike probability")
    p.add_argument("q", type=float, help="target E[pi_k] in (0, 1)")
    p.add_argument("k", type=int, help="index k at which the target applies")
    p.add_argument("--K", type=int, help="length of the printed E[pi_j] curve")

    p = sub.add_parser("summarize", help="recompute the summary of a draw store")
    p.add_argument("store", type=Path)
    p.add_argument("--out", help="write summary files here (default: the store)")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config("")
    return with_overrides(cfg, seed=args.seed, out=args.out, k=args.k,
                          z_weights=args.z_weights, data=getattr(args, "data", None),
                          missing_token=getattr(args, "missing_token", None))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            summary, store = fit(_config_from_args(args))
            print(f"{store.n_draws} draws, prior {summary.prior}")
            print("omega posterior mean: " + " ".join(f"{x:.4g}" for x in summary.omega_mean))
            print(f"1/tau posterior mean: {summary.tau_inv_mean:.4g}; "
                  f"divergence rate {store.divergence_rate:.2%}")
        elif args.command == "simulate":
            simulate(_config_from_args(args))
        elif args.command == "elicit":
            if not 0 < args.q < 1 or args.k < 1:
                raise ConfigError("need 0 < q < 1 and k >= 1")
            print(elicit_report(args.q, args.k, args.K))
        elif args.command == "summarize":
            summary = summarize(args.store)
            write_summary(summary, args.out or args.store)
            print("omega posterior mean: " + " ".join(f"{x:.4g}" for x in summary.omega_mean))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerError as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
