"""Posterior summaries computed from a stored chain."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import gaussian_kde

from .chain import DrawStore
from .errors import DataError
from .factorization import signal_to_noise, variance_decomposition
from .io import fmt_float, load_draw_store, provenance_line

KDE_POINTS = 512
SUMMARY_JSON = "summary.json"
SUMMARY_CSV = "summary.csv"
THETA_CSV = "summary_theta_mean.csv"
DENSITY_CSV = "tau_inv_density.csv"


@dataclass
class PosteriorSummary:
    """Posterior means with equal-tailed 95% credible intervals."""

    prior: str
    n_draws: int
    omega_mean: np.ndarray
    omega_lower: np.ndarray
    omega_upper: np.ndarray
    tau_inv_mean: float
    tau_inv_lower: float
    tau_inv_upper: float
    tau_inv_grid: np.ndarray
    tau_inv_density: np.ndarray
    theta_mean: np.ndarray
    share_mean: np.ndarray  # K signal shares followed by the noise share
    share_lower: np.ndarray
    share_upper: np.ndarray
    snr_mean: float
    config_hash: str = ""
    seed: int = 0

    def to_json_dict(self) -> dict:
        d = asdict(self)
        for key in ("omega_mean", "omega_lower", "omega_upper", "share_mean",
                    "share_lower", "share_upper"):
            d[key] = [float(x) for x in d[key]]
        for key in ("theta_mean", "tau_inv_grid", "tau_inv_density"):
            d.pop(key)
        return d


def credible_interval(draws, level: float = 0.95, axis: int = 0):
    tail = (1.0 - level) / 2.0
    return (np.quantile(draws, tail, axis=axis), np.quantile(draws, 1.0 - tail, axis=axis))


def density_grid(x, n: int = KDE_POINTS):
    """Gaussian-kernel density of ``x`` on ``n`` points spanning the sample +- 3 bandwidths."""
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:  # degenerate sample: unit mass at a single point
        grid = np.linspace(lo - 0.5, lo + 0.5, n)
        dens = np.zeros(n)
        dens[n // 2] = 1.0 / (grid[1] - grid[0])
        return grid, dens
    kde = gaussian_kde(x)
    bw = float(np.sqrt(kde.covariance[0, 0]))
    grid = np.linspace(lo - 3 * bw, hi + 3 * bw, n)
    return grid, kde(grid)


def summarize_store(store: DrawStore, config_hash: str = "", seed: int = 0) -> PosteriorSummary:
    if store.n_draws < 2:
        raise DataError(f"a summary needs at least 2 retained draws, the store has {store.n_draws}")
    omega = store.omega
    tau_inv = 1.0 / store.tau
    n_cells = store.J * store.T
    shares = np.array([variance_decomposition(w, t, n_cells)
                       for w, t in zip(omega, store.tau)])
    snr = np.array([signal_to_noise(w, t, n_cells) for w, t in zip(omega, store.tau)])
    w_lo, w_hi = credible_interval(omega)
    t_lo, t_hi = credible_interval(tau_inv)
    s_lo, s_hi = credible_interval(shares)
    grid, dens = density_grid(tau_inv)
    return PosteriorSummary(
        prior=store.prior_label, n_draws=store.n_draws,
        omega_mean=omega.mean(axis=0), omega_lower=w_lo, omega_upper=w_hi,
        tau_inv_mean=float(tau_inv.mean()), tau_inv_lower=float(t_lo), tau_inv_upper=float(t_hi),
        tau_inv_grid=grid, tau_inv_density=dens, theta_mean=store.theta_mean,
        share_mean=shares.mean(axis=0), share_lower=s_lo, share_upper=s_hi,
        snr_mean=float(snr.mean()), config_hash=config_hash, seed=seed,
    )


def summarize(store_path) -> PosteriorSummary:
    """Recompute the summary of the draw store in ``store_path``."""
    store, meta = load_draw_store(store_path)
    return summarize_store(store, meta["config_hash"], meta["seed"])


def write_summary(summary: PosteriorSummary, directory, scaling=None) -> None:
    """Write summary JSON and CSV files.

    ``scaling`` (a RowScaling) adds a copy of the Theta mean in original units.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    head = provenance_line(summary.config_hash, summary.seed)
    with open(directory / SUMMARY_JSON, "w", encoding="utf-8") as fh:
        json.dump(summary.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    lines = [head, "quantity,index,mean,lower,upper\n"]
    K = summary.omega_mean.size
    for k in range(K):
        lines.append(f"omega,{k + 1},{fmt_float(summary.omega_mean[k])},"
                     f"{fmt_float(summary.omega_lower[k])},{fmt_float(summary.omega_upper[k])}\n")
    for k in range(K + 1):
        idx = "noise" if k == K else str(k + 1)
        lines.append(f"share,{idx},{fmt_float(summary.share_mean[k])},"
                     f"{fmt_float(summary.share_lower[k])},{fmt_float(summary.share_upper[k])}\n")
    lines.append(f"tau_inv,,{fmt_float(summary.tau_inv_mean)},"
                 f"{fmt_float(summary.tau_inv_lower)},{fmt_float(summary.tau_inv_upper)}\n")
    lines.append(f"snr,,{fmt_float(summary.snr_mean)},,\n")
    (directory / SUMMARY_CSV).write_text("".join(lines), encoding="utf-8")

    _write_matrix(directory / THETA_CSV, head, summary.theta_mean)
    if scaling is not None:
        _write_matrix(directory / "summary_theta_mean_original_units.csv", head,
                      scaling.inverse(summary.theta_mean))
    rows = [head, "tau_inv,density\n"]
    rows += [f"{fmt_float(g)},{fmt_float(d)}\n"
             for g, d in zip(summary.tau_inv_grid, summary.tau_inv_density)]
    (directory / DENSITY_CSV).write_text("".join(rows), encoding="utf-8")


def _write_matrix(path: Path, head: str, m) -> None:
    body = "".join(",".join(fmt_float(x) for x in row) + "\n" for row in m)
    path.write_text(head + body, encoding="utf-8")
