"""Monte Carlo comparison of singular-value priors on simulated low-rank matrices.

Each replication draws a rank-K* matrix from a static factor model, adds
Gaussian noise at a fixed signal-to-noise ratio, hides a random subset of
cells, and fits every prior in the grid to the same data.  Accuracy of the
posterior means of omega and Theta is scored by summed absolute (AE) and
squared (SE) errors and reported relative to the noninformative prior.

Seeds are derived from ``(scenario seed, replication, prior label)`` only,
so results do not depend on the order or the subset of priors that is run.
"""
from __future__ import annotations

import concurrent.futures
import io
import logging
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import ChainConfig, run_chain
from .factorization import ObservedMatrix, max_rank
from .priors import Noninformative, standard_prior_grid

log = logging.getLogger(__name__)

BASELINE = "noninformative"
METRICS = ("ae_omega", "se_omega", "ae_theta", "se_theta")


def derive_seed(root: int, *key: int) -> int:
    """64-bit seed of the stream identified by ``key`` under ``root``."""
    ss = np.random.SeedSequence(entropy=root, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def label_key(label: str) -> int:
    return zlib.crc32(label.encode())


@dataclass(frozen=True)
class Scenario:
    J: int = 30
    T: int = 30
    true_rank: int = 3
    snr: float = 10.0
    missing_fraction: float = 0.0
    replications: int = 80
    priors: tuple = ()
    seed: int = 0
    chain: ChainConfig = field(default_factory=ChainConfig)
    K: int | None = None

    def __post_init__(self):
        if not 1 <= self.true_rank < max_rank(self.J, self.T):
            raise ValueError(
                f"true_rank={self.true_rank} must be below max_rank({self.J}, {self.T})"
            )
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if not self.snr > 0 or self.replications < 1:
            raise ValueError("snr and replications must be positive")
        if not self.priors:
            object.__setattr__(self, "priors", tuple(standard_prior_grid(self.rank)))
        labels = [p.label for p in self.priors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"prior labels must be unique: {labels}")

    @classmethod
    def desk(cls, true_rank=3, missing_fraction=0.0, **kwargs) -> "Scenario":
        """20 x 20 matrices, 10 replications, 4,000 iterations of which 2,000 are kept."""
        kwargs.setdefault("chain", ChainConfig(iterations=4000, burn_in=2000))
        return cls(J=20, T=20, true_rank=true_rank, missing_fraction=missing_fraction,
                   replications=10, **kwargs)

    @property
    def rank(self) -> int:
        return max_rank(self.J, self.T) if self.K is None else self.K

    @property
    def name(self) -> str:
        return f"J{self.J}xT{self.T}_K*{self.true_rank}_miss{self.missing_fraction:g}"


@dataclass(frozen=True)
class Dgp:
    theta: np.ndarray
    omega: np.ndarray
    data: ObservedMatrix
    tau: float


def generate_dgp(scenario: Scenario, rep_seed: int) -> Dgp:
    """Draw one noisy, partially observed matrix from the static factor model.

    Theta0 = A F with standard normal loadings A (J x K*) and factors F
    (K* x T).  Row means are removed, which zeroes the grand mean without
    raising the rank, and the result is scaled to unit variance.  The noise
    precision is then ``snr``.
    """
    J, T, Ks = scenario.J, scenario.T, scenario.true_rank
    if Ks >= min(J, T):
        raise ValueError(f"true rank {Ks} must be below min(J, T) = {min(J, T)}")
    rng = np.random.default_rng(rep_seed)
    A = rng.standard_normal((J, Ks))
    F = rng.standard_normal((Ks, T))
    theta = A @ F
    theta -= theta.mean(axis=1, keepdims=True)
    theta /= theta.std()
    tau = float(scenario.snr)
    Y = theta + rng.standard_normal((J, T)) / np.sqrt(tau)

    mask = np.ones(J * T, dtype=bool)
    n_miss = int(round(scenario.missing_fraction * J * T))
    if n_miss:
        mask[rng.choice(J * T, size=n_miss, replace=False)] = False
    mask = mask.reshape(J, T)
    omega = np.linalg.svd(theta, compute_uv=False)[:Ks]
    return Dgp(theta, omega, ObservedMatrix(Y, mask), tau)


@dataclass(frozen=True)
class MetricRow:
    label: str
    ae_omega: float
    se_omega: float
    ae_theta: float
    se_theta: float
    ae_theta_missing: float = float("nan")
    se_theta_missing: float = float("nan")

    def values(self) -> np.ndarray:
        return np.array([getattr(self, m) for m in METRICS])


def compute_metrics(estimate_omega, truth_omega, estimate_theta, truth_theta,
                    label: str = "", mask=None) -> MetricRow:
    """AE and SE of posterior-mean estimates; omega truth is zero-padded to length K.

    Theta errors are summed over every cell.  When ``mask`` is given, errors
    restricted to its unobserved cells are reported as well.
    """
    est_w = np.asarray(estimate_omega, dtype=float)
    true_w = np.asarray(truth_omega, dtype=float)
    if true_w.size > est_w.size:
        raise ValueError(f"truth has {true_w.size} values but the estimate only {est_w.size}")
    true_w = np.pad(true_w, (0, est_w.size - true_w.size))
    est_t = np.asarray(estimate_theta, dtype=float)
    true_t = np.asarray(truth_theta, dtype=float)
    if est_t.shape != true_t.shape:
        raise ValueError(f"theta shapes differ: {est_t.shape} vs {true_t.shape}")
    dw = est_w - true_w
    dt = est_t - true_t
    ae_m = se_m = float("nan")
    if mask is not None and (~np.asarray(mask)).any():
        miss = dt[~np.asarray(mask)]
        ae_m, se_m = float(np.abs(miss).sum()), float((miss**2).sum())
    return MetricRow(label, float(np.abs(dw).sum()), float((dw**2).sum()),
                     float(np.abs(dt).sum()), float((dt**2).sum()), ae_m, se_m)


@dataclass
class CellResult:
    replication: int
    label: str
    metrics: MetricRow | None
    seconds_per_1000: float = float("nan")
    divergence_rate: float = float("nan")
    unitarity: float = float("nan")
    negative_increment_fraction: float = float("nan")
    min_increment: float = float("nan")
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.metrics is not None


def run_cell(scenario: Scenario, replication: int, prior) -> CellResult:
    """Fit one prior to one replication's data; failures are captured, not raised."""
    dgp = generate_dgp(scenario, derive_seed(scenario.seed, replication, 0))
    chain = replace(scenario.chain,
                    seed=derive_seed(scenario.seed, replication, 1, label_key(prior.label)))
    try:
        store = run_chain(dgp.data, prior, chain, K=scenario.rank)
    except Exception as exc:  # noqa: BLE001 - one failed cell must not abort the run
        log.warning("cell (%d, %s) failed: %s", replication, prior.label, exc)
        return CellResult(replication, prior.label, None, error=f"{type(exc).__name__}: {exc}")
    metrics = compute_metrics(store.omega_mean(), dgp.omega, store.theta_mean, dgp.theta,
                              label=prior.label, mask=dgp.data.mask)
    return CellResult(
        replication, prior.label, metrics,
        seconds_per_1000=1000.0 * store.elapsed / chain.iterations,
        divergence_rate=store.divergence_rate,
        unitarity=float(store.unitarity.mean()),
        negative_increment_fraction=float((store.omega_star < 0).any(axis=1).mean()),
        min_increment=float(store.omega_star.min()),
    )


@dataclass
class BenchmarkReport:
    scenario: Scenario
    cells: list

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.scenario.priors]

    def cell(self, replication: int, label: str) -> CellResult:
        for c in self.cells:
            if c.replication == replication and c.label == label:
                return c
        raise KeyError((replication, label))

    def metric_matrix(self, label: str) -> np.ndarray:
        """Replications x 4 array of raw metrics (NaN for failed cells)."""
        out = np.full((self.scenario.replications, len(METRICS)), np.nan)
        for c in self.cells:
            if c.label == label and c.ok:
                out[c.replication] = c.metrics.values()
        return out

    def aggregate(self, statistic: str = "mean") -> dict:
        fn = {"mean": np.nanmean, "median": np.nanmedian}[statistic]
        out = {}
        for label in self.labels:
            m = self.metric_matrix(label)
            out[label] = fn(m, axis=0) if np.isfinite(m).any() else np.full(len(METRICS), np.nan)
        return out

    def normalized(self, statistic: str = "mean", baseline: str = BASELINE) -> dict:
        agg = self.aggregate(statistic)
        if baseline not in agg:
            raise KeyError(f"baseline prior {baseline!r} is not in the grid")
        base = agg[baseline]
        return {label: 100.0 * v / base for label, v in agg.items()}

    def paired_wins(self, label: str, baseline: str = BASELINE, metric: str = "ae_omega"):
        """Number of replications where ``label`` beats ``baseline``, and the number compared."""
        j = METRICS.index(metric)
        a = self.metric_matrix(label)[:, j]
        b = self.metric_matrix(baseline)[:, j]
        both = np.isfinite(a) & np.isfinite(b)
        return int((a[both] < b[both]).sum()), int(both.sum())

    def timing(self) -> dict:
        """Mean seconds per 1,000 iterations for each prior."""
        out = {}
        for label in self.labels:
            t = [c.seconds_per_1000 for c in self.cells if c.label == label and c.ok]
            out[label] = float(np.mean(t)) if t else float("nan")
        return out

    def incomplete(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def csv_rows(self) -> list[dict]:
        rows = []
        for statistic in ("mean", "median"):
            raw = self.aggregate(statistic)
            norm = self.normalized(statistic) if BASELINE in raw else {}
            for label in self.labels:
                row = {"scenario": self.scenario.name, "prior": label, "statistic": statistic}
                row.update({m: raw[label][i] for i, m in enumerate(METRICS)})
                if norm:
                    row.update({f"{m}_normalized": norm[label][i] for i, m in enumerate(METRICS)})
                rows.append(row)
        return rows


def run_benchmark(scenario: Scenario, workers: int = 1) -> BenchmarkReport:
    """Fit every prior to every replication; cells run on a pool of ``workers`` processes."""
    tasks = [(r, p) for r in range(scenario.replications) for p in scenario.priors]
    if workers <= 1:
        cells = [run_cell(scenario, r, p) for r, p in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, scenario, r, p) for r, p in tasks]
            cells = [f.result() for f in futures]
    order = {p.label: i for i, p in enumerate(scenario.priors)}
    cells.sort(key=lambda c: (c.replication, order[c.label]))
    return BenchmarkReport(scenario, cells)


def fmt_cell(x) -> str:
    """CSV rendering: 17 significant digits for floats, empty for NaN."""
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else format(float(x), ".17g")
    return str(x)


def _fmt(x, width=8, prec=1):
    return f"{x:{width}.{prec}f}" if np.isfinite(x) else f"{'--':>{width}}"


def format_accuracy_table(reports, statistic="mean", normalized=True) -> str:
    """Aligned text table: one block of (omega AE, SE, Theta AE, SE) per scenario."""
    labels = reports[0].labels
    width = max(len(label) for label in labels) + 2
    buf = io.StringIO()
    head = " " * width + "".join(f"{r.scenario.name:^36}" for r in reports)
    buf.write(head.rstrip() + "\n")
    buf.write(" " * width + "".join(
        f"{'w AE':>8} {'w SE':>8} {'Th AE':>8} {'Th SE':>8} " for _ in reports).rstrip() + "\n")
    tables = [r.normalized(statistic) if normalized else r.aggregate(statistic) for r in reports]
    for label in labels:
        line = f"{label:<{width}}"
        for t in tables:
            line += "".join(_fmt(v) + " " for v in t[label])
        buf.write(line.rstrip() + "\n")
    kind = "normalized to noninformative = 100" if normalized else "raw"
    buf.write(f"({statistic} over replications, {kind})\n")
    return buf.getvalue()


def format_timing_table(reports) -> str:
    """Seconds per 1,000 iterations, one column per scenario."""
    labels = reports[0].labels
    width = max(len(label) for label in labels) + 2
    buf = io.StringIO()
    names = [r.scenario.name for r in reports]
    colw = max(12, max(len(n) for n in names) + 2)
    buf.write(" " * width + "".join(f"{n:>{colw}}" for n in names) + "\n")
    timings = [r.timing() for r in reports]
    for label in labels:
        buf.write(f"{label:<{width}}" + "".join(_fmt(t[label], colw) for t in timings) + "\n")
    buf.write("(mean seconds per 1,000 iterations)\n")
    return buf.getvalue()
