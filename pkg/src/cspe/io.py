"""CSV ingestion, row standardization, and draw-store persistence.

A draw store is a directory holding

* ``draws.csv``: one row per retained iteration (iteration, omega, omega_star,
  tau, lambda, z, pi, unitarity and, optionally, vec Phi and vec Psi);
* ``theta_mean.csv``: the posterior mean of Theta;
* ``diagnostics.csv``: per-iteration NUTS step size, leapfrog count,
  acceptance statistic and divergence flag;
* ``store.json``: shapes, prior, configuration, config hash and root seed;
* ``run.log``: wall-clock timing, kept apart so the other files are
  reproducible byte for byte.

Every CSV starts with a ``#`` comment line carrying the config hash and seed.
Floats are written with 17 significant digits, which round-trips exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import DrawStore
from .errors import DataError
from .factorization import ObservedMatrix

STORE_FORMAT = 1
DRAWS_FILE = "draws.csv"
THETA_FILE = "theta_mean.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
SIDECAR_FILE = "store.json"
RUN_LOG_FILE = "run.log"


def fmt_float(x) -> str:
    return format(float(x), ".17g")


def provenance_line(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def load_matrix_csv(path, missing_token: str = "NA", header: bool = False,
                    row_labels: bool = False) -> ObservedMatrix:
    """Read a comma-delimited matrix; ``missing_token`` and empty fields mark missing cells."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    col_labels = None
    if header:
        if not rows:
            raise DataError(f"{path}: header requested but the file is empty")
        col_labels = rows.pop(0)
        if row_labels:
            col_labels = col_labels[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    labels = None
    if row_labels:
        labels = [r[0] for r in rows]
        rows = [r[1:] for r in rows]
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged rows, data row {i + 1} has {len(r)} fields, "
                            f"expected {width}")
    if col_labels is not None and len(col_labels) != width:
        raise DataError(f"{path}: header has {len(col_labels)} fields for {width} columns")

    values = np.full((len(rows), width), np.nan)
    mask = np.zeros(values.shape, dtype=bool)
    for i, r in enumerate(rows):
        for t, cell in enumerate(r):
            cell = cell.strip()
            if cell == "" or cell == missing_token:
                continue
            try:
                values[i, t] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at data row {i + 1}, "
                                f"column {t + 1}") from None
            if not np.isfinite(values[i, t]):
                raise DataError(f"{path}: non-finite cell {cell!r} at data row {i + 1}, "
                                f"column {t + 1}")
            mask[i, t] = True
    if not mask.any():
        raise DataError(f"{path}: every cell is missing; at least one entry must be observed")
    return ObservedMatrix(values, mask, row_labels=labels, col_labels=col_labels)


def save_matrix_csv(path, data: ObservedMatrix, missing_token: str = "NA") -> None:
    """Write ``data`` so that :func:`load_matrix_csv` reads it back exactly.

    A header row is written when column labels are present and a label
    column when row labels are present.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if data.col_labels is not None:
            w.writerow(([""] if data.row_labels is not None else []) + list(data.col_labels))
        for i in range(data.J):
            cells = [repr(float(v)) if m else missing_token
                     for v, m in zip(data.values[i], data.mask[i])]
            if data.row_labels is not None:
                cells.insert(0, data.row_labels[i])
            w.writerow(cells)


@dataclass(frozen=True)
class RowScaling:
    """Per-row mean and standard deviation used by :func:`standardize_rows`."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean[:, None]) / self.std[:, None]

    def inverse(self, x):
        """Map a standardized J x T array (e.g. a Theta estimate) back to original units."""
        return np.asarray(x, dtype=float) * self.std[:, None] + self.mean[:, None]


def standardize_rows(data: ObservedMatrix) -> tuple[ObservedMatrix, RowScaling]:
    """Give every row observed-entry mean 0 and sample variance 1 (ddof=1)."""
    means = np.empty(data.J)
    stds = np.empty(data.J)
    for j in range(data.J):
        obs = data.values[j, data.mask[j]]
        if obs.size < 2:
            raise DataError(f"row {j + 1} has {obs.size} observed entries; need at least 2")
        means[j] = obs.mean()
        stds[j] = obs.std(ddof=1)
        if not stds[j] > 0:
            raise DataError(f"row {j + 1} is constant over its observed entries")
    scaling = RowScaling(means, stds)
    values = np.where(data.mask, scaling.apply(np.where(data.mask, data.values, 0.0)), np.nan)
    return (ObservedMatrix(values, data.mask, data.row_labels, data.col_labels), scaling)


def _draw_columns(store: DrawStore) -> list[str]:
    K = store.K
    cols = ["iteration"]
    for name in ("omega", "omega_star", "lambda", "z", "pi"):
        cols += [f"{name}_{k}" for k in range(1, K + 1)]
    cols += ["tau", "unitarity_phi", "unitarity_psi"]
    if store.phi is not None:
        cols += [f"phi_{j}_{k}" for k in range(1, K + 1) for j in range(1, store.J + 1)]
        cols += [f"psi_{t}_{k}" for k in range(1, K + 1) for t in range(1, store.T + 1)]
    return cols


def _write_csv(path: Path, header_line: str, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_line)
        w = csv.writer(fh, lineterminator="\n")
        if columns is not None:
            w.writerow(columns)
        w.writerows(rows)


def save_draw_store(store: DrawStore, directory, config: dict, config_hash: str,
                    seed: int) -> Path:
    """Persist ``store`` into ``directory`` (created if needed); returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    head = provenance_line(config_hash, seed)

    def draw_row(i):
        row = [str(int(store.iteration[i]))]
        for arr in (store.omega, store.omega_star, store.lam):
            row += [fmt_float(x) for x in arr[i]]
        row += [str(int(x)) for x in store.z[i]]
        row += [fmt_float(x) for x in store.pi[i]]
        row += [fmt_float(store.tau[i]), fmt_float(store.unitarity[i, 0]),
                fmt_float(store.unitarity[i, 1])]
        if store.phi is not None:
            row += [fmt_float(x) for x in store.phi[i].ravel(order="F")]
            row += [fmt_float(x) for x in store.psi[i].ravel(order="F")]
        return row

    _write_csv(directory / DRAWS_FILE, head, _draw_columns(store),
               (draw_row(i) for i in range(store.n_draws)))
    _write_csv(directory / THETA_FILE, head, None,
               ([fmt_float(x) for x in r] for r in store.theta_mean))
    diag_rows = (
        [str(i + 1), fmt_float(store.step_size[i]), str(int(store.n_leapfrog[i])),
         fmt_float(store.accept_stat[i]), str(int(store.diverged[i]))]
        for i in range(store.step_size.size)
    )
    _write_csv(directory / DIAGNOSTICS_FILE, head,
               ["iteration", "step_size", "n_leapfrog", "accept_stat", "diverged"], diag_rows)
    sidecar = {
        "format": STORE_FORMAT,
        "J": store.J, "T": store.T, "K": store.K,
        "prior": store.prior_label,
        "n_draws": store.n_draws,
        "warmup": store.warmup,
        "factors_stored": store.phi is not None,
        "config_hash": config_hash,
        "seed": seed,
        "config": config,
    }
    with open(directory / SIDECAR_FILE, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(directory / RUN_LOG_FILE, "w", encoding="utf-8") as fh:
        fh.write(head)
        fh.write(f"elapsed_seconds={store.elapsed:.6f}\n")
    return directory


def read_sidecar(directory) -> dict:
    path = Path(directory) / SIDECAR_FILE
    try:
        with open(path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read store metadata {path}: {exc}") from exc
    for key in ("J", "T", "K", "prior", "n_draws", "config_hash", "seed"):
        if key not in meta:
            raise DataError(f"{path}: missing key {key!r}")
    return meta


def _read_numeric_csv(path: Path, has_header: bool):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = rows.pop(0) if has_header and rows else None
    try:
        arr = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: corrupt value ({exc})") from None
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise DataError(f"{path}: ragged rows (truncated file?)")
    return header, arr


def load_draw_store(directory) -> tuple[DrawStore, dict]:
    """Read a store written by :func:`save_draw_store`; returns (store, sidecar)."""
    directory = Path(directory)
    meta = read_sidecar(directory)
    J, T, K, n = meta["J"], meta["T"], meta["K"], meta["n_draws"]
    header, arr = _read_numeric_csv(directory / DRAWS_FILE, True)
    dummy = DrawStore(J, T, K, "", np.zeros(0), *([None] * 8),
                      phi=np.zeros(0) if meta.get("factors_stored") else None)
    expected = _draw_columns(dummy)
    if header != expected:
        raise DataError(f"{directory / DRAWS_FILE}: unexpected columns")
    if arr.shape != (n, len(expected)):
        raise DataError(f"{directory / DRAWS_FILE}: expected {n} draws of {len(expected)} "
                        f"fields, found {arr.shape[0]} (truncated or corrupt store)")
    _, theta = _read_numeric_csv(directory / THETA_FILE, False)
    if theta.shape != (J, T):
        raise DataError(f"{directory / THETA_FILE}: expected a {J} x {T} matrix")
    _, diag = _read_numeric_csv(directory / DIAGNOSTICS_FILE, True)
    if diag.ndim != 2 or diag.shape[1] != 5:
        raise DataError(f"{directory / DIAGNOSTICS_FILE}: corrupt diagnostics")

    def block(i):
        return arr[:, 1 + i * K: 1 + (i + 1) * K]

    pos = 1 + 5 * K
    phi = psi = None
    if meta.get("factors_stored"):
        base = pos + 3
        phi = arr[:, base: base + J * K].reshape(n, K, J).transpose(0, 2, 1).copy()
        base += J * K
        psi = arr[:, base: base + T * K].reshape(n, K, T).transpose(0, 2, 1).copy()
    elapsed = 0.0
    log_path = directory / RUN_LOG_FILE
    if log_path.exists():
        for line in log_path.read_text(encoding="utf-8").splitlines():
            if line.startswith("elapsed_seconds="):
                elapsed = float(line.split("=", 1)[1])
    store = DrawStore(
        J=J, T=T, K=K, prior_label=meta["prior"],
        iteration=arr[:, 0].astype(int),
        omega=block(0).copy(), omega_star=block(1).copy(), lam=block(2).copy(),
        z=block(3).astype(int), pi=block(4).copy(),
        tau=arr[:, pos].copy(), unitarity=arr[:, pos + 1: pos + 3].copy(),
        theta_mean=theta, phi=phi, psi=psi,
        step_size=diag[:, 1].copy(), n_leapfrog=diag[:, 2].astype(int),
        accept_stat=diag[:, 3].copy(), diverged=diag[:, 4].astype(bool),
        warmup=int(meta.get("warmup", 0)), elapsed=elapsed,
    )
    return store, meta
