"""Three-component factorization Y = Phi diag(omega) Psi^T + U and its helpers.

The singular values are sampled through their increments
``omega_star = C omega`` where ``C`` is the upper bidiagonal difference
matrix; ``omega`` is recovered with a suffix sum.  Both maps are applied in
O(K) without materializing ``C``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS_UNITARY = 1e-2
EPS_ORDER = 1e-6


def max_rank(J: int, T: int) -> int:
    """Largest K with J*K + K + T*K <= J*T."""
    if J < 1 or T < 1:
        raise ValueError(f"J and T must be positive, got J={J}, T={T}")
    return (J * T) // (J + T + 1)


def to_increments(omega):
    """Return ``C @ omega``: successive differences, last element kept."""
    omega = np.asarray(omega, dtype=float)
    out = np.empty_like(omega)
    out[:-1] = omega[:-1] - omega[1:]
    out[-1:] = omega[-1:]
    return out


def from_increments(omega_star):
    """Return ``C^{-1} @ omega_star``, i.e. the suffix sums of ``omega_star``."""
    omega_star = np.asarray(omega_star, dtype=float)
    return np.cumsum(omega_star[::-1])[::-1]


def prefix_sum(x):
    """Return ``C^{-T} @ x``; maps an omega-gradient to omega_star coordinates."""
    return np.cumsum(np.asarray(x, dtype=float))


def difference_matrix(K: int) -> np.ndarray:
    """Dense ``C``. Only for diagnostics and tests."""
    return np.eye(K) - np.eye(K, k=1)


@dataclass(frozen=True)
class ObservedMatrix:
    """A J x T data matrix together with its observation mask (True = observed)."""

    values: np.ndarray
    mask: np.ndarray
    row_labels: tuple | None = None
    col_labels: tuple | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ValueError(
                f"values {values.shape} and mask {mask.shape} must be equal 2-d shapes"
            )
        if not mask.any():
            raise ValueError("at least one entry must be observed (all cells are missing)")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed entries must be finite")
        for name, labels, n in (("row", self.row_labels, values.shape[0]),
                                ("column", self.col_labels, values.shape[1])):
            if labels is not None and len(labels) != n:
                raise ValueError(f"{len(labels)} {name} labels for {n} {name}s")
        for attr in ("row_labels", "col_labels"):
            if getattr(self, attr) is not None:
                object.__setattr__(self, attr, tuple(str(x) for x in getattr(self, attr)))
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def complete(cls, values) -> "ObservedMatrix":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def J(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def n_missing(self) -> int:
        return int((~self.mask).sum())

    def filled(self, fill=0.0) -> np.ndarray:
        """Copy of the values with missing cells set to ``fill`` (scalar or array)."""
        out = np.array(self.values, dtype=float)
        miss = ~self.mask
        out[miss] = fill[miss] if np.ndim(fill) else fill
        return out


@dataclass(frozen=True)
class Factorization:
    phi: np.ndarray
    omega: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        omega = np.asarray(self.omega, dtype=float).ravel()
        K = omega.size
        if phi.ndim != 2 or psi.ndim != 2 or phi.shape[1] != K or psi.shape[1] != K:
            raise ValueError(
                f"shape mismatch: phi {phi.shape}, omega ({K},), psi {psi.shape}"
            )
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "omega", omega)

    @property
    def K(self) -> int:
        return self.omega.size

    @property
    def omega_star(self) -> np.ndarray:
        return to_increments(self.omega)

    def theta(self) -> np.ndarray:
        return compose_theta(self)

    def unitarity_violation(self) -> tuple[float, float]:
        """Frobenius distances ``||Phi^T Phi - I||`` and ``||Psi^T Psi - I||``."""
        eye = np.eye(self.K)
        return (
            float(np.linalg.norm(self.phi.T @ self.phi - eye)),
            float(np.linalg.norm(self.psi.T @ self.psi - eye)),
        )

    def validate(self, eps_unitary=EPS_UNITARY, eps_order=EPS_ORDER) -> None:
        """Post-hoc check of the identification constraints; raises ValueError."""
        J, T = self.phi.shape[0], self.psi.shape[0]
        if self.K > max_rank(J, T):
            raise ValueError(f"K={self.K} exceeds max_rank({J}, {T})={max_rank(J, T)}")
        d_phi, d_psi = self.unitarity_violation()
        if d_phi > eps_unitary or d_psi > eps_unitary:
            raise ValueError(
                f"factors are not unitary within {eps_unitary}: {d_phi:.3g}, {d_psi:.3g}"
            )
        if np.any(self.omega_star < -eps_order):
            raise ValueError("omega is not descending and nonnegative")


def compose_theta(f: Factorization) -> np.ndarray:
    """Return ``Phi diag(omega) Psi^T``."""
    return (f.phi * f.omega) @ f.psi.T


def variance_decomposition(omega, tau: float, n_cells: int = 1) -> np.ndarray:
    """Shares of the data variance attributed to each omega_k^2 and to 1/tau.

    ``n_cells`` rescales the squared singular values to a per-entry variance.
    With unit-norm factor columns, ``omega_k phi_jk psi_tk`` has mean square
    ``omega_k**2 / (J*T)``, so pass ``n_cells=J*T`` to compare against
    per-entry noise variance; the default of 1 uses ``omega_k**2`` as is.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    parts = np.append(np.asarray(omega, dtype=float) ** 2 / n_cells, 1.0 / tau)
    return parts / parts.sum()


def signal_to_noise(omega, tau: float, n_cells: int = 1) -> float:
    return float(np.sum(np.asarray(omega, dtype=float) ** 2) / n_cells * tau)
