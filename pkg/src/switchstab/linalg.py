"""Dense matrix arithmetic: Kronecker calculus, spectra, Perron vectors.

All operations are pure functions on ndarrays and are safe to call
concurrently. Sizes of Kronecker lifts are guarded by an entry cap
(default 10^7 entries, overridable via SWITCHSTAB_MAX_LIFT_ENTRIES).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, DimensionCapError, SolverFailureError

DEFAULT_LIFT_ENTRY_CAP = 10_000_000

#: relative tolerance for eigenvalue computations on well-conditioned inputs
EIG_RTOL = 1e-9


def lift_entry_cap() -> int:
    """Current cap on the entry count of any lifted matrix."""
    raw = os.environ.get("SWITCHSTAB_MAX_LIFT_ENTRIES")
    if raw is None:
        return DEFAULT_LIFT_ENTRY_CAP
    cap = int(raw)
    if cap <= 0:
        raise ValueError("SWITCHSTAB_MAX_LIFT_ENTRIES must be positive")
    return cap


def check_entry_cap(n_entries: int, context: str = "") -> None:
    cap = lift_entry_cap()
    if n_entries > cap:
        raise DimensionCapError(n_entries, cap, context)


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def kron(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Kronecker product with an entry-cap guard.

    Block (i, j) of the result equals m[i, j] * n.
    """
    m = check_finite(m, "first factor")
    n = check_finite(n, "second factor")
    entries = m.size * n.size
    check_entry_cap(entries, "kron")
    return np.kron(m, n)


def kron_power(m: np.ndarray, p: int) -> np.ndarray:
    """p-fold Kronecker power of a matrix or vector; kron_power(m, 1) is m."""
    if p < 1:
        raise ValueError("Kronecker power requires p >= 1")
    m = check_finite(m, "base")
    check_entry_cap(m.size**p, "kron_power")
    out = m
    for _ in range(p - 1):
        out = np.kron(out, m)
    return out


def vec_of(columns) -> np.ndarray:
    """Stack vectors into one long vector, in list order."""
    cols = [check_finite(np.atleast_1d(c), "column") for c in columns]
    if not cols:
        raise ValueError("vec_of needs at least one vector")
    d = cols[0].shape[0]
    for i, c in enumerate(cols):
        if c.shape != (d,):
            raise ValueError(f"column {i} has shape {c.shape}, expected ({d},)")
    return np.concatenate(cols)


def unvec(v: np.ndarray, parts: int) -> list[np.ndarray]:
    """Inverse of :func:`vec_of`: split into ``parts`` equal-length vectors."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size % parts:
        raise ValueError(f"cannot split length-{v.size} vector into {parts} parts")
    return list(v.reshape(parts, -1))


@dataclass(frozen=True)
class Spectrum:
    """Full eigenvalue list (with multiplicity) and its maximum modulus."""

    eigenvalues: np.ndarray
    spectral_radius: float


def spectrum(m: np.ndarray) -> Spectrum:
    """All eigenvalues of a square matrix, via the dense LAPACK QR solver."""
    m = check_finite(m, "matrix")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    try:
        eig = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise SolverFailureError(f"eigenvalue iteration did not converge: {exc}") from exc
    return Spectrum(eigenvalues=eig, spectral_radius=float(np.max(np.abs(eig))))


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(m, dtype=float), 2))


def dominant_left_eigenvector(
    m: np.ndarray, rtol: float = EIG_RTOL, max_iter: int = 100_000
) -> tuple[float, np.ndarray]:
    """Dominant eigenvalue and left eigenvector of an entrywise-positive matrix.

    Power iteration on m.T. The returned f is entrywise positive with maximum
    entry 1 and satisfies ``norm(f @ m - lam * f, inf) <= rtol * lam``.

    Raises AssumptionError if m is not entrywise positive (the positivity is
    what guarantees a simple dominant eigenvalue with a positive eigenvector),
    SolverFailureError if the residual target is not met within the budget.
    """
    m = check_finite(m, "matrix")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(m > 0):
        raise AssumptionError(
            "dominant_left_eigenvector requires an entrywise-positive matrix"
        )
    f = np.ones(m.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        g = f @ m
        lam = float(g.max())  # g > 0 and max(f) == 1, so this estimates rho
        f_next = g / lam
        if float(np.max(np.abs(f_next @ m - lam * f_next))) <= rtol * lam:
            return lam, f_next
        f = f_next
    raise SolverFailureError(
        f"power iteration stagnated after {max_iter} iterations", partial=(lam, f)
    )


def is_positive_semidefinite(s: np.ndarray, tol: float) -> bool:
    """True iff the symmetric part of s has minimum eigenvalue >= -tol.

    s must be symmetric to within tol; larger asymmetry is a usage error.
    """
    s = check_finite(s, "matrix")
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {s.shape}")
    if float(np.max(np.abs(s - s.T))) > tol:
        raise AssumptionError("matrix is asymmetric beyond the stated tolerance")
    sym = 0.5 * (s + s.T)
    return float(np.linalg.eigvalsh(sym).min()) >= -tol
