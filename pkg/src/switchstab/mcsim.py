"""Monte Carlo simulation with reproducible, worker-count-invariant streams.

Paths are processed in fixed-size chunks; chunk c draws from a Philox
counter-based stream spawned as SeedSequence(seed, spawn_key=(c,)). Chunking
is independent of the thread count and all reductions run serially over the
per-path arrays in path order, so output is bit-identical for any
``threads`` setting.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError
from .linalg import kron_power, vec_of
from .lyapunov import LyapunovCertificate, _evaluate_rows
from .models import (
    AtomicDistribution,
    KroneckerLiftedDistribution,
    MarkovJumpSystem,
    MatrixDistribution,
    UniformEntriesDistribution,
)
from .radius import markov_tp

#: paths per RNG chunk; fixed so results do not depend on the worker count
CHUNK = 1024


@dataclass(frozen=True)
class SimulationPlan:
    paths: int
    horizon: int
    seed: int
    initial_state: np.ndarray
    initial_mode: int | None = None  # 1-based, Markov runs only
    moment_exponent: int = 1

    def __post_init__(self):
        if self.paths < 1 or self.horizon < 1:
            raise ValueError("need at least one path and one step")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.moment_exponent < 1:
            raise ValueError("moment exponent must be >= 1")
        x0 = np.asarray(self.initial_state, dtype=float)
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise ValueError("initial state must be a finite vector")
        object.__setattr__(self, "initial_state", x0)


@dataclass(frozen=True)
class MomentSeries:
    """Per-step sample means with standard errors.

    Paths that overflowed are excluded from step k onward and counted in
    ``truncated_paths``; ``n_valid[k]`` is the sample size actually used.
    """

    means: np.ndarray
    stderrs: np.ndarray
    norm_label: str
    n_valid: np.ndarray
    truncated_paths: int = 0

    def __len__(self) -> int:
        return self.means.shape[0]


@dataclass(frozen=True)
class ConditionalMoments:
    """q[k, i] estimates E[x(k) restricted to the event mode(k) = i+1]."""

    q: np.ndarray  # (horizon+1, N, d)
    stderr: np.ndarray  # same shape


@dataclass(frozen=True)
class SimulationResult:
    paths: np.ndarray  # (n_paths, horizon+1, d)
    euclidean: MomentSeries
    certificate: MomentSeries | None = None


@dataclass(frozen=True)
class MarkovSimulationResult:
    paths: np.ndarray
    modes: np.ndarray  # (n_paths, horizon+1), 0-based
    euclidean: MomentSeries
    conditional: ConditionalMoments


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_matrix(
    dist: MatrixDistribution, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw ``size`` matrices (or one, if size is None) from the law,
    advancing ``rng`` deterministically."""
    n = 1 if size is None else int(size)
    if isinstance(dist, AtomicDistribution):
        cum = np.cumsum(dist.probabilities)
        idx = np.minimum(
            (rng.random(n)[:, None] >= cum[None, :]).sum(axis=1), len(cum) - 1
        )
        out = dist.atoms[idx]
    elif isinstance(dist, UniformEntriesDistribution):
        width = dist.upper - dist.lower
        out = dist.lower + rng.random((n, dist.dim, dist.dim)) * width
    elif isinstance(dist, KroneckerLiftedDistribution):
        base = sample_matrix(dist.base, rng, size=n)
        out = np.stack([kron_power(m, dist.power) for m in base])
    else:
        raise TypeError(f"cannot sample from {type(dist).__name__}")
    return out[0] if size is None else out


def _moment_series(values: np.ndarray, label: str) -> MomentSeries:
    """Reduce per-path values (n_paths, horizon+1) in fixed path order."""
    finite = np.isfinite(values)
    # a path is excluded from its first non-finite step onward
    valid = np.logical_and.accumulate(finite, axis=1)
    n_valid = valid.sum(axis=0)
    masked = np.where(valid, values, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = masked.sum(axis=0) / np.maximum(n_valid, 1)
        centered = np.where(valid, values - means[None, :], 0.0)
        var = (centered**2).sum(axis=0) / np.maximum(n_valid - 1, 1)
        stderrs = np.sqrt(var / np.maximum(n_valid, 1))
    means = np.where(n_valid > 0, means, np.nan)
    stderrs = np.where(n_valid > 1, stderrs, 0.0)
    truncated = int(values.shape[0] - valid[:, -1].sum())
    return MomentSeries(
        means=means,
        stderrs=stderrs,
        norm_label=label,
        n_valid=n_valid.astype(int),
        truncated_paths=truncated,
    )


def _run_chunks(n_paths: int, threads: int, worker) -> None:
    chunks = [(c, slice(c * CHUNK, min((c + 1) * CHUNK, n_paths))) for c in range((n_paths + CHUNK - 1) // CHUNK)]
    if threads <= 1:
        for c, sl in chunks:
            worker(c, sl)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda args: worker(*args), chunks))


def simulate_iid(
    dist: MatrixDistribution,
    plan: SimulationPlan,
    certificate: LyapunovCertificate | None = None,
    threads: int = 1,
) -> SimulationResult:
    """Simulate x(k+1) = A_k x(k) with A_k drawn independently from the law.

    Returns the raw paths, the sample moments of the Euclidean norm raised
    to the plan's exponent, and optionally the certificate-value series.
    """
    d = dist.dim
    if plan.initial_state.shape != (d,):
        raise ValueError(f"initial state must have dimension {d}")
    n, h, p = plan.paths, plan.horizon, plan.moment_exponent
    states = np.empty((n, h + 1, d))

    def worker(chunk_idx: int, sl: slice) -> None:
        rng = _chunk_rng(plan.seed, chunk_idx)
        m = sl.stop - sl.start
        x = np.broadcast_to(plan.initial_state, (m, d)).copy()
        states[sl, 0] = x
        for k in range(1, h + 1):
            a = sample_matrix(dist, rng, size=m)
            x = np.einsum("nij,nj->ni", a, x)
            states[sl, k] = x

    _run_chunks(n, threads, worker)

    with np.errstate(over="ignore", invalid="ignore"):
        norms = np.linalg.norm(states, axis=2) ** p
    euclid = _moment_series(norms, f"euclidean^{p}")
    cert_series = None
    if certificate is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            vals = _evaluate_rows(certificate, states.reshape(-1, d)).reshape(n, h + 1)
        cert_series = _moment_series(vals, "certificate")
    return SimulationResult(paths=states, euclidean=euclid, certificate=cert_series)


def simulate_markov(
    system: MarkovJumpSystem, plan: SimulationPlan, threads: int = 1
) -> MarkovSimulationResult:
    """Simulate x(k+1) = M_(mode k) x(k) with the mode chain driven by the
    transition matrix from the plan's initial mode."""
    d, n_modes = system.dim, system.n_modes
    if plan.initial_state.shape != (d,):
        raise ValueError(f"initial state must have dimension {d}")
    sigma0 = plan.initial_mode if plan.initial_mode is not None else system.initial_mode
    if sigma0 is None:
        raise AssumptionError("Markov simulation requires an initial mode")
    if not 1 <= sigma0 <= n_modes:
        raise ValueError(f"initial mode must lie in 1..{n_modes}")
    n, h, p = plan.paths, plan.horizon, plan.moment_exponent
    states = np.empty((n, h + 1, d))
    modes = np.empty((n, h + 1), dtype=np.int64)
    cum_rows = np.cumsum(system.transition, axis=1)

    def worker(chunk_idx: int, sl: slice) -> None:
        rng = _chunk_rng(plan.seed, chunk_idx)
        m = sl.stop - sl.start
        x = np.broadcast_to(plan.initial_state, (m, d)).copy()
        sigma = np.full(m, sigma0 - 1, dtype=np.int64)
        states[sl, 0] = x
        modes[sl, 0] = sigma
        for k in range(1, h + 1):
            x = np.einsum("nij,nj->ni", system.modes[sigma], x)
            u = rng.random(m)
            sigma = np.minimum(
                (u[:, None] >= cum_rows[sigma]).sum(axis=1), n_modes - 1
            )
            states[sl, k] = x
            modes[sl, k] = sigma

    _run_chunks(n, threads, worker)

    with np.errstate(over="ignore", invalid="ignore"):
        norms = np.linalg.norm(states, axis=2) ** p
    euclid = _moment_series(norms, f"euclidean^{p}")

    # conditional first moments: mean over all paths of x(k) * 1{mode k = i}
    q = np.zeros((h + 1, n_modes, d))
    stderr = np.zeros((h + 1, n_modes, d))
    for i in range(n_modes):
        indicator = (modes == i)[:, :, None]
        vals = states * indicator
        q[:, i, :] = vals.mean(axis=0)
        stderr[:, i, :] = vals.std(axis=0, ddof=1) / np.sqrt(n)
    return MarkovSimulationResult(
        paths=states,
        modes=modes,
        euclidean=euclid,
        conditional=ConditionalMoments(q=q, stderr=stderr),
    )


# ---------------------------------------------------------------------------
# Conditional-moment recursion
# ---------------------------------------------------------------------------


def propagate_conditional_moments(
    system: MarkovJumpSystem, x0: np.ndarray, sigma0: int, horizon: int
) -> np.ndarray:
    """Exact conditional first moments Q_i(k) = E[x(k) 1{mode k = i}].

    Q_i(0) is x0 for the initial mode and zero elsewhere, and
    Q_j(k+1) = sum_i P[i, j] M_i Q_i(k).
    """
    x0 = np.asarray(x0, dtype=float)
    n_modes, d = system.n_modes, system.dim
    if not 1 <= sigma0 <= n_modes:
        raise ValueError(f"initial mode must lie in 1..{n_modes}")
    q = np.zeros((horizon + 1, n_modes, d))
    q[0, sigma0 - 1] = x0
    for k in range(horizon):
        pushed = np.einsum("iab,ib->ia", system.modes, q[k])
        q[k + 1] = np.einsum("ij,ia->ja", system.transition, pushed)
    return q


@dataclass(frozen=True)
class QRecursionReport:
    max_residual: float  # analytic vec identity, max over steps
    mc_max_sigma: float  # worst |MC - analytic| in standard errors
    mc_agrees: bool

    def to_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "mc_max_sigma": self.mc_max_sigma,
            "mc_agrees": self.mc_agrees,
        }


def check_q_recursion(system: MarkovJumpSystem, plan: SimulationPlan) -> QRecursionReport:
    """Verify that stacked conditional moments evolve by the lifted operator.

    The analytic residual max_k ||vec Q(k+1) - T_1 vec Q(k)|| is an exact
    algebraic identity and should sit at rounding level. The Monte Carlo
    cross-check compares simulated conditional moments against the analytic
    ones within four standard errors.
    """
    sigma0 = plan.initial_mode if plan.initial_mode is not None else system.initial_mode
    if sigma0 is None:
        raise AssumptionError("the conditional-moment check requires an initial mode")
    q = propagate_conditional_moments(system, plan.initial_state, sigma0, plan.horizon)
    t1 = markov_tp(system, 1)
    residual = 0.0
    for k in range(plan.horizon):
        lhs = vec_of(list(q[k + 1]))
        rhs = t1 @ vec_of(list(q[k]))
        residual = max(residual, float(np.max(np.abs(lhs - rhs))))

    sim = simulate_markov(system, plan)
    diff = np.abs(sim.conditional.q - q)
    # deterministic components (stderr 0) must agree to rounding noise
    scale = np.maximum(np.abs(q), 1.0)
    sigma = diff / np.maximum(sim.conditional.stderr, 1e-12 * scale)
    max_sigma = float(sigma.max())
    return QRecursionReport(
        max_residual=residual, mc_max_sigma=max_sigma, mc_agrees=bool(max_sigma <= 4.0)
    )


# ---------------------------------------------------------------------------
# Decay-rate readout and CSV emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayEstimate:
    rate: float
    rate_stderr: float
    slope: float
    slope_stderr: float

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "rate_stderr": self.rate_stderr,
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
        }


def estimate_decay_rate(series: MomentSeries, tail_only: bool = True) -> DecayEstimate:
    """Per-step decay rate from ordinary least squares on the log means.

    Uses the second half of the horizon by default, where the dominant mode
    has settled. The rate is exp(slope) with a delta-method standard error.
    """
    means = series.means
    ks = np.arange(means.shape[0])
    start = means.shape[0] // 2 if tail_only else 0
    ks, ys = ks[start:], means[start:]
    keep = np.isfinite(ys) & (ys > 0)
    ks, ys = ks[keep], np.log(ys[keep])
    if ks.size < 3:
        raise ValueError("not enough positive entries for a decay fit")
    design = np.stack([ks, np.ones_like(ks)], axis=1).astype(float)
    coef, res, *_ = np.linalg.lstsq(design, ys, rcond=None)
    slope = float(coef[0])
    dof = ks.size - 2
    sse = float(res[0]) if res.size else float(np.sum((ys - design @ coef) ** 2))
    slope_var = sse / dof / float(np.sum((ks - ks.mean()) ** 2)) if dof > 0 else 0.0
    slope_se = float(np.sqrt(slope_var))
    rate = float(np.exp(slope))
    return DecayEstimate(
        rate=rate, rate_stderr=rate * slope_se, slope=slope, slope_stderr=slope_se
    )


def write_moment_csv(path, series: MomentSeries) -> None:
    """One row per step: k, mean, stderr. Full-precision decimal notation."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mean", "stderr"])
        for k in range(len(series)):
            writer.writerow([k, repr(float(series.means[k])), repr(float(series.stderrs[k]))])
