"""p-radius computations, Markov lifts, joint-spectral-radius brackets.

The p-radius of a matrix law is computed as rho(E[A^(kron p)])^(1/p). The
formula is licensed either by an even p or by orthant invariance of the
support; anything else yields a typed "unsupported" result rather than a
number, because the formula is simply not known to hold there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, DimensionCapError
from .linalg import check_entry_cap, kron_power, spectral_norm, spectrum
from .models import (
    AtomicDistribution,
    ConeFlags,
    MarkovJumpSystem,
    MatrixDistribution,
    compute_cone_flags,
    lift_distribution,
)

#: half-width of the band around 1 inside which verdicts are "marginal"
DECISION_MARGIN = 1e-9


class AssumptionPath(str, enum.Enum):
    """Which hypothesis licensed the spectral-radius formula."""

    EVEN_P = "even_p"
    ORTHANT_INVARIANT = "orthant_invariant"
    UNSUPPORTED = "unsupported"


class Verdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"
    UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class PRadiusResult:
    p: int
    value: float | None
    lifted_dim: int
    assumption_path: AssumptionPath

    def __post_init__(self):
        if self.assumption_path is AssumptionPath.UNSUPPORTED:
            if self.value is not None:
                raise ValueError("unsupported results carry no value")
        elif self.value is None or self.value < 0:
            raise ValueError("licensed results carry a nonnegative value")

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "value": self.value,
            "lifted_dim": self.lifted_dim,
            "assumption_path": self.assumption_path.value,
        }


@dataclass(frozen=True)
class StabilityReport:
    verdict: Verdict
    p_radius: PRadiusResult
    cone_flags: ConeFlags
    decision_margin: float = DECISION_MARGIN

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "p_radius": self.p_radius.to_dict(),
            "cone_flags": self.cone_flags.to_dict(),
            "decision_margin": self.decision_margin,
        }


@dataclass(frozen=True)
class JsrBounds:
    """Bracket on the joint spectral radius of a finite matrix set.

    lower: best rho(product)^(1/len) seen; upper: best max-norm bound
    min over lengths l of (max over products of length l of ||product||_2)^(1/l).
    Both are valid at any depth; they tighten monotonically as depth grows.
    """

    lower: float
    upper: float
    depth: int
    truncated: bool = False

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError("lower bound exceeds upper bound")

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "depth": self.depth,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class LimitSequence:
    entries: list[tuple[int, float]]
    jsr_reference: JsrBounds | None = None
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "entries": [[p, v] for p, v in self.entries],
            "jsr_reference": self.jsr_reference.to_dict() if self.jsr_reference else None,
            "truncated": self.truncated,
        }


def _assumption_path(dist: MatrixDistribution, p: int) -> AssumptionPath:
    if p % 2 == 0:
        return AssumptionPath.EVEN_P
    if dist.support_nonnegative():
        return AssumptionPath.ORTHANT_INVARIANT
    return AssumptionPath.UNSUPPORTED


def p_radius(dist: MatrixDistribution, p: int) -> PRadiusResult:
    """p-radius rho_p = rho(E[A^(kron p)])^(1/p), when licensed."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    path = _assumption_path(dist, p)
    lifted_dim = dist.dim**p
    if path is AssumptionPath.UNSUPPORTED:
        return PRadiusResult(p=p, value=None, lifted_dim=lifted_dim, assumption_path=path)
    rho = spectrum(dist.expected_kron_power(p)).spectral_radius
    return PRadiusResult(
        p=p, value=float(rho ** (1.0 / p)), lifted_dim=lifted_dim, assumption_path=path
    )


def _verdict(value: float | None, margin: float) -> Verdict:
    if value is None:
        return Verdict.UNSUPPORTED
    if value < 1.0 - margin:
        return Verdict.STABLE
    if value > 1.0 + margin:
        return Verdict.UNSTABLE
    return Verdict.MARGINAL


def check_mean_stability(
    dist: MatrixDistribution, p: int, decision_margin: float = DECISION_MARGIN
) -> StabilityReport:
    """Decide p-th mean stability: stable iff the p-radius is below 1.

    Values within ``decision_margin`` of 1 are reported marginal since
    floating point cannot certify a strict inequality at the boundary.
    """
    result = p_radius(dist, p)
    base = compute_cone_flags(dist, p_max=1)
    positive = dict(base.expectation_positive)
    if result.value is not None and p > 1:
        positive[p] = bool(np.all(dist.expected_kron_power(p) > 0))
    flags = ConeFlags(orthant_invariant=base.orthant_invariant, expectation_positive=positive)
    return StabilityReport(
        verdict=_verdict(result.value, decision_margin),
        p_radius=result,
        cone_flags=flags,
        decision_margin=decision_margin,
    )


# ---------------------------------------------------------------------------
# Markov jump systems
# ---------------------------------------------------------------------------


def markov_tp(system: MarkovJumpSystem, p: int) -> np.ndarray:
    """Lifted transition operator: (P.T kron I) @ blockdiag of mode powers.

    Block (j, i) equals P[i, j] * modes[i]^(kron p); its spectral radius to
    the power 1/p is the Markovian p-radius.
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    n, d = system.n_modes, system.dim
    dp = d**p
    check_entry_cap((n * dp) ** 2, "markov_tp")
    out = np.zeros((n * dp, n * dp))
    for i in range(n):
        block = kron_power(system.modes[i], p)
        for j in range(n):
            pij = system.transition[i, j]
            if pij != 0.0:
                out[j * dp : (j + 1) * dp, i * dp : (i + 1) * dp] = pij * block
    return out


def markov_tp_spectral_radius(system: MarkovJumpSystem, p: int) -> float:
    """rho(T_p)^(1/p) for any p. Experimental for p > 2: no stability verdict
    is attached outside p in {1, 2}."""
    rho = spectrum(markov_tp(system, p)).spectral_radius
    return float(rho ** (1.0 / p))


def markov_p_radius(system: MarkovJumpSystem, p: int) -> PRadiusResult:
    """Markovian p-radius for p in {1, 2}.

    p = 1 additionally requires every mode to be entrywise nonnegative; with
    a negative entry the computation is unsupported, not silently numeric.
    """
    if p not in (1, 2):
        raise ValueError(
            "stability-grade Markov radii are limited to p in {1, 2}; "
            "use markov_tp_spectral_radius for the experimental general p"
        )
    lifted_dim = system.n_modes * system.dim**p
    if p == 1 and not np.all(system.modes >= 0):
        return PRadiusResult(
            p=1, value=None, lifted_dim=lifted_dim, assumption_path=AssumptionPath.UNSUPPORTED
        )
    path = AssumptionPath.EVEN_P if p == 2 else AssumptionPath.ORTHANT_INVARIANT
    return PRadiusResult(
        p=p,
        value=markov_tp_spectral_radius(system, p),
        lifted_dim=lifted_dim,
        assumption_path=path,
    )


def markov_stability(
    system: MarkovJumpSystem, p: int, decision_margin: float = DECISION_MARGIN
) -> StabilityReport:
    """Stability verdict for a Markov jump system from its p-radius."""
    result = markov_p_radius(system, p)
    flags = ConeFlags(orthant_invariant=bool(np.all(system.modes >= 0)))
    return StabilityReport(
        verdict=_verdict(result.value, decision_margin),
        p_radius=result,
        cone_flags=flags,
        decision_margin=decision_margin,
    )


# ---------------------------------------------------------------------------
# Joint spectral radius brackets and the p -> infinity limit
# ---------------------------------------------------------------------------

JSR_PRODUCT_BUDGET = 1_000_000


def jsr_bounds(atoms, depth: int, budget: int = JSR_PRODUCT_BUDGET) -> JsrBounds:
    """Bracket the joint spectral radius by enumerating products up to
    ``depth``. If the enumeration would exceed ``budget`` products the result
    stops at the deepest completed length and is flagged truncated."""
    mats = np.asarray(atoms, dtype=float)
    if mats.ndim != 3 or mats.shape[0] == 0 or mats.shape[1] != mats.shape[2]:
        raise ValueError("need a non-empty stack of square matrices")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    m = mats.shape[0]
    lower = 0.0
    upper = np.inf
    produced = 0
    truncated = False
    level = mats
    completed = 0
    for length in range(1, depth + 1):
        if length > 1:
            if produced + level.shape[0] * m > budget:
                truncated = True
                break
            level = np.einsum("aij,bjk->abik", level, mats).reshape(-1, *mats.shape[1:])
        elif level.shape[0] > budget:
            truncated = True
            break
        produced += level.shape[0]
        eigs = np.linalg.eigvals(level)
        lower = max(lower, float(np.max(np.abs(eigs)) ** (1.0 / length)))
        norms = np.linalg.svd(level, compute_uv=False)[:, 0]
        upper = min(upper, float(np.max(norms) ** (1.0 / length)))
        completed = length
    if completed == 0:
        raise AssumptionError(f"product budget {budget} admits no depth-1 enumeration")
    return JsrBounds(lower=lower, upper=upper, depth=completed, truncated=truncated)


def limit_sequence(
    dist: MatrixDistribution,
    p_max: int,
    even_only: bool = False,
    jsr_depth: int = 8,
) -> LimitSequence:
    """p-radius sequence for p = 1..p_max (or even p only), which climbs
    toward the joint spectral radius of the support.

    even_only works for any law since even p needs no cone hypothesis; the
    full sequence requires orthant invariance for its odd entries. A
    dimension cap truncates the sequence and flags it.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    ps = range(2, p_max + 1, 2) if even_only else range(1, p_max + 1)
    entries: list[tuple[int, float]] = []
    truncated = False
    for p in ps:
        try:
            result = p_radius(dist, p)
        except DimensionCapError:
            truncated = True
            break
        if result.value is None:
            raise AssumptionError(
                f"p = {p} is unsupported for this law (odd exponent without "
                "orthant invariance); rerun with even_only"
            )
        entries.append((p, result.value))
    reference = None
    if isinstance(dist, AtomicDistribution):
        reference = jsr_bounds(dist.atoms, depth=jsr_depth)
    return LimitSequence(entries=entries, jsr_reference=reference, truncated=truncated)


def lifting_identity_check(dist: MatrixDistribution, p: int, k: int) -> float:
    """Residual |rho_p(mu) - rho_{p/k}(lifted mu)^(1/k)| of the exact lifting
    identity; both sides are computed by independent routes."""
    if k < 1 or p % k:
        raise ValueError("k must be a positive divisor of p")
    left = p_radius(dist, p)
    lifted = lift_distribution(dist, k)
    right = p_radius(lifted, p // k)
    if left.value is None or right.value is None:
        raise AssumptionError("both sides of the lifting identity must be licensed")
    return abs(left.value - right.value ** (1.0 / k))
