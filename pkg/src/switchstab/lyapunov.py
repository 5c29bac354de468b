"""Homogeneous Lyapunov certificates: synthesis, evaluation, validation.

Three certificate shapes cover the stable cases:

* a weighted-l1 cone norm V(x) = sum_i f_i |x_i| with f > 0, for first-mean
  stable laws whose support preserves the positive orthant (degree 1);
* a quadratic form V(x) = x.T H x with H positive definite, for mean-square
  stable laws (degree 2);
* a Kronecker lift W(x) = V_base(x^(kron q)) for higher even degrees and for
  odd degrees on the orthant.

Every certificate carries a decay factor gamma < 1 with
E[V(A x)] <= gamma * V(x) for all x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, DimensionCapError, InstabilityError, SolverFailureError
from .linalg import dominant_left_eigenvector, kron_power
from .models import AtomicDistribution, MatrixDistribution, lift_distribution
from .radius import DECISION_MARGIN, p_radius

#: fixed seed for the default validation sample plan
DEFAULT_VALIDATION_SEED = 1729

#: relative step tolerance for the quadratic fixed-point iteration
FIXED_POINT_RTOL = 1e-10


@dataclass(frozen=True)
class ConeNormCertificate:
    """V(x) = f . |x|: linear on the positive orthant, absolute elsewhere."""

    f: np.ndarray
    gamma: float

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 1 or not np.all(f > 0):
            raise ValueError("cone-norm weights must be an entrywise-positive vector")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("decay factor must lie in [0, 1)")
        object.__setattr__(self, "f", f)

    @property
    def degree(self) -> int:
        return 1

    @property
    def dim(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class QuadraticCertificate:
    """V(x) = x.T H x with H symmetric positive definite."""

    h: np.ndarray
    gamma: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("H must be square")
        if float(np.max(np.abs(h - h.T))) > 1e-9 * max(1.0, float(np.max(np.abs(h)))):
            raise ValueError("H must be symmetric")
        if float(np.linalg.eigvalsh(0.5 * (h + h.T)).min()) <= 0:
            raise ValueError("H must be positive definite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("decay factor must lie in [0, 1)")
        object.__setattr__(self, "h", h)

    @property
    def degree(self) -> int:
        return 2

    @property
    def dim(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class LiftedCertificate:
    """W(x) = base(x^(kron lift_power)); homogeneous of the product degree."""

    base: ConeNormCertificate | QuadraticCertificate
    lift_power: int

    def __post_init__(self):
        if self.lift_power < 2:
            raise ValueError("a lift power below 2 is just the base certificate")

    @property
    def gamma(self) -> float:
        return self.base.gamma

    @property
    def degree(self) -> int:
        return self.base.degree * self.lift_power


LyapunovCertificate = ConeNormCertificate | QuadraticCertificate | LiftedCertificate


def evaluate(cert: LyapunovCertificate, x: np.ndarray) -> float:
    """Value of the certificate function at x."""
    x = np.asarray(x, dtype=float)
    if isinstance(cert, ConeNormCertificate):
        if x.shape != (cert.dim,):
            raise ValueError(f"expected a vector of length {cert.dim}")
        return float(cert.f @ np.abs(x))
    if isinstance(cert, QuadraticCertificate):
        if x.shape != (cert.dim,):
            raise ValueError(f"expected a vector of length {cert.dim}")
        return float(x @ cert.h @ x)
    return evaluate(cert.base, kron_power(x, cert.lift_power))


def _evaluate_rows(cert: LyapunovCertificate, rows: np.ndarray) -> np.ndarray:
    """Vectorized evaluate over a stack of row vectors."""
    if isinstance(cert, ConeNormCertificate):
        return np.abs(rows) @ cert.f
    if isinstance(cert, QuadraticCertificate):
        return np.einsum("ni,ij,nj->n", rows, cert.h, rows)
    lifted = rows
    for _ in range(cert.lift_power - 1):
        lifted = np.einsum("ni,nj->nij", lifted, rows).reshape(rows.shape[0], -1)
    return _evaluate_rows(cert.base, lifted)


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def synthesize_cone_norm(
    dist: MatrixDistribution, decision_margin: float = DECISION_MARGIN
) -> ConeNormCertificate:
    """Weighted-l1 certificate for a first-mean stable orthant-invariant law.

    The weight vector is the dominant left eigenvector of E[A]: on the
    orthant the norm of E[A] induced by it equals rho(E[A]), which becomes
    the decay factor.
    """
    if not dist.support_nonnegative():
        raise AssumptionError("cone-norm synthesis requires an orthant-invariant support")
    mean = dist.expected_matrix()
    if not np.all(mean > 0):
        raise AssumptionError("cone-norm synthesis requires an entrywise-positive mean")
    # tighter than the solver's own contract so the decay identity
    # f @ (E[A] x) = gamma * (f @ x) holds to 1e-9 relative on the orthant
    rho, f = dominant_left_eigenvector(mean, rtol=1e-12)
    if rho >= 1.0 - decision_margin:
        raise InstabilityError(
            f"first-mean radius {rho:.6g} is not below 1; no certificate exists"
        )
    return ConeNormCertificate(f=f, gamma=rho)


def _fixed_point_h(
    dist: MatrixDistribution, r2: float | None, max_iter: int = 100_000
) -> np.ndarray:
    """Solve H = I + E[A.T H A] by iteration from H = I.

    The iteration map is linear with spectral radius r2^2, so it converges
    exactly when the mean-square radius r2 is below 1. When r2 is unknown
    (lift beyond the entry cap), divergence is caught by a growth guard.
    """
    d = dist.dim
    identity = np.eye(d)
    h = identity.copy()
    lh = dist.expected_sandwich(h)
    growth_guard = None if r2 is not None else 1e14
    for _ in range(max_iter):
        h_next = identity + lh
        h_next = 0.5 * (h_next + h_next.T)
        lh = dist.expected_sandwich(h_next)
        scale = float(np.max(np.abs(h_next)))
        step_ok = float(np.max(np.abs(h_next - h))) <= FIXED_POINT_RTOL * scale
        residual_ok = (
            float(np.max(np.abs(lh - (h_next - identity)))) <= FIXED_POINT_RTOL * scale
        )
        if step_ok and residual_ok:
            return h_next
        if growth_guard is not None and scale > growth_guard:
            raise InstabilityError(
                "fixed-point iterates are diverging; the law is not mean-square stable"
            )
        h = h_next
    raise SolverFailureError(
        f"quadratic fixed point not reached within {max_iter} iterations", partial=h
    )


def synthesize_quadratic(
    dist: MatrixDistribution, decision_margin: float = DECISION_MARGIN
) -> QuadraticCertificate:
    """Quadratic certificate for a mean-square stable law.

    H solves H = I + E[A.T H A], so E[A.T H A] = H - I exactly and
    gamma = 1 - 1/lambda_max(H) certifies E[(Ax).T H (Ax)] <= gamma x.T H x.
    """
    try:
        r2 = p_radius(dist, 2).value
    except DimensionCapError:
        r2 = None
    if r2 is not None and r2 >= 1.0 - decision_margin:
        raise InstabilityError(
            f"mean-square radius {r2:.6g} is not below 1; no quadratic certificate exists"
        )
    h = _fixed_point_h(dist, r2)
    lam_max = float(np.linalg.eigvalsh(h).max())
    return QuadraticCertificate(h=h, gamma=1.0 - 1.0 / lam_max)


def synthesize_degree_p(
    dist: MatrixDistribution, p: int, decision_margin: float = DECISION_MARGIN
) -> LyapunovCertificate:
    """Homogeneous certificate of degree p.

    Even p: a quadratic certificate for the (p/2)-fold Kronecker lift of the
    law, composed with x -> x^(kron p/2). Odd p: a cone-norm certificate on
    the p-fold lift, requiring an orthant-invariant support with entrywise
    positive E[A^(kron p)].
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    if p == 1:
        return synthesize_cone_norm(dist, decision_margin)
    if p == 2:
        return synthesize_quadratic(dist, decision_margin)
    if p % 2 == 0:
        q = p // 2
        base = synthesize_quadratic(lift_distribution(dist, q), decision_margin)
        return LiftedCertificate(base=base, lift_power=q)
    if not dist.support_nonnegative():
        raise AssumptionError(
            f"odd degree {p} requires an orthant-invariant support"
        )
    lifted_mean = dist.expected_kron_power(p)
    if not np.all(lifted_mean > 0):
        raise AssumptionError(
            f"odd degree {p} requires an entrywise-positive lifted mean E[A^(kron {p})]"
        )
    rho, f = dominant_left_eigenvector(lifted_mean, rtol=1e-12)
    if rho >= 1.0 - decision_margin:
        raise InstabilityError(
            f"degree-{p} radius {rho ** (1.0 / p):.6g} is not below 1; no certificate exists"
        )
    return LiftedCertificate(base=ConeNormCertificate(f=f, gamma=rho), lift_power=p)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    mode: str
    n_vectors: int
    worst_margin: float  # E[V(Ax)] / (gamma V(x)) at the worst test vector
    worst_x: np.ndarray

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mode": self.mode,
            "n_vectors": self.n_vectors,
            "worst_margin": self.worst_margin,
            "worst_x": self.worst_x.tolist(),
        }


def default_test_vectors(dim: int, count: int = 1000, seed: int = DEFAULT_VALIDATION_SEED):
    """``count`` uniform points on the unit sphere plus the standard basis."""
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((count, dim))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return np.vstack([pts, np.eye(dim)])


def validate_certificate(
    cert: LyapunovCertificate,
    dist: MatrixDistribution,
    xs: np.ndarray | None = None,
    mode: str = "exact",
    n_samples: int = 10_000,
    seed: int = DEFAULT_VALIDATION_SEED,
) -> ValidationReport:
    """Check E[V(A x)] <= gamma V(x) over a panel of test vectors.

    mode "exact" evaluates the expectation atom by atom (finite laws only);
    mode "mc" estimates it from n_samples draws and allows a four-standard-
    error band on top of the decay bound.
    """
    from .mcsim import sample_matrix  # sampling lives with the simulators

    dim = dist.dim
    if xs is None:
        xs = default_test_vectors(dim, seed=seed)
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != dim:
        raise ValueError(f"test vectors must have shape (n, {dim})")
    evaluate(cert, np.zeros(dim))  # fails fast on a dimension mismatch
    gamma = cert.gamma

    if mode == "exact":
        if not isinstance(dist, AtomicDistribution):
            raise AssumptionError("exact validation needs a finite atomic law")
        vx = _evaluate_rows(cert, xs)
        expected = np.zeros(xs.shape[0])
        for prob, m in zip(dist.probabilities, dist.atoms):
            expected += prob * _evaluate_rows(cert, xs @ m.T)
        bound = gamma * vx * (1.0 + 1e-9)
        slack = bound + 1e-15 * np.maximum(vx, 1.0)
    elif mode == "mc":
        rng = np.random.default_rng(seed)
        samples = sample_matrix(dist, rng, size=n_samples)
        vx = _evaluate_rows(cert, xs)
        expected = np.empty(xs.shape[0])
        stderr = np.empty(xs.shape[0])
        chunk = max(1, int(2e6) // max(1, n_samples * dim))
        for start in range(0, xs.shape[0], chunk):
            block = xs[start : start + chunk]
            mapped = np.einsum("sij,nj->sni", samples, block)
            vals = _evaluate_rows(cert, mapped.reshape(-1, mapped.shape[-1])).reshape(
                n_samples, block.shape[0]
            )
            expected[start : start + chunk] = vals.mean(axis=0)
            stderr[start : start + chunk] = vals.std(axis=0, ddof=1) / np.sqrt(n_samples)
        bound = gamma * vx
        slack = bound + 4.0 * stderr + 1e-12 * np.maximum(vx, 1.0)
    else:
        raise ValueError("mode must be 'exact' or 'mc'")

    with np.errstate(divide="ignore", invalid="ignore"):
        margins = np.where(vx > 0, expected / np.where(vx > 0, gamma * vx, 1.0), 0.0)
    violations = expected > slack
    worst = int(np.argmax(margins))
    return ValidationReport(
        passed=not bool(violations.any()),
        mode=mode,
        n_vectors=xs.shape[0],
        worst_margin=float(margins[worst]),
        worst_x=xs[worst].copy(),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def certificate_to_dict(cert: LyapunovCertificate) -> dict:
    out: dict = {"degree": cert.degree, "gamma": cert.gamma}
    base = cert.base if isinstance(cert, LiftedCertificate) else cert
    if isinstance(cert, LiftedCertificate):
        out["lift_power"] = cert.lift_power
    if isinstance(base, ConeNormCertificate):
        out["kind"] = "cone_norm"
        out["f"] = base.f.tolist()
    else:
        out["kind"] = "quadratic"
        out["H"] = base.h.tolist()
    return out


def certificate_from_dict(doc: dict) -> LyapunovCertificate:
    kind = doc.get("kind")
    gamma = float(doc["gamma"])
    if kind == "cone_norm":
        base: ConeNormCertificate | QuadraticCertificate = ConeNormCertificate(
            f=np.asarray(doc["f"], dtype=float), gamma=gamma
        )
    elif kind == "quadratic":
        base = QuadraticCertificate(h=np.asarray(doc["H"], dtype=float), gamma=gamma)
    else:
        raise ValueError(f"unknown certificate kind {kind!r}")
    lift = int(doc.get("lift_power", 1))
    if lift == 1:
        return base
    cert = LiftedCertificate(base=base, lift_power=lift)
    if "degree" in doc and int(doc["degree"]) != cert.degree:
        raise ValueError("stated degree is inconsistent with kind and lift power")
    return cert
