"""Problem models: matrix distributions, Markov jump systems, JSON ingest.

Two distribution families are supported, and together they keep every
expectation used downstream exactly computable:

* finite atomic laws (a weighted list of matrices), and
* entrywise-independent uniform boxes (each entry uniform on an interval;
  degenerate intervals act as point masses in that entry).

``KroneckerLiftedDistribution`` is the image of a base law under the p-fold
Kronecker power map; it is produced internally by :func:`lift_distribution`
and never read from a file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, SchemaError
from .linalg import check_entry_cap, check_finite, kron_power

PROB_SUM_TOL = 1e-12
ROW_SUM_TOL = 1e-12


class MatrixDistribution:
    """Common surface of all distribution families."""

    dim: int

    def expected_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def expected_kron_power(self, p: int) -> np.ndarray:
        raise NotImplementedError

    def support_nonnegative(self) -> bool:
        """Sufficient (and for these families exact) test that every support
        matrix is entrywise nonnegative, i.e. leaves the positive orthant
        invariant."""
        raise NotImplementedError

    def expected_sandwich(self, x: np.ndarray) -> np.ndarray:
        """Exact E[A.T @ x @ A] for this law."""
        raise NotImplementedError


@dataclass(frozen=True)
class AtomicDistribution(MatrixDistribution):
    """Finite law: matrix ``atoms[i]`` with probability ``probabilities[i]``."""

    probabilities: np.ndarray
    atoms: np.ndarray  # shape (n, d, d)

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        atoms = check_finite(np.asarray(self.atoms, dtype=float), "atoms")
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("need at least one atom")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ValueError("atom probabilities must lie in (0, 1]")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        if atoms.ndim != 3 or atoms.shape[0] != probs.size or atoms.shape[1] != atoms.shape[2]:
            raise ValueError("atoms must be a stack of square matrices, one per probability")
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "atoms", atoms)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def expected_matrix(self) -> np.ndarray:
        return np.einsum("n,nij->ij", self.probabilities, self.atoms)

    def expected_kron_power(self, p: int) -> np.ndarray:
        if p < 1:
            raise ValueError("p must be >= 1")
        check_entry_cap(self.dim ** (2 * p), "expected_kron_power")
        out = np.zeros((self.dim**p, self.dim**p))
        for prob, m in zip(self.probabilities, self.atoms):
            out += prob * kron_power(m, p)
        return out

    def support_nonnegative(self) -> bool:
        return bool(np.all(self.atoms >= 0))

    def expected_sandwich(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.einsum("n,nki,kl,nlj->ij", self.probabilities, self.atoms, x, self.atoms)


@dataclass(frozen=True)
class UniformEntriesDistribution(MatrixDistribution):
    """Entries mutually independent, entry (i, j) uniform on
    [lower[i, j], upper[i, j]]; equal bounds mean a deterministic entry."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = check_finite(np.asarray(self.lower, dtype=float), "lower")
        upper = check_finite(np.asarray(self.upper, dtype=float), "upper")
        if lower.ndim != 2 or lower.shape[0] != lower.shape[1] or lower.shape != upper.shape:
            raise ValueError("lower and upper must be square arrays of equal shape")
        if np.any(lower > upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def entry_moment(self, order: int) -> np.ndarray:
        """Elementwise E[a_ij^order] for a uniform interval, order >= 0."""
        if order == 0:
            return np.ones_like(self.lower)
        l, u = self.lower, self.upper
        degenerate = l == u
        width = np.where(degenerate, 1.0, u - l)
        mom = (u ** (order + 1) - l ** (order + 1)) / ((order + 1) * width)
        return np.where(degenerate, l**order, mom)

    def expected_matrix(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def expected_kron_power(self, p: int) -> np.ndarray:
        # Each entry of the p-fold Kronecker power is a monomial in the d^2
        # independent entries; grouping repeated cells lets the expectation
        # factor into single-entry moments of the matching orders.
        if p < 1:
            raise ValueError("p must be >= 1")
        d = self.dim
        n = d**p
        check_entry_cap(n * n, "expected_kron_power")
        moments = np.stack([self.entry_moment(k).reshape(-1) for k in range(p + 1)])
        digits = np.empty((p, n), dtype=np.int64)
        idx = np.arange(n)
        for t in range(p):
            digits[t] = (idx // d ** (p - 1 - t)) % d
        counts = np.zeros((n, n, d * d), dtype=np.uint8)
        for t in range(p):
            cell = digits[t][:, None] * d + digits[t][None, :]
            for c in range(d * d):
                counts[:, :, c] += cell == c
        out = np.ones((n, n))
        for c in range(d * d):
            out *= moments[counts[:, :, c], c]
        return out

    def support_nonnegative(self) -> bool:
        # the support is the full box, so nonnegative lower bounds are
        # necessary as well as sufficient
        return bool(np.all(self.lower >= 0))

    def expected_sandwich(self, x: np.ndarray) -> np.ndarray:
        # E[(A.T X A)_ij] = sum_{k,l} X_kl E[a_ki a_lj]; entries factor except
        # when (k,i) == (l,j), which contributes the per-entry variance.
        x = np.asarray(x, dtype=float)
        mean = self.expected_matrix()
        var = self.entry_moment(2) - mean**2
        out = mean.T @ x @ mean
        out[np.diag_indices_from(out)] += np.diagonal(x) @ var
        return out


@dataclass(frozen=True)
class KroneckerLiftedDistribution(MatrixDistribution):
    """Image of ``base`` under M -> M^(kron power). Moments reduce to higher
    moments of the base law, so everything stays exact."""

    base: MatrixDistribution
    power: int

    def __post_init__(self):
        if self.power < 1:
            raise ValueError("lift power must be >= 1")

    @property
    def dim(self) -> int:
        return self.base.dim**self.power

    def expected_matrix(self) -> np.ndarray:
        return self.base.expected_kron_power(self.power)

    def expected_kron_power(self, p: int) -> np.ndarray:
        return self.base.expected_kron_power(self.power * p)

    def support_nonnegative(self) -> bool:
        # Kronecker powers of nonnegative matrices are nonnegative; this is a
        # sufficient flag only, which is the safe direction.
        return self.base.support_nonnegative()

    def expected_sandwich(self, x: np.ndarray) -> np.ndarray:
        # row-major vec identity: vec(B.T X B) = (B kron B).T vec(X)
        x = np.asarray(x, dtype=float)
        second = self.expected_kron_power(2)
        return (second.T @ x.reshape(-1)).reshape(x.shape)


def lift_distribution(dist: MatrixDistribution, power: int) -> MatrixDistribution:
    """The pushforward of ``dist`` under the ``power``-fold Kronecker map."""
    if power == 1:
        return dist
    if isinstance(dist, AtomicDistribution):
        return AtomicDistribution(
            probabilities=dist.probabilities,
            atoms=np.stack([kron_power(m, power) for m in dist.atoms]),
        )
    return KroneckerLiftedDistribution(base=dist, power=power)


@dataclass(frozen=True)
class ConeFlags:
    """Recomputed (never user-supplied) positivity flags.

    ``expectation_positive[p]`` is the sufficient entrywise test
    "E[A^(kron p)] > 0"; for p = 1 on the orthant it is exact, for p >= 2 it
    must not be read as a proof of failure.
    """

    orthant_invariant: bool
    expectation_positive: dict[int, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "orthant_invariant": self.orthant_invariant,
            "expectation_positive": {str(p): v for p, v in sorted(self.expectation_positive.items())},
        }


def compute_cone_flags(dist: MatrixDistribution, p_max: int = 1) -> ConeFlags:
    """Orthant-invariance of the support plus entrywise positivity of the
    lifted means for p = 1..p_max."""
    positive = {}
    for p in range(1, p_max + 1):
        positive[p] = bool(np.all(dist.expected_kron_power(p) > 0))
    return ConeFlags(orthant_invariant=dist.support_nonnegative(), expectation_positive=positive)


@dataclass(frozen=True)
class MarkovJumpSystem:
    """Mode matrices switched by a finite Markov chain.

    ``transition`` is row-stochastic: transition[i, j] is the probability of
    moving from mode i+1 to mode j+1. Modes are 1-based externally, matching
    the input format. ``input_vectors`` and ``feedback`` describe an optional
    static state feedback u(k) = feedback @ x(k) entering through the active
    mode's input vector.
    """

    transition: np.ndarray  # (N, N)
    modes: np.ndarray  # (N, d, d)
    input_vectors: np.ndarray | None = None  # (N, d)
    feedback: np.ndarray | None = None  # (d,)
    initial_mode: int | None = None  # 1-based

    def __post_init__(self):
        p = check_finite(np.asarray(self.transition, dtype=float), "transition matrix")
        modes = check_finite(np.asarray(self.modes, dtype=float), "modes")
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        n = p.shape[0]
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("transition matrix rows must sum to 1")
        if modes.ndim != 3 or modes.shape[0] != n or modes.shape[1] != modes.shape[2]:
            raise ValueError(f"need {n} square mode matrices of a common dimension")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "modes", modes)
        d = modes.shape[1]
        if self.input_vectors is not None:
            iv = check_finite(np.asarray(self.input_vectors, dtype=float), "input vectors")
            if iv.shape != (n, d):
                raise ValueError(f"input vectors must have shape ({n}, {d})")
            object.__setattr__(self, "input_vectors", iv)
        if self.feedback is not None:
            fb = check_finite(np.asarray(self.feedback, dtype=float), "feedback row")
            if fb.shape != (d,):
                raise ValueError(f"feedback row must have length {d}")
            object.__setattr__(self, "feedback", fb)
        if self.initial_mode is not None and not 1 <= self.initial_mode <= n:
            raise ValueError(f"initial mode must lie in 1..{n}")

    @property
    def n_modes(self) -> int:
        return self.transition.shape[0]

    @property
    def dim(self) -> int:
        return self.modes.shape[1]


def apply_feedback(system: MarkovJumpSystem) -> MarkovJumpSystem:
    """Close the loop: mode i becomes M_i + n_i @ feedback; the input data is
    consumed and cleared in the result."""
    if system.input_vectors is None or system.feedback is None:
        raise AssumptionError("closed loop requires both input vectors and a feedback row")
    closed = system.modes + np.einsum("ni,j->nij", system.input_vectors, system.feedback)
    return MarkovJumpSystem(
        transition=system.transition,
        modes=closed,
        initial_mode=system.initial_mode,
    )


# ---------------------------------------------------------------------------
# JSON problem documents
# ---------------------------------------------------------------------------

Problem = MatrixDistribution | MarkovJumpSystem


def _require(node: dict, key: str, pointer: str):
    if key not in node:
        raise SchemaError(f"missing required field '{key}'", pointer)
    return node[key]


def _as_number(value, pointer: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError("expected a number", pointer)
    v = float(value)
    if not np.isfinite(v):
        raise SchemaError("number must be finite", pointer)
    return v


def _as_vector(node, length: int, pointer: str) -> np.ndarray:
    if not isinstance(node, list) or len(node) != length:
        raise SchemaError(f"expected an array of {length} numbers", pointer)
    return np.array([_as_number(v, f"{pointer}/{i}") for i, v in enumerate(node)])


def _as_matrix(node, rows: int, cols: int, pointer: str) -> np.ndarray:
    if not isinstance(node, list) or len(node) != rows:
        raise SchemaError(f"expected an array of {rows} rows", pointer)
    return np.stack([_as_vector(row, cols, f"{pointer}/{i}") for i, row in enumerate(node)])


def _parse_distribution(node, dim: int, pointer: str) -> MatrixDistribution:
    if not isinstance(node, dict):
        raise SchemaError("expected an object", pointer)
    kind = _require(node, "kind", pointer)
    if kind == "atomic":
        atoms_node = _require(node, "atoms", pointer)
        if not isinstance(atoms_node, list) or not atoms_node:
            raise SchemaError("expected a non-empty array of atoms", f"{pointer}/atoms")
        probs, mats = [], []
        for i, atom in enumerate(atoms_node):
            apt = f"{pointer}/atoms/{i}"
            if not isinstance(atom, dict):
                raise SchemaError("expected an object with 'p' and 'M'", apt)
            prob = _as_number(_require(atom, "p", apt), f"{apt}/p")
            if not 0 < prob <= 1:
                raise SchemaError("atom probability must lie in (0, 1]", f"{apt}/p")
            probs.append(prob)
            mats.append(_as_matrix(_require(atom, "M", apt), dim, dim, f"{apt}/M"))
        if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
            raise SchemaError(f"atom probabilities sum to {sum(probs)!r}, not 1", f"{pointer}/atoms")
        return AtomicDistribution(probabilities=np.array(probs), atoms=np.stack(mats))
    if kind == "uniform_entries":
        lower = _as_matrix(_require(node, "lower", pointer), dim, dim, f"{pointer}/lower")
        upper = _as_matrix(_require(node, "upper", pointer), dim, dim, f"{pointer}/upper")
        bad = np.argwhere(lower > upper)
        if bad.size:
            i, j = bad[0]
            raise SchemaError("lower bound exceeds upper bound", f"{pointer}/upper/{i}/{j}")
        return UniformEntriesDistribution(lower=lower, upper=upper)
    raise SchemaError(f"unknown distribution kind {kind!r}", f"{pointer}/kind")


def _parse_markov(node, dim: int, pointer: str) -> MarkovJumpSystem:
    if not isinstance(node, dict):
        raise SchemaError("expected an object", pointer)
    p_node = _require(node, "P", pointer)
    if not isinstance(p_node, list) or not p_node:
        raise SchemaError("expected a non-empty square array", f"{pointer}/P")
    n = len(p_node)
    p = _as_matrix(p_node, n, n, f"{pointer}/P")
    if np.any(p < 0) or np.any(p > 1):
        i, j = np.argwhere((p < 0) | (p > 1))[0]
        raise SchemaError("transition probability outside [0, 1]", f"{pointer}/P/{i}/{j}")
    bad_rows = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL)
    if bad_rows.size:
        i = bad_rows[0]
        raise SchemaError(f"row sums to {p[i].sum()!r}, not 1", f"{pointer}/P/{i}")
    modes_node = _require(node, "modes", pointer)
    if not isinstance(modes_node, list) or len(modes_node) != n:
        raise SchemaError(f"expected {n} mode matrices", f"{pointer}/modes")
    modes = np.stack(
        [_as_matrix(m, dim, dim, f"{pointer}/modes/{i}") for i, m in enumerate(modes_node)]
    )
    inputs = None
    if node.get("inputs") is not None:
        inputs = _as_matrix(node["inputs"], n, dim, f"{pointer}/inputs")
    feedback = None
    if node.get("feedback") is not None:
        feedback = _as_vector(node["feedback"], dim, f"{pointer}/feedback")
    initial = node.get("initial_mode")
    if initial is not None:
        if isinstance(initial, bool) or not isinstance(initial, int):
            raise SchemaError("expected an integer", f"{pointer}/initial_mode")
        if not 1 <= initial <= n:
            raise SchemaError(f"initial mode must lie in 1..{n}", f"{pointer}/initial_mode")
    return MarkovJumpSystem(
        transition=p, modes=modes, input_vectors=inputs, feedback=feedback, initial_mode=initial
    )


def load_problem(document: str) -> Problem:
    """Parse and validate a problem document.

    Raises SchemaError with a JSON pointer to the first offending field.
    """
    try:
        root = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(root, dict):
        raise SchemaError("top-level value must be an object")
    kind = _require(root, "type", "")
    if kind not in ("iid", "markov"):
        raise SchemaError("type must be 'iid' or 'markov'", "/type")
    dim = _require(root, "dim", "")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise SchemaError("dim must be a positive integer", "/dim")
    if ("distribution" in root) == ("markov" in root):
        raise SchemaError("exactly one of 'distribution' or 'markov' must be present")
    if kind == "iid":
        if "distribution" not in root:
            raise SchemaError("type 'iid' requires a 'distribution' section")
        return _parse_distribution(root["distribution"], dim, "/distribution")
    if "markov" not in root:
        raise SchemaError("type 'markov' requires a 'markov' section")
    return _parse_markov(root["markov"], dim, "/markov")


def dump_problem(problem: Problem) -> dict:
    """Problem document for ``problem``; inverse of :func:`load_problem`."""
    if isinstance(problem, AtomicDistribution):
        return {
            "type": "iid",
            "dim": problem.dim,
            "distribution": {
                "kind": "atomic",
                "atoms": [
                    {"p": float(p), "M": m.tolist()}
                    for p, m in zip(problem.probabilities, problem.atoms)
                ],
            },
        }
    if isinstance(problem, UniformEntriesDistribution):
        return {
            "type": "iid",
            "dim": problem.dim,
            "distribution": {
                "kind": "uniform_entries",
                "lower": problem.lower.tolist(),
                "upper": problem.upper.tolist(),
            },
        }
    if isinstance(problem, MarkovJumpSystem):
        markov: dict = {
            "P": problem.transition.tolist(),
            "modes": problem.modes.tolist(),
        }
        if problem.input_vectors is not None:
            markov["inputs"] = problem.input_vectors.tolist()
        if problem.feedback is not None:
            markov["feedback"] = problem.feedback.tolist()
        if problem.initial_mode is not None:
            markov["initial_mode"] = problem.initial_mode
        return {"type": "markov", "dim": problem.dim, "markov": markov}
    raise TypeError(f"cannot serialize {type(problem).__name__}")


def problem_to_json(problem: Problem) -> str:
    return json.dumps(dump_problem(problem), indent=2)
