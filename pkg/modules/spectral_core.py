"""Finite-dimensional spectral theorem for real symmetric operators.

Operators are decomposed with a cyclic Jacobi eigensolver into clustered
eigenvalues and orthogonal spectral projections, A = sum_j lambda_j P_j.
Scalar functions act through the functional calculus f(A) = sum_j f(lambda_j) P_j.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from modules.errors import DomainError, InvariantViolation, NoConvergence, NonSymmetric, ShapeMismatch

logger = logging.getLogger("phi.spectral")

DEFAULT_SYM_TOL = 1e-12
DEFAULT_CLUSTER_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 100

ScalarFunction = Callable[[float], float]


def _asymmetry(matrix: np.ndarray) -> float:
    if np.array_equal(matrix, matrix.T):
        return 0.0
    return float(np.max(np.abs(matrix - matrix.T)))


@dataclass(frozen=True)
class Interval:
    """Real interval with optional open ends; infinite endpoints are allowed."""

    lo: float = -math.inf
    hi: float = math.inf
    closed_lo: bool = True
    closed_hi: bool = True

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("Interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"Invalid interval: lo={self.lo} > hi={self.hi}")

    @classmethod
    def real_line(cls) -> "Interval":
        return cls()

    def contains(self, x: float) -> bool:
        if math.isnan(x):
            return False
        above = x >= self.lo if self.closed_lo else x > self.lo
        below = x <= self.hi if self.closed_hi else x < self.hi
        return above and below

    def __str__(self) -> str:
        left = "[" if self.closed_lo and math.isfinite(self.lo) else "("
        right = "]" if self.closed_hi and math.isfinite(self.hi) else ")"
        return f"{left}{self.lo}, {self.hi}{right}"


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A real symmetric matrix standing in for a self-adjoint operator.

    Args:
        entries: dim x dim array of finite reals (copied and frozen)
        sym_tol: maximum allowed |entries[i][j] - entries[j][i]|
    """

    entries: np.ndarray
    sym_tol: float = DEFAULT_SYM_TOL

    def __post_init__(self):
        matrix = np.array(self.entries, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
            raise ShapeMismatch(f"Operator entries must be a non-empty square matrix, got shape {matrix.shape}")
        if self.sym_tol < 0:
            raise ValueError(f"sym_tol must be nonnegative, got {self.sym_tol}")
        if not np.all(np.isfinite(matrix)):
            raise DomainError("Operator entries must be finite")
        asymmetry = _asymmetry(matrix)
        if asymmetry > self.sym_tol:
            raise NonSymmetric(asymmetry, self.sym_tol)
        matrix.setflags(write=False)
        object.__setattr__(self, "entries", matrix)

    @classmethod
    def diagonal(cls, values: Sequence[float], sym_tol: float = DEFAULT_SYM_TOL) -> "HermitianOperator":
        return cls(np.diag(np.asarray(values, dtype=float)), sym_tol)

    @classmethod
    def identity(cls, dim: int) -> "HermitianOperator":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def symmetric_part(self) -> np.ndarray:
        return 0.5 * (self.entries + self.entries.T)

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim}, sym_tol={self.sym_tol})"


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Clustered eigenvalues with their orthogonal spectral projections.

    ``bases[j]`` holds orthonormal eigenvector columns spanning the range of
    ``projections[j]``.
    """

    eigenvalues: np.ndarray
    projections: Tuple[np.ndarray, ...]
    bases: Tuple[np.ndarray, ...]
    cluster_tol: float
    dim: int
    source: Optional[HermitianOperator] = None

    @property
    def multiplicities(self) -> Tuple[int, ...]:
        return tuple(basis.shape[1] for basis in self.bases)

    def spectrum_with_multiplicity(self) -> np.ndarray:
        return np.repeat(self.eigenvalues, self.multiplicities)

    def __len__(self) -> int:
        return len(self.eigenvalues)


def jacobi_eigh(matrix: np.ndarray, max_sweeps: int = DEFAULT_MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Each sweep visits every off-diagonal pair (p, q) once and applies the plane
    rotation that annihilates a[p, q]. The loop stops once the off-diagonal
    Frobenius norm is at round-off level.

    Args:
        matrix: Symmetric square array
        max_sweeps: Sweep budget

    Returns:
        tuple: (ascending eigenvalues, orthonormal eigenvector columns)

    Raises:
        NoConvergence: If the off-diagonal mass is still above round-off after max_sweeps
    """
    a = np.array(matrix, dtype=float)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    vectors = np.eye(n)
    threshold = n * np.finfo(float).eps * float(np.linalg.norm(a))

    for sweep in range(max_sweeps + 1):
        diagonal = np.diagonal(a).copy()
        off = float(np.linalg.norm(a - np.diag(diagonal)))
        if off <= threshold:
            order = np.argsort(diagonal, kind="stable")
            logger.debug(f"Jacobi converged after {sweep} sweeps (dim={n})")
            return diagonal[order], vectors[:, order]
        if sweep == max_sweeps:
            break

        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c
                rotation = np.array([[c, s], [-s, c]])
                pair = [p, q]
                a[:, pair] = a[:, pair] @ rotation
                a[pair, :] = rotation.T @ a[pair, :]
                a[p, q] = a[q, p] = 0.0
                vectors[:, pair] = vectors[:, pair] @ rotation

    raise NoConvergence(f"Jacobi eigensolver did not converge within {max_sweeps} sweeps (dim={n})")


def eig_decompose(A: HermitianOperator, cluster_tol: float = DEFAULT_CLUSTER_TOL,
                  max_sweeps: int = DEFAULT_MAX_SWEEPS) -> SpectralDecomposition:
    """Decompose A into clustered eigenvalues and spectral projections.

    Sorted eigenvalues are merged into one cluster while they lie within
    cluster_tol of the cluster's smallest member, so no cluster spans more than
    cluster_tol. Its eigenvalue is the cluster mean and its projection is the
    sum of the constituent rank-1 projections.

    Raises:
        NonSymmetric: Propagated from operator construction
        NoConvergence: If the eigensolver exceeds its sweep budget
    """
    if cluster_tol < 0:
        raise ValueError(f"cluster_tol must be nonnegative, got {cluster_tol}")

    values, vectors = jacobi_eigh(A.entries, max_sweeps=max_sweeps)

    groups = [[0]]
    for index in range(1, len(values)):
        if values[index] - values[groups[-1][0]] <= cluster_tol:
            groups[-1].append(index)
        else:
            groups.append([index])

    eigenvalues = []
    projections = []
    bases = []
    for group in groups:
        basis = vectors[:, group].copy()
        projection = basis @ basis.T
        projection = 0.5 * (projection + projection.T)
        basis.setflags(write=False)
        projection.setflags(write=False)
        eigenvalues.append(float(np.mean(values[group])))
        projections.append(projection)
        bases.append(basis)

    gram_defect = float(np.max(np.abs(vectors.T @ vectors - np.eye(A.dim))))
    if gram_defect > _machine_tol(A.dim, 1.0) * 10:
        raise InvariantViolation(f"Eigenvectors lost orthonormality (defect {gram_defect:.3e})")

    spectrum = np.array(eigenvalues)
    spectrum.setflags(write=False)
    return SpectralDecomposition(spectrum, tuple(projections), tuple(bases), cluster_tol, A.dim, A)


def _machine_tol(dim: int, scale: float) -> float:
    return 100.0 * dim * np.finfo(float).eps * max(1.0, scale)


def _evaluate(f: ScalarFunction, x: float) -> float:
    try:
        with np.errstate(all="ignore"):
            value = float(f(float(x)))
    except (ArithmeticError, ValueError, TypeError) as e:
        raise DomainError(f"Scalar map undefined at {x!r}: {e}") from e
    if not math.isfinite(value):
        raise DomainError(f"Scalar map is not finite at {x!r} (got {value})")
    return value


def apply_calculus(D: SpectralDecomposition, f: ScalarFunction) -> HermitianOperator:
    """Functional calculus: return sum_j f(lambda_j) P_j.

    Raises:
        DomainError: If f is undefined or non-finite at some eigenvalue
    """
    values = [_evaluate(f, eigenvalue) for eigenvalue in D.eigenvalues]
    result = np.zeros((D.dim, D.dim))
    for value, projection in zip(values, D.projections):
        result += value * projection
    result = 0.5 * (result + result.T)
    sym_tol = D.source.sym_tol if D.source is not None else DEFAULT_SYM_TOL
    return HermitianOperator(result, sym_tol)


def spectral_projection(D: SpectralDecomposition, interval: Interval) -> HermitianOperator:
    """Spectral projection E(interval): the sum of P_j with lambda_j in the interval.

    An interval missing the spectrum yields the zero operator.
    """
    result = np.zeros((D.dim, D.dim))
    for eigenvalue, projection in zip(D.eigenvalues, D.projections):
        if interval.contains(float(eigenvalue)):
            result += projection
    return HermitianOperator(0.5 * (result + result.T))


def operator_norm(matrix: np.ndarray) -> float:
    """Spectral (2-) norm.

    Square, (nearly) symmetric input is measured through its eigenvalues;
    anything else through its largest singular value.
    """
    m = np.asarray(matrix, dtype=float)
    if m.size == 0 or not m.any():
        return 0.0
    if m.ndim == 2 and m.shape[0] == m.shape[1]:
        scale = float(np.max(np.abs(m)))
        if _asymmetry(m) <= DEFAULT_SYM_TOL * max(1.0, scale):
            if np.count_nonzero(m) == np.count_nonzero(np.diagonal(m)):
                return float(np.max(np.abs(np.diagonal(m))))
            symmetric = 0.5 * (m + m.T)
            return float(np.max(np.abs(np.linalg.eigvalsh(symmetric))))
    return float(np.linalg.norm(m, 2))


def operator_distance(A: HermitianOperator, B: HermitianOperator) -> float:
    if A.dim != B.dim:
        raise ShapeMismatch(f"Cannot compare operators of dimension {A.dim} and {B.dim}")
    return operator_norm(A.entries - B.entries)


def spectrum(A: HermitianOperator) -> np.ndarray:
    """Ascending eigenvalues of A with multiplicity (LAPACK path)."""
    diagonal = np.diagonal(A.entries)
    if np.count_nonzero(A.entries) == np.count_nonzero(diagonal):
        return np.sort(diagonal)
    return np.linalg.eigvalsh(A.symmetric_part())


def resolution_defects(D: SpectralDecomposition) -> Dict[str, float]:
    """Numerical defects of the spectral resolution of D.

    Returns:
        dict: identity (||sum P_j - I||), orthogonality (max ||P_i P_j||, i != j),
            idempotence (max ||P_j^2 - P_j||), symmetry (max ||P_j^T - P_j||),
            reconstruction (||sum lambda_j P_j - A||, NaN without a source operator)
    """
    total = np.zeros((D.dim, D.dim))
    reconstruction = np.zeros((D.dim, D.dim))
    orthogonality = 0.0
    idempotence = 0.0
    symmetry = 0.0
    for i, (eigenvalue, projection) in enumerate(zip(D.eigenvalues, D.projections)):
        total += projection
        reconstruction += eigenvalue * projection
        idempotence = max(idempotence, operator_norm(projection @ projection - projection))
        symmetry = max(symmetry, float(np.max(np.abs(projection.T - projection))))
        for other in D.projections[i + 1:]:
            orthogonality = max(orthogonality, operator_norm(projection @ other))
    identity = operator_norm(total - np.eye(D.dim))
    if D.source is not None:
        error = operator_norm(reconstruction - D.source.entries)
    else:
        error = float("nan")
    return {
        "identity": identity,
        "orthogonality": orthogonality,
        "idempotence": idempotence,
        "symmetry": symmetry,
        "reconstruction": error,
    }
