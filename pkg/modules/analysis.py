"""Verification suites run against fixed-point results and their traces."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import InvariantViolation, ShapeMismatch
from modules.spectral_core import HermitianOperator, SpectralDecomposition, operator_norm, spectrum
from modules.spectral_maps import (
    CONFIRMATION_WINDOW,
    CYCLE_MEMORY,
    DEFAULT_FIXED_TOL,
    DEFAULT_MAX_ITER,
    OrbitKind,
    SpectralMap,
    _raw_step,
    scalar_limit,
)
from modules.transfinite_engine import StageRecord, pad_to

logger = logging.getLogger("phi.analysis")

ORTHONORMALITY_TOL = 1e-8


def _sorted_deviation(predicted: np.ndarray, observed: np.ndarray) -> float:
    if predicted.shape != observed.shape:
        return math.inf
    if not (np.all(np.isfinite(predicted)) and np.all(np.isfinite(observed))):
        return math.inf
    if predicted.size == 0:
        return 0.0
    return float(np.max(np.abs(np.sort(predicted) - np.sort(observed))))


@dataclass(frozen=True)
class StageSpectrumCheck:
    stage: str
    depth: int
    predicted: Tuple[float, ...]
    observed: Tuple[float, ...]
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "depth": self.depth,
            "predicted": list(self.predicted),
            "observed": list(self.observed),
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class SpectralMappingReport:
    """Per-stage comparison of observed spectra against scalar predictions.

    Stage n is held to ``tolerance * max(n, 1)``.
    """

    per_stage: Tuple[StageSpectrumCheck, ...]
    tolerance: float

    @property
    def overall_pass(self) -> bool:
        return all(check.passed for check in self.per_stage)

    @property
    def max_deviation(self) -> float:
        return max((check.deviation for check in self.per_stage), default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "overall_pass": self.overall_pass,
            "tolerance": self.tolerance,
            "max_deviation": self.max_deviation,
            "per_stage": [check.to_dict() for check in self.per_stage],
        }


def verify_spectral_mapping(trace: Sequence[StageRecord], f: SpectralMap, tol: float) -> SpectralMappingReport:
    """Check sigma(stage n) = f^n(sigma(A_0)) along a dimension-preserving trace.

    Predictions are computed in scalar arithmetic from the LAPACK spectrum of
    the first stage; observations come from the stage operators.

    Raises:
        ShapeMismatch: If the stage dimensions are not constant
    """
    if not trace:
        return SpectralMappingReport((), tol)
    dim = trace[0].operator.dim
    if any(record.operator.dim != dim for record in trace):
        raise ShapeMismatch("Spectral mapping needs a dimension-preserving trace")

    base = spectrum(trace[0].operator)
    current = np.array(base, dtype=float)
    applied = 0
    checks = []
    for record in trace:
        while applied < record.depth:
            current = np.array([_raw_step(f, x) if math.isfinite(x) else x for x in current])
            applied += 1
        observed = base if record.depth == 0 else spectrum(record.operator)
        deviation = _sorted_deviation(current, observed)
        checks.append(StageSpectrumCheck(
            stage=str(record.stage),
            depth=record.depth,
            predicted=tuple(float(x) for x in np.sort(current)),
            observed=tuple(float(x) for x in observed),
            deviation=deviation,
            tolerance=tol * max(record.depth, 1),
        ))
    report = SpectralMappingReport(tuple(checks), tol)
    if not report.overall_pass:
        logger.warning(f"Spectral mapping failed: max deviation {report.max_deviation:.3e} (tol {tol})")
    return report


def check_idempotent(A: HermitianOperator, tol: float) -> Tuple[bool, float]:
    """Return (A is a projection within tol, ||A^2 - A||)."""
    defect = operator_norm(A.entries @ A.entries - A.entries)
    return defect <= tol, defect


@dataclass(frozen=True, eq=False)
class BasinComponent:
    """Eigenspace directions whose spectral orbits share one attractor."""

    attractor: float
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projection(self) -> np.ndarray:
        return self.basis @ self.basis.T


@dataclass(frozen=True, eq=False)
class BasinDecomposition:
    """Orthogonal splitting of the space by the attractor each eigenvalue reaches.

    Eigenvalues whose orbits escape, cycle or stay undecided are counted in
    ``escaped_dim`` and listed in ``unresolved`` as (eigenvalue, orbit kind).
    """

    components: Tuple[BasinComponent, ...]
    escaped_dim: int
    source_dim: int
    unresolved: Tuple[Tuple[float, str], ...] = ()

    def __post_init__(self):
        total = sum(component.dim for component in self.components) + self.escaped_dim
        if total != self.source_dim:
            raise InvariantViolation(f"Basin dimensions sum to {total}, expected {self.source_dim}")
        if self.components:
            stacked = np.hstack([component.basis for component in self.components])
            defect = float(np.max(np.abs(stacked.T @ stacked - np.eye(stacked.shape[1]))))
            if defect > ORTHONORMALITY_TOL:
                raise InvariantViolation(f"Basin bases are not orthonormal (defect {defect:.3e})")

    @property
    def dims(self) -> List[Tuple[float, int]]:
        return [(component.attractor, component.dim) for component in self.components]

    def reconstruct(self) -> np.ndarray:
        """sum_j xi_j * P_j over the resolved components."""
        result = np.zeros((self.source_dim, self.source_dim))
        for component in self.components:
            result += component.attractor * component.projection
        return 0.5 * (result + result.T)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": [{"attractor": c.attractor, "dim": c.dim} for c in self.components],
            "escaped_dim": self.escaped_dim,
            "source_dim": self.source_dim,
            "unresolved": [{"eigenvalue": value, "kind": kind} for value, kind in self.unresolved],
        }


def _settle(f: SpectralMap, x: float, budget: int) -> float:
    """Follow a converged orbit while its moves keep shrinking.

    scalar_limit stops up to about fixed_tol / (1 - |f'|) away from the fixed
    point, on either side of it; settled limits of one attractor agree.
    """
    move = math.inf
    for _ in range(budget):
        y = _raw_step(f, x)
        if not math.isfinite(y) or not abs(y - x) < move:
            break
        x, move = y, abs(y - x)
    return x


def basin_decomposition(D: SpectralDecomposition, f: SpectralMap, fixed_tol: float = DEFAULT_FIXED_TOL,
                        max_iter: int = DEFAULT_MAX_ITER, window: int = CONFIRMATION_WINDOW,
                        memory: int = CYCLE_MEMORY) -> BasinDecomposition:
    """Group the eigenspaces of D by the attractor of their spectral orbit under f.

    Raises:
        DomainError: Propagated from the scalar layer
    """
    groups: List[Tuple[float, List[np.ndarray]]] = []
    escaped_dim = 0
    unresolved = []

    for eigenvalue, basis in zip(D.eigenvalues, D.bases):
        outcome = scalar_limit(f, float(eigenvalue), fixed_tol, max_iter, window, memory)
        if outcome.kind is not OrbitKind.CONVERGED:
            escaped_dim += basis.shape[1]
            unresolved.append((float(eigenvalue), outcome.kind.value))
            logger.debug(f"Eigenvalue {eigenvalue:.6g} is unresolved ({outcome.kind.value})")
            continue
        limit = _settle(f, outcome.limit, max_iter)
        for attractor, bases in groups:
            if abs(attractor - limit) <= fixed_tol:
                bases.append(basis)
                break
        else:
            groups.append((limit, [basis]))

    groups.sort(key=lambda group: group[0])
    components = tuple(BasinComponent(attractor, np.hstack(bases)) for attractor, bases in groups)
    return BasinDecomposition(components, escaped_dim, D.dim, tuple(unresolved))


def compare_up_to_unitary(A: HermitianOperator, B: HermitianOperator, tol: float) -> bool:
    """Symmetric matrices are unitarily equivalent iff their sorted spectra agree."""
    if A.dim != B.dim:
        return False
    return bool(np.max(np.abs(spectrum(A) - spectrum(B))) <= tol)


def spectrum_contained(A: HermitianOperator, B: HermitianOperator, tol: float) -> bool:
    """sigma(A) lies within tol of sigma(B)."""
    inner = spectrum(A)
    outer = spectrum(B)
    return all(float(np.min(np.abs(outer - value))) <= tol for value in inner)


def check_limit_spectrum(a_infinity: HermitianOperator, f: SpectralMap, tol: float) -> Tuple[bool, float]:
    """Every eigenvalue of the limit must be a numerical fixed point of f."""
    defect = max((abs(f.eval(float(mu)) - float(mu)) for mu in spectrum(a_infinity)), default=0.0)
    return defect <= tol, defect


@dataclass(frozen=True)
class CommutationReport:
    max_commutator: float
    per_stage: Tuple[Tuple[str, float], ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_commutator <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "max_commutator": self.max_commutator,
            "tolerance": self.tolerance,
            "per_stage": [{"stage": stage, "commutator": value} for stage, value in self.per_stage],
        }


def verify_commutation(trace: Sequence[StageRecord], a_infinity: HermitianOperator, tol: float) -> CommutationReport:
    """||[A_inf, A_stage]|| for every stage, smaller operator padded by zero."""
    per_stage = []
    for record in trace:
        dim = max(record.operator.dim, a_infinity.dim)
        left = pad_to(a_infinity, dim)
        right = pad_to(record.operator, dim)
        per_stage.append((str(record.stage), operator_norm(left @ right - right @ left)))
    worst = max((value for _, value in per_stage), default=0.0)
    return CommutationReport(worst, tuple(per_stage), tol)


def _positive_semidefinite(A: HermitianOperator, tol: float) -> bool:
    return bool(spectrum(A)[0] >= -tol)


def _contraction(A: HermitianOperator, tol: float) -> bool:
    return operator_norm(A.entries) <= 1.0 + tol


def _unit_interval_spectrum(A: HermitianOperator, tol: float) -> bool:
    values = spectrum(A)
    return bool(values[0] >= -tol and values[-1] <= 1.0 + tol)


INHERITED_PROPERTIES: Dict[str, Callable[[HermitianOperator, float], bool]] = {
    "positive_semidefinite": _positive_semidefinite,
    "contraction": _contraction,
    "unit_interval_spectrum": _unit_interval_spectrum,
}


@dataclass(frozen=True)
class InheritanceReport:
    predicate: str
    holds_initially: bool
    violations: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return not self.holds_initially or not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "predicate": self.predicate,
            "holds_initially": self.holds_initially,
            "violations": list(self.violations),
            "passed": self.passed,
        }


def check_inheritance(trace: Sequence[StageRecord], a_infinity: Optional[HermitianOperator], predicate: str,
                      tol: float = 1e-10) -> InheritanceReport:
    """If A_0 has the property, every later stage and the limit must keep it.

    Raises:
        KeyError: For unknown predicate names
    """
    check = INHERITED_PROPERTIES[predicate]
    if not trace:
        return InheritanceReport(predicate, False)
    if not check(trace[0].operator, tol):
        return InheritanceReport(predicate, False)
    violations = [str(record.stage) for record in trace[1:] if not check(record.operator, tol)]
    if a_infinity is not None and not check(a_infinity, tol):
        violations.append("limit")
    return InheritanceReport(predicate, True, tuple(violations))
