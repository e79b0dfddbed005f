"""Ordinal-indexed iteration of operator transforms.

A PhiTransform maps a symmetric operator to a symmetric operator on a space at
least as large, together with the isometric embedding of the old space. The
engine runs successor stages A_{n+1} = Phi(A_n), takes omega-limit stages when
successive differences become Cauchy, and stops at the first stage whose
residual ||Phi(A) - A|| falls under epsilon. Stages are ordinals
omega*k + n with finitely many limits.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml

from modules.errors import (
    AxiomViolation,
    DimensionOverflow,
    FormatError,
    InvariantViolation,
    NotStabilized,
    ShapeMismatch,
)
from modules.spectral_core import (
    DEFAULT_CLUSTER_TOL,
    DEFAULT_MAX_SWEEPS,
    HermitianOperator,
    apply_calculus,
    eig_decompose,
    operator_norm,
    spectrum,
)
from modules.spectral_maps import DEFAULT_ESCAPE_BOUND, SpectralMap, compose_maps, parse_map

logger = logging.getLogger("phi.engine")

NOT_COMPARABLE = math.inf
AXIOM_TOL = 1e-12
TRIVIAL_TOL = 1e-10


class EquivalenceMode(str, Enum):
    STRICT = "strict"
    MODULO_TRIVIAL = "modulo_trivial"

    @classmethod
    def parse(cls, value) -> "EquivalenceMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise FormatError(f"Unknown equivalence mode '{value}' (expected 'strict' or 'modulo_trivial')")


@dataclass(frozen=True, order=True)
class Stage:
    """Ordinal omega*limits + offset."""

    limits: int = 0
    offset: int = 0

    @classmethod
    def finite(cls, n: int) -> "Stage":
        return cls(0, n)

    @classmethod
    def omega_limit(cls, k: int) -> "Stage":
        return cls(k, 0)

    @property
    def is_limit(self) -> bool:
        return self.limits > 0 and self.offset == 0

    def successor(self) -> "Stage":
        return Stage(self.limits, self.offset + 1)

    def __str__(self) -> str:
        if self.limits == 0:
            return str(self.offset)
        omega = "ω" if self.limits == 1 else f"ω·{self.limits}"
        return omega if self.offset == 0 else f"{omega}+{self.offset}"


@dataclass(frozen=True, eq=False)
class Embedding:
    """Isometric embedding of a from_dim space into a to_dim space.

    Without an explicit isometry the embedding is the inclusion of the leading
    from_dim coordinates.
    """

    from_dim: int
    to_dim: int
    explicit: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.from_dim < 1 or self.from_dim > self.to_dim:
            raise ShapeMismatch(f"Embedding needs 1 <= from_dim <= to_dim, got {self.from_dim} -> {self.to_dim}")
        if self.explicit is not None:
            matrix = np.array(self.explicit, dtype=float)
            if matrix.shape != (self.to_dim, self.from_dim):
                raise ShapeMismatch(f"Isometry shape {matrix.shape} does not match {self.to_dim}x{self.from_dim}")
            defect = float(np.max(np.abs(matrix.T @ matrix - np.eye(self.from_dim))))
            if defect > 1e-10:
                raise InvariantViolation(f"Embedding columns are not orthonormal (defect {defect:.3e})")
            matrix.setflags(write=False)
            object.__setattr__(self, "explicit", matrix)

    @classmethod
    def identity(cls, dim: int) -> "Embedding":
        return cls(dim, dim)

    @classmethod
    def inclusion(cls, from_dim: int, to_dim: int) -> "Embedding":
        return cls(from_dim, to_dim)

    @property
    def is_canonical(self) -> bool:
        return self.explicit is None

    @cached_property
    def isometry(self) -> np.ndarray:
        if self.explicit is not None:
            return self.explicit
        matrix = np.eye(self.to_dim, self.from_dim)
        matrix.setflags(write=False)
        return matrix

    def then(self, outer: "Embedding") -> "Embedding":
        """Compose: first this embedding, then ``outer``."""
        if outer.from_dim != self.to_dim:
            raise ShapeMismatch(f"Cannot compose embeddings {self.from_dim}->{self.to_dim} and "
                                f"{outer.from_dim}->{outer.to_dim}")
        if self.is_canonical and outer.is_canonical:
            return Embedding(self.from_dim, outer.to_dim)
        return Embedding(self.from_dim, outer.to_dim, outer.isometry @ self.isometry)


class PhiTransform:
    """Base class of operator transforms."""

    label: str = "phi"

    @property
    def preserves_dimension(self) -> bool:
        raise NotImplementedError

    def apply(self, A: HermitianOperator, space_budget: int) -> Tuple[HermitianOperator, Embedding]:
        raise NotImplementedError

    def scalar_maps(self) -> Tuple[SpectralMap, ...]:
        raise NotImplementedError

    def spectral_map(self) -> SpectralMap:
        """Composed scalar map of a dimension-preserving transform."""
        if not self.preserves_dimension:
            raise ShapeMismatch(f"Transform '{self.label}' changes dimension and has no single scalar map")
        return compose_maps(self.scalar_maps())

    @property
    def escape_bound(self) -> float:
        bounds = [f.escape_bound for f in self.scalar_maps()]
        return min(bounds) if bounds else math.inf

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label!r})"


class ScalarMapTransform(PhiTransform):
    """Phi(A) = f(A) through the functional calculus; the space is unchanged.

    The idempotent-preservation axiom reduces to f(0) = 0 and f(1) = 1 for the
    points of {0, 1} inside the map's domain.
    """

    def __init__(self, spectral_map: SpectralMap, label: Optional[str] = None, enforce_axioms: bool = True,
                 cluster_tol: float = DEFAULT_CLUSTER_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS):
        self.map = spectral_map
        self.label = label or spectral_map.name
        self.cluster_tol = cluster_tol
        self.max_sweeps = max_sweeps
        self.satisfies_axioms = _preserves_idempotents(spectral_map)
        if enforce_axioms and not self.satisfies_axioms:
            raise AxiomViolation(f"Map '{spectral_map.name}' does not fix 0 and 1, so it would move idempotents")

    @property
    def preserves_dimension(self) -> bool:
        return True

    def apply(self, A, space_budget):
        image = apply_calculus(eig_decompose(A, self.cluster_tol, self.max_sweeps), self.map.eval)
        return image, Embedding.identity(A.dim)

    def scalar_maps(self):
        return (self.map,)


class DirectSumIdentity(PhiTransform):
    """Phi(A) = A (+) I on H (+) H; the old space is the leading half."""

    label = "direct_sum_identity"

    @property
    def preserves_dimension(self) -> bool:
        return False

    def apply(self, A, space_budget):
        n = A.dim
        if 2 * n > space_budget:
            raise DimensionOverflow(2 * n, space_budget)
        out = np.eye(2 * n)
        out[:n, :n] = A.entries
        return HermitianOperator(out, A.sym_tol), Embedding.inclusion(n, 2 * n)

    def scalar_maps(self):
        return ()


class Composite(PhiTransform):
    """Apply the constituent transforms in list order."""

    def __init__(self, parts: Sequence[PhiTransform], label: Optional[str] = None):
        parts = tuple(parts)
        if not parts:
            raise ValueError("Composite transforms need at least one constituent")
        self.parts = parts
        self.label = label or "composite:[" + ", ".join(part.label for part in parts) + "]"

    @property
    def preserves_dimension(self) -> bool:
        return all(part.preserves_dimension for part in self.parts)

    @property
    def satisfies_axioms(self) -> bool:
        return all(getattr(part, "satisfies_axioms", True) for part in self.parts)

    def apply(self, A, space_budget):
        embedding = Embedding.identity(A.dim)
        current = A
        for part in self.parts:
            current, step = part.apply(current, space_budget)
            embedding = embedding.then(step)
        return current, embedding

    def scalar_maps(self):
        maps = []
        for part in self.parts:
            maps.extend(part.scalar_maps())
        return tuple(maps)


def _preserves_idempotents(f: SpectralMap) -> bool:
    for point in (0.0, 1.0):
        if not f.domain.contains(point):
            continue
        try:
            value = f.eval(point)
        except ArithmeticError:
            return False
        except ValueError:
            return False
        if abs(value - point) > AXIOM_TOL:
            return False
    return True


def parse_transform(descriptor, map_descriptor: Optional[str] = None,
                    escape_bound: float = DEFAULT_ESCAPE_BOUND, enforce_axioms: bool = True,
                    cluster_tol: float = DEFAULT_CLUSTER_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS) -> PhiTransform:
    """Build a transform from a scenario descriptor.

    ``descriptor`` is ``scalar`` (uses ``map_descriptor``), ``direct_sum_identity``,
    a map descriptor such as ``power:3``, ``composite:[a, b, ...]`` or a list of
    constituent descriptors.

    Raises:
        FormatError: If the descriptor cannot be resolved
    """

    def _single(item) -> PhiTransform:
        text = str(item).strip()
        if text == "direct_sum_identity":
            return DirectSumIdentity()
        if text == "scalar":
            if not map_descriptor:
                raise FormatError("Transform 'scalar' needs a 'map'")
            return ScalarMapTransform(parse_map(map_descriptor, escape_bound), enforce_axioms=enforce_axioms,
                                      cluster_tol=cluster_tol, max_sweeps=max_sweeps)
        if text.startswith("composite"):
            return _composite(text)
        return ScalarMapTransform(parse_map(text, escape_bound), enforce_axioms=enforce_axioms,
                                  cluster_tol=cluster_tol, max_sweeps=max_sweeps)

    def _composite(text: str) -> PhiTransform:
        _, _, body = text.partition(":")
        try:
            items = yaml.safe_load(body) if body.strip() else None
        except yaml.YAMLError as e:
            raise FormatError(f"Invalid composite list '{body}': {e}")
        if not isinstance(items, list) or not items:
            raise FormatError(f"Composite transform needs a non-empty list, got '{body}'")
        return Composite([_single(item) for item in items])

    if descriptor is None:
        descriptor = "scalar"
    if isinstance(descriptor, (list, tuple)):
        if not descriptor:
            raise FormatError("Composite transform needs a non-empty list")
        return Composite([_single(item) for item in descriptor])
    return _single(descriptor)


@dataclass(frozen=True)
class IterationConfig:
    """Budgets and tolerances of one iteration run."""

    epsilon: float = 1e-8
    cauchy_tol: float = 1e-4
    cauchy_window: int = 8
    max_stages: int = 100
    max_omega_limits: int = 3
    space_budget: int = 4096
    equivalence_mode: EquivalenceMode = EquivalenceMode.MODULO_TRIVIAL

    def __post_init__(self):
        if not self.epsilon > 0 or not self.cauchy_tol > 0:
            raise ValueError("epsilon and cauchy_tol must be positive")
        if self.cauchy_window < 2 or self.max_stages < 1 or self.max_omega_limits < 0 or self.space_budget < 1:
            raise ValueError("Iteration budgets out of range")
        object.__setattr__(self, "equivalence_mode", EquivalenceMode.parse(self.equivalence_mode))


@dataclass(frozen=True, eq=False)
class StageRecord:
    """One stage of a run.

    ``residual`` is ||Phi(A_stage) - A_stage|| under the run's equivalence
    mode (+inf when not comparable or not computed); ``depth`` counts the
    Phi applications from A_0.
    """

    stage: Stage
    operator: HermitianOperator
    embedding_from_previous: Embedding
    residual: float
    depth: int

    def __post_init__(self):
        if self.operator.dim != self.embedding_from_previous.to_dim:
            raise InvariantViolation("Stage operator dimension differs from its embedding target")
        if not self.residual >= 0:
            raise InvariantViolation(f"Negative or NaN residual {self.residual}")


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    """The stabilized operator A_inf = Phi^Omega(A) and the run that produced it."""

    a_infinity: HermitianOperator
    stabilization_stage: Stage
    final_residual: float
    equivalence_mode: EquivalenceMode
    trace: Tuple[StageRecord, ...]

    @property
    def omega_limits(self) -> int:
        return self.stabilization_stage.limits

    def stage_operators(self) -> List[HermitianOperator]:
        return [record.operator for record in self.trace]


def phi_step(T: PhiTransform, A: HermitianOperator, space_budget: int = 4096) -> Tuple[HermitianOperator, Embedding]:
    """Apply the transform once.

    Raises:
        DomainError: Propagated from the functional calculus
        DimensionOverflow: If the image would exceed space_budget
    """
    image, embedding = T.apply(A, space_budget)
    if image.dim > space_budget:
        raise DimensionOverflow(image.dim, space_budget)
    return image, embedding


def pad_to(A: HermitianOperator, dim: int) -> np.ndarray:
    """A (+) 0 on a space of dimension ``dim``."""
    if dim < A.dim:
        raise ShapeMismatch(f"Cannot pad a {A.dim}-dimensional operator down to {dim}")
    if dim == A.dim:
        return A.entries
    out = np.zeros((dim, dim))
    out[:A.dim, :A.dim] = A.entries
    return out


def aligned_distance(A: HermitianOperator, B: HermitianOperator) -> float:
    """||A - B|| after padding the smaller operator by zero."""
    if A.dim == B.dim:
        return operator_norm(A.entries - B.entries)
    small, large = (A, B) if A.dim < B.dim else (B, A)
    diff = np.array(large.entries, dtype=float)
    diff[:small.dim, :small.dim] -= small.entries
    return operator_norm(diff)


def _split_trivial(A: HermitianOperator, protected_dim: int, tol: float) -> int:
    """Smallest cut k >= protected_dim such that A[k:, k:] ~ I and A[:k, k:] ~ 0."""
    entries = A.entries
    n = A.dim
    for k in range(protected_dim, n):
        tail = entries[k:, k:]
        if np.max(np.abs(tail - np.eye(n - k))) > tol:
            continue
        if np.max(np.abs(entries[:k, k:])) > tol:
            continue
        return k
    return n


def canonical_form_modulo_trivial(A: HermitianOperator, protected_dim: int,
                                  tol: float = TRIVIAL_TOL) -> HermitianOperator:
    """Strip the maximal trailing identity summand lying outside the protected leading block."""
    if protected_dim > A.dim:
        raise ShapeMismatch(f"protected_dim {protected_dim} exceeds operator dimension {A.dim}")
    cut = _split_trivial(A, max(protected_dim, 0), tol)
    if cut == A.dim:
        return A
    return HermitianOperator(A.entries[:cut, :cut], A.sym_tol)


def _carries_unit_eigenvalue(A: HermitianOperator, tol: float) -> bool:
    return bool(np.any(np.abs(spectrum(A) - 1.0) <= tol))


def stage_residual(A: HermitianOperator, image: HermitianOperator, mode: EquivalenceMode,
                   tol: float = TRIVIAL_TOL) -> float:
    """Residual of the fixed-point equation for A given its image Phi(A)."""
    mode = EquivalenceMode.parse(mode)
    if image.dim == A.dim:
        return operator_norm(image.entries - A.entries)
    if mode is EquivalenceMode.STRICT:
        return NOT_COMPARABLE
    core = canonical_form_modulo_trivial(image, protected_dim=A.dim, tol=tol)
    if core.dim != A.dim:
        return NOT_COMPARABLE
    # an adjoined unit block is trivial only if A already has that eigenspace
    if not _carries_unit_eigenvalue(A, tol):
        return NOT_COMPARABLE
    return operator_norm(core.entries - A.entries)


def check_fixed_point(T: PhiTransform, A: HermitianOperator, mode=EquivalenceMode.MODULO_TRIVIAL,
                      space_budget: int = 4096) -> float:
    """Residual ||Phi(A) - A|| under the equivalence mode; +inf when not comparable."""
    try:
        image, _ = phi_step(T, A, space_budget)
    except DimensionOverflow:
        return NOT_COMPARABLE
    return stage_residual(A, image, mode)


def _is_cauchy(differences: Sequence[float], window: int, tol: float) -> bool:
    if len(differences) < window:
        return False
    recent = differences[-window:]
    if any(d > tol for d in recent):
        return False
    return all(later < earlier for earlier, later in zip(recent, recent[1:]))


def iterate_to_fixed_point(T: PhiTransform, A: HermitianOperator,
                           cfg: Optional[IterationConfig] = None) -> FixedPointResult:
    """Iterate T from A until the fixed-point equation holds within epsilon.

    Strict stabilization is checked first at every stage. Otherwise, once
    ``cauchy_window`` successive differences are each below ``cauchy_tol`` and
    strictly decreasing, an omega-limit stage is recorded (operator = last
    iterate) and successor steps resume from it with a fresh stage budget.

    Raises:
        NotStabilized: Budget exhausted, space budget hit or spectrum escaped; carries the trace
        DomainError: Propagated from the functional calculus
    """
    cfg = cfg or IterationConfig()
    mode = cfg.equivalence_mode
    escape_bound = T.escape_bound
    records: List[StageRecord] = []

    operator = A
    embedding = Embedding.identity(A.dim)
    stage = Stage.finite(0)
    depth = 0
    limits = 0
    steps_in_block = 0
    differences: List[float] = []

    logger.info(f"Iterating {T.label} from a {A.dim}-dimensional operator (epsilon={cfg.epsilon}, mode={mode.value})")

    while True:
        try:
            image, image_embedding = phi_step(T, operator, cfg.space_budget)
        except DimensionOverflow as e:
            records.append(StageRecord(stage, operator, embedding, NOT_COMPARABLE, depth))
            logger.warning(f"Space budget exhausted at stage {stage}: {e}")
            raise NotStabilized(f"space budget {cfg.space_budget} exhausted", records) from e

        residual = stage_residual(operator, image, mode)
        records.append(StageRecord(stage, operator, embedding, residual, depth))
        logger.debug(f"stage {stage}: dim={operator.dim} residual={residual:.3e}")

        if residual <= cfg.epsilon:
            return _finish(T, operator, stage, mode, records, cfg)

        differences.append(aligned_distance(operator, image))
        depth += 1

        if math.isfinite(escape_bound) and operator_norm(image.entries) > escape_bound:
            records.append(StageRecord(stage.successor(), image, image_embedding, NOT_COMPARABLE, depth))
            logger.warning(f"Spectrum escaped the bound {escape_bound:g} at stage {stage.successor()}")
            raise NotStabilized("escaped", records, residual)

        if limits < cfg.max_omega_limits and _is_cauchy(differences, cfg.cauchy_window, cfg.cauchy_tol):
            limits += 1
            stage = Stage.omega_limit(limits)
            steps_in_block = 0
            differences = []
            logger.info(f"Cauchy differences detected; taking limit stage {stage}")
        else:
            steps_in_block += 1
            if steps_in_block >= cfg.max_stages:
                records.append(StageRecord(stage.successor(), image, image_embedding, NOT_COMPARABLE, depth))
                logger.warning(f"No stabilization within {cfg.max_stages} stages (last stage {stage})")
                raise NotStabilized("stage budget exhausted", records, residual)
            stage = stage.successor()

        operator = image
        embedding = image_embedding


def _finish(T: PhiTransform, a_infinity: HermitianOperator, stage: Stage, mode: EquivalenceMode,
            records: List[StageRecord], cfg: IterationConfig) -> FixedPointResult:
    final = check_fixed_point(T, a_infinity, mode, cfg.space_budget)
    if not final <= cfg.epsilon:
        raise InvariantViolation(f"Post-hoc fixed-point check failed at stage {stage}: residual {final:.3e}")
    logger.info(f"Stabilized at stage {stage} with residual {final:.3e} (dim={a_infinity.dim})")
    return FixedPointResult(a_infinity, stage, final, mode, tuple(records))
