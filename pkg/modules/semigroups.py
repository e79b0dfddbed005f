"""Continuous-time and shift-space constructions.

Covers the semigroup T(t) = exp(tA) and its long-time kernel projection, the
power limit (I + t0 A)^n, the truncated Koopman shift that advances a
Phi-orbit one slot, and the right-shift semigroup on grid functions.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import (
    EmptyResult,
    HypothesisViolation,
    InvariantViolation,
    NotContraction,
    NotGridAligned,
    SemigroupOverflow,
    ShapeMismatch,
)
from modules.spectral_core import (
    HermitianOperator,
    Interval,
    SpectralDecomposition,
    apply_calculus,
    spectral_projection,
)
from modules.transfinite_engine import PhiTransform, phi_step

logger = logging.getLogger("phi.semigroups")

DEFAULT_KERNEL_TOL = 1e-10
DEFAULT_YOSIDA_MAX_POWER = 10000

# largest t * lambda with a finite exp
_EXP_LIMIT = math.log(np.finfo(float).max)
_ALIGNMENT_TOL = 1e-9


def semigroup_at(D: SpectralDecomposition, t: float) -> HermitianOperator:
    """T(t) = exp(tA) through the functional calculus.

    Raises:
        ValueError: If t < 0
        SemigroupOverflow: If t * lambda_max leaves the exponent range
    """
    if not t >= 0:
        raise ValueError(f"Semigroup time must be nonnegative, got {t}")
    if t == 0:
        return HermitianOperator.identity(D.dim)
    top = float(np.max(D.eigenvalues))
    if t * top > _EXP_LIMIT:
        raise SemigroupOverflow(f"exp({t} * {top}) overflows")
    return apply_calculus(D, lambda x: math.exp(t * x))


@dataclass(frozen=True, eq=False)
class SemigroupLimit:
    """Kernel projection P = lim exp(tA) with the spectral gap controlling the decay."""

    projection: HermitianOperator
    gap: float
    kernel_tol: float

    def decay_bound(self, t: float) -> float:
        """Upper bound on ||exp(tA) - P||."""
        return math.exp(-self.gap * t)

    @property
    def kernel_dim(self) -> int:
        return int(round(float(np.trace(self.projection.entries))))

    def to_dict(self) -> Dict[str, Any]:
        return {"gap": self.gap, "kernel_dim": self.kernel_dim, "kernel_tol": self.kernel_tol}


def _require_contraction(D: SpectralDecomposition, tol: float) -> None:
    top = float(np.max(D.eigenvalues))
    if top > tol:
        raise NotContraction(f"Generator has spectrum up to {top:.6g} > 0")


def semigroup_limit(D: SpectralDecomposition, tol: float = DEFAULT_KERNEL_TOL) -> SemigroupLimit:
    """Long-time limit of exp(tA) for a generator with spectrum in (-inf, 0].

    Eigenvalues in [-tol, tol] count as kernel.

    Raises:
        NotContraction: If lambda_max > tol
    """
    _require_contraction(D, tol)
    projection = spectral_projection(D, Interval(-tol, tol))
    decaying = [float(value) for value in D.eigenvalues if value < -tol]
    gap = -max(decaying) if decaying else 0.0
    logger.debug(f"Semigroup limit: kernel rank {round(float(np.trace(projection.entries)))}, gap {gap:.6g}")
    return SemigroupLimit(projection, gap, tol)


@dataclass(frozen=True, eq=False)
class YosidaLimit:
    """Result of the power limit (I + t0 A)^n -> P.

    ``converged_at`` is None when n_max powers were not enough; ``limit`` is
    then the n_max-th power.
    """

    limit: HermitianOperator
    converged_at: Optional[int]
    distance: float
    t0: float
    n_max: int

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "converged_at": self.converged_at,
            "distance": self.distance,
            "t0": self.t0,
            "n_max": self.n_max,
        }


def yosida_power_limit(D: SpectralDecomposition, t0: float, n_max: int = DEFAULT_YOSIDA_MAX_POWER,
                       tol: float = 1e-8, kernel_tol: float = DEFAULT_KERNEL_TOL) -> YosidaLimit:
    """First power n with ||(I + t0 A)^n - P_ker|| <= tol.

    The factor 1 + t0*lambda must lie in (0, 1] for every eigenvalue; kernel
    eigenvalues within kernel_tol are taken as exactly zero.

    Raises:
        HypothesisViolation: If some 1 + t0*lambda falls outside (0, 1]
    """
    if not t0 > 0:
        raise ValueError(f"t0 must be positive, got {t0}")
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, got {n_max}")

    eigenvalues = np.array(D.eigenvalues, dtype=float)
    in_kernel = np.abs(eigenvalues) <= kernel_tol
    factors = np.where(in_kernel, 1.0, 1.0 + t0 * eigenvalues)
    bad = [float(value) for value, factor in zip(eigenvalues, factors) if not 0.0 < factor <= 1.0]
    if bad:
        raise HypothesisViolation(f"1 + t0*lambda leaves (0, 1] for eigenvalues {bad} (t0={t0})")
    target = in_kernel.astype(float)

    power = np.ones_like(factors)
    converged_at = None
    distance = math.inf
    for n in range(1, n_max + 1):
        power = power * factors
        distance = float(np.max(np.abs(power - target)))
        if distance <= tol:
            converged_at = n
            break
    if converged_at is None:
        logger.warning(f"Power limit not reached within {n_max} powers (distance {distance:.3e})")

    result = np.zeros((D.dim, D.dim))
    for weight, projection in zip(power, D.projections):
        result += weight * projection
    limit = HermitianOperator(0.5 * (result + result.T))
    return YosidaLimit(limit, converged_at, distance, t0, n_max)


@dataclass(frozen=True, eq=False)
class KoopmanBlockOperator:
    """Truncated shift on sequences (x_0, ..., x_{N-1}) of block_dim-vectors.

    Block row n (n >= 1) holds the stage map S_n in block column n - 1;
    every other block is zero.
    """

    block_count: int
    block_dim: int
    matrix: np.ndarray
    stage_maps: Tuple[np.ndarray, ...]

    def __post_init__(self):
        n, d = self.block_count, self.block_dim
        if self.matrix.shape != (n * d, n * d):
            raise InvariantViolation(f"Koopman matrix has shape {self.matrix.shape}, expected {(n * d, n * d)}")
        for row in range(n):
            for col in range(n):
                if col == row - 1:
                    continue
                if np.any(self.matrix[row * d:(row + 1) * d, col * d:(col + 1) * d]):
                    raise InvariantViolation(f"Nonzero block ({row}, {col}) off the first subdiagonal")
        if np.any(np.linalg.matrix_power(self.matrix, n)):
            raise InvariantViolation("Truncated Koopman operator is not nilpotent")

    def apply(self, sequence) -> np.ndarray:
        """Map a sequence given as an (N, d) array (or flat N*d vector) to its image, shaped (N, d)."""
        flat = np.asarray(sequence, dtype=float).reshape(-1)
        if flat.size != self.block_count * self.block_dim:
            raise ShapeMismatch(f"Sequence has {flat.size} entries, expected {self.block_count * self.block_dim}")
        return (self.matrix @ flat).reshape(self.block_count, self.block_dim)

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "block_count": self.block_count,
            "block_dim": self.block_dim,
            "spectral_norm": self.spectral_norm,
            "nilpotent": True,
        }


def koopman_stage_maps(T: PhiTransform, A: HermitianOperator, count: int,
                       space_budget: int = 4096) -> List[np.ndarray]:
    """S_n = Phi^n(A) for n = 1..count."""
    maps = []
    current = A
    for _ in range(count):
        current, _ = phi_step(T, current, space_budget)
        maps.append(np.array(current.entries))
    return maps


def koopman_shift_truncated(T: PhiTransform, A: HermitianOperator, N: int,
                            space_budget: int = 4096) -> KoopmanBlockOperator:
    """Assemble the N-slot truncated shift (x_0, x_1, ...) -> (0, S_1 x_0, S_2 x_1, ...).

    Raises:
        ShapeMismatch: For dimension-changing transforms
    """
    if not T.preserves_dimension:
        raise ShapeMismatch(f"Transform '{T.label}' changes dimension; the shift needs fixed-size slots")
    if N < 2:
        raise ValueError(f"The truncated shift needs at least 2 blocks, got {N}")
    d = A.dim
    stage_maps = koopman_stage_maps(T, A, N - 1, space_budget)
    matrix = np.zeros((N * d, N * d))
    for n, block in enumerate(stage_maps, start=1):
        matrix[n * d:(n + 1) * d, (n - 1) * d:n * d] = block
    return KoopmanBlockOperator(N, d, matrix, tuple(stage_maps))


@dataclass(frozen=True, eq=False)
class StableShiftCheck:
    image: np.ndarray
    expected: np.ndarray
    matches: bool
    is_fixed: bool
    tolerance: float = 0.0

    @property
    def deviation(self) -> float:
        return float(np.max(np.abs(self.image - self.expected)))

    def to_dict(self) -> Dict[str, Any]:
        return {"matches_shifted_sequence": self.matches, "deviation": self.deviation,
                "tolerance": self.tolerance, "is_fixed": self.is_fixed}


def check_stable_shift(K: KoopmanBlockOperator, x0, tol: Optional[float] = None) -> StableShiftCheck:
    """Apply K to the constant sequence (x0, ..., x0).

    For x0 in the stable subspace the image is (0, x0, ..., x0) up to the
    round-off of the stage maps; the match is judged within ``tol``, which
    defaults to 100 * N * d * eps * max(1, |x0|_inf). The constant sequence
    itself is never fixed unless x0 = 0.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != K.block_dim:
        raise ShapeMismatch(f"x0 has {x0.size} entries, expected {K.block_dim}")
    if tol is None:
        tol = 100.0 * K.block_count * K.block_dim * np.finfo(float).eps * max(1.0, float(np.max(np.abs(x0))))
    sequence = np.tile(x0, (K.block_count, 1))
    image = K.apply(sequence)
    expected = np.vstack([np.zeros((1, K.block_dim)), sequence[:-1]])
    is_fixed = bool(np.array_equal(image, sequence))
    if is_fixed and np.any(x0):
        raise InvariantViolation("A nonzero constant sequence is fixed by the truncated shift")
    matches = bool(np.max(np.abs(image - expected)) <= tol)
    return StableShiftCheck(image, expected, matches, is_fixed, float(tol))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of an H-valued function at t = 0, h, 2h, ..., (M-1)h."""

    step: float
    samples: np.ndarray

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"Grid step must be positive and finite, got {self.step}")
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ShapeMismatch(f"Grid samples must form a non-empty (M, d) array, got shape {samples.shape}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.length)


def shift_evolution(g: GridFunction, s: float) -> GridFunction:
    """Right-shift semigroup: (U(s)g)(t) = g(t + s) on the sample window.

    Raises:
        NotGridAligned: If s is not a nonnegative multiple of the step
        EmptyResult: If the shift drops every sample
    """
    ratio = s / g.step
    k = int(round(ratio))
    if s < 0 or abs(ratio - k) > _ALIGNMENT_TOL * max(1.0, abs(ratio)):
        raise NotGridAligned(f"Shift {s} is not a nonnegative multiple of the step {g.step}")
    if k >= g.length:
        raise EmptyResult(f"Shift by {k} samples leaves nothing of a {g.length}-sample grid function")
    if k == 0:
        return g
    return GridFunction(g.step, g.samples[k:])


def orbit_grid_function(stage_maps: Sequence[np.ndarray], x0, step: float = 1.0) -> GridFunction:
    """Sample the vector orbit x_n = S_n x_{n-1} at t = n * step."""
    x = np.asarray(x0, dtype=float).reshape(-1)
    samples = [x]
    for block in stage_maps:
        if block.shape != (x.size, x.size):
            raise ShapeMismatch(f"Stage map of shape {block.shape} does not act on {x.size}-vectors")
        x = block @ x
        samples.append(x)
    return GridFunction(step, np.vstack(samples))
