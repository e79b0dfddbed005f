"""Scalar dynamics of spectral transforms.

A SpectralMap f governs how a transform moves the spectrum. This module
iterates f on single spectral values, finds and classifies fixed points, and
builds the named maps scenario files refer to.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

from modules.errors import DomainError, FormatError, InvariantViolation, NotAFixedPoint
from modules.spectral_core import Interval

logger = logging.getLogger("phi.maps")

DEFAULT_ESCAPE_BOUND = 1e12
DEFAULT_FIXED_TOL = 1e-10
DEFAULT_MAX_ITER = 10000
CONFIRMATION_WINDOW = 5
CYCLE_MEMORY = 64
DEFAULT_PROBE_H = 1e-4

# exp(x) overflows a double just above x = 709.78
_EXP_ARGUMENT_LIMIT = 700.0


@dataclass(frozen=True)
class SpectralMap:
    """A real map f acting on spectral values.

    Args:
        func: The raw scalar function
        name: Label used in reports and descriptors
        escape_bound: Orbit magnitude beyond which an orbit counts as escaping
        domain: Interval on which func is total and finite
    """

    func: Callable[[float], float]
    name: str
    escape_bound: float = DEFAULT_ESCAPE_BOUND
    domain: Interval = field(default_factory=Interval)

    def __post_init__(self):
        if not self.escape_bound > 0:
            raise ValueError(f"escape_bound must be positive, got {self.escape_bound}")

    def eval(self, x: float) -> float:
        """Evaluate f at x, enforcing the domain and finiteness."""
        if not self.domain.contains(x):
            raise DomainError(f"{x!r} lies outside the domain {self.domain} of map '{self.name}'")
        value = _raw_step(self, x)
        if not math.isfinite(value):
            raise DomainError(f"Map '{self.name}' is not finite at {x!r}")
        return value

    __call__ = eval

    def with_escape_bound(self, escape_bound: float) -> "SpectralMap":
        return SpectralMap(self.func, self.name, escape_bound, self.domain)


def _raw_step(f: SpectralMap, x: float) -> float:
    """One application of f.func; overflow is reported as +inf instead of raising."""
    try:
        return float(f.func(float(x)))
    except OverflowError:
        return math.inf
    except (ArithmeticError, ValueError, TypeError) as e:
        raise DomainError(f"Map '{f.name}' undefined at {x!r}: {e}") from e


class OrbitKind(str, Enum):
    CONVERGED = "converged"
    ESCAPED = "escaped"
    CYCLING = "cycling"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class OrbitOutcome:
    """Fate of a scalar orbit lambda, f(lambda), f(f(lambda)), ...

    ``steps_used`` counts iterations before the orbit settled (for Converged,
    before the confirmation window began); ``evaluations`` counts every map
    application performed.
    """

    kind: OrbitKind
    steps_used: int
    evaluations: int
    limit: Optional[float] = None
    escaped_at: Optional[int] = None
    period: Optional[int] = None
    orbit: Tuple[float, ...] = ()

    @property
    def converged(self) -> bool:
        return self.kind is OrbitKind.CONVERGED


class AttractorKind(str, Enum):
    ATTRACTING = "attracting"
    REPELLING = "repelling"
    NEUTRAL = "neutral"


def orbit(f: SpectralMap, lam: float, steps: int) -> List[float]:
    """Return the orbit prefix [lam, f(lam), ..., f^steps(lam)] with no escape handling."""
    values = [float(lam)]
    x = float(lam)
    for _ in range(steps):
        x = _raw_step(f, x)
        values.append(x)
    return values


def scalar_limit(f: SpectralMap, lam: float, fixed_tol: float = DEFAULT_FIXED_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, window: int = CONFIRMATION_WINDOW,
                 memory: int = CYCLE_MEMORY, keep_orbit: bool = False) -> OrbitOutcome:
    """Iterate lam -> f(lam) until the orbit converges, escapes or cycles.

    Convergence is declared after ``window`` consecutive moves shorter than
    fixed_tol; the limit is the last point whose image moved less than
    fixed_tol. A recurrence at lag 2..memory counts as a cycle only when it
    returns within fixed_tol and within sqrt(fixed_tol) times the current move.

    Args:
        f: Spectral map
        lam: Starting spectral value (must lie in f.domain)
        fixed_tol: Fixed-point tolerance
        max_iter: Iteration budget
        window: Confirmation window length
        memory: Number of stored orbit values searched for recurrences
        keep_orbit: Attach the computed orbit to the outcome

    Returns:
        OrbitOutcome

    Raises:
        DomainError: If the orbit leaves f.domain without escaping
    """
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    if not f.domain.contains(lam):
        raise DomainError(f"{lam!r} lies outside the domain {f.domain} of map '{f.name}'")

    x = float(lam)
    history = deque([x], maxlen=memory)
    visited = [x] if keep_orbit else None
    separation = math.sqrt(fixed_tol)
    calm = 0

    def _done(**kwargs) -> OrbitOutcome:
        return OrbitOutcome(orbit=tuple(visited) if visited is not None else (), **kwargs)

    for step in range(1, max_iter + 1):
        y = _raw_step(f, x)
        if visited is not None:
            visited.append(y)
        if not math.isfinite(y) or abs(y) > f.escape_bound:
            return _done(kind=OrbitKind.ESCAPED, steps_used=step, evaluations=step, escaped_at=step)
        if not f.domain.contains(y):
            raise DomainError(f"Orbit of {lam!r} under '{f.name}' left the domain {f.domain} at step {step}")

        if abs(y - x) < fixed_tol:
            calm += 1
            if calm >= window:
                outcome = _done(kind=OrbitKind.CONVERGED, steps_used=step - calm, evaluations=step, limit=x)
                _assert_fixed(f, x, fixed_tol)
                return outcome
        else:
            calm = 0
            recurrence_tol = min(fixed_tol, separation * abs(y - x))
            for lag in range(2, len(history) + 1):
                if abs(y - history[-lag]) <= recurrence_tol:
                    return _done(kind=OrbitKind.CYCLING, steps_used=step, evaluations=step, period=lag)
        history.append(y)
        x = y

    return _done(kind=OrbitKind.UNDECIDED, steps_used=max_iter, evaluations=max_iter)


def _assert_fixed(f: SpectralMap, mu: float, fixed_tol: float) -> None:
    defect = abs(_raw_step(f, mu) - mu)
    if not defect <= fixed_tol:
        raise InvariantViolation(f"Converged value {mu!r} is not a fixed point of '{f.name}' (defect {defect:.3e})")


def fixed_points_on(f: SpectralMap, spectrum: Iterable[float], fixed_tol: float = DEFAULT_FIXED_TOL) -> List[float]:
    """Spectral values fixed by f within fixed_tol, ascending and deduplicated."""
    fixed = sorted(float(xi) for xi in spectrum if abs(f.eval(float(xi)) - float(xi)) <= fixed_tol)
    unique: List[float] = []
    for xi in fixed:
        if not unique or xi - unique[-1] > fixed_tol:
            unique.append(xi)
    return unique


def classify_attractor(f: SpectralMap, xi: float, probe_h: float = DEFAULT_PROBE_H,
                       fixed_tol: float = DEFAULT_FIXED_TOL) -> AttractorKind:
    """Classify a fixed point by a central-difference estimate of |f'(xi)|.

    Attracting below 1 - h, repelling above 1 + h, neutral in between.
    """
    if not probe_h > 0:
        raise ValueError(f"probe_h must be positive, got {probe_h}")
    if abs(f.eval(xi) - xi) > fixed_tol:
        raise NotAFixedPoint(f"{xi!r} is not a fixed point of '{f.name}' within {fixed_tol}")
    for probe in (xi - probe_h, xi + probe_h):
        if not f.domain.contains(probe):
            raise DomainError(f"Probe {probe!r} lies outside the domain {f.domain} of map '{f.name}'")

    slope = abs((f.eval(xi + probe_h) - f.eval(xi - probe_h)) / (2.0 * probe_h))
    if slope < 1.0 - probe_h:
        return AttractorKind.ATTRACTING
    if slope > 1.0 + probe_h:
        return AttractorKind.REPELLING
    return AttractorKind.NEUTRAL


def _identity(x: float) -> float:
    return x


def _square(x: float) -> float:
    return x * x


def _power(x: float, k: int) -> float:
    return x ** k


def _affine(x: float, a: float, b: float) -> float:
    return a * x + b


def _exp_scale(x: float, t: float) -> float:
    return math.exp(t * x)


def _yosida(x: float, t0: float) -> float:
    return 1.0 + t0 * x


def _parse_floats(text: str, count: int, descriptor: str) -> List[float]:
    parts = [part.strip() for part in text.split(",")]
    if len(parts) != count:
        raise FormatError(f"Map '{descriptor}' expects {count} parameter(s), got {len(parts)}")
    try:
        values = [float(part) for part in parts]
    except ValueError:
        raise FormatError(f"Map '{descriptor}' has a non-numeric parameter")
    if not all(math.isfinite(value) for value in values):
        raise FormatError(f"Map '{descriptor}' has a non-finite parameter")
    return values


def parse_map(descriptor: str, escape_bound: float = DEFAULT_ESCAPE_BOUND) -> SpectralMap:
    """Build a named map from its descriptor.

    Supported: ``identity``, ``square``, ``power:k`` (integer k >= 2),
    ``affine:a,b``, ``exp_scale:t``, ``yosida:t0`` (t0 > 0).

    Raises:
        FormatError: For unknown names or invalid parameters
    """
    text = str(descriptor).strip()
    name, _, params = text.partition(":")
    name = name.strip().lower()

    if name in ("identity", "square") and params:
        raise FormatError(f"Map '{name}' takes no parameters")
    if name == "identity":
        return SpectralMap(_identity, "identity", escape_bound)
    if name == "square":
        return SpectralMap(_square, "square", escape_bound)
    if name == "power":
        try:
            k = int(params)
        except ValueError:
            raise FormatError(f"Map '{text}' needs an integer exponent")
        if k < 2:
            raise FormatError(f"Map '{text}' needs an exponent k >= 2")
        return SpectralMap(partial(_power, k=k), f"power:{k}", escape_bound)
    if name == "affine":
        a, b = _parse_floats(params, 2, text)
        return SpectralMap(partial(_affine, a=a, b=b), f"affine:{a!r},{b!r}", escape_bound)
    if name == "exp_scale":
        (t,) = _parse_floats(params, 1, text)
        if t > 0:
            domain = Interval(-math.inf, _EXP_ARGUMENT_LIMIT / t)
        elif t < 0:
            domain = Interval(_EXP_ARGUMENT_LIMIT / t, math.inf)
        else:
            domain = Interval()
        return SpectralMap(partial(_exp_scale, t=t), f"exp_scale:{t!r}", escape_bound, domain)
    if name == "yosida":
        (t0,) = _parse_floats(params, 1, text)
        if t0 <= 0:
            raise FormatError(f"Map '{text}' needs t0 > 0")
        return SpectralMap(partial(_yosida, t0=t0), f"yosida:{t0!r}", escape_bound)

    raise FormatError(f"Unknown spectral map '{text}'")


def _composed(x: float, maps: Tuple[SpectralMap, ...]) -> float:
    for f in maps:
        if not f.domain.contains(x):
            raise ValueError(f"{x!r} lies outside the domain of '{f.name}'")
        x = f.func(x)
    return x


def compose_maps(maps: Sequence[SpectralMap]) -> SpectralMap:
    """Compose maps in list order: the first map is applied first."""
    maps = tuple(maps)
    if not maps:
        raise ValueError("compose_maps needs at least one map")
    if len(maps) == 1:
        return maps[0]
    return SpectralMap(
        partial(_composed, maps=maps),
        " then ".join(f.name for f in maps),
        min(f.escape_bound for f in maps),
        maps[0].domain,
    )
