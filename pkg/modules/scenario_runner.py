"""Scenario loading and orchestration.

A scenario file (YAML) names an operator, a transform and the analyses to run.
Every key not given falls back to the loaded configuration, so the scenario
is fully resolved before the engine starts; invalid scenarios are rejected
here and never reach the engine.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml

from config import VERSION
from modules.analysis import (
    basin_decomposition,
    check_idempotent,
    check_limit_spectrum,
    compare_up_to_unitary,
    verify_commutation,
    verify_spectral_mapping,
)
from modules.errors import (
    DomainError,
    HypothesisViolation,
    NotContraction,
    NotStabilized,
    PhiError,
    ScenarioError,
)
from modules.semigroups import (
    check_stable_shift,
    koopman_shift_truncated,
    semigroup_at,
    semigroup_limit,
    yosida_power_limit,
)
from modules.spectral_core import DEFAULT_MAX_SWEEPS, HermitianOperator, eig_decompose, operator_norm, spectrum
from modules.spectral_maps import DEFAULT_PROBE_H, classify_attractor
from modules.transfinite_engine import (
    FixedPointResult,
    IterationConfig,
    PhiTransform,
    StageRecord,
    canonical_form_modulo_trivial,
    iterate_to_fixed_point,
    parse_transform,
)
from utils.config_loader import ConfigLoader, get_config
from utils.operator_io import parse_operator_file

logger = logging.getLogger("phi.scenario")

ANALYSES = (
    "spectral_mapping",
    "idempotence",
    "basins",
    "semigroup_limit",
    "yosida",
    "koopman",
    "commutation",
    "limit_spectrum",
)
SCALAR_ONLY_ANALYSES = frozenset({"spectral_mapping", "basins", "koopman", "limit_spectrum"})

# scenario key -> (config path, type)
SCENARIO_KEYS: Dict[str, Tuple[Optional[str], type]] = {
    "operator": (None, object),
    "map": (None, str),
    "transform": (None, object),
    "analyses": (None, list),
    "seed": (None, int),
    "output": (None, str),
    "epsilon": ("iteration.epsilon", float),
    "cauchy_tol": ("iteration.cauchy_tol", float),
    "max_stages": ("iteration.max_stages", int),
    "max_omega_limits": ("iteration.max_omega_limits", int),
    "space_budget": ("iteration.space_budget", int),
    "equivalence_mode": ("iteration.equivalence_mode", str),
    "enforce_axioms": ("iteration.enforce_axioms", bool),
    "escape_bound": ("orbits.escape_bound", float),
    "fixed_tol": ("orbits.fixed_tol", float),
    "max_iter": ("orbits.max_iter", int),
    "cluster_tol": ("numerics.cluster_tol", float),
    "kernel_tol": ("semigroups.kernel_tol", float),
    "yosida_t0": ("semigroups.yosida_t0", float),
    "yosida_max_power": ("semigroups.yosida_max_power", int),
    "koopman_blocks": ("semigroups.koopman_blocks", int),
}

DECAY_TIMES = (1.0, 2.0, 5.0, 10.0)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A fully resolved experiment description."""

    name: str
    operator: HermitianOperator
    operator_source: str
    transform: PhiTransform
    iteration: IterationConfig
    analyses: Tuple[str, ...]
    output: str
    seed: int
    params: Dict[str, Any]
    tolerances: Dict[str, float]
    path: Optional[str] = None

    def echo(self) -> Dict[str, Any]:
        """Scenario block of the run report; the output directory is left out."""
        echo = dict(self.params)
        echo.update({
            "name": self.name,
            "operator": self.operator_source,
            "operator_dim": self.operator.dim,
            "transform_label": self.transform.label,
            "analyses": list(self.analyses),
            "seed": self.seed,
        })
        return echo


def _coerce(value: Any, kind: type, key: str, name: str) -> Any:
    if kind is object:
        return value
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ScenarioError(f"Expected true or false, got {value!r}", name, key)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"Expected an integer, got {value!r}", name, key)
        return value
    if kind is float:
        if isinstance(value, bool):
            raise ScenarioError(f"Expected a number, got {value!r}", name, key)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"Expected a number, got {value!r}", name, key)
    if kind is list:
        if not isinstance(value, list):
            raise ScenarioError(f"Expected a list, got {value!r}", name, key)
        return value
    if not isinstance(value, kind):
        raise ScenarioError(f"Expected {kind.__name__}, got {value!r}", name, key)
    return value


def _resolve_operator(value: Any, base_dir: str, sym_tol: float, name: str) -> Tuple[HermitianOperator, str]:
    if value is None:
        raise ScenarioError("Scenario has no operator", name, "operator")
    try:
        if isinstance(value, list):
            try:
                matrix = np.array(value, dtype=float)
            except (TypeError, ValueError):
                raise ScenarioError("Inline operator must be a list of numeric rows", name, "operator")
            return HermitianOperator(matrix, sym_tol), "inline"
        if not isinstance(value, str):
            raise ScenarioError(f"Operator must be a file path or an inline matrix, got {value!r}", name, "operator")
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        if not os.path.exists(path) and os.path.exists(value):
            path = value
        return parse_operator_file(path, sym_tol), value
    except ScenarioError:
        raise
    except PhiError as e:
        raise ScenarioError(str(e), name, "operator") from e


def scenario_from_dict(data: Dict[str, Any], name: str = "scenario", base_dir: str = ".",
                       config: Optional[ConfigLoader] = None, path: Optional[str] = None) -> Scenario:
    """Resolve a scenario mapping against the configuration.

    Raises:
        ScenarioError: For unknown keys or analyses, unconstructible transforms,
            scalar-only analyses paired with dimension-changing transforms,
            invalid settings or a missing operator
        OSError: If the operator file cannot be read
    """
    config = config or get_config()
    if not isinstance(data, dict):
        raise ScenarioError("Scenario must be a mapping of keys to values", name)
    unknown = sorted(set(data) - set(SCENARIO_KEYS))
    if unknown:
        raise ScenarioError(f"Unknown scenario keys: {', '.join(map(str, unknown))}", name, str(unknown[0]))

    params: Dict[str, Any] = {}
    for key, (config_path, kind) in SCENARIO_KEYS.items():
        if config_path is None:
            continue
        value = data.get(key, config.get(config_path))
        params[key] = _coerce(value, kind, key, name)

    analyses = data.get("analyses", [])
    analyses = _coerce(analyses if analyses is not None else [], list, "analyses", name)
    bad = [item for item in analyses if item not in ANALYSES]
    if bad:
        raise ScenarioError(f"Unknown analyses: {', '.join(map(str, bad))}", name, "analyses")
    analyses = tuple(dict.fromkeys(analyses))

    seed = _coerce(data.get("seed", 0), int, "seed", name)
    output = data.get("output") or os.path.join(config.get("reporting.output_dir", "runs"), name)
    output = _coerce(output, str, "output", name)

    sym_tol = float(config.get("numerics.sym_tol"))
    params["max_sweeps"] = int(config.get("numerics.max_sweeps", DEFAULT_MAX_SWEEPS))
    operator, source = _resolve_operator(data.get("operator"), base_dir, sym_tol, name)

    map_descriptor = data.get("map")
    if map_descriptor is not None:
        map_descriptor = str(map_descriptor)
    descriptor = data.get("transform")
    if descriptor is None and map_descriptor is None:
        raise ScenarioError("Scenario needs a 'map' or a 'transform'", name, "map")
    try:
        transform = parse_transform(descriptor, map_descriptor, params["escape_bound"],
                                    params["enforce_axioms"], params["cluster_tol"], params["max_sweeps"])
    except PhiError as e:
        raise ScenarioError(str(e), name, "transform" if descriptor is not None else "map") from e

    if not transform.preserves_dimension:
        scalar_only = [item for item in analyses if item in SCALAR_ONLY_ANALYSES]
        if scalar_only:
            raise ScenarioError(f"Analyses {', '.join(scalar_only)} need a dimension-preserving transform, "
                                f"not '{transform.label}'", name, "analyses")

    try:
        iteration = IterationConfig(
            epsilon=params["epsilon"],
            cauchy_tol=params["cauchy_tol"],
            cauchy_window=int(config.get("iteration.cauchy_window", 8)),
            max_stages=params["max_stages"],
            max_omega_limits=params["max_omega_limits"],
            space_budget=params["space_budget"],
            equivalence_mode=params["equivalence_mode"],
        )
    except PhiError as e:
        raise ScenarioError(str(e), name, "equivalence_mode") from e
    except ValueError as e:
        raise ScenarioError(str(e), name) from e
    params["equivalence_mode"] = iteration.equivalence_mode.value
    params["cauchy_window"] = iteration.cauchy_window
    params["map"] = map_descriptor
    params["transform"] = descriptor if descriptor is not None else "scalar"

    tolerances = {
        "sym_tol": sym_tol,
        "cluster_tol": params["cluster_tol"],
        "epsilon": params["epsilon"],
        "cauchy_tol": params["cauchy_tol"],
        "fixed_tol": params["fixed_tol"],
        "kernel_tol": params["kernel_tol"],
        "spectral_mapping_tol": float(config.get("reporting.spectral_mapping_tol")),
        "idempotence_tol": float(config.get("reporting.idempotence_tol")),
        "unitary_tol": float(config.get("reporting.unitary_tol")),
    }
    params["confirmation_window"] = int(config.get("orbits.confirmation_window", 5))
    params["cycle_memory"] = int(config.get("orbits.cycle_memory", 64))
    params["probe_h"] = float(config.get("orbits.probe_h", DEFAULT_PROBE_H))

    return Scenario(name, operator, source, transform, iteration, analyses, output, seed, params, tolerances, path)


def load_scenario(path: str, config: Optional[ConfigLoader] = None) -> Scenario:
    """Read a YAML scenario file; the scenario is named after the file stem."""
    name = os.path.splitext(os.path.basename(path))[0]
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ScenarioError(f"Invalid YAML: {e}", name)
    if data is None:
        data = {}
    return scenario_from_dict(data, name, os.path.dirname(os.path.abspath(path)), config, path)


@dataclass
class RunReport:
    """Structured outcome of one scenario run.

    ``wall_time`` is kept out of equality and out of report.json.
    """

    scenario: Dict[str, Any]
    fixed_point: Dict[str, Any]
    analyses: Dict[str, Any]
    trace: List[Dict[str, Any]]
    tolerances: Dict[str, Any]
    version: str = VERSION
    wall_time: Optional[float] = field(default=None, compare=False)

    @property
    def stabilized(self) -> bool:
        return self.fixed_point.get("status") == "stabilized"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "fixed_point": self.fixed_point,
            "analyses": self.analyses,
            "trace": self.trace,
            "tolerances": self.tolerances,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], wall_time: Optional[float] = None) -> "RunReport":
        return cls(
            scenario=data.get("scenario", {}),
            fixed_point=data.get("fixed_point", {}),
            analyses=data.get("analyses", {}),
            trace=data.get("trace", []),
            tolerances=data.get("tolerances", {}),
            version=data.get("version", VERSION),
            wall_time=wall_time,
        )


def _floats(values) -> List[float]:
    return [float(value) for value in values]


def _trace_rows(trace) -> List[Dict[str, Any]]:
    return [{
        "stage": str(record.stage),
        "limits": record.stage.limits,
        "offset": record.stage.offset,
        "depth": record.depth,
        "dim": record.operator.dim,
        "residual": float(record.residual),
        "spectrum": _floats(spectrum(record.operator)),
    } for record in trace]


def _uniqueness(s: Scenario, result: FixedPointResult) -> Dict[str, Any]:
    """Rerun from the first successor stage and compare limits up to unitary equivalence."""
    if len(result.trace) < 2:
        return {"checked": False, "reason": "stabilized at the starting stage"}
    try:
        rerun = iterate_to_fixed_point(s.transform, result.trace[1].operator, s.iteration)
    except NotStabilized as e:
        return {"checked": False, "reason": e.reason}
    first, second = result.a_infinity, rerun.a_infinity
    if first.dim != second.dim:
        first = canonical_form_modulo_trivial(first, s.operator.dim)
        second = canonical_form_modulo_trivial(second, s.operator.dim)
    return {"checked": True, "equivalent": compare_up_to_unitary(first, second, s.tolerances["unitary_tol"])}


def _fixed_point_block(s: Scenario, result: Optional[FixedPointResult], failure: Optional[NotStabilized],
                       trace) -> Dict[str, Any]:
    if result is not None:
        return {
            "status": "stabilized",
            "stage": str(result.stabilization_stage),
            "limits": result.stabilization_stage.limits,
            "offset": result.stabilization_stage.offset,
            "omega_limits": result.omega_limits,
            "final_residual": float(result.final_residual),
            "equivalence_mode": result.equivalence_mode.value,
            "dim": result.a_infinity.dim,
            "spectrum": _floats(spectrum(result.a_infinity)),
            "uniqueness": _uniqueness(s, result),
        }
    return {
        "status": "not_stabilized",
        "reason": failure.reason,
        "last_residual": float(failure.last_residual),
        "stages_recorded": len(trace),
        "last_stage": str(trace[-1].stage) if trace else None,
    }


def _skipped(reason: str) -> Dict[str, Any]:
    return {"skipped": reason}


def _analysis_spectral_mapping(s, result, trace):
    report = verify_spectral_mapping(trace, s.transform.spectral_map(), s.tolerances["spectral_mapping_tol"])
    return report.to_dict()


def _analysis_idempotence(s, result, trace):
    if result is None:
        return _skipped("not stabilized")
    tol = s.tolerances["idempotence_tol"]
    is_projection, defect = check_idempotent(result.a_infinity, tol)
    return {"is_projection": is_projection, "defect": defect, "tolerance": tol}


def _analysis_basins(s, result, trace):
    D = eig_decompose(s.operator, s.params["cluster_tol"], s.params["max_sweeps"])
    f = s.transform.spectral_map()
    basins = basin_decomposition(D, f, s.params["fixed_tol"], s.params["max_iter"],
                                 s.params["confirmation_window"], s.params["cycle_memory"])
    block = basins.to_dict()
    for component in block["components"]:
        try:
            kind = classify_attractor(f, component["attractor"], s.params["probe_h"], s.params["fixed_tol"])
            component["stability"] = kind.value
        except DomainError:
            # probe points outside the map's domain
            component["stability"] = None
    if result is not None and basins.escaped_dim == 0 and result.a_infinity.dim == D.dim:
        block["reconstruction_error"] = operator_norm(result.a_infinity.entries - basins.reconstruct())
    return block


def _analysis_semigroup_limit(s, result, trace):
    D = eig_decompose(s.operator, s.params["cluster_tol"], s.params["max_sweeps"])
    try:
        limit = semigroup_limit(D, s.params["kernel_tol"])
    except NotContraction as e:
        return {"error": type(e).__name__, "message": str(e)}
    checks = []
    for t in DECAY_TIMES:
        distance = operator_norm(semigroup_at(D, t).entries - limit.projection.entries)
        bound = limit.decay_bound(t)
        checks.append({"t": t, "distance": distance, "bound": bound, "passed": distance <= bound + 1e-12})
    block = limit.to_dict()
    block["decay_checks"] = checks
    return block


def _analysis_yosida(s, result, trace):
    D = eig_decompose(s.operator, s.params["cluster_tol"], s.params["max_sweeps"])
    try:
        power = yosida_power_limit(D, s.params["yosida_t0"], s.params["yosida_max_power"],
                                   s.tolerances["idempotence_tol"], s.params["kernel_tol"])
    except HypothesisViolation as e:
        return {"error": type(e).__name__, "message": str(e)}
    block = power.to_dict()
    projection = semigroup_limit(D, s.params["kernel_tol"]).projection
    block["semigroup_agreement"] = operator_norm(power.limit.entries - projection.entries)
    return block


def _analysis_koopman(s, result, trace):
    K = koopman_shift_truncated(s.transform, s.operator, s.params["koopman_blocks"], s.iteration.space_budget)
    block = K.to_dict()
    D = eig_decompose(s.operator, s.params["cluster_tol"], s.params["max_sweeps"])
    stable = [basis for value, basis in zip(D.eigenvalues, D.bases) if abs(value - 1.0) <= s.params["fixed_tol"]]
    if not stable:
        block["stable_shift"] = None
        return block
    rng = np.random.default_rng(s.seed)
    basis = np.hstack(stable)
    x0 = basis @ rng.standard_normal(basis.shape[1])
    block["stable_shift"] = check_stable_shift(K, x0).to_dict()
    return block


def _analysis_commutation(s, result, trace):
    if result is None:
        return _skipped("not stabilized")
    return verify_commutation(result.trace, result.a_infinity, s.tolerances["idempotence_tol"]).to_dict()


def _analysis_limit_spectrum(s, result, trace):
    if result is None:
        return _skipped("not stabilized")
    tol = s.tolerances["idempotence_tol"]
    passed, defect = check_limit_spectrum(result.a_infinity, s.transform.spectral_map(), tol)
    return {"passed": passed, "max_defect": defect, "tolerance": tol}


ANALYSIS_RUNNERS: Dict[str, Callable[[Scenario, Optional[FixedPointResult], List[StageRecord]], Dict[str, Any]]] = {
    "spectral_mapping": _analysis_spectral_mapping,
    "idempotence": _analysis_idempotence,
    "basins": _analysis_basins,
    "semigroup_limit": _analysis_semigroup_limit,
    "yosida": _analysis_yosida,
    "koopman": _analysis_koopman,
    "commutation": _analysis_commutation,
    "limit_spectrum": _analysis_limit_spectrum,
}


def run_scenario(s: Scenario) -> RunReport:
    """Run the iteration and every requested analysis.

    NotStabilized is reported, not raised. Other library errors are wrapped
    in ScenarioError carrying the scenario name.
    """
    started = time.perf_counter()
    logger.info(f"Running scenario {s.name}: {s.transform.label} on a {s.operator.dim}-dimensional operator")

    try:
        result: Optional[FixedPointResult] = None
        failure: Optional[NotStabilized] = None
        try:
            result = iterate_to_fixed_point(s.transform, s.operator, s.iteration)
            trace = list(result.trace)
        except NotStabilized as e:
            failure = e
            trace = list(e.trace)
            logger.warning(f"Scenario {s.name} did not stabilize: {e.reason}")

        fixed_point = _fixed_point_block(s, result, failure, trace)
        analyses = {}
        for name in s.analyses:
            logger.debug(f"Scenario {s.name}: running analysis {name}")
            analyses[name] = ANALYSIS_RUNNERS[name](s, result, trace)
        rows = _trace_rows(trace)
    except ScenarioError:
        raise
    except PhiError as e:
        raise ScenarioError(f"{type(e).__name__}: {e}", s.name) from e

    wall_time = time.perf_counter() - started
    logger.info(f"Scenario {s.name} finished in {wall_time:.3f}s ({fixed_point['status']})")
    return RunReport(s.echo(), fixed_point, analyses, rows, dict(s.tolerances), VERSION, wall_time)
