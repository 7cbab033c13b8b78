"""
Experiment configuration files.

A configuration is a YAML document describing one experiment, or a batch:

    defaults:
      integrator: {rel_tol: 1e-10, abs_tol: 1e-10}
    experiments:
      - name: pu_k1
        system: {name: pais_uhlenbeck, params: {w1: 1, w2: 2}}
        family: timeshift
        initial: [[1], [0], [-1], [0]]
        t_span: [0, 50]
        constants: [k1, pu_k1]

Each batch entry is deep-merged over `defaults`. Command-line flags override
file values, which override the dataclass defaults.
"""

import copy
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from .core import ParameterError
from .families import FAMILIES
from .integrate import IntegratorConfig
from .systems import SYSTEMS

logger = logging.getLogger(__name__)

OUTPUT_ENV_VAR = "NONLOCAL_CONSTANTS_OUTPUT"
DEFAULT_OUTPUT_DIR = "results"
DEFAULT_DRIFT_BUDGET = 1e-6
KNOWN_CHECKS = ("potential", "rho", "mu", "monotonicity", "energy_decay")
KNOWN_FORMATS = ("csv",)

_INTEGRATOR_KEYS = {"rel_tol", "abs_tol", "initial_step", "max_steps", "blowup_threshold", "direction"}
_TOP_LEVEL_KEYS = {
    "name", "system", "family", "initial", "t_span", "integrator", "constants", "rho",
    "drift_budget", "checks", "strict", "evaluate_every", "output",
}


class ConfigError(ValueError):
    """Configuration file cannot be parsed or is inconsistent."""


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV_VAR, DEFAULT_OUTPUT_DIR))


@dataclass(frozen=True)
class ExperimentConfig:
    """One fully-resolved experiment."""

    name: str
    system: str
    initial: Tuple[Tuple[float, ...], ...]
    t_span: Tuple[float, float]
    system_params: Dict[str, Any] = field(default_factory=dict)
    family: Optional[str] = None
    family_params: Dict[str, Any] = field(default_factory=dict)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    constants: Tuple[str, ...] = ()
    rho: Optional[Union[str, Tuple[float, ...]]] = None
    drift_budget: Union[float, Dict[str, float]] = DEFAULT_DRIFT_BUDGET
    checks: Tuple[str, ...] = ()
    strict: bool = True
    evaluate_every: int = 1
    output_dir: Path = field(default_factory=default_output_dir)
    output_format: str = "csv"

    @property
    def t0(self) -> float:
        return self.t_span[0]

    @property
    def t_end(self) -> float:
        return self.t_span[1]

    def budget_for(self, constant: str) -> float:
        if isinstance(self.drift_budget, dict):
            return float(self.drift_budget.get(constant, DEFAULT_DRIFT_BUDGET))
        return float(self.drift_budget)


def _deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _as_float(value: Any, what: str) -> float:
    # YAML 1.1 reads 1e-10 (no dot) as a string
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {value!r}")


def _named(entry: Any, what: str) -> Tuple[Optional[str], Dict[str, Any]]:
    """Accept `name` or `{name: ..., params: {...}}`."""
    if entry is None:
        return None, {}
    if isinstance(entry, str):
        return entry, {}
    if isinstance(entry, Mapping):
        if "name" not in entry:
            raise ConfigError(f"{what} mapping needs a 'name' key")
        params = entry.get("params") or {}
        if not isinstance(params, Mapping):
            raise ConfigError(f"{what} params must be a mapping")
        return str(entry["name"]), dict(params)
    raise ConfigError(f"{what} must be a name or a mapping, got {entry!r}")


def _parse_initial(raw: Any) -> Tuple[Tuple[float, ...], ...]:
    if not isinstance(raw, Sequence) or isinstance(raw, str) or len(raw) < 2:
        raise ConfigError("'initial' must list at least two jet vectors (q, q', ...)")
    jets = []
    for j, vec in enumerate(raw):
        items = vec if isinstance(vec, Sequence) and not isinstance(vec, str) else [vec]
        jets.append(tuple(_as_float(x, f"initial[{j}]") for x in items))
    dims = {len(v) for v in jets}
    if len(dims) != 1 or 0 in dims:
        raise ConfigError(f"All initial jet vectors must share one non-zero dimension, got {sorted(dims)}")
    return tuple(jets)


def _parse_integrator(raw: Any) -> IntegratorConfig:
    raw = raw or {}
    if not isinstance(raw, Mapping):
        raise ConfigError("'integrator' must be a mapping")
    unknown = set(raw) - _INTEGRATOR_KEYS
    if unknown:
        raise ConfigError(f"Unknown integrator keys: {', '.join(sorted(unknown))}")
    kwargs: Dict[str, Any] = {}
    for key, value in raw.items():
        if key == "max_steps":
            kwargs[key] = int(_as_float(value, key))
        elif key == "direction":
            kwargs[key] = value
        else:
            kwargs[key] = _as_float(value, key)
    try:
        return IntegratorConfig(**kwargs)
    except ParameterError as e:
        raise ConfigError(str(e)) from e


def _parse_budget(raw: Any) -> Union[float, Dict[str, float]]:
    if raw is None:
        return DEFAULT_DRIFT_BUDGET
    if isinstance(raw, Mapping):
        return {str(k): _as_float(v, f"drift_budget.{k}") for k, v in raw.items()}
    return _as_float(raw, "drift_budget")


def parse_experiment(raw: Mapping[str, Any], index: int = 0) -> ExperimentConfig:
    """Validate one experiment mapping and resolve it into an ExperimentConfig."""
    if not isinstance(raw, Mapping):
        raise ConfigError(f"Experiment #{index} must be a mapping")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"Unknown keys in experiment #{index}: {', '.join(sorted(unknown))}")

    system, system_params = _named(raw.get("system"), "system")
    if system is None:
        raise ConfigError(f"Experiment #{index} has no 'system'")
    if system not in SYSTEMS:
        raise ConfigError(f"Unknown system '{system}'. Known: {', '.join(sorted(SYSTEMS))}")
    family, family_params = _named(raw.get("family"), "family")
    if family is not None and family not in FAMILIES:
        raise ConfigError(f"Unknown family '{family}'. Known: {', '.join(sorted(FAMILIES))}")

    if "initial" not in raw:
        raise ConfigError(f"Experiment #{index} has no 'initial' jets")
    initial = _parse_initial(raw["initial"])

    span = raw.get("t_span")
    if not isinstance(span, Sequence) or isinstance(span, str) or len(span) != 2:
        raise ConfigError("'t_span' must be a pair [t0, t_end]")
    t_span = (_as_float(span[0], "t_span[0]"), _as_float(span[1], "t_span[1]"))
    if t_span[0] == t_span[1]:
        raise ConfigError("'t_span' must have t_end != t0")

    checks = tuple(raw.get("checks") or ())
    bad = [c for c in checks if c not in KNOWN_CHECKS]
    if bad:
        raise ConfigError(f"Unknown checks {bad}. Known: {', '.join(KNOWN_CHECKS)}")

    rho = raw.get("rho")
    if rho is not None and rho != "auto":
        if not isinstance(rho, Sequence) or isinstance(rho, str):
            raise ConfigError("'rho' must be a list of numbers or 'auto'")
        rho = tuple(_as_float(r, "rho") for r in rho)

    output = raw.get("output") or {}
    if not isinstance(output, Mapping):
        raise ConfigError("'output' must be a mapping")
    fmt = str(output.get("format", "csv"))
    if fmt not in KNOWN_FORMATS:
        raise ConfigError(f"Unsupported output format '{fmt}'")

    every = int(_as_float(raw.get("evaluate_every", 1), "evaluate_every"))
    if every < 1:
        raise ConfigError("'evaluate_every' must be >= 1")

    constants = raw.get("constants") or ()
    if isinstance(constants, str):
        constants = (constants,)

    return ExperimentConfig(
        name=str(raw.get("name") or f"{system}_{index}"),
        system=system,
        system_params=system_params,
        family=family,
        family_params=family_params,
        initial=initial,
        t_span=t_span,
        integrator=_parse_integrator(raw.get("integrator")),
        constants=tuple(str(c) for c in constants),
        rho=rho,
        drift_budget=_parse_budget(raw.get("drift_budget")),
        checks=checks,
        strict=bool(raw.get("strict", True)),
        evaluate_every=every,
        output_dir=Path(output["dir"]) if "dir" in output else default_output_dir(),
        output_format=fmt,
    )


def parse_document(document: Any) -> List[ExperimentConfig]:
    """One experiment mapping, or `experiments:` plus optional `defaults:`."""
    if not isinstance(document, Mapping):
        raise ConfigError("Configuration must be a YAML mapping")
    if "experiments" not in document:
        return [parse_experiment(document)]
    defaults = document.get("defaults") or {}
    entries = document["experiments"]
    if not isinstance(defaults, Mapping):
        raise ConfigError("'defaults' must be a mapping")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'experiments' must be a non-empty list")
    configs = [parse_experiment(_deep_merge(defaults, e), i) for i, e in enumerate(entries)]
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"Experiment names must be unique, got {names}")
    return configs


def load_config(path: Union[str, Path]) -> List[ExperimentConfig]:
    """Read and validate a configuration file; raises ConfigError on any problem."""
    path = Path(path)
    try:
        with open(path) as f:
            document = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config '{path}': {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in '{path}': {e}") from e
    configs = parse_document(document)
    logger.info("Loaded %d experiment(s) from %s", len(configs), path)
    return configs


def apply_overrides(
    cfg: ExperimentConfig,
    tf: Optional[float] = None,
    tol: Optional[float] = None,
    out: Optional[Union[str, Path]] = None,
) -> ExperimentConfig:
    """Command-line values take precedence over file values."""
    changes: Dict[str, Any] = {}
    if tf is not None:
        if tf == cfg.t0:
            raise ConfigError("--tf must differ from t0")
        changes["t_span"] = (cfg.t0, float(tf))
    if tol is not None:
        if tol <= 0:
            raise ConfigError("--tol must be > 0")
        changes["integrator"] = replace(cfg.integrator, rel_tol=float(tol), abs_tol=float(tol))
    if out is not None:
        changes["output_dir"] = Path(out)
    return replace(cfg, **changes) if changes else cfg
