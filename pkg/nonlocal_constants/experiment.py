"""
Experiment runner: integrate a catalog system, evaluate the requested
constants along the solution, run hypothesis checks and write the results.

Exit codes
----------
0  every drift budget met and every check passed
1  a drift budget was exceeded or a hypothesis check failed
2  the configuration is invalid or inconsistent
3  the integration stopped early (blow-up, step underflow) or the run failed
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .constants import (
    RhoParams,
    angular_momentum,
    attach_viscous_quadrature,
    check_rho_condition,
    energy,
    energy_decay_check,
    evaluate_series,
    finite_series,
    k1_timeshift,
    k2_space,
    k3_mu,
    monotonicity_check,
    nonlocal_constant_2nd,
    nonlocal_constant_higher,
    rho_residuals,
    viscous_constant,
)
from .core import (
    ArityError,
    DimensionError,
    HypothesisError,
    JetState,
    OrderError,
    ParameterError,
    Trajectory,
    drift_report,
)
from .export import timeseries_header, timeseries_rows, write_summary, write_timeseries
from .families import FAMILIES, PerturbationFamily, integrand, make_family, validate_mu
from .integrate import IntegrationError, attach_quadrature, integrate, taylor_trajectory
from .systems import POTENTIALS, SYSTEMS, CatalogSystem, make_system, pu_k1, pu_k2, pu_k3, pu_rho

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DRIFT = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3

RHO_TOL = 1e-5
MU_TOL = 1e-6
POTENTIAL_CLOUD_SIZE = 200


@dataclass
class RunContext:
    """Everything an evaluator needs at run time."""

    system: CatalogSystem
    traj: Trajectory
    family: Optional[PerturbationFamily] = None
    family_traj: Optional[Trajectory] = None
    viscous_traj: Optional[Trajectory] = None
    rho: Optional[RhoParams] = None

    @property
    def spec(self):
        return self.system.spec


@dataclass(frozen=True)
class ConstantDef:
    """A registry entry for a quantity that can be tracked along a run."""

    name: str
    description: str
    evaluate: Callable[[RunContext, float], float]
    needs_family: bool = False
    needs_quadrature: bool = False
    system: Optional[str] = None


def _pu_closed_form(fn):
    def evaluate(ctx: RunContext, t: float) -> float:
        p = ctx.system.params
        return fn(ctx.traj.sample(t), p.w1, p.w2)

    return evaluate


CONSTANTS: Dict[str, ConstantDef] = {
    c.name: c
    for c in [
        ConstantDef(
            "nonlocal",
            "boundary term minus int dL/dlambda for the configured family (any order)",
            lambda ctx, t: nonlocal_constant_higher(ctx.spec, ctx.family, ctx.family_traj, t).value,
            needs_family=True,
            needs_quadrature=True,
        ),
        ConstantDef(
            "nonlocal_2nd",
            "first-order form dL/dq'.delta - int dL/dlambda (N = 1)",
            lambda ctx, t: nonlocal_constant_2nd(ctx.spec, ctx.family, ctx.family_traj, t).value,
            needs_family=True,
            needs_quadrature=True,
        ),
        ConstantDef("energy", "dL/dq'.q' - L (autonomous, N = 1)",
                    lambda ctx, t: energy(ctx.spec, ctx.traj.sample(t))),
        ConstantDef("k1", "time-shift first integral of an autonomous Lagrangian",
                    lambda ctx, t: k1_timeshift(ctx.spec, ctx.traj, t)),
        ConstantDef("k2", "rho-condition first integral",
                    lambda ctx, t: k2_space(ctx.spec, ctx.rho, ctx.traj, t, strict=False)),
        ConstantDef("k3", "boundary term minus mu t for a constant-integrand family",
                    lambda ctx, t: k3_mu(ctx.spec, ctx.family, ctx.traj, t, strict=False),
                    needs_family=True),
        ConstantDef(
            "viscous",
            "e^{2kt/m}(m|q'|^2 + 2U) + 4k/m int_t^t0 e^{2ks/m} U ds",
            lambda ctx, t: viscous_constant(
                ctx.system.params.m, ctx.system.params.k, ctx.system.params.potential, ctx.viscous_traj, t
            ),
            needs_quadrature=True,
            system="viscous",
        ),
        ConstantDef("angular_momentum", "m det(q, q') for planar first-order systems",
                    lambda ctx, t: angular_momentum(ctx.traj.sample(t), ctx.system.params.m)),
        ConstantDef("pu_k1", "closed-form Pais-Uhlenbeck K1", _pu_closed_form(pu_k1), system="pais_uhlenbeck"),
        ConstantDef("pu_k2", "closed-form Pais-Uhlenbeck K2", _pu_closed_form(pu_k2), system="pais_uhlenbeck"),
        ConstantDef("pu_k3", "closed-form planar Pais-Uhlenbeck K3", _pu_closed_form(pu_k3),
                    system="pais_uhlenbeck"),
    ]
}


@dataclass
class ExperimentResult:
    name: str
    exit_code: int
    summary: Dict[str, Any] = field(default_factory=dict)
    timeseries_path: Optional[Path] = None
    summary_path: Optional[Path] = None


# --- preparation -------------------------------------------------------------------


@dataclass
class PreparedExperiment:
    cfg: ExperimentConfig
    system: CatalogSystem
    family: Optional[PerturbationFamily]
    initial: JetState
    rho: Optional[RhoParams]


def prepare(cfg: ExperimentConfig) -> PreparedExperiment:
    """Resolve names, build the system and family, and cross-check them. Raises ConfigError."""
    try:
        system = make_system(cfg.system, **cfg.system_params)
    except (KeyError, TypeError, ParameterError) as e:
        raise ConfigError(f"Cannot build system '{cfg.system}': {e}") from e
    spec = system.spec

    family = None
    if cfg.family is not None:
        family_params = dict(cfg.family_params)
        # the system's rate (k/m for viscous motion) is the default exponential rate
        if cfg.family == "exp_timeshift":
            family_params.setdefault("a", system.params.a)
        try:
            family = make_family(cfg.family, **family_params)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Cannot build family '{cfg.family}': {e}") from e
        if cfg.family == "rotation" and spec.dim != 2:
            raise ConfigError(f"The rotation family needs a planar system, '{cfg.system}' has n={spec.dim}")

    expected = spec.state_order + 1
    if len(cfg.initial) != expected:
        raise ConfigError(
            f"System '{cfg.system}' (N={spec.order}) needs {expected} initial jets, got {len(cfg.initial)}"
        )
    if len(cfg.initial[0]) != spec.dim:
        raise ConfigError(f"System '{cfg.system}' has dimension {spec.dim}, initial jets have {len(cfg.initial[0])}")
    initial = JetState(cfg.t0, tuple(np.array(v) for v in cfg.initial))

    for name in cfg.constants:
        if name not in CONSTANTS:
            raise ConfigError(f"Unknown constant '{name}'. Known: {', '.join(sorted(CONSTANTS))}")
        entry = CONSTANTS[name]
        if entry.needs_family and family is None:
            raise ConfigError(f"Constant '{name}' needs a family")
        if entry.system is not None and entry.system != cfg.system:
            raise ConfigError(f"Constant '{name}' only applies to system '{entry.system}'")
    if "nonlocal_2nd" in cfg.constants and spec.order != 1:
        raise ConfigError("Constant 'nonlocal_2nd' needs a first-order Lagrangian; use 'nonlocal'")
    if ({"energy", "angular_momentum"} & set(cfg.constants)) and spec.order != 1:
        raise ConfigError("'energy' and 'angular_momentum' need a first-order Lagrangian")
    if ({"energy", "k1"} & set(cfg.constants)) and not spec.autonomous:
        raise ConfigError(f"'energy' and 'k1' need an autonomous Lagrangian; '{cfg.system}' depends on t")
    if "angular_momentum" in cfg.constants and spec.dim != 2:
        raise ConfigError("'angular_momentum' needs a planar system")
    if "pu_k3" in cfg.constants and spec.dim != 2:
        raise ConfigError("'pu_k3' needs a planar Pais-Uhlenbeck system (n=2)")
    if "k3" in cfg.constants and family is not None and family.mu is None:
        raise ConfigError(f"Constant 'k3' needs a family with mu; '{family.name}' declares none")
    if ("mu" in cfg.checks) and (family is None or family.mu is None):
        raise ConfigError("Check 'mu' needs a family with a declared mu")

    rho = None
    if cfg.rho == "auto":
        if cfg.system != "pais_uhlenbeck":
            raise ConfigError("rho: auto is only defined for the Pais-Uhlenbeck system")
        rho = RhoParams(pu_rho(system.params.w1, system.params.w2))
    elif cfg.rho is not None:
        rho = RhoParams(tuple(cfg.rho))
    if ("k2" in cfg.constants or "rho" in cfg.checks) and rho is None:
        raise ConfigError("'k2' and the rho check need rho (a list or 'auto')")
    if rho is not None and len(rho) != spec.order:
        raise ConfigError(f"rho needs {spec.order} entries, got {len(rho)}")

    return PreparedExperiment(cfg, system, family, initial, rho)


# --- running --------------------------------------------------------------------------


def _evaluation_indices(n_samples: int, every: int) -> List[int]:
    indices = list(range(0, n_samples, every))
    if indices[-1] != n_samples - 1:
        indices.append(n_samples - 1)
    return indices


class ExperimentRunner:
    """
    Runs one configured experiment end to end.

    educational_note:
    -----------------
    A *numerical* check of a conservation law needs three independent
    pieces: an accurate trajectory (adaptive RK with tight tolerances), an
    accurate evaluation of the candidate along it (exact partials by dual
    numbers, stencils for total derivatives, adaptive quadrature for the
    nonlocal term) and a budget. The drift of the evaluated series against
    its value at t0 is the measurement; the budget is the verdict.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.summary: Dict[str, Any] = {
            "name": cfg.name,
            "version": __version__,
            "system": cfg.system,
            "system_params": dict(cfg.system_params),
            "family": cfg.family,
            "family_params": dict(cfg.family_params),
            "t_span": list(cfg.t_span),
            "tolerances": {"rel_tol": cfg.integrator.rel_tol, "abs_tol": cfg.integrator.abs_tol},
            "strict": cfg.strict,
            "constants": {},
            "checks": {},
        }

    @property
    def timeseries_path(self) -> Path:
        return self.cfg.output_dir / f"{self.cfg.name}.csv"

    @property
    def summary_path(self) -> Path:
        return self.cfg.output_dir / f"{self.cfg.name}_summary.json"

    def _finish(self, code: int, status: str, timeseries: Optional[Path] = None) -> ExperimentResult:
        self.summary["exit_code"] = code
        self.summary["status"] = status
        self.summary["files"] = {"timeseries": timeseries}
        path = None
        try:
            path = write_summary(self.summary_path, self.summary)
        except OSError as e:
            logger.error("Could not write summary for '%s': %s", self.cfg.name, e)
        return ExperimentResult(self.cfg.name, code, self.summary, timeseries, path)

    def run(self) -> ExperimentResult:
        cfg = self.cfg
        logger.info("Experiment '%s': system=%s family=%s t_span=%s", cfg.name, cfg.system, cfg.family, cfg.t_span)
        try:
            prepared = prepare(cfg)
        except ConfigError as e:
            logger.error("Configuration error in '%s': %s", cfg.name, e)
            self.summary["error"] = str(e)
            return self._finish(EXIT_CONFIG, "config_error")

        try:
            traj = integrate(prepared.system.spec, prepared.initial, cfg.t_end, cfg.integrator)
        except IntegrationError as e:
            logger.error("Integration of '%s' stopped: %s", cfg.name, e)
            self.summary["error"] = str(e)
            self.summary["last_valid_time"] = e.last_valid_time
            return self._finish(EXIT_INTEGRATION, "integration_error")
        except ParameterError as e:
            logger.error("Configuration error in '%s': %s", cfg.name, e)
            self.summary["error"] = str(e)
            return self._finish(EXIT_CONFIG, "config_error")

        self.summary["integration"] = {"accepted_steps": len(traj) - 1, "t_end": traj.t_end}
        self.summary["last_valid_time"] = traj.t_end

        try:
            ctx = self._context(prepared, traj)
            checks_ok = self._run_checks(prepared, ctx)
            drift_ok, timeseries = self._evaluate(ctx)
        except (DimensionError, OrderError, ArityError) as e:
            logger.error("Inconsistent experiment '%s': %s", cfg.name, e)
            self.summary["error"] = str(e)
            return self._finish(EXIT_CONFIG, "config_error")
        except IntegrationError as e:
            self.summary["error"] = str(e)
            return self._finish(EXIT_INTEGRATION, "integration_error")

        if drift_ok and checks_ok:
            logger.info("Experiment '%s' passed.", cfg.name)
            return self._finish(EXIT_OK, "ok", timeseries)
        status = "hypothesis_failed" if not checks_ok else "drift_exceeded"
        logger.warning("Experiment '%s' finished with status %s.", cfg.name, status)
        return self._finish(EXIT_DRIFT, status, timeseries)

    def _context(self, prepared: PreparedExperiment, traj: Trajectory) -> RunContext:
        cfg = self.cfg
        ctx = RunContext(prepared.system, traj, prepared.family, rho=prepared.rho)
        wanted = [CONSTANTS[name] for name in cfg.constants]
        if prepared.family is not None and any(c.needs_quadrature and c.needs_family for c in wanted):
            ctx.family_traj = attach_quadrature(traj, prepared.system.spec, prepared.family)
        if "viscous" in cfg.constants:
            p = prepared.system.params
            ctx.viscous_traj = attach_viscous_quadrature(traj, p.m, p.k, p.potential)
        return ctx

    def _run_checks(self, prepared: PreparedExperiment, ctx: RunContext) -> bool:
        cfg = self.cfg
        spec, traj, params = prepared.system.spec, ctx.traj, prepared.system.params
        checks: Dict[str, Dict[str, Any]] = {}

        if not cfg.strict:
            logger.warning("Hypothesis validation disabled for '%s'; values may not be constants.", cfg.name)
        wanted = list(cfg.checks)
        # Hard validation of the hypotheses the requested constants rely on
        if cfg.strict:
            if "k2" in cfg.constants and "rho" not in wanted:
                wanted.append("rho")
            if "k3" in cfg.constants and "mu" not in wanted:
                wanted.append("mu")

        for name in wanted:
            try:
                if name == "potential":
                    worst = min(params.potential.value(s.q) for s in traj.samples)
                    checks[name] = {"passed": worst >= 0.0, "min_potential": worst}
                elif name == "rho":
                    residual = check_rho_condition(spec, ctx.rho, traj)
                    checks[name] = {"passed": residual <= RHO_TOL, "max_residual": residual}
                elif name == "mu":
                    worst = validate_mu(spec, ctx.family, traj, tol=np.inf)
                    checks[name] = {"passed": worst <= MU_TOL, "max_deviation": worst}
                elif name == "monotonicity":
                    result = monotonicity_check(params.m, params.k, params.potential, traj)
                    checks[name] = dict(result.to_dict(), passed=result.ok)
                elif name == "energy_decay":
                    first_rise = energy_decay_check(params.m, params.k, params.potential, traj)
                    checks[name] = {"passed": first_rise is None, "first_increase_time": first_rise}
            except (HypothesisError, ParameterError) as e:
                checks[name] = {"passed": False, "error": str(e)}
            status = "PASS" if checks[name]["passed"] else "FAIL"
            logger.info("Check %-14s %s", name, status)

        self.summary["checks"] = checks
        return all(c["passed"] for c in checks.values())

    def _evaluate(self, ctx: RunContext):
        cfg = self.cfg
        traj = ctx.traj
        indices = _evaluation_indices(len(traj), cfg.evaluate_every)
        times = traj.times[indices]

        columns: Dict[str, List[float]] = {}
        all_ok = True
        for name in cfg.constants:
            entry = CONSTANTS[name]
            series = evaluate_series(lambda t, entry=entry: entry.evaluate(ctx, t), times)
            columns[name] = [v for _, v in series]
            finite = finite_series(series)
            budget = cfg.budget_for(name)
            if len(finite) < 2:
                logger.warning("Constant '%s' has fewer than 2 finite samples", name)
                self.summary["constants"][name] = {"budget": budget, "within_budget": False,
                                                   "sample_count": len(finite)}
                all_ok = False
                continue
            report = drift_report(finite)
            within = report.within(budget)
            all_ok = all_ok and within
            self.summary["constants"][name] = dict(
                report.to_dict(), budget=budget, within_budget=within, reference_time=finite[0][0]
            )
            logger.info(
                "%-16s reference=%.12g  max_rel_drift=%.3e  budget=%.1e  %s",
                name, report.reference_value, report.max_rel_drift, budget, "OK" if within else "EXCEEDED",
            )

        header = timeseries_header(traj.dim, traj.order, list(columns))
        rows = timeseries_rows(traj, indices, columns)
        try:
            path = write_timeseries(self.timeseries_path, header, rows)
        except OSError as e:
            logger.error("Could not write time series for '%s': %s", cfg.name, e)
            path = None
        return all_ok, path


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run one experiment; never raises, the exit code tells the outcome."""
    try:
        return ExperimentRunner(cfg).run()
    except Exception as e:  # exit-code contract is total
        logger.exception("Experiment '%s' failed unexpectedly: %s", cfg.name, e)
        return ExperimentResult(cfg.name, EXIT_INTEGRATION, {"status": "failed", "error": str(e)})


def run_batch(configs: Sequence[ExperimentConfig], workers: int = 1) -> List[ExperimentResult]:
    """Run experiments, in parallel processes when workers > 1. Results keep input order."""
    if workers <= 1 or len(configs) <= 1:
        return [run_experiment(cfg) for cfg in configs]
    workers = min(workers, len(configs), os.cpu_count() or 1)
    logger.info("Running %d experiments on %d workers", len(configs), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))


def batch_exit_code(results: Sequence[ExperimentResult]) -> int:
    return max((r.exit_code for r in results), default=EXIT_OK)


# --- check subcommand ---------------------------------------------------------------


def _potential_cloud(q0: np.ndarray, size: int = POTENTIAL_CLOUD_SIZE) -> np.ndarray:
    rng = np.random.default_rng(0)
    scale = 2.0 * max(1.0, float(np.linalg.norm(q0)))
    cloud = rng.uniform(-scale, scale, size=(size, q0.size))
    return np.vstack([q0[None, :], cloud])


def check_experiment(cfg: ExperimentConfig) -> int:
    """
    Validate the configuration and the conservation hypotheses at t0, without
    integrating. Returns 0 (all hold), 1 (a hypothesis fails) or 2 (bad config).
    """
    try:
        prepared = prepare(cfg)
    except ConfigError as e:
        logger.error("Configuration error in '%s': %s", cfg.name, e)
        return EXIT_CONFIG

    spec, params = prepared.system.spec, prepared.system.params
    wanted = set(cfg.checks)
    if "k2" in cfg.constants:
        wanted.add("rho")
    if "k3" in cfg.constants:
        wanted.add("mu")
    if {"monotonicity", "energy_decay", "viscous"} & (wanted | set(cfg.constants)):
        wanted.add("potential")

    local = taylor_trajectory(spec, prepared.initial)
    t0 = prepared.initial.t
    ok = True
    for name in sorted(wanted):
        if name == "potential":
            worst = min(params.potential.value(q) for q in _potential_cloud(prepared.initial.q))
            passed = worst >= 0.0
            detail = f"min U = {worst:.3e}"
        elif name == "rho":
            residual = max(rho_residuals(spec, prepared.rho, local, t0))
            passed = residual <= RHO_TOL
            detail = f"residual = {residual:.3e}"
        elif name == "mu":
            deviation = abs(integrand(spec, prepared.family, local, t0) - prepared.family.mu)
            passed = deviation <= MU_TOL
            detail = f"|integrand - mu| = {deviation:.3e}"
        else:
            continue
        ok = ok and passed
        log = logger.info if passed else logger.error
        log("check %-10s %s (%s)", name, "PASS" if passed else "FAIL", detail)
    return EXIT_OK if ok else EXIT_DRIFT


# --- catalog ---------------------------------------------------------------------------


def list_catalog() -> str:
    """Human-readable listing of systems, families, potentials and constants."""
    lines = ["Systems:"]
    for name in sorted(SYSTEMS):
        doc = SYSTEMS[name]().description
        lines.append(f"  {name:<18} {doc}")
    lines.append("Families:")
    for name in sorted(FAMILIES):
        lines.append(f"  {name}")
    lines.append("Potentials:")
    for name in sorted(POTENTIALS):
        lines.append(f"  {name}")
    lines.append("Constants:")
    for name, entry in CONSTANTS.items():
        lines.append(f"  {name:<18} {entry.description}")
    return "\n".join(lines)
