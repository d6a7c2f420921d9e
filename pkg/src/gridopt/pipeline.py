"""Two-stage TCSC study: stress the system, locate the device by PFI, size it, compare scenarios."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import partial

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .grid_model import Network, scale_loads
from .objectives import (
    DispatchControls,
    LoadFactorSet,
    PenaltyWeights,
    constraint_penalty,
    dispatch_fitness,
    power_flow_index,
    sizing_fitness,
    sizing_terms,
    solution_fuel_cost,
    voltage_deviation,
)
from .optimizers import OptimizationTrace, OptimizerConfig, make_firefly, make_igsa
from .power_flow import PowerFlowError, PowerFlowSolution, SolverOptions, build_ybus, solve_newton_raphson
from .tcsc import TcscDevice, apply_tcsc, branch_bounds, compensated_network, tcsc_cost

log = logging.getLogger(__name__)

__all__ = [
    "StudyConfig", "ScenarioResult", "PlacementReport", "StudyError", "ConfigurationError",
    "scale_loads", "stage1_locate", "exhaustive_locate", "stage2_size", "run_study",
    "TcscPlacement", "REFERENCE_VALUES",
]

# Published IEEE 30-bus IGSA-FA figures, printed next to achieved values for comparison.
REFERENCE_VALUES = {
    "location": "between buses 11 and 13",
    "generation_mw": {"base": 283.4, "stressed_no_tcsc": 293.9, "with_tcsc": 283.4},
    "loss_mw": {"base": 6.8095, "stressed_no_tcsc": 8.641, "with_tcsc": 2.6351},
    "fuel_cost_per_hr": {"base": 828.3393, "stressed_no_tcsc": 810.2864, "with_tcsc": 795.675},
    "tcsc_unit_cost": 138.4178,
}


class StudyError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass
class StudyConfig:
    load_factor: float = 1.4
    pfi_factors: LoadFactorSet = field(default_factory=LoadFactorSet)
    locate: OptimizerConfig = field(default_factory=OptimizerConfig)
    size: OptimizerConfig = field(default_factory=OptimizerConfig)
    dispatch: OptimizerConfig = field(default_factory=OptimizerConfig)
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    # sizing is constrained by bus-voltage limits only; see README
    sizing_weights: PenaltyWeights = field(default_factory=lambda: PenaltyWeights(w_pbound=0.0, w_line=0.0))
    w_vd: float = 1.0
    w_cost: float = 0.01
    run_dispatch: bool = True
    exclude_transformers: bool = True
    exclude_unrated: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)
    n_threads: int | None = None

    def __post_init__(self):
        if not self.load_factor >= 1.0:
            raise ConfigurationError(f"load_factor must be >= 1.0, got {self.load_factor}")

    def with_overrides(self, seed=None, population=None, iterations=None) -> "StudyConfig":
        """Apply the same seed / population / iteration count to every stage."""
        given = {"seed": seed, "population": population, "iterations": iterations}
        changes = {k: v for k, v in given.items() if v is not None}
        if not changes:
            return self
        return replace(self, locate=replace(self.locate, **changes),
                       size=replace(self.size, **changes),
                       dispatch=replace(self.dispatch, **changes))

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown study config field(s): {sorted(unknown)}")
        kw = dict(doc)
        if "pfi_factors" in kw:
            kw["pfi_factors"] = LoadFactorSet(tuple(kw["pfi_factors"]))
        for name in ("locate", "size", "dispatch"):
            if name in kw:
                kw[name] = OptimizerConfig.from_dict(kw[name])
        for name in ("weights", "sizing_weights"):
            if name in kw:
                kw[name] = PenaltyWeights(**kw[name])
        if "solver" in kw:
            kw["solver"] = SolverOptions(**kw["solver"])
        return cls(**kw)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["pfi_factors"] = list(self.pfi_factors.factors)
        return doc


# ---------------------------------------------------------------------------
# Scenario bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class DispatchResult:
    fuel_cost: float
    penalty: float
    loss_mw: float
    total_generation_mw: float
    dispatch_mw: list[float]
    controls: list[float]
    converged: bool
    trace: OptimizationTrace | None = None

    def to_dict(self) -> dict:
        doc = {k: v for k, v in asdict(self).items() if k != "trace"}
        if self.trace is not None:
            doc["trace"] = self.trace.to_dict()
        return doc


@dataclass
class ScenarioResult:
    name: str
    load_factor: float
    converged: bool
    iterations: int
    total_load_mw: float
    total_generation_mw: float
    loss_mw: float
    fuel_cost: float
    dispatch_mw: list[float]
    v_mag: list[float]
    v_angle: list[float]
    penalty: float
    optimized: DispatchResult | None = None

    @classmethod
    def from_solution(cls, name: str, load_factor: float, network: Network,
                      solution: PowerFlowSolution, weights: PenaltyWeights) -> "ScenarioResult":
        has_cost = all(g.has_cost for g in network.generators)
        return cls(
            name=name,
            load_factor=load_factor,
            converged=solution.converged,
            iterations=solution.iterations,
            total_load_mw=network.total_load_mw(),
            total_generation_mw=solution.total_generation_mw,
            loss_mw=solution.total_loss,
            fuel_cost=solution_fuel_cost(network, solution) if has_cost else math.nan,
            dispatch_mw=[float(p) for p in solution.gen_p * network.base_mva],
            v_mag=[float(v) for v in solution.v_mag],
            v_angle=[float(a) for a in solution.v_angle],
            penalty=constraint_penalty(solution, network, weights),
        )

    def to_dict(self) -> dict:
        doc = {k: v for k, v in asdict(self).items() if k != "optimized"}
        doc["optimized"] = self.optimized.to_dict() if self.optimized else None
        return doc


@dataclass
class PlacementReport:
    base: ScenarioResult
    stressed_no_tcsc: ScenarioResult
    stressed_with_tcsc: ScenarioResult
    device: TcscDevice
    branch: tuple[int, int]
    pfi: float
    tcsc_unit_cost: float
    tcsc_total_cost: float
    voltage_deviation_no_tcsc: float
    voltage_deviation_with_tcsc: float
    sizing_fitness_with_tcsc: float
    sizing_fitness_no_tcsc: float
    bus_ids: list[int]
    locate: dict
    locate_trace: OptimizationTrace
    size_trace: OptimizationTrace
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenarios": {
                "base": self.base.to_dict(),
                "stressed_no_tcsc": self.stressed_no_tcsc.to_dict(),
                "stressed_with_tcsc": self.stressed_with_tcsc.to_dict(),
            },
            "device": asdict(self.device),
            "location": {"branch_index": self.device.branch_index,
                         "from_bus": self.branch[0], "to_bus": self.branch[1], "pfi": self.pfi},
            "tcsc_unit_cost_per_kvar": self.tcsc_unit_cost,
            "tcsc_total_cost": self.tcsc_total_cost,
            "voltage_deviation": {"no_tcsc": self.voltage_deviation_no_tcsc,
                                  "with_tcsc": self.voltage_deviation_with_tcsc},
            "sizing_fitness": {"no_tcsc": self.sizing_fitness_no_tcsc,
                               "with_tcsc": self.sizing_fitness_with_tcsc},
            "bus_ids": self.bus_ids,
            "stage1": {**self.locate, "trace": self.locate_trace.to_dict()},
            "stage2": {"trace": self.size_trace.to_dict()},
            "reference": REFERENCE_VALUES,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=2) + "\n"

    def voltage_profile_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bus_id", "v_base", "v_stressed", "v_with_tcsc"])
        for row in zip(self.bus_ids, self.base.v_mag, self.stressed_no_tcsc.v_mag, self.stressed_with_tcsc.v_mag):
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if hasattr(obj, "value"):  # enums
        return obj.value
    return obj


# ---------------------------------------------------------------------------
# Stage 1: location
# ---------------------------------------------------------------------------

def candidate_branches(network: Network, config: StudyConfig) -> list[int]:
    return [k for k, br in enumerate(network.branches)
            if not (config.exclude_transformers and br.is_transformer)
            and not (config.exclude_unrated and not br.is_rated)]


def _decode(position, n_candidates: int) -> int:
    return min(max(int(math.floor(float(np.ravel(position)[0]))), 0), n_candidates - 1)


def exhaustive_locate(scores: dict[int, float]) -> int:
    """Branch index with the largest PFI; the lowest index wins ties."""
    return max(sorted(scores), key=lambda k: (scores[k], -k))


def stage1_locate(network: Network, config: StudyConfig | None = None):
    """Return ``(branch_index, pfi, details)`` for the branch with the largest power-flow index."""
    config = config or StudyConfig()
    candidates = candidate_branches(network, config)
    if not candidates:
        raise ConfigurationError("no eligible candidate branches for TCSC placement")
    scores = power_flow_index(network, build_ybus(network), config.pfi_factors, config.weights,
                              config.solver, candidates)
    ordered = np.array([scores[k] for k in candidates])
    m = len(candidates)

    def fitness(position):
        return -float(ordered[_decode(position, m)])

    opt = make_igsa(config.locate, n_threads=config.n_threads).fit(fitness, [[0.0, float(m)]])
    igsa_choice = candidates[_decode(opt.best_position_, m)]
    oracle_choice = exhaustive_locate(scores)
    # ties in PFI make either branch a valid maximizer
    agrees = scores[igsa_choice] == scores[oracle_choice]
    chosen = igsa_choice if agrees else oracle_choice
    if not agrees:
        log.warning("IGSA picked branch %d (PFI %.6g), exhaustive search found %d (PFI %.6g); using the latter",
                    igsa_choice, scores[igsa_choice], oracle_choice, scores[oracle_choice])
    details = {
        "igsa_branch": igsa_choice,
        "exhaustive_branch": oracle_choice,
        "igsa_agrees": bool(agrees),
        "candidates": candidates,
        "pfi": {str(k): scores[k] for k in candidates},
        "trace": opt.trace_,
    }
    return chosen, scores[chosen], details


# ---------------------------------------------------------------------------
# Stage 2: sizing
# ---------------------------------------------------------------------------

def stage2_size(stressed: Network, branch_index: int, v_base, config: StudyConfig | None = None):
    """Size the TCSC on ``branch_index`` by firefly search over its admissible reactance range.

    Returns ``(device, solution, trace)``; ``solution`` is the stressed case with the device
    installed (``None`` if it does not converge).
    """
    config = config or StudyConfig()
    lo, hi = branch_bounds(stressed, branch_index)
    fitness = partial(_sizing_objective, branch_index=branch_index, network=stressed,
                      v_base=np.asarray(v_base, dtype=float), config=config)
    # zero compensation is always a candidate, so the device never does worse than none
    opt = make_firefly(config.size, n_threads=config.n_threads, initial_positions=[[0.0]])
    opt.fit(fitness, [[lo, hi]])
    x = float(np.clip(opt.best_position_[0], lo, hi))
    terms = sizing_terms(x, branch_index, stressed, v_base, config.sizing_weights,
                         config.w_vd, config.w_cost, config.solver)
    s = terms.operating_range_mvar if terms.solution is not None else 0.0
    return TcscDevice(branch_index, x, s), terms.solution, opt.trace_


def _sizing_objective(position, branch_index, network, v_base, config):
    return sizing_fitness(position, branch_index, network, v_base, config.sizing_weights,
                          config.w_vd, config.w_cost, config.solver)


# ---------------------------------------------------------------------------
# Dispatch (OPF) per scenario
# ---------------------------------------------------------------------------

def optimize_dispatch(network: Network, config: StudyConfig, overrides=None, warm_starts=()) -> DispatchResult:
    controls = DispatchControls.for_network(network)
    seeds = [np.clip(controls.current(network), controls.lower, controls.upper)]
    seeds.extend(np.asarray(w, dtype=float) for w in warm_starts)
    fitness = partial(dispatch_fitness, network=network, weights=config.weights,
                      overrides=overrides, options=config.solver, controls=controls)
    opt = make_igsa(config.dispatch, n_threads=config.n_threads, initial_positions=np.array(seeds))
    opt.fit(fitness, controls.bounds)
    best = controls.apply(network, opt.best_position_)
    sol = _solve(best, overrides, config.solver)
    if sol is None:
        return DispatchResult(math.nan, config.weights.w_diverge, math.nan, math.nan, [],
                              opt.best_position_.tolist(), False, opt.trace_)
    return DispatchResult(
        fuel_cost=solution_fuel_cost(best, sol),
        penalty=constraint_penalty(sol, best, config.weights),
        loss_mw=sol.total_loss,
        total_generation_mw=sol.total_generation_mw,
        dispatch_mw=[float(p) for p in sol.gen_p * best.base_mva],
        controls=[float(c) for c in opt.best_position_],
        converged=True,
        trace=opt.trace_,
    )


def _solve(network, overrides, options) -> PowerFlowSolution | None:
    try:
        sol = solve_newton_raphson(network, build_ybus(network, overrides), options)
    except PowerFlowError:
        return None
    return sol


# ---------------------------------------------------------------------------
# Full study
# ---------------------------------------------------------------------------

def run_study(network: Network, config: StudyConfig | None = None) -> PlacementReport:
    config = config or StudyConfig()
    base_sol = _solve(network, None, config.solver)
    if base_sol is None or not base_sol.converged:
        mm = base_sol.max_mismatch if base_sol is not None else math.inf
        raise StudyError(f"base-case power flow did not converge (max mismatch {mm:.3g} pu)")
    stressed = scale_loads(network, config.load_factor)
    stressed_sol = _solve(stressed, None, config.solver)
    if stressed_sol is None:
        raise StudyError("stressed power flow failed numerically")
    if not stressed_sol.converged:
        log.warning("stressed case (load factor %.3g) did not converge", config.load_factor)

    branch_index, pfi, locate = stage1_locate(network, config)
    device, with_sol, size_trace = stage2_size(stressed, branch_index, base_sol.v_mag, config)
    if with_sol is None:
        raise StudyError("stressed case with the sized TCSC did not converge")
    overrides = apply_tcsc(stressed, device)

    w = config.weights
    base = ScenarioResult.from_solution("base", 1.0, network, base_sol, w)
    no_tcsc = ScenarioResult.from_solution("stressed_no_tcsc", config.load_factor, stressed, stressed_sol, w)
    with_tcsc = ScenarioResult.from_solution("stressed_with_tcsc", config.load_factor, stressed, with_sol, w)

    if config.run_dispatch and all(g.has_cost for g in network.generators):
        base.optimized = optimize_dispatch(network, config)
        no_tcsc.optimized = optimize_dispatch(stressed, config)
        with_tcsc.optimized = optimize_dispatch(stressed, config, overrides,
                                                warm_starts=[no_tcsc.optimized.controls])

    unit, total = tcsc_cost(device.operating_range_mvar)
    locate_trace = locate.pop("trace")
    br = network.branches[branch_index]
    return PlacementReport(
        base=base,
        stressed_no_tcsc=no_tcsc,
        stressed_with_tcsc=with_tcsc,
        device=device,
        branch=(br.from_bus, br.to_bus),
        pfi=pfi,
        tcsc_unit_cost=unit,
        tcsc_total_cost=total,
        voltage_deviation_no_tcsc=voltage_deviation(base_sol.v_mag, stressed_sol.v_mag),
        voltage_deviation_with_tcsc=voltage_deviation(base_sol.v_mag, with_sol.v_mag),
        sizing_fitness_with_tcsc=_sizing_objective([device.x_tcsc], branch_index, stressed, base_sol.v_mag, config),
        sizing_fitness_no_tcsc=_sizing_objective([0.0], branch_index, stressed, base_sol.v_mag, config),
        bus_ids=[b.id for b in network.buses],
        locate=locate,
        locate_trace=locate_trace,
        size_trace=size_trace,
        config=config.to_dict(),
    )


class TcscPlacement(BaseEstimator):
    """Estimator wrapper around :func:`run_study`.

    ``fit(network)`` runs the study; ``transform(network)`` returns the network
    with the sized TCSC folded into its branch reactance.
    """

    def __init__(self, load_factor=1.4, pfi_factors=(1.0, 1.1, 1.2, 1.3, 1.4, 1.5),
                 population=30, iterations=200, seed=0, w_vd=1.0, w_cost=0.01,
                 run_dispatch=True, n_threads=None):
        self.load_factor = load_factor
        self.pfi_factors = pfi_factors
        self.population = population
        self.iterations = iterations
        self.seed = seed
        self.w_vd = w_vd
        self.w_cost = w_cost
        self.run_dispatch = run_dispatch
        self.n_threads = n_threads

    def _config(self) -> StudyConfig:
        opt = OptimizerConfig(population=self.population, iterations=self.iterations, seed=self.seed)
        return StudyConfig(load_factor=self.load_factor, pfi_factors=LoadFactorSet(tuple(self.pfi_factors)),
                           locate=opt, size=opt, dispatch=opt, w_vd=self.w_vd, w_cost=self.w_cost,
                           run_dispatch=self.run_dispatch, n_threads=self.n_threads)

    def fit(self, network: Network, y=None):
        self.report_ = run_study(network, self._config())
        self.device_ = self.report_.device
        self.branch_index_ = self.device_.branch_index
        return self

    def transform(self, network: Network) -> Network:
        check_is_fitted(self, "device_")
        return compensated_network(network, self.device_)
