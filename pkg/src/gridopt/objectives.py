"""Scalar figures of merit: fuel cost, voltage deviation, power-flow index, penalties and fitness functions."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .grid_model import BusKind, Generator, Network, scale_loads
from .power_flow import (
    PowerFlowError,
    PowerFlowSolution,
    SolverOptions,
    build_ybus,
    loading_ratios,
    solve_newton_raphson,
)
from .tcsc import TcscDevice, apply_tcsc, operating_range_from_solution, tcsc_cost


class CostDataError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyWeights:
    w_vbound: float = 1e4
    w_pbound: float = 1e4
    w_line: float = 1e3
    w_diverge: float = 1e9

    def __post_init__(self):
        for name in ("w_vbound", "w_pbound", "w_line", "w_diverge"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LoadFactorSet:
    factors: tuple[float, ...] = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(float(f) for f in self.factors))
        if not self.factors:
            raise ValueError("load factor set is empty")
        if any(f <= 0 for f in self.factors):
            raise ValueError("load factors must be > 0")
        if 1.0 not in self.factors:
            raise ValueError("load factor set must contain 1.0")


def fuel_cost(generators: Sequence[Generator], p_mw: Sequence[float]) -> float:
    """Quadratic fuel cost in $/hr for outputs ``p_mw`` (MW), one per generator."""
    p = np.asarray(p_mw, dtype=float)
    if p.shape != (len(generators),):
        raise ValueError(f"{len(generators)} generators but {p.size} outputs")
    total = 0.0
    for g, pg in zip(generators, p):
        if not g.has_cost:
            raise CostDataError(f"generator at bus {g.bus} has no cost coefficients")
        total += g.cost_a + g.cost_b * pg + g.cost_c * pg * pg
    return float(total)


def solution_fuel_cost(network: Network, solution: PowerFlowSolution) -> float:
    return fuel_cost(network.generators, solution.gen_p * network.base_mva)


def voltage_deviation(v_normal, v_stressed) -> float:
    """Sum over buses of |V_normal - V_stressed|."""
    a = np.asarray(v_normal, dtype=float)
    b = np.asarray(v_stressed, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"voltage vectors differ in length: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def _safe_solve(network, ybus, options) -> PowerFlowSolution | None:
    try:
        sol = solve_newton_raphson(network, ybus, options)
    except PowerFlowError:
        return None
    return sol if sol.converged else None


def power_flow_index(network: Network, ybus, load_factors: LoadFactorSet = LoadFactorSet(),
                     weights: PenaltyWeights = PenaltyWeights(),
                     options: SolverOptions | None = None,
                     candidates: Sequence[int] | None = None) -> dict[int, float]:
    """Worst-case loading ratio of each candidate branch across the load factors.

    Candidates default to the rated, non-transformer branches. A load factor
    whose power flow diverges scores every candidate at ``weights.w_diverge``.
    """
    if candidates is None:
        candidates = [k for k, br in enumerate(network.branches) if br.is_rated and not br.is_transformer]
    pfi = {k: 0.0 for k in candidates}
    for lam in load_factors.factors:
        sol = _safe_solve(scale_loads(network, lam), ybus, options)
        if sol is None:
            ratios = np.full(len(network.branches), weights.w_diverge)
        else:
            ratios = loading_ratios(network, sol.branch_flows)
        for k in candidates:
            pfi[k] = max(pfi[k], float(ratios[k]))
    return pfi


def constraint_penalty(solution: PowerFlowSolution, network: Network,
                       weights: PenaltyWeights = PenaltyWeights()) -> float:
    """Quadratic exterior penalty on voltage, generator-P and line-loading violations."""
    if not solution.converged:
        return weights.w_diverge
    v = solution.v_mag
    v_min = np.array([b.v_min for b in network.buses])
    v_max = np.array([b.v_max for b in network.buses])
    dv = np.maximum(0.0, np.maximum(v - v_max, v_min - v))
    p = solution.gen_p
    p_min = np.array([g.p_min for g in network.generators])
    p_max = np.array([g.p_max for g in network.generators])
    dp = np.maximum(0.0, np.maximum(p - p_max, p_min - p))
    ratio = loading_ratios(network, solution.branch_flows)
    dl = np.maximum(0.0, ratio - 1.0)
    return float(weights.w_vbound * (dv @ dv) + weights.w_pbound * (dp @ dp) + weights.w_line * (dl @ dl))


# ---------------------------------------------------------------------------
# Dispatch (OPF) controls
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DispatchControls:
    """Layout of an OPF control vector: non-slack generator P, then PV-bus voltage set-points."""

    gen_indices: tuple[int, ...]
    pv_positions: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def for_network(cls, network: Network) -> "DispatchControls":
        pos = network.bus_index
        gen_idx = tuple(k for k, g in enumerate(network.generators)
                        if network.buses[pos[g.bus]].kind is not BusKind.SLACK)
        pv = tuple(i for i, b in enumerate(network.buses) if b.kind is BusKind.PV)
        lo = [network.generators[k].p_min for k in gen_idx] + [network.buses[i].v_min for i in pv]
        hi = [network.generators[k].p_max for k in gen_idx] + [network.buses[i].v_max for i in pv]
        return cls(gen_idx, pv, np.array(lo, dtype=float), np.array(hi, dtype=float))

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lower, self.upper])

    def current(self, network: Network) -> np.ndarray:
        return np.array([network.generators[k].p_gen for k in self.gen_indices]
                        + [network.buses[i].v_mag for i in self.pv_positions], dtype=float)

    def apply(self, network: Network, x) -> Network:
        x = np.asarray(x, dtype=float)
        ng = len(self.gen_indices)
        gens = list(network.generators)
        for k, p in zip(self.gen_indices, x[:ng]):
            gens[k] = replace(gens[k], p_gen=float(p))
        buses = list(network.buses)
        for i, v in zip(self.pv_positions, x[ng:]):
            buses[i] = replace(buses[i], v_mag=float(v))
        # generators at PV buses share the bus set-point
        return replace(network, generators=tuple(gens), buses=tuple(buses))


def dispatch_fitness(x, network: Network, weights: PenaltyWeights = PenaltyWeights(),
                     overrides: Mapping[int, float] | None = None,
                     options: SolverOptions | None = None,
                     controls: DispatchControls | None = None) -> float:
    """Fuel cost plus constraint penalty after applying the control vector ``x``."""
    controls = controls or DispatchControls.for_network(network)
    net = controls.apply(network, x)
    sol = _safe_solve(net, build_ybus(net, overrides), options)
    if sol is None:
        return weights.w_diverge
    return solution_fuel_cost(net, sol) + constraint_penalty(sol, net, weights)


# ---------------------------------------------------------------------------
# TCSC sizing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SizingTerms:
    voltage_deviation: float
    cost_term: float
    penalty: float
    operating_range_mvar: float
    fitness: float
    solution: PowerFlowSolution | None


def normalized_tcsc_cost(operating_range_mvar: float, base_mva: float) -> float:
    """Total installed cost relative to a device rated at the system MVA base."""
    return tcsc_cost(operating_range_mvar)[1] / tcsc_cost(base_mva)[1]


def sizing_terms(x_tcsc: float, branch_index: int, network: Network, v_base,
                 weights: PenaltyWeights = PenaltyWeights(),
                 w_vd: float = 1.0, w_cost: float = 0.01,
                 options: SolverOptions | None = None) -> SizingTerms:
    device = TcscDevice(branch_index, float(x_tcsc))
    sol = _safe_solve(network, build_ybus(network, apply_tcsc(network, device)), options)
    if sol is None:
        return SizingTerms(np.inf, np.inf, weights.w_diverge, np.nan, weights.w_diverge, None)
    vd = voltage_deviation(v_base, sol.v_mag)
    s = operating_range_from_solution(network, device, sol)
    cost = normalized_tcsc_cost(s, network.base_mva)
    pen = constraint_penalty(sol, network, weights)
    return SizingTerms(vd, cost, pen, s, w_vd * vd + w_cost * cost + pen, sol)


def sizing_fitness(x_tcsc, branch_index: int, network: Network, v_base,
                   weights: PenaltyWeights = PenaltyWeights(),
                   w_vd: float = 1.0, w_cost: float = 0.01,
                   options: SolverOptions | None = None) -> float:
    """Weighted voltage deviation plus normalized TCSC cost plus constraint penalty."""
    x = float(np.ravel(x_tcsc)[0]) if np.ndim(x_tcsc) else float(x_tcsc)
    return sizing_terms(x, branch_index, network, v_base, weights, w_vd, w_cost, options).fitness
