"""TCSC modelled as a bounded series reactance added to one branch, plus its installation cost."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid_model import Network
from .power_flow import PowerFlowSolution

# Compensation limits as fractions of the line reactance.
CAPACITIVE_LIMIT = -0.7
INDUCTIVE_LIMIT = 0.2

# Unit cost C(S) = a*S^2 + b*S + c in $/kVAr with S in MVAr.
COST_COEFFS = (0.0015, -0.7130, 153.75)


class TcscRangeError(ValueError):
    pass


class IneligibleBranchError(ValueError):
    pass


class OperatingRangeUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class TcscDevice:
    branch_index: int
    x_tcsc: float
    operating_range_mvar: float = 0.0


def reactance_bounds(x_line: float) -> tuple[float, float]:
    """Admissible ``(lo, hi)`` for the TCSC reactance on a line of reactance ``x_line``."""
    a, b = CAPACITIVE_LIMIT * x_line, INDUCTIVE_LIMIT * x_line
    return (a, b) if a <= b else (b, a)


def branch_bounds(network: Network, branch_index: int) -> tuple[float, float]:
    return reactance_bounds(network.branches[branch_index].x)


def apply_tcsc(network: Network, device: TcscDevice) -> dict[int, float]:
    """Reactance override ``{branch_index: x_line + x_tcsc}`` for :func:`build_ybus`."""
    k = device.branch_index
    if not 0 <= k < len(network.branches):
        raise IneligibleBranchError(f"branch index {k} out of range")
    branch = network.branches[k]
    if branch.is_transformer:
        raise IneligibleBranchError(f"branch {k} ({branch.from_bus}-{branch.to_bus}) is a transformer")
    lo, hi = reactance_bounds(branch.x)
    slack = 1e-12 * abs(branch.x)  # bound values like -0.7 * 0.2 are not exact in binary
    if not lo - slack <= device.x_tcsc <= hi + slack:
        raise TcscRangeError(f"x_tcsc = {device.x_tcsc} outside [{lo}, {hi}] for branch {k}")
    x_eff = branch.x + device.x_tcsc
    if x_eff == 0:
        raise TcscRangeError(f"x_tcsc = {device.x_tcsc} cancels the reactance of branch {k}")
    return {k: x_eff}


def tcsc_unit_cost(operating_range_mvar: float) -> float:
    """Installation cost in $/kVAr for an operating range in MVAr."""
    s = operating_range_mvar
    if s < 0:
        raise ValueError(f"operating range must be >= 0, got {s}")
    a, b, c = COST_COEFFS
    return a * s * s + b * s + c


def tcsc_cost(operating_range_mvar: float) -> tuple[float, float]:
    """Return ``(unit cost $/kVAr, total cost $)``."""
    unit = tcsc_unit_cost(operating_range_mvar)
    return unit, unit * operating_range_mvar * 1000.0


def series_current(network: Network, branch_index: int, solution: PowerFlowSolution,
                   x_eff: float | None = None) -> complex:
    """Current through the series element of a branch, in pu."""
    br = network.branches[branch_index]
    pos = network.bus_index
    v = solution.voltage
    x = br.x if x_eff is None else x_eff
    return complex((v[pos[br.from_bus]] / br.tap - v[pos[br.to_bus]]) / (br.r + 1j * x))


def operating_range_from_solution(network: Network, device: TcscDevice,
                                  solution: PowerFlowSolution) -> float:
    """Reactive power handled by the device, |x_tcsc| * I^2 * base, in MVAr."""
    if not solution.converged:
        raise OperatingRangeUnavailable("power flow did not converge")
    x_eff = network.branches[device.branch_index].x + device.x_tcsc
    current = series_current(network, device.branch_index, solution, x_eff)
    return float(abs(device.x_tcsc) * abs(current) ** 2 * network.base_mva)


def compensated_network(network: Network, device: TcscDevice) -> Network:
    """The network with the device folded into its branch reactance."""
    (k, x_eff), = apply_tcsc(network, device).items()
    branches = list(network.branches)
    branches[k] = replace(branches[k], x=x_eff)
    return replace(network, branches=tuple(branches))


def eligible_branches(network: Network) -> list[int]:
    """Rated, non-transformer branches: the candidates for TCSC placement."""
    return [k for k, br in enumerate(network.branches) if br.is_rated and not br.is_transformer]


def cost_root(unit_cost: float) -> float:
    """Smaller operating range (MVAr) at which the unit cost equals ``unit_cost``."""
    a, b, c = COST_COEFFS
    disc = b * b - 4 * a * (c - unit_cost)
    if disc < 0:
        raise ValueError(f"unit cost {unit_cost} is below the minimum of the cost curve")
    return float((-b - np.sqrt(disc)) / (2 * a))
