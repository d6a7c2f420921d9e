"""Bus admittance matrix and polar Newton-Raphson AC power flow."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .grid_model import BusKind, Network


class PowerFlowError(RuntimeError):
    """Numerical failure inside the solver (e.g. a singular Jacobian)."""


class SingularBranchError(ValueError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-6
    max_iterations: int = 30
    flat_start: bool = True
    enforce_q_limits: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class BranchFlows:
    s_from: np.ndarray  # complex pu, power entering the branch at from_bus
    s_to: np.ndarray    # complex pu, power entering the branch at to_bus
    total_loss: float   # MW

    @property
    def loss_mw(self) -> np.ndarray:
        return (self.s_from + self.s_to).real


@dataclass
class PowerFlowSolution:
    v_mag: np.ndarray
    v_angle: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    branch_flows: BranchFlows
    total_loss: float
    converged: bool
    iterations: int
    max_mismatch: float
    bus_kinds: tuple[BusKind, ...] = ()
    gen_p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gen_q: np.ndarray = field(default_factory=lambda: np.zeros(0))
    base_mva: float = 100.0

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_angle)

    @property
    def total_generation_mw(self) -> float:
        return float(self.gen_p.sum() * self.base_mva)


# ---------------------------------------------------------------------------
# Y-bus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmittanceMatrix:
    entries: np.ndarray
    overrides: Mapping[int, float] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.entries.shape[0]


def branch_admittances(network: Network, overrides: Mapping[int, float] | None = None):
    """Per-branch pi-model two-port terms ``(y_ff, y_ft, y_tf, y_tt)`` as arrays."""
    overrides = dict(overrides or {})
    nbr = len(network.branches)
    bad = [k for k in overrides if not 0 <= k < nbr]
    if bad:
        raise IndexError(f"reactance override for unknown branch index {bad}")
    r = np.array([br.r for br in network.branches], dtype=float)
    x = np.array([overrides.get(k, br.x) for k, br in enumerate(network.branches)], dtype=float)
    b = np.array([br.b_charging for br in network.branches], dtype=float)
    tap = np.array([br.tap for br in network.branches], dtype=float)
    z = r + 1j * x
    zero = np.flatnonzero(np.abs(z) == 0)
    if zero.size:
        raise SingularBranchError(f"branch {int(zero[0])} has zero series impedance")
    ys = 1.0 / z
    ytt = ys + 0.5j * b
    yff = ytt / tap**2
    yft = -ys / tap
    return yff, yft, yft.copy(), ytt


def build_ybus(network: Network, overrides: Mapping[int, float] | None = None) -> AdmittanceMatrix:
    """Dense nodal admittance matrix; ``overrides`` maps branch index to a replacement series reactance."""
    n = len(network.buses)
    pos = network.bus_index
    f = np.array([pos[br.from_bus] for br in network.branches], dtype=int)
    t = np.array([pos[br.to_bus] for br in network.branches], dtype=int)
    yff, yft, ytf, ytt = branch_admittances(network, overrides)
    Y = np.zeros((n, n), dtype=complex)
    np.add.at(Y, (f, f), yff)
    np.add.at(Y, (f, t), yft)
    np.add.at(Y, (t, f), ytf)
    np.add.at(Y, (t, t), ytt)
    Y[np.diag_indices(n)] += np.array([b.g_shunt + 1j * b.b_shunt for b in network.buses])
    return AdmittanceMatrix(Y, dict(overrides or {}))


# ---------------------------------------------------------------------------
# Mismatch and Jacobian
# ---------------------------------------------------------------------------

def power_injections(ybus: np.ndarray, voltage: np.ndarray) -> np.ndarray:
    return voltage * np.conj(ybus @ voltage)


def jacobian(ybus: np.ndarray, voltage: np.ndarray, pvpq: np.ndarray, pq: np.ndarray) -> np.ndarray:
    """Jacobian of [P(pvpq); Q(pq)] with respect to [angle(pvpq); |V|(pq)]."""
    current = ybus @ voltage
    vnorm = voltage / np.abs(voltage)
    dS_dVm = np.diag(voltage) @ np.conj(ybus @ np.diag(vnorm)) + np.diag(np.conj(current) * vnorm)
    dS_dVa = 1j * np.diag(voltage) @ np.conj(np.diag(current) - ybus @ np.diag(voltage))
    return np.block([
        [dS_dVa[np.ix_(pvpq, pvpq)].real, dS_dVm[np.ix_(pvpq, pq)].real],
        [dS_dVa[np.ix_(pq, pvpq)].imag, dS_dVm[np.ix_(pq, pq)].imag],
    ])


def mismatch(ybus, v_mag, v_angle, p_spec, q_spec, pvpq, pq) -> np.ndarray:
    """Calculated minus scheduled injections, stacked as [dP(pvpq); dQ(pq)]."""
    s = power_injections(ybus, v_mag * np.exp(1j * v_angle))
    return np.concatenate([s.real[pvpq] - p_spec[pvpq], s.imag[pq] - q_spec[pq]])


def _scheduled(network: Network):
    n = len(network.buses)
    pos = network.bus_index
    p = -np.array([b.p_load for b in network.buses])
    q = -np.array([b.q_load for b in network.buses])
    for g in network.generators:
        p[pos[g.bus]] += g.p_gen
        q[pos[g.bus]] += g.q_gen
    return p, q, n


def _q_limits_by_bus(network: Network, n: int):
    pos = network.bus_index
    qmin = np.zeros(n)
    qmax = np.zeros(n)
    for g in network.generators:
        qmin[pos[g.bus]] += g.q_min
        qmax[pos[g.bus]] += g.q_max
    return qmin, qmax


def _newton(ybus, v_mag, v_angle, p_spec, q_spec, kinds, options, iter_offset):
    pv = np.flatnonzero(kinds == 1)
    pq = np.flatnonzero(kinds == 2)
    pvpq = np.concatenate([pv, pq])
    pvpq.sort()
    npvpq = pvpq.size

    F = mismatch(ybus, v_mag, v_angle, p_spec, q_spec, pvpq, pq)
    norm = float(np.max(np.abs(F))) if F.size else 0.0
    it = 0
    while norm > options.tolerance and it < options.max_iterations:
        it += 1
        J = jacobian(ybus, v_mag * np.exp(1j * v_angle), pvpq, pq)
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration {iter_offset + it}") from exc
        v_angle[pvpq] += dx[:npvpq]
        v_mag[pq] += dx[npvpq:]
        F = mismatch(ybus, v_mag, v_angle, p_spec, q_spec, pvpq, pq)
        norm = float(np.max(np.abs(F)))
        if not np.isfinite(norm):
            break
    return it, norm, norm <= options.tolerance


def solve_newton_raphson(network: Network, ybus: AdmittanceMatrix,
                         options: SolverOptions | None = None) -> PowerFlowSolution:
    """Solve the AC power flow; a non-converged result is returned, not raised."""
    options = options or SolverOptions()
    p_spec, q_spec, n = _scheduled(network)
    if ybus.order != n:
        raise ValueError(f"ybus has order {ybus.order}, network has {n} buses")
    Y = ybus.entries
    kind_code = {BusKind.SLACK: 0, BusKind.PV: 1, BusKind.PQ: 2}
    kinds = np.array([kind_code[b.kind] for b in network.buses])
    if options.flat_start:
        v_mag = np.array([1.0 if b.kind is BusKind.PQ else b.v_mag for b in network.buses])
        v_angle = np.zeros(n)
    else:
        v_mag = np.array([b.v_mag for b in network.buses], dtype=float)
        v_angle = np.array([b.v_angle for b in network.buses], dtype=float)
    qmin, qmax = _q_limits_by_bus(network, n)
    q_load = np.array([b.q_load for b in network.buses])

    total_iters = 0
    converged = False
    norm = np.inf
    for _ in range(n + 1):
        its, norm, converged = _newton(Y, v_mag, v_angle, p_spec, q_spec, kinds, options, total_iters)
        total_iters += its
        if not converged or not options.enforce_q_limits:
            break
        q_gen = power_injections(Y, v_mag * np.exp(1j * v_angle)).imag + q_load
        pv = kinds == 1
        over = pv & (q_gen > qmax + options.tolerance)
        under = pv & (q_gen < qmin - options.tolerance)
        if not (over.any() or under.any()):
            break
        kinds[over | under] = 2
        q_spec[over] = qmax[over] - q_load[over]
        q_spec[under] = qmin[under] - q_load[under]

    return _assemble(network, ybus, v_mag, v_angle, kinds, converged, total_iters, norm)


def _assemble(network, ybus, v_mag, v_angle, kinds, converged, iterations, norm) -> PowerFlowSolution:
    voltage = v_mag * np.exp(1j * v_angle)
    with np.errstate(all="ignore"):
        s = power_injections(ybus.entries, voltage)
        flows = compute_branch_flows(network, voltage, ybus.overrides)
    pos = network.bus_index
    load_p = np.array([b.p_load for b in network.buses])
    load_q = np.array([b.q_load for b in network.buses])
    gen_p = np.array([g.p_gen for g in network.generators], dtype=float)
    gen_q = np.array([g.q_gen for g in network.generators], dtype=float)
    # Net bus generation is shared equally among units at the same bus for the
    # free quantities (slack P; Q at every generator bus).
    by_bus: dict[int, list[int]] = {}
    for k, g in enumerate(network.generators):
        by_bus.setdefault(pos[g.bus], []).append(k)
    for i, ks in by_bus.items():
        q_total = s.imag[i] + load_q[i]
        gen_q[ks] = q_total / len(ks)
        if kinds[i] == 0:
            gen_p[ks] = (s.real[i] + load_p[i]) / len(ks)
    kind_back = {0: BusKind.SLACK, 1: BusKind.PV, 2: BusKind.PQ}
    # loss as the power balance; flows.total_loss (the branch sum) agrees to the tolerance
    loss = float((gen_p.sum() - load_p.sum()) * network.base_mva)
    return PowerFlowSolution(
        v_mag=v_mag, v_angle=v_angle, p_inj=s.real, q_inj=s.imag,
        branch_flows=flows, total_loss=loss,
        converged=bool(converged and np.isfinite(norm)), iterations=iterations,
        max_mismatch=float(norm),
        bus_kinds=tuple(kind_back[int(k)] for k in kinds),
        gen_p=gen_p, gen_q=gen_q, base_mva=network.base_mva,
    )


def solve(network: Network, overrides: Mapping[int, float] | None = None,
          options: SolverOptions | None = None) -> PowerFlowSolution:
    """Build the Y-bus and solve in one call."""
    return solve_newton_raphson(network, build_ybus(network, overrides), options)


# ---------------------------------------------------------------------------
# Branch flows and limits
# ---------------------------------------------------------------------------

def compute_branch_flows(network: Network, voltage: np.ndarray,
                         overrides: Mapping[int, float] | None = None) -> BranchFlows:
    pos = network.bus_index
    f = np.array([pos[br.from_bus] for br in network.branches], dtype=int)
    t = np.array([pos[br.to_bus] for br in network.branches], dtype=int)
    yff, yft, ytf, ytt = branch_admittances(network, overrides)
    vf, vt = voltage[f], voltage[t]
    s_from = vf * np.conj(yff * vf + yft * vt)
    s_to = vt * np.conj(ytf * vf + ytt * vt)
    loss = float((s_from + s_to).real.sum() * network.base_mva)
    return BranchFlows(s_from=s_from, s_to=s_to, total_loss=loss)


def loading_ratios(network: Network, flows: BranchFlows) -> np.ndarray:
    """max(|S_from|, |S_to|) in MVA over rating; 0 for unrated branches."""
    ratings = np.array([br.rating for br in network.branches], dtype=float)
    s = np.maximum(np.abs(flows.s_from), np.abs(flows.s_to)) * network.base_mva
    out = np.zeros_like(s)
    rated = ratings > 0
    out[rated] = s[rated] / ratings[rated]
    return out


def check_line_limits(flows: BranchFlows, ratings, base_mva: float = 100.0) -> list[tuple[int, float]]:
    """Return ``(branch index, loading ratio)`` for each branch above its rating."""
    ratings = np.asarray(ratings, dtype=float)
    s = np.maximum(np.abs(flows.s_from), np.abs(flows.s_to)) * base_mva
    out = []
    for k, (sk, rk) in enumerate(zip(s, ratings)):
        if rk > 0 and sk > rk:
            out.append((k, float(sk / rk)))
    return out
