"""Independent reference computations used to check the package.

Nothing here imports the solver internals: the Y-bus, injections, branch
flows and the Gauss-Seidel power flow are written from the textbook
formulas so that agreement with the package is meaningful.
"""
from __future__ import annotations

import cmath
import json
import math

import numpy as np


def ybus_loops(network, overrides=None):
    """Element-by-element pi-model Y-bus."""
    overrides = overrides or {}
    pos = {b.id: i for i, b in enumerate(network.buses)}
    n = len(network.buses)
    Y = [[0j] * n for _ in range(n)]
    for k, br in enumerate(network.branches):
        x = overrides.get(k, br.x)
        ys = 1 / complex(br.r, x)
        t = br.tap if br.tap else 1.0
        i, j = pos[br.from_bus], pos[br.to_bus]
        half = complex(0, br.b_charging / 2)
        Y[i][i] += (ys + half) / (t * t)
        Y[j][j] += ys + half
        Y[i][j] -= ys / t
        Y[j][i] -= ys / t
    for i, b in enumerate(network.buses):
        Y[i][i] += complex(b.g_shunt, b.b_shunt)
    return np.array(Y)


def expected_row_sums(network):
    """What each Y-bus row must sum to: shunt terms plus the off-nominal tap residue."""
    pos = {b.id: i for i, b in enumerate(network.buses)}
    sums = [complex(b.g_shunt, b.b_shunt) for b in network.buses]
    for br in network.branches:
        ys = 1 / complex(br.r, br.x)
        t = br.tap
        half = complex(0, br.b_charging / 2)
        sums[pos[br.from_bus]] += (ys + half) / t**2 - ys / t
        sums[pos[br.to_bus]] += ys + half - ys / t
    return np.array(sums)


def injections(Y, v):
    """S_i = V_i * conj(sum_j Y_ij V_j), one bus at a time."""
    n = len(v)
    return np.array([v[i] * sum(Y[i][j] * v[j] for j in range(n)).conjugate() for i in range(n)])


def scheduled_injections(network):
    pos = {b.id: i for i, b in enumerate(network.buses)}
    s = np.array([complex(-b.p_load, -b.q_load) for b in network.buses])
    for g in network.generators:
        s[pos[g.bus]] += complex(g.p_gen, g.q_gen)
    return s


def gauss_seidel(network, tol=1e-11, max_sweeps=50000, accel=1.4, q_limits=True):
    """Gauss-Seidel power flow with classic PV-to-PQ clamping at the var limits.

    Returns ``(v_mag, v_angle, sweeps)``.
    """
    Y = ybus_loops(network)
    n = len(network.buses)
    pos = {b.id: i for i, b in enumerate(network.buses)}
    kinds = [b.kind.value for b in network.buses]
    spec = scheduled_injections(network)
    qmin = np.zeros(n)
    qmax = np.zeros(n)
    for g in network.generators:
        qmin[pos[g.bus]] += g.q_min
        qmax[pos[g.bus]] += g.q_max
    qload = np.array([b.q_load for b in network.buses])
    v = np.array([cmath.rect(b.v_mag if kinds[i] != "PQ" else 1.0, 0.0)
                  for i, b in enumerate(network.buses)])
    # per PV bus: 0 regulating, +1 held at q_max, -1 held at q_min
    held = [0] * n
    for sweep in range(1, max_sweeps + 1):
        worst = 0.0
        for i in range(n):
            if kinds[i] == "Slack":
                continue
            others = sum(Y[i, j] * v[j] for j in range(n) if j != i)
            p = spec[i].real
            if kinds[i] == "PV":
                v_set = network.buses[i].v_mag
                # a held unit is released once its voltage crosses back over the set-point
                if held[i] == 1 and abs(v[i]) > v_set or held[i] == -1 and abs(v[i]) < v_set:
                    held[i] = 0
                    v[i] = v_set * v[i] / abs(v[i])
                q_gen = -(v[i].conjugate() * (others + Y[i, i] * v[i])).imag + qload[i]
                if q_limits and held[i] == 0:
                    if q_gen > qmax[i]:
                        held[i] = 1
                    elif q_gen < qmin[i]:
                        held[i] = -1
                if held[i]:
                    q_gen = qmax[i] if held[i] == 1 else qmin[i]
                q = q_gen - qload[i]
            else:
                q = spec[i].imag
            new = ((p - 1j * q) / v[i].conjugate() - others) / Y[i, i]
            if kinds[i] == "PV" and not held[i]:
                new = network.buses[i].v_mag * new / abs(new)
            else:
                new = v[i] + accel * (new - v[i])
            worst = max(worst, abs(new - v[i]))
            v[i] = new
        if worst < tol:
            return np.abs(v), np.angle(v), sweep
    raise RuntimeError("Gauss-Seidel did not converge")


def closed_form_two_bus(p_load, x, v1=1.0):
    """Receiving-end voltage of a lossless line feeding a unity power factor load."""
    # V2^4 - v1^2 V2^2 + (p x)^2 = 0, high-voltage root
    a = (p_load * x) ** 2
    v2 = math.sqrt((v1 * v1 + math.sqrt(v1**4 - 4 * a)) / 2)
    angle = -math.asin(p_load * x / (v1 * v2))
    return v2, angle


def mismatch_vector(Y, vm, va, spec, pvpq, pq):
    s = injections(Y, vm * np.exp(1j * va))
    return np.concatenate([s.real[pvpq] - spec.real[pvpq], s.imag[pq] - spec.imag[pq]])


def fd_jacobian(Y, vm, va, spec, pvpq, pq, h=1e-6):
    """Central finite differences of the mismatch in [angle(pvpq); |V|(pq)]."""
    cols = []
    for idx in pvpq:
        up, dn = va.copy(), va.copy()
        up[idx] += h
        dn[idx] -= h
        cols.append((mismatch_vector(Y, vm, up, spec, pvpq, pq) - mismatch_vector(Y, vm, dn, spec, pvpq, pq)) / (2 * h))
    for idx in pq:
        up, dn = vm.copy(), vm.copy()
        up[idx] += h
        dn[idx] -= h
        cols.append((mismatch_vector(Y, up, va, spec, pvpq, pq) - mismatch_vector(Y, dn, va, spec, pvpq, pq)) / (2 * h))
    return np.column_stack(cols)


def branch_loading(network, v_mag, v_angle, overrides=None):
    """max(|S_from|, |S_to|) / rating per branch from the pi model; 0 for unrated branches."""
    overrides = overrides or {}
    pos = {b.id: i for i, b in enumerate(network.buses)}
    v = v_mag * np.exp(1j * v_angle)
    out = []
    for k, br in enumerate(network.branches):
        ys = 1 / complex(br.r, overrides.get(k, br.x))
        half = complex(0, br.b_charging / 2)
        vf, vt = v[pos[br.from_bus]], v[pos[br.to_bus]]
        i_from = (vf / br.tap - vt) * ys + vf / br.tap * half
        i_to = (vt - vf / br.tap) * ys + vt * half
        s_from = vf / br.tap * i_from.conjugate()
        s_to = vt * i_to.conjugate()
        mva = max(abs(s_from), abs(s_to)) * network.base_mva
        out.append(mva / br.rating if br.rating > 0 else 0.0)
    return np.array(out)


def exhaustive_pfi(network, factors, solve, candidates):
    """Worst-case loading per candidate branch by solving every load factor.

    ``solve(network, factor)`` must return ``(converged, v_mag, v_angle)``; a diverged factor
    counts as infinite stress.
    """
    pfi = {k: 0.0 for k in candidates}
    for lam in factors:
        ok, vm, va = solve(network, lam)
        ratios = branch_loading(network, vm, va) if ok else np.full(len(network.branches), np.inf)
        for k in candidates:
            pfi[k] = max(pfi[k], ratios[k])
    best = max(pfi.values())
    return min(k for k in candidates if pfi[k] == best), pfi


def fuel_cost_from_file(cost_path, dispatch_mw_by_bus):
    """Sum of a + b P + c P^2 read straight from the cost JSON."""
    with open(cost_path) as fh:
        table = json.load(fh)["generators"]
    return sum(e["a"] + e["b"] * dispatch_mw_by_bus[e["bus"]] + e["c"] * dispatch_mw_by_bus[e["bus"]] ** 2
               for e in table)


def tcsc_unit_cost(s):
    return 0.0015 * s * s - 0.7130 * s + 153.75


def quadratic_roots(a, b, c):
    d = math.sqrt(b * b - 4 * a * c)
    return (-b - d) / (2 * a), (-b + d) / (2 * a)


def grid_sweep(fitness, lo, hi, points=2001):
    """``(x_best, f_best)`` over an evenly spaced grid including both ends."""
    xs = np.linspace(lo, hi, points)
    values = np.array([fitness(x) for x in xs])
    i = int(np.argmin(values))
    return float(xs[i]), float(values[i])


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def rosenbrock(x):
    x = np.asarray(x)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))
