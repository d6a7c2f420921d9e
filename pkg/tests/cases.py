"""Small hand-built and randomly generated networks for tests."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from gridopt.grid_model import Branch, Bus, BusKind, Generator, Network
from gridopt.power_flow import solve


def two_bus(p_load=0.5, q_load=0.0, r=0.0, x=0.1, b=0.0, rating=0.0):
    buses = [Bus(1, BusKind.SLACK, v_mag=1.0), Bus(2, BusKind.PQ, p_load=p_load, q_load=q_load)]
    branches = [Branch(1, 2, r, x, b, rating=rating)]
    return Network(100.0, buses, branches, [Generator(1)], name="two-bus")


def flat_case():
    """Zero load, all set-points 1.0 pu, no shunts or charging: nothing flows."""
    buses = [Bus(1, BusKind.SLACK), Bus(2, BusKind.PV), Bus(3, BusKind.PQ), Bus(4, BusKind.PQ)]
    branches = [Branch(1, 2, 0.01, 0.1), Branch(2, 3, 0.02, 0.2), Branch(3, 4, 0.01, 0.15), Branch(4, 1, 0.02, 0.1)]
    return Network(100.0, buses, branches, [Generator(1), Generator(2)], name="flat")


_CASE_COSTS = (0.0, 2.0, 0.01)


def synthetic_case(seed: int, n_bus: int = 8, n_chords: int = 3, margin=(0.7, 1.4)) -> Network:
    """Meshed network with random impedances and loads, rated from its own base flows.

    Ratings are the base-case MVA flow times a random factor in ``margin``, so
    several branches are stressed under load growth and the ranking is not
    decided by construction.
    """
    rng = np.random.default_rng(seed)
    buses = [Bus(1, BusKind.SLACK, v_mag=1.04)]
    pv = {3, n_bus - 2}
    for i in range(2, n_bus + 1):
        kind = BusKind.PV if i in pv else BusKind.PQ
        buses.append(Bus(i, kind, p_load=float(rng.uniform(0.05, 0.3)), q_load=float(rng.uniform(0.0, 0.1)),
                         v_mag=1.02 if kind is BusKind.PV else 1.0))
    pairs = [(i, i + 1) for i in range(1, n_bus)] + [(n_bus, 1)]
    while len(pairs) < n_bus + n_chords:
        a, b = sorted(int(v) for v in rng.choice(np.arange(1, n_bus + 1), 2, replace=False))
        if (a, b) not in pairs and (b, a) not in pairs:
            pairs.append((a, b))
    branches = [Branch(a, b, float(rng.uniform(0.01, 0.05)), float(rng.uniform(0.05, 0.2)),
                       float(rng.uniform(0.0, 0.04))) for a, b in pairs]
    # one transformer so candidate filtering is exercised
    branches[1] = replace(branches[1], tap=0.98, b_charging=0.0, is_transformer=True)
    gens = [Generator(1, p_min=0.0, p_max=5.0, q_min=-3.0, q_max=3.0)]
    gens += [Generator(i, p_gen=0.2, p_min=0.0, p_max=1.0, q_min=-1.0, q_max=1.0) for i in sorted(pv)]
    gens = [replace(g, cost_a=_CASE_COSTS[0], cost_b=_CASE_COSTS[1], cost_c=_CASE_COSTS[2]) for g in gens]
    net = Network(100.0, buses, branches, gens, name=f"synthetic-{seed}")
    sol = solve(net)
    assert sol.converged
    mva = np.maximum(np.abs(sol.branch_flows.s_from), np.abs(sol.branch_flows.s_to)) * 100.0
    factors = rng.uniform(*margin, len(branches))
    rated = [replace(br, rating=float(round(max(m * f, 1.0), 3))) for br, m, f in zip(branches, mva, factors)]
    return replace(net, branches=tuple(rated))


def three_branch_case(hot_ratio=1.3):
    """Triangle where branch 0 runs at ``hot_ratio`` of its rating and the others at half."""
    buses = [Bus(1, BusKind.SLACK), Bus(2, BusKind.PQ, p_load=0.6, q_load=0.1), Bus(3, BusKind.PQ, p_load=0.4)]
    branches = [Branch(1, 2, 0.01, 0.1), Branch(2, 3, 0.01, 0.1), Branch(1, 3, 0.01, 0.1)]
    net = Network(100.0, buses, branches, [Generator(1)], name="triangle")
    sol = solve(net)
    mva = np.maximum(np.abs(sol.branch_flows.s_from), np.abs(sol.branch_flows.s_to)) * 100.0
    ratings = [mva[0] / hot_ratio, mva[1] / 0.5, mva[2] / 0.5]
    return replace(net, branches=tuple(replace(br, rating=float(r)) for br, r in zip(branches, ratings)))
