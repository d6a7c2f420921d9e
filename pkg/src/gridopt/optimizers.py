"""Improved gravitational search and firefly optimizers over box-bounded continuous domains.

Both optimizers follow the scikit-learn estimator conventions: hyper-parameters
are constructor arguments (so ``get_params``/``set_params``/``clone`` work) and
``fit(fitness, bounds)`` stores results in trailing-underscore attributes.
Positions are searched in the unit box internally and mapped onto ``bounds``
before every fitness call.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

Fitness = Callable[[np.ndarray], float]


def default_threads() -> int:
    """Evaluation thread count from ``GRIDOPT_THREADS`` (0 means sequential)."""
    raw = os.environ.get("GRIDOPT_THREADS", "0").strip() or "0"
    return max(0, int(raw))


@dataclass
class Agent:
    position: np.ndarray
    velocity: np.ndarray
    fitness: float
    best_position: np.ndarray
    best_fitness: float


@dataclass
class OptimizationTrace:
    best_position: list[np.ndarray] = field(default_factory=list)
    best_fitness: list[float] = field(default_factory=list)
    evaluations: int = 0
    wall_time: float = 0.0

    def record(self, position: np.ndarray, fitness: float) -> None:
        self.best_position.append(position.copy())
        self.best_fitness.append(float(fitness))

    def to_dict(self, include_time: bool = False) -> dict:
        doc = {
            "best_fitness": list(self.best_fitness),
            "best_position": [p.tolist() for p in self.best_position[-1:]],
            "evaluations": self.evaluations,
        }
        if include_time:
            doc["wall_time"] = self.wall_time
        return doc


@dataclass
class OptimizerConfig:
    population: int = 30
    iterations: int = 200
    seed: int = 0
    bounds: list | None = None
    # gravitational search
    g0: float = 100.0
    alpha: float = 20.0
    inertia: float = 0.6
    c1: float = 0.5
    c2: float = 1.5
    # firefly
    beta0: float = 1.0
    gamma: float = 1.0
    alpha0: float = 0.2
    alpha_decay: float = 0.97

    def __post_init__(self):
        if self.population < 2:
            raise ValueError(f"population must be >= 2, got {self.population}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.bounds is not None:
            check_bounds(self.bounds)

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimizerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown optimizer config field(s): {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def check_bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] == 0:
        raise ValueError(f"bounds must have shape (n_dims, 2), got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("bounds must be finite")
    if np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("every lower bound must be below its upper bound")
    return b


def evaluate_population(fitness: Fitness, positions: Sequence[np.ndarray], n_threads: int = 0) -> np.ndarray:
    """Evaluate ``fitness`` on each position; results are in input order whatever the thread count."""
    positions = list(positions)
    if not positions:
        return np.zeros(0)
    if n_threads and n_threads > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            values = list(pool.map(fitness, positions))
    else:
        values = [fitness(p) for p in positions]
    out = np.asarray(values, dtype=float)
    out[np.isnan(out)] = np.inf
    return out


def gsa_masses(fitness_values: np.ndarray) -> np.ndarray:
    """Normalized gravitational masses (minimization); uniform when all fitness values are equal."""
    f = np.asarray(fitness_values, dtype=float)
    finite = np.isfinite(f)
    if not finite.any():
        return np.full(f.size, 1.0 / f.size)
    f = np.where(finite, f, f[finite].max())
    best, worst = f.min(), f.max()
    if best == worst:
        return np.full(f.size, 1.0 / f.size)
    m = (f - worst) / (best - worst)
    return m / m.sum()


class _PopulationOptimizer(BaseEstimator):
    def _setup(self, bounds):
        self._bounds = check_bounds(bounds)
        self._span = self._bounds[:, 1] - self._bounds[:, 0]
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        return np.random.default_rng(self.seed)

    def _to_domain(self, u: np.ndarray) -> np.ndarray:
        x = self._bounds[:, 0] + u * self._span
        # keep u == 1 exactly on the upper bound despite rounding
        return np.minimum(np.maximum(x, self._bounds[:, 0]), self._bounds[:, 1])

    def _evaluate(self, fitness, u):
        threads = default_threads() if self.n_threads is None else self.n_threads
        values = evaluate_population(fitness, [self._to_domain(row) for row in u], threads)
        self.n_evaluations_ += len(u)
        return values

    def _track(self, u, values):
        i = int(np.argmin(values))  # first index wins ties
        if values[i] < self.best_fitness_:
            self.best_fitness_ = float(values[i])
            self._best_u = u[i].copy()
            self.best_position_ = self._to_domain(self._best_u)
        self.trace_.record(self.best_position_, self.best_fitness_)

    def _start(self, fitness, rng, seeds=None):
        self.trace_ = OptimizationTrace()
        self.n_evaluations_ = 0
        self.best_fitness_ = np.inf
        u = rng.random((self.population, self._bounds.shape[0]))
        if seeds is not None:
            seeds = np.atleast_2d(np.asarray(seeds, dtype=float))[: self.population]
            u[: len(seeds)] = np.clip((seeds - self._bounds[:, 0]) / self._span, 0.0, 1.0)
        values = self._evaluate(fitness, u)
        self.best_position_ = self._to_domain(u[0])
        self._best_u = u[0].copy()
        self._track(u, values)
        return u, values

    def _finish(self, u, v, values, started):
        self.trace_.evaluations = self.n_evaluations_
        self.trace_.wall_time = time.perf_counter() - started
        self.population_ = [
            Agent(self._to_domain(u[i]), v[i] * self._span, float(values[i]),
                  self.best_position_.copy(), self.best_fitness_)
            for i in range(len(u))
        ]
        return self

    def minimize(self, fitness: Fitness, bounds):
        """Run the search; returns ``(best_position, trace)``."""
        self.fit(fitness, bounds)
        return self.best_position_, self.trace_

    def score(self, fitness: Fitness) -> float:
        """Fitness at the best position found (lower is better)."""
        check_is_fitted(self, "best_position_")
        return float(fitness(self.best_position_))


class ImprovedGSA(_PopulationOptimizer):
    """Gravitational search with an inertia-weighted global-best social term.

    Velocity update per agent::

        v <- w*v + c1*r1*a + c2*r2*(gbest - x)

    where ``a`` is the gravitational acceleration from the Kbest heaviest
    agents, G decays as G0*exp(-alpha*t/T) and Kbest shrinks linearly from the
    population size to 1.
    """

    def __init__(self, population=30, iterations=200, g0=100.0, alpha=20.0,
                 inertia=0.6, c1=0.5, c2=1.5, seed=0, n_threads=None, initial_positions=None):
        self.population = population
        self.iterations = iterations
        self.g0 = g0
        self.alpha = alpha
        self.inertia = inertia
        self.c1 = c1
        self.c2 = c2
        self.seed = seed
        self.n_threads = n_threads
        self.initial_positions = initial_positions

    def fit(self, fitness: Fitness, bounds):
        rng = self._setup(bounds)
        started = time.perf_counter()
        u, values = self._start(fitness, rng, self.initial_positions)
        n, d = u.shape
        vel = np.zeros_like(u)
        T = self.iterations
        eps = np.finfo(float).eps
        for t in range(T):
            G = self.g0 * np.exp(-self.alpha * t / T)
            masses = gsa_masses(values)
            kbest = n if T == 1 else max(1, int(round(n - (n - 1) * t / (T - 1))))
            elite = np.argsort(-masses, kind="stable")[:kbest]
            diff = u[elite][None, :, :] - u[:, None, :]           # (n, k, d)
            dist = np.sqrt((diff ** 2).sum(axis=2))                # (n, k)
            weight = G * masses[elite][None, :] / (dist + eps)     # (n, k)
            weight[elite[None, :] == np.arange(n)[:, None]] = 0.0  # no self attraction
            rand = rng.random((n, kbest, d))
            accel = (rand * weight[:, :, None] * diff).sum(axis=1)
            r1 = rng.random((n, d))
            r2 = rng.random((n, d))
            vel = self.inertia * vel + self.c1 * r1 * accel + self.c2 * r2 * (self._best_u - u)
            moved = u + vel
            clipped = (moved < 0.0) | (moved > 1.0)
            u = np.clip(moved, 0.0, 1.0)
            vel[clipped] = 0.0
            values = self._evaluate(fitness, u)
            self._track(u, values)
        return self._finish(u, vel, values, started)


class Firefly(_PopulationOptimizer):
    """Firefly algorithm: each firefly moves toward every brighter one.

    Attractiveness is ``beta0*exp(-gamma*r^2)`` on unit-box distances, the
    random step ``alpha_t*(u - 0.5)`` shrinks geometrically by ``alpha_decay``,
    and a firefly with no brighter peer takes only the random step.
    """

    def __init__(self, population=30, iterations=200, beta0=1.0, gamma=1.0,
                 alpha0=0.2, alpha_decay=0.97, seed=0, n_threads=None, initial_positions=None):
        self.population = population
        self.iterations = iterations
        self.beta0 = beta0
        self.gamma = gamma
        self.alpha0 = alpha0
        self.alpha_decay = alpha_decay
        self.seed = seed
        self.n_threads = n_threads
        self.initial_positions = initial_positions

    def fit(self, fitness: Fitness, bounds):
        rng = self._setup(bounds)
        started = time.perf_counter()
        u, values = self._start(fitness, rng, self.initial_positions)
        n, d = u.shape
        alpha = self.alpha0
        for _ in range(self.iterations):
            old = u.copy()
            new = u.copy()
            for i in range(n):
                brighter = np.flatnonzero(values < values[i])
                for j in brighter:
                    r2 = float(((old[j] - new[i]) ** 2).sum())
                    beta = self.beta0 * np.exp(-self.gamma * r2)
                    new[i] += beta * (old[j] - new[i]) + alpha * (rng.random(d) - 0.5)
                if brighter.size == 0:
                    new[i] += alpha * (rng.random(d) - 0.5)
            u = np.clip(new, 0.0, 1.0)
            values = self._evaluate(fitness, u)
            self._track(u, values)
            alpha *= self.alpha_decay
        return self._finish(u, np.zeros_like(u), values, started)


def make_igsa(config: OptimizerConfig, **kwargs) -> ImprovedGSA:
    return ImprovedGSA(population=config.population, iterations=config.iterations, g0=config.g0,
                       alpha=config.alpha, inertia=config.inertia, c1=config.c1, c2=config.c2,
                       seed=config.seed, **kwargs)


def make_firefly(config: OptimizerConfig, **kwargs) -> Firefly:
    return Firefly(population=config.population, iterations=config.iterations, beta0=config.beta0,
                   gamma=config.gamma, alpha0=config.alpha0, alpha_decay=config.alpha_decay,
                   seed=config.seed, **kwargs)


def igsa_optimize(fitness: Fitness, config: OptimizerConfig, bounds=None, n_threads=None):
    """Functional front end for :class:`ImprovedGSA`; returns ``(best_position, trace)``."""
    bounds = config.bounds if bounds is None else bounds
    return make_igsa(config, n_threads=n_threads).minimize(fitness, bounds)


def fa_optimize(fitness: Fitness, config: OptimizerConfig, bounds=None, n_threads=None):
    """Functional front end for :class:`Firefly`; returns ``(best_position, trace)``."""
    bounds = config.bounds if bounds is None else bounds
    return make_firefly(config, n_threads=n_threads).minimize(fitness, bounds)
