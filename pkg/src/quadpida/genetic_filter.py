"""Evolutionary state estimation: fit a population of candidate states to each measurement.

Every incoming measurement triggers a short genetic run: candidates are
propagated through the system model with process-noise samples, scored by
noise-weighted measurement mismatch, and recombined by tournament selection,
arithmetic crossover and per-component Gaussian mutation. The estimate is the
component-wise mean of the final generation.

The draw order from the supplied generator is part of the contract (the
compiled simulation kernel reproduces it sample for sample): population
initialization, then per generation process noise (non-elites only),
tournament index pairs for every open slot, one crossover weight per child,
and finally per-component mutation draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

#: floor applied to measurement noise when weighting costs, so that
#: noise-free demos remain well defined
MEAS_STD_FLOOR = 1e-12


@dataclass(kw_only=True)
class GfConfig:
    """Evolution parameters for one estimator instance."""

    population_size: int = 100
    max_generations: int = 10
    mutation_rate: float = 0.1
    mutation_scale: Sequence[float] = (0.01,)
    init_spread: Sequence[float] = (0.1,)
    elite_count: int = 1
    noise_every_generation: bool = True

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must be smaller than the population")
        if self.max_generations < 1:
            raise ValueError("max_generations must be at least 1")


@dataclass
class SystemModel:
    """Discrete model pair: state propagation f and noise-free measurement h."""

    propagate: Callable[[np.ndarray, np.ndarray], Sequence[float]]
    measure: Callable[[np.ndarray], Sequence[float]]
    process_noise_std: np.ndarray
    measurement_noise_std: np.ndarray

    def __post_init__(self) -> None:
        self.process_noise_std = np.asarray(self.process_noise_std, dtype=np.float64)
        self.measurement_noise_std = np.asarray(self.measurement_noise_std, dtype=np.float64)


@dataclass
class Individual:
    """One candidate state with its measurement-mismatch cost."""

    state: np.ndarray
    cost: float = math.inf


@dataclass
class GfResult:
    estimate: np.ndarray
    population: np.ndarray       # final generation, one candidate per row
    costs: np.ndarray            # matching costs
    cost_history: np.ndarray     # best cost seen after each generation
    degenerate: bool = False


def measurement_cost(
    predicted: Sequence[float], measurement: Sequence[float], meas_std: np.ndarray
) -> float:
    """Squared measurement mismatch weighted by inverse noise deviation."""
    total = 0.0
    for i in range(len(meas_std)):
        w = 1.0 / max(float(meas_std[i]), MEAS_STD_FLOOR)
        diff = (float(predicted[i]) - float(measurement[i])) * w
        total += diff * diff
    return total


def select(
    costs: np.ndarray, n_pairs: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Tournament-of-two parent pairs, biased toward lower cost."""
    n = len(costs)
    pairs = []
    for _ in range(n_pairs):
        a1 = int(rng.random() * n)
        a2 = int(rng.random() * n)
        pa = a1 if costs[a1] <= costs[a2] else a2
        b1 = int(rng.random() * n)
        b2 = int(rng.random() * n)
        pb = b1 if costs[b1] <= costs[b2] else b2
        pairs.append((pa, pb))
    return pairs


def crossover(
    parent_a: np.ndarray, parent_b: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Arithmetic blend with a fresh uniform weight per child."""
    lam = rng.random()
    return lam * parent_a + (1.0 - lam) * parent_b


def mutate(
    individual: np.ndarray, rng: np.random.Generator, config: GfConfig
) -> np.ndarray:
    """Per-component Gaussian mutation applied with probability mutation_rate."""
    out = individual.copy()
    scale = config.mutation_scale
    for i in range(len(out)):
        if rng.random() < config.mutation_rate:
            out[i] = out[i] + float(scale[i]) * rng.standard_normal()
    return out


def gf_update(
    prior: Sequence[float],
    measurement: Sequence[float],
    model: SystemModel,
    config: GfConfig,
    rng: np.random.Generator,
) -> GfResult:
    """One measurement update: evolve candidates and return their mean.

    The population is seeded around the noise-free propagation of the prior.
    Elites survive variation unchanged and propagate without process noise;
    the best individual seen during the update is re-injected over the
    current worst whenever a generation fails to retain it, which keeps the
    per-generation minimum cost non-increasing.
    """
    prior = np.asarray(prior, dtype=np.float64)
    z = np.asarray(measurement, dtype=np.float64)
    d = len(prior)
    pop_n = config.population_size
    spread = np.asarray(config.init_spread, dtype=np.float64)
    proc = model.process_noise_std
    zero_noise = np.zeros(d)

    center = np.asarray(model.propagate(prior, zero_noise), dtype=np.float64)
    pop = np.empty((pop_n, d))
    for j in range(pop_n):
        for i in range(d):
            pop[j, i] = center[i] + spread[i] * rng.standard_normal()

    costs = np.empty(pop_n)
    champion = pop[0].copy()
    champion_cost = math.inf
    history = []
    n_elite = config.elite_count
    w = np.empty(d)

    for gen in range(1, config.max_generations + 1):
        noisy = config.noise_every_generation or gen == 1
        for j in range(pop_n):
            if gen > 1 and j < n_elite:
                w[:] = 0.0
            elif noisy:
                for i in range(d):
                    w[i] = proc[i] * rng.standard_normal()
            else:
                w[:] = 0.0
            pop[j] = np.asarray(model.propagate(pop[j], w), dtype=np.float64)

        for j in range(pop_n):
            costs[j] = measurement_cost(model.measure(pop[j]), z, model.measurement_noise_std)

        j_min = int(np.argmin(costs))
        if costs[j_min] < champion_cost:
            champion_cost = float(costs[j_min])
            champion = pop[j_min].copy()
        else:
            j_max = int(np.argmax(costs))
            pop[j_max] = champion
            costs[j_max] = champion_cost
        history.append(champion_cost)

        if gen == config.max_generations:
            break

        order = np.argsort(costs, kind="stable")
        new_pop = np.empty_like(pop)
        for e in range(n_elite):
            new_pop[e] = pop[order[e]]
        pairs = select(costs, pop_n - n_elite, rng)
        for slot, (pa, pb) in enumerate(pairs, start=n_elite):
            new_pop[slot] = crossover(pop[pa], pop[pb], rng)
        for slot in range(n_elite, pop_n):
            new_pop[slot] = mutate(new_pop[slot], rng, config)
        pop = new_pop

    estimate = np.empty(d)
    for i in range(d):
        acc = 0.0
        for j in range(pop_n):
            acc += pop[j, i]
        estimate[i] = acc / pop_n

    degenerate = True
    for j in range(1, pop_n):
        if not np.array_equal(pop[j], pop[0]):
            degenerate = False
            break

    return GfResult(
        estimate=estimate,
        population=pop,
        costs=costs.copy(),
        cost_history=np.array(history),
        degenerate=degenerate,
    )


def make_constant_velocity_model(
    dt: float,
    process_noise_std: Sequence[float],
    measurement_noise_std: float,
) -> SystemModel:
    """Two-state (value, rate) model measuring the value; used in the control loop."""

    def propagate(x: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.array([x[0] + x[1] * dt + w[0], x[1] + w[1]])

    def measure(x: np.ndarray) -> np.ndarray:
        return np.array([x[0]])

    return SystemModel(
        propagate=propagate,
        measure=measure,
        process_noise_std=np.asarray(process_noise_std, dtype=np.float64),
        measurement_noise_std=np.array([measurement_noise_std], dtype=np.float64),
    )


def kalman_filter_1d(
    measurements: Sequence[float],
    a: float,
    process_var: float,
    measurement_var: float,
    x0: float = 0.0,
    p0: float = 1.0,
) -> np.ndarray:
    """Scalar Kalman filter for x+ = a x + w, z = x + v; the linear baseline."""
    estimates = np.empty(len(measurements))
    x, p = x0, p0
    for k, z in enumerate(measurements):
        x_pred = a * x
        p_pred = a * a * p + process_var
        gain = p_pred / (p_pred + measurement_var)
        x = x_pred + gain * (z - x_pred)
        p = (1.0 - gain) * p_pred
        estimates[k] = x
    return estimates
