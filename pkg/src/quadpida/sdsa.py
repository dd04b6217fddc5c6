"""Stochastic dual-simplex search: a derivative-free box-bounded minimizer.

Two (or more) Nelder-Mead simplexes evolve side by side with reflection,
expansion and contraction coefficients drawn fresh each iteration from
(0, alpha_max], (1, gamma_max] and [0, beta_max]. After the simplex moves,
each simplex's worst vertex is additionally replaced by a Gaussian
perturbation directed along the global centroid (the sum of per-simplex
centroids), which keeps the search diverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ObjectiveEvaluationError(RuntimeError):
    """The objective raised at some candidate point."""

    def __init__(self, point: np.ndarray, cause: BaseException):
        super().__init__(f"objective evaluation failed at {point!r}: {cause}")
        self.point = np.array(point)


@dataclass(kw_only=True)
class SdsaConfig:
    """Search parameters; the coefficient bounds default to the stock tuning."""

    dimension: int
    bounds: tuple[Sequence[float], Sequence[float]]
    a_max: float = 10.5907
    alpha_max: float = 9.7323
    gamma_max: float = 9.9185
    beta_max: float = 0.4679
    i_max: int = 979
    n_simplexes: int = 2
    seed: int = 0
    stall_iterations: int = 50
    stall_tolerance: float = 1e-12
    centroid_mode: str = "sum"        # literal centroid sum; "mean" divides by count
    scalar_perturbation: bool = False  # draw one g per replacement instead of per coordinate
    initial_point: Sequence[float] | None = None  # warm start: base of the first simplex

    def __post_init__(self) -> None:
        if self.alpha_max <= 0.0:
            raise ValueError("alpha_max must be positive")
        if self.gamma_max <= 1.0:
            raise ValueError("gamma_max must exceed 1")
        if not 0.0 <= self.beta_max <= 1.0:
            raise ValueError("beta_max must lie in [0, 1]")
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if self.n_simplexes < 2:
            raise ValueError("n_simplexes must be at least 2")
        if self.centroid_mode not in ("sum", "mean"):
            raise ValueError("centroid_mode must be 'sum' or 'mean'")
        lo, hi = (np.asarray(b, dtype=np.float64) for b in self.bounds)
        if lo.shape != (self.dimension,) or hi.shape != (self.dimension,):
            raise ValueError("bounds must match the problem dimension")
        if np.any(lo >= hi):
            raise ValueError("lower bounds must be strictly below upper bounds")
        self.bounds = (lo, hi)
        if self.initial_point is not None:
            start = np.asarray(self.initial_point, dtype=np.float64)
            if start.shape != (self.dimension,):
                raise ValueError("initial_point must match the problem dimension")
            if np.any(start < lo) or np.any(start > hi):
                raise ValueError("initial_point must lie inside the bounds")
            self.initial_point = start


@dataclass
class Simplex:
    """Vertex set with matching costs; row i of points pairs with costs[i]."""

    points: np.ndarray  # (d+1, d)
    costs: np.ndarray   # (d+1,)


@dataclass
class DualSimplexState:
    """Snapshot of the search used by the replacement step and diagnostics."""

    simplexes: list[Simplex]
    global_centroid: np.ndarray
    covariance: np.ndarray
    best_point: np.ndarray
    best_cost: float
    iteration: int


@dataclass
class SdsaResult:
    best_point: np.ndarray
    best_cost: float
    history: np.ndarray  # best cost after each iteration, non-increasing
    iterations: int
    evaluations: int


def reflect(
    worst: np.ndarray, centroid: np.ndarray, alpha: float,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Reflected vertex (1 + alpha) * centroid - alpha * worst."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    out = (1.0 + alpha) * centroid - alpha * worst
    return out if bounds is None else np.clip(out, bounds[0], bounds[1])


def expand(
    reflected: np.ndarray, centroid: np.ndarray, gamma: float,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Expanded vertex gamma * reflected + (1 - gamma) * centroid."""
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    out = gamma * reflected + (1.0 - gamma) * centroid
    return out if bounds is None else np.clip(out, bounds[0], bounds[1])


def contract(worst: np.ndarray, centroid: np.ndarray, beta: float) -> np.ndarray:
    """Contracted vertex beta * worst + (1 - beta) * centroid."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return beta * worst + (1.0 - beta) * centroid


def simplex_centroid(simplex: Simplex) -> np.ndarray:
    """Centroid of all vertices except the worst one."""
    worst = int(np.argmax(simplex.costs))
    keep = [i for i in range(len(simplex.costs)) if i != worst]
    return simplex.points[keep].mean(axis=0)


def global_centroid(state: DualSimplexState, mode: str = "sum") -> np.ndarray:
    """Combine the per-simplex centroids (each excluding its worst vertex)."""
    if not state.simplexes:
        raise ValueError("at least one simplex is required")
    total = np.zeros_like(state.simplexes[0].points[0])
    for s in state.simplexes:
        total = total + simplex_centroid(s)
    if mode == "mean":
        total = total / len(state.simplexes)
    return total


def stochastic_replace(
    worst: np.ndarray,
    centroid: np.ndarray,
    gaussian_sample: np.ndarray | float,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Perturb the worst vertex along the global centroid: worst + g * centroid."""
    out = worst + np.asarray(gaussian_sample) * centroid
    return out if bounds is None else np.clip(out, bounds[0], bounds[1])


def _pooled_covariance(simplexes: list[Simplex]) -> np.ndarray:
    pts = np.vstack([s.points for s in simplexes])
    mu = pts.mean(axis=0)
    centered = pts - mu
    cov = centered.T @ centered / pts.shape[0]
    return cov + 1e-9 * np.eye(pts.shape[1])


def optimize(
    objective: Callable[[np.ndarray], float],
    config: SdsaConfig,
) -> SdsaResult:
    """Minimize ``objective`` over the configured box.

    The best-so-far cost history is non-increasing by construction; the
    search stops at ``i_max`` iterations or after ``stall_iterations``
    consecutive iterations without meaningful improvement.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = config.bounds
    d = config.dimension
    n_evals = 0

    def evaluate(x: np.ndarray) -> float:
        nonlocal n_evals
        n_evals += 1
        try:
            value = float(objective(x))
        except Exception as exc:
            raise ObjectiveEvaluationError(x, exc) from exc
        if math.isnan(value):
            raise ObjectiveEvaluationError(x, ValueError("objective returned NaN"))
        return value

    simplexes: list[Simplex] = []
    for s_idx in range(config.n_simplexes):
        if s_idx == 0 and config.initial_point is not None:
            base = config.initial_point.copy()
        else:
            base = lo + (hi - lo) * rng.random(d)
        points = np.empty((d + 1, d))
        points[0] = base
        for j in range(d):
            vertex = base.copy()
            vertex[j] += config.a_max
            points[j + 1] = np.clip(vertex, lo, hi)
        costs = np.array([evaluate(p) for p in points])
        simplexes.append(Simplex(points=points, costs=costs))

    best_cost = math.inf
    best_point = simplexes[0].points[0].copy()
    for s in simplexes:
        i = int(np.argmin(s.costs))
        if s.costs[i] < best_cost:
            best_cost = float(s.costs[i])
            best_point = s.points[i].copy()

    history = []
    stall = 0
    iteration = 0
    for iteration in range(1, config.i_max + 1):
        for s in simplexes:
            order = np.argsort(s.costs, kind="stable")
            i_best, i_second, i_worst = int(order[0]), int(order[-2]), int(order[-1])
            centroid = s.points[[i for i in range(d + 1) if i != i_worst]].mean(axis=0)

            alpha = config.alpha_max * (1.0 - rng.random())
            xr = reflect(s.points[i_worst], centroid, alpha, config.bounds)
            fr = evaluate(xr)

            if fr < s.costs[i_best]:
                gamma = 1.0 + (config.gamma_max - 1.0) * (1.0 - rng.random())
                xe = expand(xr, centroid, gamma, config.bounds)
                fe = evaluate(xe)
                if fe < fr:
                    s.points[i_worst], s.costs[i_worst] = xe, fe
                else:
                    s.points[i_worst], s.costs[i_worst] = xr, fr
            elif fr < s.costs[i_second]:
                s.points[i_worst], s.costs[i_worst] = xr, fr
            else:
                beta = config.beta_max * rng.random()
                xc = contract(s.points[i_worst], centroid, beta)
                fc = evaluate(xc)
                if fc < min(fr, s.costs[i_worst]):
                    s.points[i_worst], s.costs[i_worst] = xc, fc
                else:
                    best_vertex = s.points[i_best].copy()
                    for j in range(d + 1):
                        if j == i_best:
                            continue
                        s.points[j] = best_vertex + 0.5 * (s.points[j] - best_vertex)
                        s.costs[j] = evaluate(s.points[j])

        state = DualSimplexState(
            simplexes=simplexes,
            global_centroid=np.zeros(d),
            covariance=_pooled_covariance(simplexes),
            best_point=best_point,
            best_cost=best_cost,
            iteration=iteration,
        )
        state.global_centroid = global_centroid(state, config.centroid_mode)

        if config.scalar_perturbation:
            sigma = math.sqrt(float(np.trace(state.covariance)) / d)
            chol = None
        else:
            chol = np.linalg.cholesky(state.covariance)
        for s in simplexes:
            i_worst = int(np.argmax(s.costs))
            if config.scalar_perturbation:
                g = sigma * rng.standard_normal()
            else:
                g = chol @ rng.standard_normal(d)
            candidate = stochastic_replace(
                s.points[i_worst], state.global_centroid, g, config.bounds
            )
            s.points[i_worst] = candidate
            s.costs[i_worst] = evaluate(candidate)

        previous_best = best_cost
        for s in simplexes:
            i = int(np.argmin(s.costs))
            if s.costs[i] < best_cost:
                best_cost = float(s.costs[i])
                best_point = s.points[i].copy()
        history.append(best_cost)

        stall = stall + 1 if previous_best - best_cost < config.stall_tolerance else 0
        if stall >= config.stall_iterations:
            break

    return SdsaResult(
        best_point=best_point,
        best_cost=best_cost,
        history=np.array(history),
        iterations=iteration,
        evaluations=n_evals,
    )


def history_to_csv(history: np.ndarray, path) -> None:
    """Write the convergence trace as (iteration, best_cost) rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,best_cost\n")
        for i, cost in enumerate(history, start=1):
            fh.write(f"{i},{cost:.17g}\n")
