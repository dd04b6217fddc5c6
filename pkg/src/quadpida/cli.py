"""Batch command line: scenario configs in, CSV and metrics out.

Exit codes: 0 success, 1 configuration error, 2 diverged simulation,
3 instability detected.
"""

from __future__ import annotations

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import backends, stability
from .config import (
    ConfigError,
    gains_to_yaml,
    load_config,
    scenario_from_config,
)
from .dynamics import NotEquilibriumError, augment_tracking, hover_equilibrium, linearize
from .genetic_filter import GfConfig, SystemModel, gf_update, kalman_filter_1d, make_constant_velocity_model
from .harness import ALTITUDE_GF, Scenario, run_scenario
from .pida import CHANNELS
from .sdsa import history_to_csv
from .tuning import gain_vector, tune_gains

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_UNSTABLE = 3


@click.group()
@click.version_option(package_name="quadpida")
def main() -> None:
    """Quadcopter simulation, gain tuning, estimation and stability tools."""


def _load(config_path: str):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _build_scenario(cfg, seed) -> Scenario:
    try:
        return scenario_from_config(cfg, seed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _simulate_one(scenario: Scenario, out_dir: Path, backend: str | None) -> bool:
    series, metrics = run_scenario(scenario, backend=backend)
    series.to_csv(out_dir / f"{scenario.name}_timeseries.csv")
    metrics.to_csv(out_dir / f"{scenario.name}_metrics.csv")
    click.echo(f"{scenario.name}: {len(series.t)} steps")
    click.echo(metrics.to_text())
    return metrics.diverged


@main.command()
@click.option("--config", "config_paths", multiple=True, required=True,
              type=click.Path(exists=False), help="Scenario config file (repeatable).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel scenarios when several configs are given.")
@click.option("--backend", type=str, default=None, help="Loop backend: compiled or python.")
def simulate(config_paths, out_dir, seed, jobs, backend) -> None:
    """Run scenarios and write <name>_timeseries.csv and <name>_metrics.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = [_build_scenario(_load(p), seed) for p in config_paths]
    if jobs > 1 and len(scenarios) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            diverged = list(pool.map(lambda s: _simulate_one(s, out, backend), scenarios))
    else:
        diverged = [_simulate_one(s, out, backend) for s in scenarios]
    sys.exit(EXIT_DIVERGED if any(diverged) else EXIT_OK)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the search seed.")
@click.option("--backend", type=str, default=None)
def tune(config_path, out_dir, seed, backend) -> None:
    """Tune controller gains on the configured step scenario."""
    cfg = _load(config_path)
    if cfg.sdsa is None:
        click.echo("config error: missing required section: sdsa", err=True)
        sys.exit(EXIT_CONFIG)
    scenario = _build_scenario(cfg, None)
    warm = gain_vector(scenario.gains)
    sdsa_cfg = cfg.sdsa.build(warm)
    if seed is not None:
        sdsa_cfg.seed = seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        gains, result = tune_gains(
            scenario,
            sdsa_cfg,
            desired_overshoot=cfg.sdsa.objective.overshoot,
            desired_settling=cfg.sdsa.objective.settling,
            backend=backend,
        )
    except TypeError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    (out / "gains.cfg").write_text(gains_to_yaml(gains), encoding="utf-8")
    history_to_csv(result.history, out / "convergence.csv")
    click.echo(
        f"best cost {result.best_cost:.6g} after {result.iterations} iterations "
        f"({result.evaluations} evaluations)"
    )
    for ch in CHANNELS:
        g = gains[ch]
        click.echo(f"{ch}: kp={g.kp:.6g} ki={g.ki:.6g} kd={g.kd:.6g} ka={g.ka:.6g} tf={g.tf:.6g}")
    sys.exit(EXIT_OK)


@main.command(name="stability")
@click.option("--config", "config_path", required=True, type=click.Path(exists=False))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="Optional directory for eigenvalues.csv.")
@click.option("--hover-altitude", type=float, default=50.0, show_default=True)
def stability_cmd(config_path, out_dir, hover_altitude) -> None:
    """Closed-loop stability report at the hover linearization point."""
    cfg = _load(config_path)
    if cfg.scenario is None:
        click.echo("config error: missing required section: scenario", err=True)
        sys.exit(EXIT_CONFIG)
    params = cfg.params.build()
    gains = cfg.scenario.control.gains.build()
    eq_state, eq_input = hover_equilibrium(params, altitude=hover_altitude)
    try:
        model = linearize(eq_state, eq_input, params)
    except NotEquilibriumError as exc:
        click.echo(f"linearization error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    a_cl = stability.closed_loop_matrix(
        augment_tracking(model), [gains[ch] for ch in CHANNELS]
    )
    report = stability.analyze(a_cl)
    click.echo(report.summary())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stability.eigenvalues_to_csv(report.eigenvalues, out / "eigenvalues.csv")
    ok = report.is_hurwitz and report.p_min_eigenvalue is not None and report.p_min_eigenvalue > 0
    sys.exit(EXIT_OK if ok else EXIT_UNSTABLE)


@main.command(name="filter-demo")
@click.option("--config", "config_path", required=True, type=click.Path(exists=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
def filter_demo(config_path, out_dir, seed, jobs) -> None:
    """Estimator comparison: genetic filter vs Kalman baseline, plus altitude."""
    cfg = _load(config_path)
    if cfg.filter_demo is None:
        click.echo("config error: missing required section: filter_demo", err=True)
        sys.exit(EXIT_CONFIG)
    demo = cfg.filter_demo
    base_seed = demo_seed = 0 if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def benchmark_seed(s: int) -> tuple[float, float]:
        rng = np.random.default_rng(s)
        a, qs, rs = demo.coefficient, demo.process_std, demo.measurement_std
        n = demo.steps
        truth = np.empty(n)
        meas = np.empty(n)
        x = 0.0
        for k in range(n):
            x = a * x + qs * rng.standard_normal()
            truth[k] = x
            meas[k] = x + rs * rng.standard_normal()
        model = SystemModel(
            propagate=lambda state, w: np.array([a * state[0] + w[0]]),
            measure=lambda state: np.array([state[0]]),
            process_noise_std=np.array([qs]),
            measurement_noise_std=np.array([rs]),
        )
        gf_cfg = GfConfig(
            population_size=demo.population,
            max_generations=demo.generations,
            mutation_rate=demo.mutation_rate,
            mutation_scale=(qs / 2.0,),
            init_spread=(qs,),
        )
        gf_rng = np.random.default_rng(s + 1_000_003)
        est = np.empty(n)
        state = np.array([0.0])
        for k in range(n):
            state = gf_update(state, [meas[k]], model, gf_cfg, gf_rng).estimate
            est[k] = state[0]
        kf = kalman_filter_1d(meas, a, qs**2, rs**2, x0=0.0, p0=qs**2)
        gf_rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
        kf_rmse = float(np.sqrt(np.mean((kf - truth) ** 2)))
        return gf_rmse, kf_rmse

    seeds = [base_seed + i for i in range(demo.seeds)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(benchmark_seed, seeds))
    else:
        results = [benchmark_seed(s) for s in seeds]

    # altitude channel: smooth a noisy altitude record from a gentle climb
    alt_rng = np.random.default_rng(demo_seed + 7_777_777)
    n_alt = int(round(demo.altitude_duration / 1e-3))
    t = np.arange(n_alt) * 1e-3
    truth_alt = 50.0 + 0.5 * np.sin(0.4 * t)
    meas_alt = truth_alt + demo.altitude_noise * alt_rng.standard_normal(n_alt)
    model = make_constant_velocity_model(1e-3 / demo.generations,
                                         ALTITUDE_GF.process_noise, demo.altitude_noise)
    gf_cfg = GfConfig(
        population_size=demo.population,
        max_generations=demo.generations,
        mutation_rate=demo.mutation_rate,
        mutation_scale=ALTITUDE_GF.mutation_scale,
        init_spread=ALTITUDE_GF.init_spread,
    )
    gf_rng = np.random.default_rng(demo_seed + 13)
    est_alt = np.empty(n_alt)
    state = np.array([meas_alt[0], 0.0])
    for k in range(n_alt):
        state = gf_update(state, [meas_alt[k]], model, gf_cfg, gf_rng).estimate
        est_alt[k] = state[0]
    alt_gf_rmse = float(np.sqrt(np.mean((est_alt - truth_alt) ** 2)))
    alt_raw_rmse = float(np.sqrt(np.mean((meas_alt - truth_alt) ** 2)))

    with open(out / "rmse.csv", "w", encoding="utf-8") as fh:
        fh.write("case,estimator,seed,rmse\n")
        for s, (gf_rmse, kf_rmse) in zip(seeds, results):
            fh.write(f"benchmark,gf,{s},{gf_rmse:.17g}\n")
            fh.write(f"benchmark,kf,{s},{kf_rmse:.17g}\n")
        fh.write(f"benchmark,gf_median,,{np.median([r[0] for r in results]):.17g}\n")
        fh.write(f"benchmark,kf_median,,{np.median([r[1] for r in results]):.17g}\n")
        fh.write(f"altitude,raw,,{alt_raw_rmse:.17g}\n")
        fh.write(f"altitude,gf,,{alt_gf_rmse:.17g}\n")

    gf_med = float(np.median([r[0] for r in results]))
    kf_med = float(np.median([r[1] for r in results]))
    click.echo(f"benchmark median rmse: gf={gf_med:.5f} kf={kf_med:.5f} (ratio {gf_med / kf_med:.3f})")
    click.echo(f"altitude rmse: raw={alt_raw_rmse:.5f} gf={alt_gf_rmse:.5f}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
