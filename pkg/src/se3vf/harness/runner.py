"""Run experiments: simulate truth, synthesize measurements, filter, summarize."""

from __future__ import annotations

import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from se3vf.dynamics import Trajectory, read_trajectory_csv, simulate_truth
from se3vf.filter import (
    FilterRun,
    SolverError,
    error_state,
    lyapunov_value,
    run_filter,
    warn_if_degenerate,
)
from se3vf.harness.config import ExperimentConfig
from se3vf.measurement import (
    MeasurementTable,
    NoiseStreams,
    make_measurement_frame,
    make_measurement_stream,
)

log = logging.getLogger(__name__)

# summary statistics are taken over this trailing window
WINDOW_S = 30.0

DIAGNOSTIC_COLUMNS = [
    "t", "principal_angle", "x_norm", "omega_err_norm", "v_err_norm",
    "u_rot", "u_trans", "t_kin", "V", "dV_direct", "dV_closed", "solver_iters",
]


@dataclass(frozen=True)
class RunSummary:
    seed: int | None
    n_steps: int
    final_angle: float
    final_x: float
    window_s: float
    angle_max: float
    angle_mean: float
    x_max: float
    x_mean: float
    omega_err_max: float
    omega_err_mean: float
    v_err_max: float
    v_err_mean: float
    iters_max: int
    iters_median: float
    iters_mean: float
    dv_violations: int
    dv_direct_positive: int
    wall_clock_s: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not timing:
            d.pop("wall_clock_s")
        return d


@dataclass
class ExperimentResult:
    seed: int | None
    truth: Trajectory
    estimate: Trajectory
    diagnostics: np.ndarray  # one row per sample, DIAGNOSTIC_COLUMNS
    measurements: MeasurementTable
    summary: RunSummary
    filter_run: FilterRun

    def column(self, name: str) -> np.ndarray:
        return self.diagnostics[:, DIAGNOSTIC_COLUMNS.index(name)]


def _visible_at(cfg: ExperimentConfig, t: float):
    visible = cfg.scene.visible
    for entry in sorted(cfg.scene.visibility_schedule or [], key=lambda e: e["t_s"]):
        if entry["t_s"] <= t + 1e-12:
            visible = entry["visible"]
    return visible


def synthesize_measurements(
    cfg: ExperimentConfig, truth: Trajectory, seed: int, noise: bool = True
) -> MeasurementTable:
    """Measurements of ``truth`` for one seed, honoring the visibility schedule."""
    scene = cfg.scene_obj()
    noise_spec = cfg.noise_spec(seed, noise)
    rule = cfg.scene.weights
    if not cfg.scene.visibility_schedule:
        stream = make_measurement_stream(truth, scene, noise_spec, visible=cfg.scene.visible)
        return MeasurementTable.from_stream(stream, rule)
    streams = NoiseStreams(seed)
    frames = []
    for i in range(len(truth)):
        state = truth.state(i)
        frames.append(make_measurement_frame(state, scene, _visible_at(cfg, state.t), noise_spec,
                                             None, streams))
    return MeasurementTable.from_frames(frames, rule)


def _windowed(values: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    w = values[mask]
    return float(np.max(w)), float(np.mean(w))


def diagnostics_table(
    truth: Trajectory, run: FilterRun, table: MeasurementTable, cfg: ExperimentConfig
) -> np.ndarray:
    """Per-step diagnostic rows; step 0 carries NaN for the step changes."""
    gains = cfg.estimator_gains()
    err = error_state(truth.rot, truth.trans, rot_hat=run.rot, trans_hat=run.trans,
                      phi=run.phi, p_bar=table.p_bar)
    K = np.stack([table.K(i) for i in range(len(table))])
    if not np.all(K == K[0]):
        log.warning("visible set changes during the run: K varies per step, so the "
                    "closed-form energy decrease is not guaranteed across switches")
    u_rot, u_trans, t_kin = lyapunov_value(err, K, gains)
    v = u_rot + u_trans + t_kin
    n = len(truth.t)
    dv_direct = np.full(n, np.nan)
    dv_closed = np.full(n, np.nan)
    dv_direct[1:] = np.diff(v)
    s = run.phi[1:] + run.phi[:-1]
    dv_closed[1:] = -0.5 * gains.l_gain * np.einsum("ij,ij->i", s, s)
    iters = np.zeros(n)
    iters[1:] = run.iterations
    vel_err = truth.xi - run.xi_hat
    return np.column_stack([
        truth.t, err.principal_angle, np.linalg.norm(err.x, axis=-1),
        np.linalg.norm(vel_err[:, :3], axis=-1), np.linalg.norm(vel_err[:, 3:], axis=-1),
        u_rot, u_trans, t_kin, v, dv_direct, dv_closed, iters,
    ])


def summarize(diag: np.ndarray, seed: int | None, wall_clock_s: float = 0.0) -> RunSummary:
    col = {name: diag[:, k] for k, name in enumerate(DIAGNOSTIC_COLUMNS)}
    t = col["t"]
    mask = t >= t[-1] - WINDOW_S - 1e-9
    iters = col["solver_iters"][1:]
    angle_max, angle_mean = _windowed(col["principal_angle"], mask)
    x_max, x_mean = _windowed(col["x_norm"], mask)
    w_max, w_mean = _windowed(col["omega_err_norm"], mask)
    v_max, v_mean = _windowed(col["v_err_norm"], mask)
    return RunSummary(
        seed=seed,
        n_steps=len(t) - 1,
        final_angle=float(col["principal_angle"][-1]),
        final_x=float(col["x_norm"][-1]),
        window_s=float(min(WINDOW_S, t[-1] - t[0])),
        angle_max=angle_max, angle_mean=angle_mean,
        x_max=x_max, x_mean=x_mean,
        omega_err_max=w_max, omega_err_mean=w_mean,
        v_err_max=v_max, v_err_mean=v_mean,
        iters_max=int(np.max(iters)),
        iters_median=float(np.median(iters)),
        iters_mean=float(np.mean(iters)),
        dv_violations=int(np.sum(col["dV_closed"][1:] > 0.0)),
        dv_direct_positive=int(np.sum(col["dV_direct"][1:] > 0.0)),
        wall_clock_s=wall_clock_s,
    )


def filter_table(
    cfg: ExperimentConfig, truth: Trajectory, table: MeasurementTable, seed: int | None,
    started: float | None = None,
) -> ExperimentResult:
    """Filter an existing measurement table against a known truth."""
    started = time.perf_counter() if started is None else started
    warn_if_degenerate(table.K(0))
    g_hat0, xi_hat0 = cfg.initial_estimate()
    run = run_filter(table, g_hat0, xi_hat0, cfg.estimator_gains(), cfg.h_s, cfg.solver_config())
    diag = diagnostics_table(truth, run, table, cfg)
    estimate = Trajectory(t=run.t, rot=run.rot, trans=run.trans, xi=run.xi_hat, h=cfg.h_s)
    summary = summarize(diag, seed, time.perf_counter() - started)
    return ExperimentResult(seed, truth, estimate, diag, table, summary, run)


def simulate(cfg: ExperimentConfig) -> Trajectory:
    return simulate_truth(cfg.initial_truth(), cfg.wrench_profile(), cfg.body_params(),
                          cfg.h_s, cfg.n_steps)


def run_experiment(cfg: ExperimentConfig, seed: int, noise: bool = True) -> ExperimentResult:
    """One full run; deterministic in ``(cfg, seed, noise)``.

    Raises:
        SolverError: with ``step`` set to the failing filter step.
    """
    started = time.perf_counter()
    truth = simulate(cfg)
    table = synthesize_measurements(cfg, truth, seed, noise)
    return filter_table(cfg, truth, table, seed, started)


def replay(
    cfg: ExperimentConfig, measurements_csv: str | Path, truth_csv: str | Path,
    seed: int | None = None,
) -> ExperimentResult:
    """Re-run the filter on recorded measurements and truth."""
    truth = read_trajectory_csv(truth_csv)
    table = MeasurementTable.from_csv(measurements_csv, cfg.scene.weights)
    if len(table) != len(truth) or not np.array_equal(table.t, truth.t):
        raise ValueError("measurement and truth time stamps do not match")
    return filter_table(cfg, truth, table, seed)


# ------------------------------------------------------------------ batches


@dataclass
class BatchResult:
    summaries: list  # (seed, RunSummary), sorted by seed
    failures: list  # (seed, message), sorted by seed
    aggregate: dict
    results: list = dataclasses.field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _aggregate(summaries: list) -> dict:
    """Mean, max and standard deviation of every numeric summary field.

    The mean is clipped into ``[min, max]`` so identical inputs aggregate to
    exactly that value with zero spread.
    """
    if not summaries:
        return {}
    out = {"n_runs": len(summaries)}
    skip = {"seed", "n_steps", "window_s", "wall_clock_s"}
    for f in dataclasses.fields(RunSummary):
        if f.name in skip:
            continue
        x = np.array([getattr(s, f.name) for _, s in summaries], dtype=float)
        mean = float(np.clip(np.mean(x), x.min(), x.max()))
        out[f.name] = {"mean": mean, "max": float(x.max()),
                       "std": float(np.sqrt(np.mean((x - mean) ** 2)))}
    return out


def worker_count(n_tasks: int) -> int:
    """Parallel workers for a batch, capped by ``SE3VF_THREADS``."""
    cap = os.environ.get("SE3VF_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            log.warning("ignoring non-integer SE3VF_THREADS=%r", cap)
    return max(1, min(limit, n_tasks))


def _one_seed(cfg: ExperimentConfig, seed: int, noise: bool, out_dir, keep: bool):
    try:
        result = run_experiment(cfg, seed, noise)
    except SolverError as err:
        return seed, None, f"solver failed at step {err.step}: {err}", None
    except (ValueError, ArithmeticError) as err:
        return seed, None, f"{type(err).__name__}: {err}", None
    if out_dir is not None:
        from se3vf.harness.outputs import emit_outputs

        emit_outputs(result, cfg, Path(out_dir) / f"seed_{seed}")
    return seed, result.summary, None, result if keep else None


def run_batch(
    cfg: ExperimentConfig, seeds, noise: bool = True, out_dir=None, keep_results: bool = False,
    workers: int | None = None,
) -> BatchResult:
    """Run every seed; a failing seed is reported without stopping the others."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("run_batch needs at least one seed")
    workers = worker_count(len(seeds)) if workers is None else max(1, workers)
    if workers == 1:
        outcomes = [_one_seed(cfg, s, noise, out_dir, keep_results) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_one_seed, cfg, s, noise, out_dir, keep_results) for s in seeds]
            outcomes = [f.result() for f in futures]
    outcomes.sort(key=lambda o: o[0])
    summaries = [(s, summ) for s, summ, _, _ in outcomes if summ is not None]
    failures = [(s, msg) for s, _, msg, _ in outcomes if msg is not None]
    results = [r for _, _, _, r in outcomes if r is not None]
    return BatchResult(summaries, failures, _aggregate(summaries), results)
