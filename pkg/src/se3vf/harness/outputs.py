"""Write run results to disk: CSV tables, summary JSON and a plotting script."""

from __future__ import annotations

import json
from pathlib import Path

from se3vf.csvio import write_table
from se3vf.dynamics import write_trajectory_csv
from se3vf.harness.config import ExperimentConfig
from se3vf.harness.runner import DIAGNOSTIC_COLUMNS, ExperimentResult

PLOT_SCRIPT = '''\
"""Figures for one se3vf run. Needs numpy and matplotlib; run from any directory."""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent


def load(name):
    data = np.genfromtxt(HERE / name, delimiter=",", names=True)
    return data


truth = load("truth.csv")
est = load("estimate.csv")
diag = load("diagnostics.csv")

fig = plt.figure(figsize=(6, 5))
ax = fig.add_subplot(projection="3d")
ax.plot(truth["b1"], truth["b2"], truth["b3"], label="true")
ax.plot(est["b1"], est["b2"], est["b3"], "--", label="estimate")
ax.set_xlabel("x [m]")
ax.set_ylabel("y [m]")
ax.set_zlabel("z [m]")
ax.set_title("Trajectory of the body")
ax.legend()
fig.savefig(HERE / "trajectory.png", dpi=150)

panels = [
    ("x_norm", "position error [m]"),
    ("principal_angle", "principal angle [rad]"),
    ("v_err_norm", "translational velocity error [m/s]"),
    ("omega_err_norm", "angular velocity error [rad/s]"),
]
fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
for ax, (col, label) in zip(axes.flat, panels):
    ax.plot(diag["t"], diag[col])
    ax.set_ylabel(label)
    ax.grid(True)
for ax in axes[1]:
    ax.set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(HERE / "errors.png", dpi=150)
print("wrote", HERE / "trajectory.png", "and", HERE / "errors.png")
'''


def summary_json(result: ExperimentResult) -> str:
    """Summary without wall-clock time, so the file is a pure function of the inputs."""
    return json.dumps(result.summary.to_dict(timing=False), indent=2, sort_keys=True) + "\n"


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err


def emit_outputs(result: ExperimentResult, cfg: ExperimentConfig, out_dir=None) -> list[Path]:
    """Write the files enabled in ``cfg.outputs``; returns the paths written.

    When every toggle is off nothing is written, not even the directory.

    Raises:
        OSError: naming the path that could not be written.
    """
    o = cfg.outputs
    jobs = [
        (o.truth_csv, "truth.csv", lambda p: write_trajectory_csv(p, result.truth)),
        (o.estimate_csv, "estimate.csv", lambda p: write_trajectory_csv(p, result.estimate)),
        (o.diagnostics_csv, "diagnostics.csv",
         lambda p: write_table(p, DIAGNOSTIC_COLUMNS, result.diagnostics)),
        (o.measurements_csv, "measurements.csv", lambda p: result.measurements.to_csv(p)),
        (o.summary_json, "summary.json", lambda p: _write_text(p, summary_json(result))),
        (o.plot_script, "plot.py", lambda p: _write_text(p, PLOT_SCRIPT)),
    ]
    jobs = [j for j in jobs if j[0]]
    if not jobs:
        return []
    out = Path(o.dir if out_dir is None else out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create {out}: {err.strerror or err}") from err
    written = []
    for _, name, write in jobs:
        path = out / name
        write(path)
        written.append(path)
    cfg_path = out / "config.yaml"
    _write_text(cfg_path, cfg.dump())
    written.append(cfg_path)
    return written
