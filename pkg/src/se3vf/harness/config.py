"""Experiment configuration: YAML in, validated dataclasses out.

Field names carry their units; angles are degrees in the file and radians
everywhere inside the library.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from se3vf.dynamics import BodyParams, SinusoidWrench, TabulatedWrench, TrueState, ZeroWrench
from se3vf.filter import EstimatorGains, SolverConfig
from se3vf.liegroup import Pose, exp_so3
from se3vf.measurement import NoiseSpec, Scene, observability_check

PRESETS = ("paper_sec6",)


class ConfigError(ValueError):
    """Invalid or unreadable configuration; the message starts with the field path."""


@dataclass
class BodyConfig:
    mass_kg: float = 0.42
    inertia_kgm2: list = field(default_factory=lambda: np.diag([0.0512, 0.0602, 0.0596]).tolist())


@dataclass
class WrenchConfig:
    profile: str = "sinusoid"
    force_amp_N: list = field(default_factory=lambda: [0.01, 0.002, -0.002])
    force_freq_radps: list = field(default_factory=lambda: [0.1, 0.2, 0.5])
    force_phase_rad: list = field(default_factory=lambda: [math.pi / 2, 0.0, 0.0])
    torque_amp_Nm: list = field(default_factory=lambda: [1e-8, 2e-9, -2e-9])
    torque_freq_radps: list = field(default_factory=lambda: [0.1, 0.2, 0.5])
    torque_phase_rad: list = field(default_factory=lambda: [math.pi / 2, 0.0, 0.0])
    times_s: list = field(default_factory=list)
    forces_N: list = field(default_factory=list)
    torques_Nm: list = field(default_factory=list)


@dataclass
class SceneConfig:
    beacons_m: list = field(default_factory=lambda: Scene.reference().beacons.tolist())
    inertial_dirs: list = field(default_factory=lambda: Scene.reference().inertial_dirs.tolist())
    visible: list | None = None
    # piecewise-constant visibility: [{"t_s": 0.0, "visible": [...]}, ...]
    visibility_schedule: list | None = None
    weights: Any = "normalized"


@dataclass
class NoiseConfig:
    dir_bound_deg: float = 2.4
    gyro_bound_degps: float = 0.97
    vel_bound_mps: float = 0.025


@dataclass
class GainsConfig:
    m: float = 1.5
    l: float = 0.1  # noqa: E741
    k_p: float = 150.0
    kappa: float = 100.0


@dataclass
class InitConfig:
    attitude_rotvec_rad: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    position_m: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    omega_radps: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    vel_mps: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


@dataclass
class SolverSection:
    tol: float = 1e-12
    max_iter: int = 100
    damping: float = 1.0


@dataclass
class OutputConfig:
    dir: str = "out"
    truth_csv: bool = True
    estimate_csv: bool = True
    diagnostics_csv: bool = True
    measurements_csv: bool = True
    summary_json: bool = True
    plot_script: bool = True


def _reference_truth() -> InitConfig:
    axis = [3 / 7, -6 / 7, 2 / 7]
    return InitConfig(
        attitude_rotvec_rad=[math.pi / 4 * a for a in axis],
        position_m=[2.5, 0.5, -3.0],
        omega_radps=[0.2, -0.05, 0.1],
        vel_mps=[-0.05, 0.15, 0.03],
    )


def _reference_estimate() -> InitConfig:
    return InitConfig(omega_radps=[0.1, 0.45, 0.05], vel_mps=[2.05, 0.64, 1.29])


@dataclass
class ExperimentConfig:
    body: BodyConfig = field(default_factory=BodyConfig)
    wrench: WrenchConfig = field(default_factory=WrenchConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gains: GainsConfig = field(default_factory=GainsConfig)
    h_s: float = 0.01
    duration_s: float = 60.0
    init_truth: InitConfig = field(default_factory=_reference_truth)
    init_estimate: InitConfig = field(default_factory=_reference_estimate)
    solver: SolverSection = field(default_factory=SolverSection)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    seeds: list = field(default_factory=lambda: [0])

    # ------------------------------------------------------------ builders

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.h_s))

    def body_params(self) -> BodyParams:
        return BodyParams(self.body.mass_kg, np.array(self.body.inertia_kgm2, dtype=float))

    def wrench_profile(self):
        w = self.wrench
        if w.profile == "zero":
            return ZeroWrench()
        if w.profile == "tabulated":
            return TabulatedWrench(np.array(w.times_s, float), np.array(w.forces_N, float),
                                   np.array(w.torques_Nm, float))
        return SinusoidWrench(*(np.array(v, dtype=float) for v in (
            w.force_amp_N, w.force_freq_radps, w.force_phase_rad,
            w.torque_amp_Nm, w.torque_freq_radps, w.torque_phase_rad)))

    def scene_obj(self) -> Scene:
        return Scene(np.array(self.scene.beacons_m, float), np.array(self.scene.inertial_dirs, float))

    def noise_spec(self, seed: int, enabled: bool = True) -> NoiseSpec:
        if not enabled:
            return NoiseSpec(seed=seed)
        n = self.noise
        return NoiseSpec(math.radians(n.dir_bound_deg), math.radians(n.gyro_bound_degps),
                         n.vel_bound_mps, seed)

    def estimator_gains(self) -> EstimatorGains:
        g = self.gains
        return EstimatorGains(g.m, g.l, g.k_p, g.kappa)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(s.tol, s.max_iter, s.damping)

    def initial_truth(self) -> TrueState:
        c = self.init_truth
        pose = Pose(exp_so3(np.array(c.attitude_rotvec_rad, float)), np.array(c.position_m, float))
        return TrueState(pose, np.array(c.omega_radps + c.vel_mps, float), 0.0)

    def initial_estimate(self) -> tuple[Pose, np.ndarray]:
        c = self.init_estimate
        pose = Pose(exp_so3(np.array(c.attitude_rotvec_rad, float)), np.array(c.position_m, float))
        return pose, np.array(c.omega_radps + c.vel_mps, float)

    # -------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path: str | Path | None = None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)
        if path is not None:
            try:
                Path(path).write_text(text, encoding="utf-8")
            except OSError as err:
                raise OSError(f"cannot write config to {path}: {err}") from err
        return text


_SECTIONS = {
    "body": BodyConfig,
    "wrench": WrenchConfig,
    "scene": SceneConfig,
    "noise": NoiseConfig,
    "gains": GainsConfig,
    "init_truth": InitConfig,
    "init_estimate": InitConfig,
    "solver": SolverSection,
    "outputs": OutputConfig,
}


def preset(name: str) -> ExperimentConfig:
    if name != "paper_sec6":
        raise ConfigError(f"preset: unknown preset {name!r} (known: {', '.join(PRESETS)})")
    return ExperimentConfig()


def _build_section(name: str, cls, data: Any):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown field")
    return dataclasses.replace(cls(), **data)


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    base = preset(data["preset"]) if "preset" in data else ExperimentConfig()
    data = {k: v for k, v in data.items() if k != "preset"}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    updates: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            merged = dataclasses.asdict(getattr(base, key))
            if value is not None:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key}: expected a mapping, got {type(value).__name__}")
                merged.update(value)
            updates[key] = _build_section(key, _SECTIONS[key], merged)
        else:
            updates[key] = value
    cfg = dataclasses.replace(base, **updates)
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a YAML config.

    Raises:
        ConfigError: unreadable file, malformed YAML or a failed check.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"<file>: cannot read {path}: {err}") from err
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"<file>: {path} is not valid YAML: {err}") from err
    return from_dict(data or {})


def _vec(path: str, value: Any, n: int = 3) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path}: expected {n} numbers") from err
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}: expected {n} finite numbers, got {value!r}")
    return arr


def _positive(path: str, value: Any) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0 \
            or not math.isfinite(value):
        raise ConfigError(f"{path}: must be a positive number, got {value!r}")


def _nonneg(path: str, value: Any) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value >= 0:
        raise ConfigError(f"{path}: must be a non-negative number, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    """Check every field; raise :class:`ConfigError` naming the first bad one."""
    _positive("h_s", cfg.h_s)
    _positive("duration_s", cfg.duration_s)
    ratio = cfg.duration_s / cfg.h_s
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"duration_s: {cfg.duration_s} is not a whole number of h_s steps")

    _positive("body.mass_kg", cfg.body.mass_kg)
    try:
        cfg.body_params()
    except (ValueError, TypeError) as err:
        raise ConfigError(f"body.inertia_kgm2: {err}") from err

    w = cfg.wrench
    if w.profile not in ("sinusoid", "zero", "tabulated"):
        raise ConfigError(f"wrench.profile: expected sinusoid, zero or tabulated, got {w.profile!r}")
    if w.profile == "sinusoid":
        for name in ("force_amp_N", "force_freq_radps", "force_phase_rad",
                     "torque_amp_Nm", "torque_freq_radps", "torque_phase_rad"):
            _vec(f"wrench.{name}", getattr(w, name))
    if w.profile == "tabulated":
        try:
            cfg.wrench_profile()
        except (ValueError, TypeError) as err:
            raise ConfigError(f"wrench.times_s: {err}") from err

    try:
        scene = cfg.scene_obj()
    except (ValueError, TypeError) as err:
        raise ConfigError(f"scene.beacons_m: {err}") from err
    nb = scene.n_beacons
    visible_sets = []
    if cfg.scene.visible is not None:
        visible_sets.append(("scene.visible", cfg.scene.visible))
    if cfg.scene.visibility_schedule is not None:
        for k, entry in enumerate(cfg.scene.visibility_schedule):
            if not isinstance(entry, dict) or set(entry) != {"t_s", "visible"}:
                raise ConfigError(f"scene.visibility_schedule[{k}]: need keys t_s and visible")
            visible_sets.append((f"scene.visibility_schedule[{k}].visible", entry["visible"]))
    for path, vis in visible_sets:
        if not isinstance(vis, list) or any(not isinstance(j, int) or not 0 <= j < nb for j in vis) \
                or len(set(vis)) != len(vis):
            raise ConfigError(f"{path}: expected distinct beacon indices in [0, {nb})")
        if not observability_check(len(vis), len(scene.inertial_dirs)):
            raise ConfigError(f"{path}: {len(vis)} beacons and {len(scene.inertial_dirs)} "
                              "inertial directions do not make the pose observable")
    if not observability_check(nb, len(scene.inertial_dirs)):
        raise ConfigError("scene.beacons_m: scene is not observable")
    weights = cfg.scene.weights
    if isinstance(weights, str):
        if weights not in ("normalized", "uniform"):
            raise ConfigError(f"scene.weights: expected normalized, uniform or a list, got {weights!r}")
    elif not isinstance(weights, list) or any(not isinstance(x, (int, float)) or x <= 0 for x in weights):
        raise ConfigError("scene.weights: explicit weights must be a list of positive numbers")

    for name in ("dir_bound_deg", "gyro_bound_degps", "vel_bound_mps"):
        _nonneg(f"noise.{name}", getattr(cfg.noise, name))
    for name in ("m", "l", "k_p", "kappa"):
        _positive(f"gains.{name}", getattr(cfg.gains, name))
    if cfg.gains.l == cfg.gains.m:
        raise ConfigError("gains.l: must differ from gains.m")

    for section in ("init_truth", "init_estimate"):
        c = getattr(cfg, section)
        for name in ("attitude_rotvec_rad", "position_m", "omega_radps", "vel_mps"):
            _vec(f"{section}.{name}", getattr(c, name))

    _positive("solver.tol", cfg.solver.tol)
    if not isinstance(cfg.solver.max_iter, int) or cfg.solver.max_iter < 1:
        raise ConfigError("solver.max_iter: must be a positive integer")
    if not isinstance(cfg.solver.damping, (int, float)) or not 0 < cfg.solver.damping <= 1:
        raise ConfigError("solver.damping: must lie in (0, 1]")
    for name in ("truth_csv", "estimate_csv", "diagnostics_csv", "measurements_csv",
                 "summary_json", "plot_script"):
        if not isinstance(getattr(cfg.outputs, name), bool):
            raise ConfigError(f"outputs.{name}: must be true or false")
    if not isinstance(cfg.seeds, list) or not cfg.seeds or any(
            not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in cfg.seeds):
        raise ConfigError("seeds: expected a non-empty list of non-negative integers")
