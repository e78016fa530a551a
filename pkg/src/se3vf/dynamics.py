"""Truth generation: 6DOF rigid-body dynamics and the discrete pose step.

Velocities (Omega, v) are advanced with classical RK4 on the Newton-Euler
equations; the pose is advanced with the same trapezoidal exponential rule
the filter uses internally (:func:`step_pose`), so the estimator's kinematic
model is exact for the simulated truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from se3vf.csvio import read_table, write_table
from se3vf.liegroup import Pose, exp_so3, is_rotation, matvec


def step_pose(g_i: Pose, xi_i: np.ndarray, xi_ip1: np.ndarray, h: float) -> Pose:
    """One trapezoidal pose step.

    ``R+ = R exp(h/2 (Omega_i + Omega_i+1))`` and
    ``b+ = b + h/2 R+ (v_i + v_i+1)``. Generalized velocities are stacked
    ``[Omega; v]`` along the last axis.
    """
    xi_sum = np.asarray(xi_i) + np.asarray(xi_ip1)
    rot = g_i.rot @ exp_so3(0.5 * h * xi_sum[..., :3])
    trans = g_i.trans + 0.5 * h * matvec(rot, xi_sum[..., 3:])
    return Pose(rot, trans)


@dataclass(frozen=True)
class BodyParams:
    mass_v: float
    inertia_v: np.ndarray

    def __post_init__(self) -> None:
        inertia = np.asarray(self.inertia_v, dtype=float)
        object.__setattr__(self, "inertia_v", inertia)
        if not self.mass_v > 0:
            raise ValueError(f"mass_v must be positive, got {self.mass_v}")
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T, rtol=0, atol=1e-12):
            raise ValueError("inertia_v must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise ValueError("inertia_v must be positive definite")


class WrenchProfile(Protocol):
    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(force, torque)`` in the body frame at time ``t``."""
        ...


@dataclass(frozen=True)
class ZeroWrench:
    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(3), np.zeros(3)


@dataclass(frozen=True)
class SinusoidWrench:
    """Componentwise ``amp * sin(freq * t + phase)`` for force and torque."""

    force_amp: np.ndarray
    force_freq: np.ndarray
    force_phase: np.ndarray
    torque_amp: np.ndarray
    torque_freq: np.ndarray
    torque_phase: np.ndarray

    @classmethod
    def reference(cls) -> SinusoidWrench:
        # force 1e-3 [10 cos(0.1t), 2 sin(0.2t), -2 sin(0.5t)] N, torque 1e-6 * force
        amp = 1e-3 * np.array([10.0, 2.0, -2.0])
        freq = np.array([0.1, 0.2, 0.5])
        phase = np.array([np.pi / 2, 0.0, 0.0])
        return cls(amp, freq, phase, 1e-6 * amp, freq, phase)

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        f = np.asarray(self.force_amp) * np.sin(np.asarray(self.force_freq) * t + self.force_phase)
        tau = np.asarray(self.torque_amp) * np.sin(
            np.asarray(self.torque_freq) * t + self.torque_phase
        )
        return f, tau


@dataclass(frozen=True)
class TabulatedWrench:
    """Piecewise-linear interpolation of tabulated samples (held constant outside)."""

    times: np.ndarray
    forces: np.ndarray
    torques: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be a strictly increasing 1-D sequence")
        for name in ("forces", "torques"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (times.size, 3):
                raise ValueError(f"{name} must have shape ({times.size}, 3)")

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        f = np.array([np.interp(t, self.times, np.asarray(self.forces)[:, k]) for k in range(3)])
        tau = np.array([np.interp(t, self.times, np.asarray(self.torques)[:, k]) for k in range(3)])
        return f, tau


@dataclass(frozen=True)
class TrueState:
    pose: Pose
    xi: np.ndarray
    t: float = 0.0


@dataclass
class Trajectory:
    """Uniformly sampled truth: ``n_steps + 1`` samples at spacing ``h``."""

    t: np.ndarray
    rot: np.ndarray
    trans: np.ndarray
    xi: np.ndarray
    h: float

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> TrueState:
        return TrueState(Pose(self.rot[i], self.trans[i]), self.xi[i], float(self.t[i]))

    def pose(self, i: int) -> Pose:
        return Pose(self.rot[i], self.trans[i])


def _rhs(t: float, xi: np.ndarray, wrench: WrenchProfile, p: BodyParams) -> np.ndarray:
    omega, v = xi[:3], xi[3:]
    force, torque = wrench(t)
    j = p.inertia_v
    omega_dot = np.linalg.solve(j, -np.cross(omega, j @ omega) + torque)
    v_dot = -np.cross(omega, v) + force / p.mass_v
    return np.concatenate([omega_dot, v_dot])


def dynamics_rhs(
    s: TrueState, w: WrenchProfile, p: BodyParams
) -> tuple[np.ndarray, np.ndarray]:
    """Newton-Euler right-hand side ``(Omega_dot, v_dot)`` in the body frame."""
    d = _rhs(s.t, np.asarray(s.xi, dtype=float), w, p)
    return d[:3], d[3:]


def integrate_velocities_rk4(
    s: TrueState, w: WrenchProfile, p: BodyParams, h: float
) -> np.ndarray:
    """Classical RK4 step on ``[Omega; v]``; returns the velocity at ``t + h``."""
    if not h > 0:
        raise ValueError("h must be positive")
    xi = np.asarray(s.xi, dtype=float)
    t = s.t
    k1 = _rhs(t, xi, w, p)
    k2 = _rhs(t + h / 2, xi + h / 2 * k1, w, p)
    k3 = _rhs(t + h / 2, xi + h / 2 * k2, w, p)
    k4 = _rhs(t + h, xi + h * k3, w, p)
    return xi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_truth(
    init: TrueState, w: WrenchProfile, p: BodyParams, h: float, n: int
) -> Trajectory:
    if not h > 0:
        raise ValueError("h must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    if not is_rotation(init.pose.rot):
        raise ValueError("initial attitude is not a rotation matrix")
    t = init.t + h * np.arange(n + 1)
    rot = np.empty((n + 1, 3, 3))
    trans = np.empty((n + 1, 3))
    xi = np.empty((n + 1, 6))
    rot[0], trans[0], xi[0] = init.pose.rot, init.pose.trans, init.xi
    g = init.pose
    for i in range(n):
        state = TrueState(g, xi[i], float(t[i]))
        xi[i + 1] = integrate_velocities_rk4(state, w, p, h)
        g = step_pose(g, xi[i], xi[i + 1], h)
        rot[i + 1], trans[i + 1] = g.rot, g.trans
    return Trajectory(t=t, rot=rot, trans=trans, xi=xi, h=h)


@dataclass(frozen=True)
class ReferenceScenario:
    """Vehicle parameters and initial truth of the reference flight."""

    body: BodyParams = field(
        default_factory=lambda: BodyParams(0.42, np.diag(1e-3 * np.array([51.2, 60.2, 59.6])))
    )
    wrench: SinusoidWrench = field(default_factory=SinusoidWrench.reference)

    @staticmethod
    def initial_state() -> TrueState:
        axis = np.array([3.0, -6.0, 2.0]) / 7.0
        rot = exp_so3(np.pi / 4 * axis)
        xi = np.array([0.2, -0.05, 0.1, -0.05, 0.15, 0.03])
        return TrueState(Pose(rot, np.array([2.5, 0.5, -3.0])), xi, 0.0)


def trajectory_columns() -> list[str]:
    """CSV header: ``t``, ``R`` row-major, ``b``, ``Omega``, ``v``."""
    rot = [f"R{r}{c}" for r in range(1, 4) for c in range(1, 4)]
    return ["t", *rot, "b1", "b2", "b3", "Omega1", "Omega2", "Omega3", "v1", "v2", "v3"]


def trajectory_table(traj: Trajectory) -> np.ndarray:
    n = len(traj.t)
    return np.column_stack([traj.t, traj.rot.reshape(n, 9), traj.trans, traj.xi])


def write_trajectory_csv(path, traj: Trajectory) -> None:
    write_table(path, trajectory_columns(), trajectory_table(traj))


def read_trajectory_csv(path) -> Trajectory:
    """Load a trajectory written by :func:`write_trajectory_csv`.

    ``h`` is recovered from the first two time stamps.
    """
    header, data = read_table(path)
    if header != trajectory_columns():
        raise ValueError(f"{path}: header does not match the trajectory column contract")
    if len(data) < 2:
        raise ValueError(f"{path}: need at least two samples")
    t = data[:, 0]
    return Trajectory(t=t, rot=data[:, 1:10].reshape(-1, 3, 3), trans=data[:, 10:13],
                      xi=data[:, 13:19], h=float(t[1] - t[0]))
