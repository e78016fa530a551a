"""Sensor synthesis: beacon directions, inertial directions, mean vectors, rates.

Column order of the direction matrices is fixed: all beacon pairs
``(lam, l)`` with ``lam < l`` in lexicographic order (column ``p_lam - p_l``),
followed by the inertial directions. Noise is bounded by construction:
directions are rotated by at most ``dir_bound`` and velocity perturbations
have norm at most ``gyro_bound`` / ``vel_bound``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable, Sequence

import numpy as np

from se3vf.csvio import read_table, write_table
from se3vf.liegroup import Pose, exp_so3, matvec, transpose

# per-channel RNG streams, spawned from one seed in this order
CHANNELS = ("directions", "beacons", "gyro", "vel")


class ObservabilityError(ValueError):
    """Too few beacons / inertial vectors to determine the pose."""


@dataclass(frozen=True)
class Scene:
    beacons: np.ndarray
    inertial_dirs: np.ndarray
    sensor_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    def __post_init__(self) -> None:
        beacons = np.atleast_2d(np.asarray(self.beacons, dtype=float))
        dirs = np.asarray(self.inertial_dirs, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "beacons", beacons)
        object.__setattr__(self, "inertial_dirs", dirs)
        object.__setattr__(
            self, "sensor_offsets", np.asarray(self.sensor_offsets, dtype=float).reshape(-1, 3)
        )
        if beacons.shape[-1] != 3 or beacons.shape[0] < 1:
            raise ValueError("scene needs at least one beacon given as a 3-vector")
        if dirs.size and np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) > 1e-12):
            raise ValueError("inertial directions must be unit vectors")

    @classmethod
    def reference(cls) -> Scene:
        """Eight beacons on the corners of a 20 m cube, nadir and magnetic field."""
        corners = 10.0 * np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
        )
        d2 = np.array([0.1, 0.975, -0.2])
        dirs = np.array([[0.0, 0.0, -1.0], d2 / np.linalg.norm(d2)])
        return cls(corners, dirs)

    @property
    def n_beacons(self) -> int:
        return self.beacons.shape[0]

    def all_visible(self) -> tuple[int, ...]:
        return tuple(range(self.n_beacons))


@dataclass(frozen=True)
class NoiseSpec:
    """Noise bounds in radians, rad/s and m/s."""

    dir_bound: float = 0.0
    gyro_bound: float = 0.0
    vel_bound: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("dir_bound", "gyro_bound", "vel_bound"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def reference(cls, seed: int = 0) -> NoiseSpec:
        return cls(np.deg2rad(2.4), np.deg2rad(0.97), 0.025, seed)

    @property
    def silent(self) -> bool:
        return self.dir_bound == 0 and self.gyro_bound == 0 and self.vel_bound == 0


class NoiseStreams:
    """Independent generators per noise channel, spawned from one seed."""

    def __init__(self, seed: int) -> None:
        children = np.random.SeedSequence(seed).spawn(len(CHANNELS))
        self._gens = {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(CHANNELS, children)}

    def __getitem__(self, channel: str) -> np.random.Generator:
        return self._gens[channel]


@dataclass(frozen=True)
class MeasurementFrame:
    """One instant's sensor snapshot (arrays may carry leading batch axes)."""

    D: np.ndarray
    L_m: np.ndarray
    p_bar: np.ndarray
    a_bar_m: np.ndarray
    xi_m: np.ndarray
    W: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.D.shape[-1] != self.L_m.shape[-1]:
            raise ValueError("D and L_m must have the same number of columns")
        if self.D.shape[-1] < 2:
            raise ObservabilityError("at least two direction columns are required")
        if np.asarray(self.W).shape[-1] != self.D.shape[-1]:
            raise ValueError("W must have one weight per direction column")
        if np.any(np.asarray(self.W) <= 0):
            raise ValueError("weights must be positive")

    @property
    def n(self) -> int:
        return self.D.shape[-1]


def observability_check(n_beacons_visible: int, n_inertial: int) -> bool:
    return n_beacons_visible >= 1 and comb(n_beacons_visible, 2) + n_inertial >= 2


def _require_observable(n_beacons_visible: int, n_inertial: int) -> None:
    if not observability_check(n_beacons_visible, n_inertial):
        raise ObservabilityError(
            f"pose not observable with {n_beacons_visible} visible beacon(s) and "
            f"{n_inertial} inertial direction(s): need C(beacons, 2) + inertial >= 2 "
            "and at least one beacon"
        )


def direction_count(n_beacons_visible: int, n_inertial: int) -> int:
    return comb(n_beacons_visible, 2) + n_inertial


def body_frame_beacons(g: Pose, scene: Scene, visible: Sequence[int] | None = None) -> np.ndarray:
    """Noise-free body-frame beacon positions ``a_j = R^T (p_j - b)``, shape ``(..., k, 3)``."""
    idx = list(scene.all_visible() if visible is None else visible)
    p = scene.beacons[idx]
    diff = p - g.trans[..., None, :]
    return np.einsum("...ji,...kj->...ki", g.rot, diff)


def _pairwise(points: np.ndarray) -> np.ndarray:
    """Columns ``x_lam - x_l`` over lexicographic pairs; ``points`` is ``(..., k, 3)``."""
    k = points.shape[-2]
    pairs = list(combinations(range(k), 2))
    if not pairs:
        return np.zeros(points.shape[:-2] + (3, 0))
    lam = [a for a, _ in pairs]
    ell = [b for _, b in pairs]
    return transpose(points[..., lam, :] - points[..., ell, :])


def reference_directions(scene: Scene, visible: Sequence[int] | None = None) -> np.ndarray:
    """Inertial-frame matrix ``D`` (3 x n) for a visible beacon set."""
    idx = list(scene.all_visible() if visible is None else visible)
    _require_observable(len(idx), len(scene.inertial_dirs))
    return np.concatenate([_pairwise(scene.beacons[idx]), scene.inertial_dirs.T], axis=-1)


def assemble_directions(
    g: Pose, scene: Scene, visible: Sequence[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free ``(D, L)`` with ``D = R L``."""
    d = reference_directions(scene, visible)
    a = body_frame_beacons(g, scene, visible)
    inertial_body = np.einsum("...ji,kj->...ik", g.rot, scene.inertial_dirs)
    ell = np.concatenate([_pairwise(a), inertial_body], axis=-1)
    return np.broadcast_to(d, ell.shape).copy(), ell


def mean_vectors(
    scene: Scene, visible: Sequence[int] | None, a_list: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Means of the visible inertial beacon positions and of the body-frame vectors."""
    idx = list(scene.all_visible() if visible is None else visible)
    if not idx:
        raise ObservabilityError("mean vectors need at least one visible beacon")
    a_list = np.asarray(a_list, dtype=float)
    return scene.beacons[idx].mean(axis=0), a_list.mean(axis=-2)


def _random_rotations(bound: float, u3: np.ndarray) -> np.ndarray:
    """Rotations of angle ``U[0, bound]`` about a uniformly random axis.

    ``u3`` holds three uniforms per rotation (last axis): axis height, axis
    azimuth and angle fraction.
    """
    z = 2.0 * u3[..., 0] - 1.0
    az = 2.0 * np.pi * u3[..., 1]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    axis = np.stack([r * np.cos(az), r * np.sin(az), z], axis=-1)
    return exp_so3((bound * u3[..., 2])[..., None] * axis)


def _random_ball(bound: float, u3: np.ndarray) -> np.ndarray:
    """Vectors with uniform direction and magnitude uniform in ``[0, bound]``."""
    z = 2.0 * u3[..., 0] - 1.0
    az = 2.0 * np.pi * u3[..., 1]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    axis = np.stack([r * np.cos(az), r * np.sin(az), z], axis=-1)
    return (bound * u3[..., 2])[..., None] * axis


def perturb_directions(L: np.ndarray, bound: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate every column of ``L`` (``(..., 3, n)``) by a bounded random rotation."""
    L = np.asarray(L, dtype=float)
    if bound == 0:
        return L.copy()
    cols = transpose(L)
    rots = _random_rotations(bound, rng.random(cols.shape[:-1] + (3,)))
    return transpose(matvec(rots, cols))


def perturb_vectors(a: np.ndarray, bound: float, rng: np.random.Generator) -> np.ndarray:
    """Row-vector variant of :func:`perturb_directions` for ``(..., k, 3)`` stacks."""
    a = np.asarray(a, dtype=float)
    if bound == 0:
        return a.copy()
    rots = _random_rotations(bound, rng.random(a.shape[:-1] + (3,)))
    return matvec(rots, a)


def perturb_velocity(
    xi: np.ndarray, noise_spec: NoiseSpec, gyro_rng: np.random.Generator, vel_rng: np.random.Generator
) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    out = xi.copy()
    if noise_spec.gyro_bound > 0:
        out[..., :3] += _random_ball(noise_spec.gyro_bound, gyro_rng.random(xi.shape[:-1] + (3,)))
    if noise_spec.vel_bound > 0:
        out[..., 3:] += _random_ball(noise_spec.vel_bound, vel_rng.random(xi.shape[:-1] + (3,)))
    return out


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def normalized_weights(D: np.ndarray) -> np.ndarray:
    """Weights ``1 / (n |d_j|^2)``: the Wahba cost of unit directions, averaged."""
    norms2 = np.sum(np.asarray(D) ** 2, axis=-2)
    return 1.0 / (D.shape[-1] * norms2)


def _synthesize(
    rot: np.ndarray,
    trans: np.ndarray,
    xi: np.ndarray,
    scene: Scene,
    visible: Sequence[int] | None,
    noise_spec: NoiseSpec,
    streams: NoiseStreams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    g = Pose(rot, trans)
    d, ell = assemble_directions(g, scene, visible)
    a = body_frame_beacons(g, scene, visible)
    L_m = perturb_directions(ell, noise_spec.dir_bound, streams["directions"])
    a_m = perturb_vectors(a, noise_spec.dir_bound, streams["beacons"])
    p_bar, a_bar_m = mean_vectors(scene, visible, a_m)
    xi_m = perturb_velocity(xi, noise_spec, streams["gyro"], streams["vel"])
    return d, L_m, p_bar, a_bar_m, xi_m


def make_measurement_frame(
    truth,
    scene: Scene,
    visible: Sequence[int] | None,
    noise_spec: NoiseSpec,
    weights: np.ndarray | None,
    streams: NoiseStreams,
) -> MeasurementFrame:
    """Sensor snapshot of one :class:`~se3vf.dynamics.TrueState`."""
    d, L_m, p_bar, a_bar_m, xi_m = _synthesize(
        truth.pose.rot, truth.pose.trans, truth.xi, scene, visible, noise_spec, streams
    )
    w = uniform_weights(d.shape[-1]) if weights is None else np.asarray(weights, dtype=float)
    return MeasurementFrame(d, L_m, p_bar, a_bar_m, xi_m, w, float(truth.t))


@dataclass
class MeasurementStream:
    """Measurements for every sample of a trajectory, stacked on axis 0.

    With a batch of noise seeds the arrays carry a second axis (one entry per
    seed); the constant ``D`` and ``p_bar`` are stored once.
    """

    t: np.ndarray
    D: np.ndarray
    L_m: np.ndarray
    p_bar: np.ndarray
    a_bar_m: np.ndarray
    xi_m: np.ndarray
    W: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n(self) -> int:
        return self.D.shape[-1]

    def frame(self, i: int) -> MeasurementFrame:
        return MeasurementFrame(
            self.D, self.L_m[i], self.p_bar, self.a_bar_m[i], self.xi_m[i], self.W, float(self.t[i])
        )

    @property
    def K(self) -> np.ndarray:
        return (self.D * self.W) @ transpose(self.D)


def make_measurement_stream(
    traj,
    scene: Scene,
    noise_spec: NoiseSpec,
    weights: np.ndarray | None = None,
    visible: Sequence[int] | None = None,
    streams: NoiseStreams | None = None,
) -> MeasurementStream:
    """Measurements along a whole trajectory with a fixed visible set.

    Draws are consumed per instant in time order, so the result equals
    calling :func:`make_measurement_frame` sample by sample with the same
    streams.
    """
    streams = NoiseStreams(noise_spec.seed) if streams is None else streams
    d, L_m, p_bar, a_bar_m, xi_m = _synthesize(
        traj.rot, traj.trans, traj.xi, scene, visible, noise_spec, streams
    )
    d0 = d[0]
    w = uniform_weights(d0.shape[-1]) if weights is None else np.asarray(weights, dtype=float)
    return MeasurementStream(np.asarray(traj.t, dtype=float), d0, L_m, p_bar, a_bar_m, xi_m, w)


def stack_streams(streams: Sequence[MeasurementStream]) -> MeasurementStream:
    """Batch several noise realisations of the same trajectory (axis 1 = member)."""
    first = streams[0]
    return MeasurementStream(
        first.t,
        first.D,
        np.stack([s.L_m for s in streams], axis=1),
        first.p_bar,
        np.stack([s.a_bar_m for s in streams], axis=1),
        np.stack([s.xi_m for s in streams], axis=1),
        first.W,
    )


VisibilitySchedule = Callable[[float], Sequence[int]]


def weights_for(rule, D: np.ndarray) -> np.ndarray:
    """Resolve a weight rule (``"normalized"``, ``"uniform"`` or explicit values) for ``D``."""
    if isinstance(rule, str):
        if rule == "normalized":
            return normalized_weights(D)
        if rule == "uniform":
            return uniform_weights(D.shape[-1])
        raise ValueError(f"unknown weight rule {rule!r}")
    w = np.asarray(rule, dtype=float)
    if w.shape != (D.shape[-1],):
        raise ValueError(f"{w.size} explicit weights for {D.shape[-1]} direction columns")
    return w


@dataclass
class MeasurementTable:
    """Per-instant measurements whose direction count may change over time.

    Direction arrays are padded with NaN up to the largest count ``n_max``;
    ``n[i]`` says how many leading columns of row ``i`` are real. This is the
    layout of the measurement CSV, and it serves :func:`se3vf.filter.run_filter`
    directly through :meth:`frame`.
    """

    t: np.ndarray
    n: np.ndarray
    D: np.ndarray
    L_m: np.ndarray
    p_bar: np.ndarray
    a_bar_m: np.ndarray
    xi_m: np.ndarray
    weights: object = "normalized"

    def __post_init__(self) -> None:
        # a fixed memory layout keeps reductions, and thus results, identical
        # whichever way the table was built (live, from frames or from CSV)
        for name in ("t", "D", "L_m", "p_bar", "a_bar_m", "xi_m"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        self.n = np.ascontiguousarray(self.n, dtype=int)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_max(self) -> int:
        return self.D.shape[-1]

    def frame(self, i: int) -> MeasurementFrame:
        k = int(self.n[i])
        d = self.D[i, :, :k]
        return MeasurementFrame(d, self.L_m[i, :, :k], self.p_bar[i], self.a_bar_m[i],
                                self.xi_m[i], weights_for(self.weights, d), float(self.t[i]))

    def K(self, i: int) -> np.ndarray:
        f = self.frame(i)
        return (f.D * f.W) @ transpose(f.D)

    @classmethod
    def from_frames(cls, frames: Sequence[MeasurementFrame], weights="normalized") -> MeasurementTable:
        n = np.array([f.n for f in frames])
        n_max = int(n.max())
        size = len(frames)
        d = np.full((size, 3, n_max), np.nan)
        ell = np.full((size, 3, n_max), np.nan)
        for i, f in enumerate(frames):
            d[i, :, : f.n], ell[i, :, : f.n] = f.D, f.L_m
        return cls(
            np.array([f.t for f in frames]), n, d, ell,
            np.stack([f.p_bar for f in frames]), np.stack([f.a_bar_m for f in frames]),
            np.stack([f.xi_m for f in frames]), weights,
        )

    @classmethod
    def from_stream(cls, stream: MeasurementStream, weights="normalized") -> MeasurementTable:
        size = len(stream)
        return cls(
            np.asarray(stream.t), np.full(size, stream.n),
            np.broadcast_to(stream.D, (size,) + stream.D.shape).copy(), np.asarray(stream.L_m),
            np.broadcast_to(stream.p_bar, (size, 3)).copy(), np.asarray(stream.a_bar_m),
            np.asarray(stream.xi_m), weights,
        )

    # ------------------------------------------------------------------ CSV

    def columns(self) -> list[str]:
        k = range(1, self.n_max + 1)
        d = [f"D{r}_{j}" for r in range(1, 4) for j in k]
        ell = [f"Lm{r}_{j}" for r in range(1, 4) for j in k]
        rest = ["pbar1", "pbar2", "pbar3", "abarm1", "abarm2", "abarm3",
                "Omegam1", "Omegam2", "Omegam3", "vm1", "vm2", "vm3"]
        return ["t", "n", *d, *ell, *rest]

    def to_csv(self, path) -> None:
        size = len(self)
        data = np.column_stack([
            self.t, self.n, self.D.reshape(size, -1), self.L_m.reshape(size, -1),
            self.p_bar, self.a_bar_m, self.xi_m,
        ])
        write_table(path, self.columns(), data)

    @classmethod
    def from_csv(cls, path, weights="normalized") -> MeasurementTable:
        """Read a table written by :meth:`to_csv`; ``weights`` is not stored in the file."""
        header, data = read_table(path)
        n_max = (len(header) - 14) // 6
        if n_max < 2 or len(header) != 14 + 6 * n_max or header[:2] != ["t", "n"]:
            raise ValueError(f"{path}: header does not match the measurement column contract")
        size = len(data)
        blk = 3 * n_max
        table = cls(
            data[:, 0], data[:, 1].astype(int),
            data[:, 2 : 2 + blk].reshape(size, 3, n_max),
            data[:, 2 + blk : 2 + 2 * blk].reshape(size, 3, n_max),
            data[:, 2 + 2 * blk : 5 + 2 * blk], data[:, 5 + 2 * blk : 8 + 2 * blk],
            data[:, 8 + 2 * blk :], weights,
        )
        if header != table.columns():
            raise ValueError(f"{path}: header does not match the measurement column contract")
        return table

