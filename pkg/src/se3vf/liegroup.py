"""SO(3) and SE(3) primitives.

Every function accepts arrays with arbitrary leading batch axes: a vector is
``(..., 3)`` and a matrix ``(..., 3, 3)``. Batch axes broadcast the usual
numpy way, which is how the harness runs many filters in lock-step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this angle the Rodrigues coefficients switch to their Taylor series
_SMALL_ANGLE = 1e-4


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix, ``hat(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def vex(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hat`.

    The input is antisymmetrized first, so the symmetric part of ``m`` is
    discarded rather than trusted to be zero.
    """
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        axis=-1,
    )


def exp_so3(v: np.ndarray) -> np.ndarray:
    """Rodrigues exponential ``so(3) -> SO(3)`` of a rotation vector."""
    v = np.asarray(v, dtype=float)
    theta2 = np.einsum("...i,...i->...", v, v)
    theta = np.sqrt(theta2)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0 + theta2**2 / 120.0, np.sin(safe) / safe)
    b = np.where(
        small,
        0.5 - theta2 / 24.0 + theta2**2 / 720.0,
        (1.0 - np.cos(safe)) / (safe * safe),
    )
    k = hat(v)
    return (
        np.eye(3)
        + a[..., None, None] * k
        + b[..., None, None] * (k @ k)
    )


def adjoint_apply(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``Ad_R`` on so(3) expressed on vectors: ``hat(R v) = R hat(v) R^T``."""
    return np.einsum("...ij,...j->...i", r, v)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", m, v)


def transpose(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(m, -1, -2)


def principal_angle(q: np.ndarray) -> np.ndarray:
    """Rotation angle of ``q`` in ``[0, pi]``.

    Uses ``atan2(sin, cos)`` rather than ``arccos`` of the trace so angles
    near zero keep full relative precision.
    """
    q = np.asarray(q, dtype=float)
    c = (np.trace(q, axis1=-2, axis2=-1) - 1.0) / 2.0
    s = np.linalg.norm(vex(q), axis=-1)
    return np.arctan2(s, c)


def orthogonality_error(r: np.ndarray) -> np.ndarray:
    """Frobenius norm of ``R^T R - I``."""
    r = np.asarray(r, dtype=float)
    return np.linalg.norm(transpose(r) @ r - np.eye(3), axis=(-2, -1))


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        return False
    det = np.linalg.det(r)
    return bool(np.all(orthogonality_error(r) <= tol) and np.all(np.abs(det - 1.0) <= tol))


def project_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation in the Frobenius norm (orthogonal polar factor).

    Offline diagnostic only; nothing in the integrators or the filter calls it.

    Raises:
        ValueError: if ``det(m) <= 0`` or ``m`` is numerically singular.
    """
    m = np.asarray(m, dtype=float)
    u, s, vt = np.linalg.svd(m)
    det = np.linalg.det(m)
    if np.any(det <= 0.0):
        raise ValueError("project_so3 needs det(m) > 0 (singular or reflection input)")
    if np.any(s[..., -1] <= 1e-12 * s[..., 0]):
        raise ValueError("project_so3 input is numerically singular")
    return u @ vt


@dataclass(frozen=True)
class Pose:
    """Element ``[R b; 0 1]`` of SE(3); fields may carry batch axes."""

    rot: np.ndarray
    trans: np.ndarray

    @classmethod
    def identity(cls, batch_shape: tuple[int, ...] = ()) -> Pose:
        rot = np.broadcast_to(np.eye(3), batch_shape + (3, 3)).copy()
        return cls(rot, np.zeros(batch_shape + (3,)))

    @classmethod
    def from_matrix(cls, g: np.ndarray) -> Pose:
        g = np.asarray(g, dtype=float)
        return cls(g[..., :3, :3].copy(), g[..., :3, 3].copy())

    def as_matrix(self) -> np.ndarray:
        shape = np.broadcast_shapes(self.rot.shape[:-2], self.trans.shape[:-1])
        g = np.zeros(shape + (4, 4))
        g[..., :3, :3] = self.rot
        g[..., :3, 3] = self.trans
        g[..., 3, 3] = 1.0
        return g

    def compose(self, other: Pose) -> Pose:
        return pose_compose(self, other)

    def inverse(self) -> Pose:
        return pose_inverse(self)

    def act(self, p: np.ndarray) -> np.ndarray:
        return pose_act(self, p)


def pose_compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rot @ b.rot, matvec(a.rot, b.trans) + a.trans)


def pose_inverse(a: Pose) -> Pose:
    rt = transpose(a.rot)
    return Pose(rt, -matvec(rt, a.trans))


def pose_act(a: Pose, p: np.ndarray) -> np.ndarray:
    return matvec(a.rot, p) + a.trans
