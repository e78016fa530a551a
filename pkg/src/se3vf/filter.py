"""Variational pose filter on SE(3).

State per step is the pose estimate ``g_hat``, the velocity estimate
``xi_hat`` and the velocity-error proxy ``phi = xi_m - xi_hat``.  The update

    phi+   = ((m - l) phi - h Z) / (m + l)
    xi_hat+ = xi_m+ - phi+
    g_hat+  = g_hat * step(xi_hat, xi_hat+)

is implicit because ``Z`` depends on the new pose through ``y+`` and
``R_hat+``; :func:`filter_step` solves it by damped fixed-point iteration.

Six-vectors are stacked ``[angular; translational]`` along the last axis and
every function broadcasts over leading batch axes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from se3vf.dynamics import step_pose
from se3vf.liegroup import Pose, exp_so3, hat, matvec, principal_angle, transpose, vex
from se3vf.measurement import MeasurementFrame

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The implicit per-step solve did not converge."""

    def __init__(self, message: str, residual: float, step: int | None = None) -> None:
        super().__init__(message)
        self.residual = residual
        self.step = step


@dataclass(frozen=True)
class EstimatorGains:
    m_gain: float
    l_gain: float
    k_p: float
    kappa: float

    def __post_init__(self) -> None:
        for name in ("m_gain", "l_gain", "k_p", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.l_gain == self.m_gain:
            raise ValueError("l_gain must differ from m_gain")

    @classmethod
    def reference(cls) -> EstimatorGains:
        return cls(m_gain=1.5, l_gain=0.1, k_p=150.0, kappa=100.0)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 100
    damping: float = 1.0

    def __post_init__(self) -> None:
        if not self.tol > 0 or self.max_iter < 1 or not 0 < self.damping <= 1:
            raise ValueError("solver needs tol > 0, max_iter >= 1 and 0 < damping <= 1")


@dataclass(frozen=True)
class EstimatorState:
    g_hat: Pose
    xi_hat: np.ndarray
    phi: np.ndarray
    frame: MeasurementFrame
    t: float = 0.0


@dataclass(frozen=True)
class ErrorState:
    Q: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    principal_angle: np.ndarray


@dataclass(frozen=True)
class EnergyDiagnostics:
    u_rot: np.ndarray
    u_trans: np.ndarray
    t_kin: np.ndarray
    v_total: np.ndarray
    delta_v: np.ndarray
    delta_v_closed: np.ndarray


@dataclass(frozen=True)
class StepInfo:
    iterations: np.ndarray
    residual: np.ndarray


# ---------------------------------------------------------------- energies


def _check_columns(D: np.ndarray, L_m: np.ndarray, W: np.ndarray) -> None:
    if D.shape[-2:] != L_m.shape[-2:] or D.shape[-2] != 3:
        raise ValueError(f"D {D.shape} and L_m {L_m.shape} must both be (3, n)")
    if np.shape(W)[-1] != D.shape[-1]:
        raise ValueError(f"need {D.shape[-1]} weights, got {np.shape(W)[-1]}")


def potential_rotational(R_hat, D, L_m, W, k_p: float) -> np.ndarray:
    """Weighted Wahba cost ``k_p/2 <D - R_hat L_m, (D - R_hat L_m) W>``."""
    D, L_m, W = np.asarray(D), np.asarray(L_m), np.asarray(W)
    _check_columns(D, L_m, W)
    e = D - R_hat @ L_m
    return 0.5 * k_p * np.einsum("...ij,...j,...ij->...", e, W, e)


def translational_residual(R_hat, b_hat, a_bar_m, p_bar) -> np.ndarray:
    """``y = p_bar - R_hat a_bar_m - b_hat``."""
    return p_bar - matvec(R_hat, a_bar_m) - b_hat


def potential_translational(R_hat, b_hat, a_bar_m, p_bar, kappa: float):
    """Return ``(kappa |y|^2, y)``."""
    y = translational_residual(R_hat, b_hat, a_bar_m, p_bar)
    return kappa * np.einsum("...i,...i->...", y, y), y


def kinetic_energy(phi_a, phi_b, m_gain: float) -> np.ndarray:
    s = np.asarray(phi_a) + np.asarray(phi_b)
    return 0.5 * m_gain * np.einsum("...i,...i->...", s, s)


def kinetic_energy_l(phi, m_gain: float) -> np.ndarray:
    phi = np.asarray(phi)
    return 0.5 * m_gain * np.einsum("...i,...i->...", phi, phi)


def attitude_gain_matrix(D, W) -> np.ndarray:
    """``K = D W D^T``."""
    D = np.asarray(D)
    return (D * np.asarray(W)[..., None, :]) @ transpose(D)


def lagrangian_and_action(
    frames: Sequence[MeasurementFrame],
    states: Sequence[EstimatorState],
    gains: EstimatorGains,
    h: float,
) -> tuple[np.ndarray, float]:
    """Per-step discrete Lagrangian and the action sum ``h * sum(L_i)``.

    ``L_i`` pairs the kinetic term of ``(phi_i, phi_i+1)`` with the potential
    at step ``i``, so a sequence of ``N + 1`` samples yields ``N`` terms.
    Diagnostic only.
    """
    if len(frames) != len(states):
        raise ValueError(f"{len(frames)} frames vs {len(states)} states")
    terms = []
    for i in range(len(states) - 1):
        f, s = frames[i], states[i]
        t_kin = kinetic_energy(s.phi, states[i + 1].phi, gains.m_gain)
        u_r = potential_rotational(s.g_hat.rot, f.D, f.L_m, f.W, gains.k_p)
        u_t, _ = potential_translational(s.g_hat.rot, s.g_hat.trans, f.a_bar_m, f.p_bar, gains.kappa)
        terms.append(t_kin - u_r - u_t)
    terms = np.asarray(terms, dtype=float)
    return terms, float(h * np.sum(terms))


# --------------------------------------------------------- filter vectors


def s_gamma(D, W, L_m, R_hat) -> np.ndarray:
    """``vex(G^T R_hat - R_hat^T G)`` with ``G = D W L_m^T``."""
    D, L_m, W = np.asarray(D), np.asarray(L_m), np.asarray(W)
    _check_columns(D, L_m, W)
    gamma = (D * W[..., None, :]) @ transpose(L_m)
    a = transpose(gamma) @ R_hat
    return vex(a - transpose(a))


def _exp_block(omega_sum, scale: float, vec6) -> np.ndarray:
    """Apply ``exp(scale * omega_sum)`` to both 3-vector halves of ``vec6``."""
    r = exp_so3(scale * np.asarray(omega_sum))
    vec6 = np.asarray(vec6)
    return np.concatenate([matvec(r, vec6[..., :3]), matvec(r, vec6[..., 3:])], axis=-1)


def z_vector(
    R_hat_i, R_hat_ip1, y_i, y_ip1, frame_i: MeasurementFrame, gains: EstimatorGains
) -> np.ndarray:
    """Filter forcing ``Z_i``.

    The attitude half uses ``kappa a_bar_m^x R_hat^T (y+ + y)``, which equals
    ``kappa R_hat^T (Q^T (p_bar - b))^x (y+ + y)`` for noise-free data but
    needs no truth.
    """
    y_sum = y_i + y_ip1
    top = -gains.k_p * s_gamma(frame_i.D, frame_i.W, frame_i.L_m, R_hat_i) + gains.kappa * matvec(
        hat(frame_i.a_bar_m) @ transpose(R_hat_i), y_sum
    )
    bottom = gains.kappa * matvec(transpose(R_hat_ip1), y_sum)
    return np.concatenate([top, bottom], axis=-1)


def z_vector_truth_form(R_hat_i, R_hat_ip1, y_i, y_ip1, Q_i, b_i, p_bar, frame_i, gains):
    """``Z_i`` written with the true attitude error and position (reference only)."""
    y_sum = y_i + y_ip1
    c = matvec(transpose(Q_i), p_bar - b_i)
    top = -gains.k_p * s_gamma(frame_i.D, frame_i.W, frame_i.L_m, R_hat_i) + gains.kappa * matvec(
        transpose(R_hat_i) @ hat(c), y_sum
    )
    bottom = gains.kappa * matvec(transpose(R_hat_ip1), y_sum)
    return np.concatenate([top, bottom], axis=-1)


def z_prime_vector(
    R_hat_ip1,
    b_hat_ip1,
    frame_ip1: MeasurementFrame,
    v_hat_sum,
    v_err_sum,
    gains: EstimatorGains,
) -> np.ndarray:
    """``Z'_i`` of the general variational update.

    ``v_hat_sum = v_hat_i+1 + v_hat_i`` and ``v_err_sum = v_i+1 + v_i``
    (translational velocity estimates and their errors).
    """
    y = translational_residual(R_hat_ip1, b_hat_ip1, frame_ip1.a_bar_m, frame_ip1.p_bar)
    rt_y = matvec(transpose(R_hat_ip1), y)
    top = (
        -gains.k_p * s_gamma(frame_ip1.D, frame_ip1.W, frame_ip1.L_m, R_hat_ip1)
        + gains.m_gain * np.cross(v_hat_sum, v_err_sum)
        + gains.kappa * np.cross(frame_ip1.a_bar_m, rt_y)
    )
    return np.concatenate([top, gains.kappa * rt_y], axis=-1)


def dissipation_eta(phi_i, phi_ip1, z_prime, z_ip1, omega_hat_sum_ip2, gains, h: float):
    """Rayleigh dissipation ``eta_i+1`` that turns the general update into the stable filter."""
    if not h > 0:
        raise ValueError("h must be positive")
    m, l_ = gains.m_gain, gains.l_gain
    phi_i, phi_ip1 = np.asarray(phi_i), np.asarray(phi_ip1)
    carried = _exp_block(omega_hat_sum_ip2, 0.5 * h, 2 * m * phi_ip1 - h * np.asarray(z_ip1))
    return (2.0 / h) * (m * (phi_ip1 + phi_i) - 0.5 * h * np.asarray(z_prime) - m / (m + l_) * carried)


def variational_update_general(phi_i, phi_ip1, z_prime, eta, omega_hat_sum_ip2, gains, h: float):
    """Solve the general variational update for ``phi_i+2``."""
    if not h > 0:
        raise ValueError("h must be positive")
    m = gains.m_gain
    phi_i, phi_ip1 = np.asarray(phi_i), np.asarray(phi_ip1)
    inner = (phi_ip1 + phi_i) - h / (2 * m) * (np.asarray(z_prime) + np.asarray(eta))
    return _exp_block(omega_hat_sum_ip2, -0.5 * h, inner) - phi_ip1


def stable_recursion(phi, z, gains: EstimatorGains, h: float) -> np.ndarray:
    """``((m - l) phi - h Z) / (m + l)``."""
    m, l_ = gains.m_gain, gains.l_gain
    return ((m - l_) * np.asarray(phi) - h * np.asarray(z)) / (m + l_)


# --------------------------------------------------------------- the filter


def initial_state(g_hat0: Pose, xi_hat0, frame0: MeasurementFrame) -> EstimatorState:
    """Start the filter; ``phi_0 = xi_m_0 - xi_hat_0``."""
    xi_hat0 = np.asarray(xi_hat0, dtype=float)
    phi0 = frame0.xi_m - xi_hat0
    xi_hat0 = np.broadcast_to(xi_hat0, phi0.shape).copy()
    return EstimatorState(g_hat0, xi_hat0, phi0, frame0, frame0.t)


def filter_step(
    state: EstimatorState,
    frame_ip1: MeasurementFrame,
    gains: EstimatorGains,
    h: float,
    solver: SolverConfig = SolverConfig(),
) -> tuple[EstimatorState, StepInfo]:
    """Advance the filter one step.

    Damped fixed-point on ``phi_i+1`` starting from ``phi_i``; the damping
    factor of a batch member is halved whenever its residual grows. Members
    that have converged are frozen, so a batched run is bit-identical to the
    same members run one at a time.

    Raises:
        SolverError: if some member is still above ``solver.tol`` after
            ``solver.max_iter`` evaluations.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    f0, g0 = state.frame, state.g_hat
    m, l_ = gains.m_gain, gains.l_gain
    y_i = translational_residual(g0.rot, g0.trans, f0.a_bar_m, f0.p_bar)
    top_const = -gains.k_p * s_gamma(f0.D, f0.W, f0.L_m, g0.rot)
    coupling = gains.kappa * (hat(f0.a_bar_m) @ transpose(g0.rot))
    base = (m - l_) * state.phi
    xi_m1 = frame_ip1.xi_m

    def evaluate(phi1):
        xi_hat1 = xi_m1 - phi1
        g1 = step_pose(g0, state.xi_hat, xi_hat1, h)
        y_sum = y_i + translational_residual(g1.rot, g1.trans, frame_ip1.a_bar_m, frame_ip1.p_bar)
        z = np.concatenate(
            [top_const + matvec(coupling, y_sum), gains.kappa * matvec(transpose(g1.rot), y_sum)],
            axis=-1,
        )
        return (base - h * z) / (m + l_)

    phi = np.array(np.broadcast_to(state.phi, np.broadcast_shapes(state.phi.shape, xi_m1.shape)))
    batch = phi.shape[:-1]
    damping = np.full(batch, solver.damping)
    last_res = np.full(batch, np.inf)
    active = np.ones(batch, dtype=bool)
    iters = np.zeros(batch, dtype=int)
    residual = np.full(batch, np.inf)
    for _ in range(solver.max_iter):
        delta = evaluate(phi) - phi
        res = np.linalg.norm(delta, axis=-1)
        iters = np.where(active, iters + 1, iters)
        residual = np.where(active, res, residual)
        grew = active & (res > last_res)
        damping = np.where(grew, 0.5 * damping, damping)
        last_res = np.where(active, res, last_res)
        done = active & (res < solver.tol)
        # converged members take the undamped map value, the rest a damped step
        step = np.where(done, 1.0, damping)
        phi = np.where(active[..., None], phi + step[..., None] * delta, phi)
        active = active & ~done
        if not active.any():
            break
    else:
        worst = float(np.max(residual))
        raise SolverError(f"fixed-point did not converge in {solver.max_iter} iterations "
                          f"(residual {worst:.3e})", worst)

    xi_hat1 = xi_m1 - phi
    g1 = step_pose(g0, state.xi_hat, xi_hat1, h)
    new_state = EstimatorState(g1, xi_hat1, phi, frame_ip1, frame_ip1.t)
    return new_state, StepInfo(iters, residual)


@dataclass
class FilterRun:
    """Estimate history; axis 0 is time, further axes are batch members."""

    t: np.ndarray
    rot: np.ndarray
    trans: np.ndarray
    xi_hat: np.ndarray
    phi: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    extra: dict = field(default_factory=dict)


def run_filter(
    stream,
    g_hat0: Pose,
    xi_hat0,
    gains: EstimatorGains,
    h: float,
    solver: SolverConfig = SolverConfig(),
) -> FilterRun:
    """Filter a whole :class:`~se3vf.measurement.MeasurementStream`."""
    state = initial_state(g_hat0, xi_hat0, stream.frame(0))
    n = len(stream)
    batch = np.broadcast_shapes(state.g_hat.rot.shape[:-2], state.phi.shape[:-1])
    rot = np.empty((n,) + batch + (3, 3))
    trans = np.empty((n,) + batch + (3,))
    xi_hat = np.empty((n,) + batch + (6,))
    phi = np.empty((n,) + batch + (6,))
    iters = np.zeros((n - 1,) + batch, dtype=int)
    resid = np.zeros((n - 1,) + batch)
    rot[0], trans[0], xi_hat[0], phi[0] = state.g_hat.rot, state.g_hat.trans, state.xi_hat, state.phi
    for i in range(n - 1):
        try:
            state, info = filter_step(state, stream.frame(i + 1), gains, h, solver)
        except SolverError as err:
            err.step = i + 1
            raise
        rot[i + 1], trans[i + 1] = state.g_hat.rot, state.g_hat.trans
        xi_hat[i + 1], phi[i + 1] = state.xi_hat, state.phi
        iters[i], resid[i] = info.iterations, info.residual
    return FilterRun(np.asarray(stream.t), rot, trans, xi_hat, phi, iters, resid)


# -------------------------------------------------------------- diagnostics


def error_state(truth_rot, truth_trans, est: EstimatorState | None = None, p_bar=None, *,
                rot_hat=None, trans_hat=None, phi=None) -> ErrorState:
    """Pose error ``g g_hat^-1 = [Q x; 0 1]`` and ``y = Q^T x + (I - Q^T) p_bar``.

    Pass either an :class:`EstimatorState` or the raw ``rot_hat``,
    ``trans_hat`` and ``phi`` arrays (handy for whole histories).
    """
    if est is not None:
        rot_hat, trans_hat, phi = est.g_hat.rot, est.g_hat.trans, est.phi
    p_bar = np.zeros(3) if p_bar is None else np.asarray(p_bar)
    q = truth_rot @ transpose(rot_hat)
    x = truth_trans - matvec(q, trans_hat)
    qt = transpose(q)
    y = matvec(qt, x) + p_bar - matvec(qt, p_bar)
    return ErrorState(q, x, y, np.asarray(phi), principal_angle(q))


def lyapunov_value(err: ErrorState, K, gains: EstimatorGains):
    """``(u_rot, u_trans, t_kin)`` in error form."""
    u_rot = gains.k_p * np.einsum("...ij,...ij->...", np.eye(3) - err.Q, K)
    u_trans = gains.kappa * np.einsum("...i,...i->...", err.y, err.y)
    t_kin = kinetic_energy_l(err.phi, gains.m_gain)
    return u_rot, u_trans, t_kin


def lyapunov_diagnostics(
    err_i: ErrorState, err_ip1: ErrorState, K, p_bar, gains: EstimatorGains
) -> EnergyDiagnostics:
    """Energies at ``i + 1`` with the step change computed directly and in closed form."""
    ur0, ut0, tk0 = lyapunov_value(err_i, K, gains)
    ur1, ut1, tk1 = lyapunov_value(err_ip1, K, gains)
    v0 = ur0 + ut0 + tk0
    v1 = ur1 + ut1 + tk1
    s = err_ip1.phi + err_i.phi
    closed = -0.5 * gains.l_gain * np.einsum("...i,...i->...", s, s)
    return EnergyDiagnostics(ur1, ut1, tk1, v1, v1 - v0, closed)


def predicted_position_error(x_i, Q_i, R_hat_i, b_hat_i, R_ip1, phi_i, phi_ip1, h: float):
    """First-order prediction of ``x_i+1`` from the error kinematics.

    ``x_i - h/2 Q_i R_hat_i (w_i+1 + w_i)^x R_hat_i^T b_hat_i
    + h/2 R_i+1 (v_i + v_i+1)``, exact up to the linearised exponential.
    """
    s = np.asarray(phi_i) + np.asarray(phi_ip1)
    rot_term = Q_i @ R_hat_i @ hat(s[..., :3]) @ transpose(R_hat_i)
    return x_i - 0.5 * h * matvec(rot_term, b_hat_i) + 0.5 * h * matvec(R_ip1, s[..., 3:])


def k_is_degenerate(K, rel_tol: float = 1e-9) -> bool:
    """True if ``K`` has a repeated eigenvalue (the attitude potential is then not Morse)."""
    ev = np.linalg.eigvalsh(K)
    gaps = np.diff(ev)
    return bool(np.any(gaps <= rel_tol * max(1.0, float(np.max(np.abs(ev))))))


def warn_if_degenerate(K) -> None:
    if k_is_degenerate(K):
        log.warning("K = D W D^T has a repeated eigenvalue; attitude potential is not Morse")


__all__ = [
    "EnergyDiagnostics",
    "ErrorState",
    "EstimatorGains",
    "EstimatorState",
    "FilterRun",
    "SolverConfig",
    "SolverError",
    "attitude_gain_matrix",
    "dissipation_eta",
    "error_state",
    "filter_step",
    "initial_state",
    "kinetic_energy",
    "kinetic_energy_l",
    "lagrangian_and_action",
    "lyapunov_diagnostics",
    "potential_rotational",
    "potential_translational",
    "predicted_position_error",
    "run_filter",
    "s_gamma",
    "stable_recursion",
    "variational_update_general",
    "z_prime_vector",
    "z_vector",
]
