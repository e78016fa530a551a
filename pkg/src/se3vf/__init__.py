"""Discrete-time variational pose filter on SE(3).

Submodules:
    liegroup     SO(3)/SE(3) primitives (batched over leading axes)
    dynamics     6DOF truth simulation and the trapezoidal pose step
    measurement  beacon / inertial-direction sensor synthesis
    filter       energies, variational update and the implicit filter step
    harness      config, experiment runner, CSV output and CLI
"""

from se3vf.liegroup import Pose, exp_so3, hat, principal_angle, vex

__all__ = ["Pose", "exp_so3", "hat", "principal_angle", "vex"]
__version__ = "0.1.0"
