"""Simulation, control, and evaluation stack for cycloidal-drive robots.

Subpackages by theme:

* `transmission`, `actuator` - the drivetrain model
* `fieldbus` - CAN frame codec, bit stuffing, bus feasibility
* `control` - two-rate loop with MLP policy inference
* `dyno` - virtual dynamometer procedures
* `benchmark` - performance-factor robot comparison
* `kinematics`, `teleop` - serial-chain FK/IK and clutched retargeting
* `cli` - the `cyclobot` command line tool
"""

__version__ = "0.1.0"

from .actuator import (
    ActuatorSpec,
    ActuatorState,
    ControlCommand,
    MotorSpec,
    load_actuator,
)
from .errors import ConfigError, SimulationError
from .kinematics import KinematicChain, Pose, forward_kinematics, load_chain
from .transmission import TransmissionSpec, TransmissionState

__all__ = [
    "ActuatorSpec",
    "ActuatorState",
    "ConfigError",
    "ControlCommand",
    "KinematicChain",
    "MotorSpec",
    "Pose",
    "SimulationError",
    "TransmissionSpec",
    "TransmissionState",
    "__version__",
    "forward_kinematics",
    "load_actuator",
    "load_chain",
]
