"""Quasi-direct-drive actuator model: BLDC motor + cycloidal gearbox.

The electrical side is an ideal current source with a one-step command
lag; torque constant converts current to rotor torque.  The mechanical
side is a two-mass system, rotor and joint, coupled through the
transmission spring/backlash model.  A single magnetic encoder sits on
the rotor; the joint angle the controller sees is the quantized rotor
angle divided by the gear ratio.

Integration is semi-implicit Euler at the inner loop rate (1 kHz by
default).  Couplings configured stiffer than RIGID_STIFFNESS switch to
an algebraically rigid gear path, which is the ideal-geared limit of
the same model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .transmission import (
    TransmissionSpec,
    TransmissionState,
    breakin_friction_multiplier,
    efficiency,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MotorSpec:
    """Electrical parameters of the drive motor."""

    kt: float = 0.0637            # Nm/A at the rotor
    resistance: float = 0.1       # ohm, effective phase-to-phase
    bus_voltage: float = 24.0     # V
    current_limit: float = 20.0   # A
    rotor_inertia: float = 5.0e-5  # kg*m^2
    rotor_damping: float = 2.0e-5  # Nm*s/rad, bearing drag at the rotor
    quiescent_power: float = 0.5  # W, controller idle draw

    def __post_init__(self) -> None:
        if self.kt <= 0:
            raise ValueError("kt must be positive")
        if self.current_limit <= 0:
            raise ValueError("current_limit must be positive")
        if self.rotor_inertia <= 0:
            raise ValueError("rotor_inertia must be positive")


@dataclass(frozen=True)
class ActuatorSpec:
    """One complete actuator: motor, gearbox, encoder, limits."""

    motor: MotorSpec = field(default_factory=MotorSpec)
    transmission: TransmissionSpec = field(default_factory=TransmissionSpec)
    torque_limit: float = 12.0    # Nm at the output
    encoder_bits: int = 12
    inner_rate: float = 1000.0    # Hz of the torque/current loop
    load_inertia: float = 0.02    # kg*m^2 default free-output load
    load_damping: float = 0.1     # Nm*s/rad default free-output load
    name: str = "actuator"

    def __post_init__(self) -> None:
        if self.torque_limit <= 0:
            raise ValueError("torque_limit must be positive")
        if self.encoder_bits < 1:
            raise ValueError("encoder_bits must be >= 1")
        if self.inner_rate <= 0:
            raise ValueError("inner_rate must be positive")

    @property
    def encoder_lsb(self) -> float:
        """Raw encoder resolution in rad at the rotor."""
        return TWO_PI / (1 << self.encoder_bits)


@dataclass(frozen=True)
class ControlCommand:
    """One joint-level command as carried on the wire.

    In position mode `setpoint` is the target angle and
    `velocity_setpoint` the target rate (the damping reference); in
    velocity mode `setpoint` is the target rate; in torque mode it is
    the target torque.  `tau_ff` always adds on top.
    """

    mode: str = "position"        # position | velocity | torque
    setpoint: float = 0.0
    velocity_setpoint: float = 0.0
    kp: float = 0.0
    kd: float = 0.0
    tau_ff: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("position", "velocity", "torque"):
            raise ValueError(f"unknown control mode {self.mode!r}")
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be non-negative")


@dataclass(frozen=True)
class ActuatorState:
    t: float = 0.0
    rotor_angle: float = 0.0
    rotor_velocity: float = 0.0
    output_angle: float = 0.0
    output_velocity: float = 0.0
    current: float = 0.0          # A acting this step (one-step lag)
    delivered_torque: float = 0.0  # Nm at the output, last step
    transmission: TransmissionState = field(default_factory=TransmissionState)

    @staticmethod
    def initial(spec: ActuatorSpec, angle: float = 0.0) -> "ActuatorState":
        return ActuatorState(
            rotor_angle=angle * spec.transmission.ratio,
            output_angle=angle,
            transmission=TransmissionState.initial(spec.transmission),
        )


# Output boundary conditions used by the virtual test rigs.

@dataclass(frozen=True)
class FreeOutput:
    """Output drives an inertia with viscous drag (defaults from spec)."""

    inertia: float | None = None
    damping: float | None = None


@dataclass(frozen=True)
class LockedOutput:
    """Output clamped; stiffness and backlash probing."""


@dataclass(frozen=True)
class HeldVelocity:
    """Output speed enforced by an ideal velocity-source dynamometer."""

    omega: float


OutputConstraint = FreeOutput | LockedOutput | HeldVelocity


def read_encoder(spec: ActuatorSpec, angle: float) -> float:
    """Quantize a rotor angle to the encoder grid (floor convention)."""
    lsb = spec.encoder_lsb
    return math.floor(angle / lsb) * lsb


def output_position_estimate(spec: ActuatorSpec, state: ActuatorState) -> float:
    """Joint angle as the controller sees it: quantized rotor / ratio."""
    return read_encoder(spec, state.rotor_angle) / spec.transmission.ratio


def _torque_demand(spec: ActuatorSpec, state: ActuatorState,
                   cmd: ControlCommand) -> float:
    q_est = output_position_estimate(spec, state)
    v_est = state.rotor_velocity / spec.transmission.ratio
    if cmd.mode == "position":
        tau = (cmd.kp * (cmd.setpoint - q_est)
               + cmd.kd * (cmd.velocity_setpoint - v_est) + cmd.tau_ff)
    elif cmd.mode == "velocity":
        tau = cmd.kd * (cmd.setpoint - v_est) + cmd.tau_ff
    else:
        tau = cmd.setpoint + cmd.tau_ff
    lim = spec.torque_limit
    return min(lim, max(-lim, tau))


def _commanded_current(spec: ActuatorSpec, state: ActuatorState,
                       cmd: ControlCommand) -> float:
    tau_des = _torque_demand(spec, state, cmd)
    i = tau_des / (spec.transmission.ratio * spec.motor.kt)
    lim = spec.motor.current_limit
    # Back-EMF leaves less voltage headroom at speed; rarely binding at
    # 24 V with a 15:1 reduction but kept for fidelity.
    v_room = spec.motor.bus_voltage - spec.motor.kt * abs(state.rotor_velocity)
    if spec.motor.resistance > 0:
        lim = min(lim, max(0.0, v_room / spec.motor.resistance))
    return min(lim, max(-lim, i))


def _contact_torque(spec: ActuatorSpec, state: ActuatorState) -> float:
    """Spring/damper torque at the output flank, one-sided per flank."""
    tr = spec.transmission
    delta = state.rotor_angle / tr.ratio - state.output_angle
    half = 0.5 * state.transmission.backlash
    if abs(delta) <= half:
        return 0.0
    ddot = state.rotor_velocity / tr.ratio - state.output_velocity
    raw = tr.stiffness * (delta - math.copysign(half, delta)) + tr.damping * ddot
    # Gear flanks push, they do not pull: clamp to the engaged side.
    if delta > half:
        return max(0.0, raw)
    return min(0.0, raw)


def _deliver(spec: ActuatorSpec, tau_gear: float, omega_out: float,
             cycles: float) -> float:
    """Torque reaching the joint after efficiency and Coulomb losses."""
    tr = spec.transmission
    if omega_out != 0.0:
        eta = efficiency(tr, tau_gear, omega_out)
        if tau_gear * omega_out >= 0.0:
            tau = tau_gear * eta          # driving: losses subtract
        else:
            tau = tau_gear / eta          # backdriving: losses add
        tau -= (tr.tau_coulomb * breakin_friction_multiplier(tr, cycles)
                * math.copysign(1.0, omega_out))
    else:
        tau = tau_gear
    lim = spec.torque_limit
    return min(lim, max(-lim, tau))


def step(
    spec: ActuatorSpec,
    state: ActuatorState,
    cmd: ControlCommand,
    load_torque: float = 0.0,
    dt: float | None = None,
    constraint: OutputConstraint | None = None,
) -> ActuatorState:
    """Advance the actuator by one inner-loop step.

    `load_torque` is an external torque applied at the output (gravity,
    a test load).  `constraint` selects the output boundary condition;
    the default is a free output with the spec's load inertia/damping.
    Deterministic: no randomness, bit-identical given identical inputs.
    """
    if dt is None:
        dt = 1.0 / spec.inner_rate
    if dt <= 0 or dt > 1.0 / spec.inner_rate + 1e-12:
        raise ValueError("dt must be positive and at most 1/inner_rate")
    if constraint is None:
        constraint = FreeOutput()

    tr = spec.transmission
    tau_m = spec.motor.kt * state.current

    if tr.is_rigid:
        return _step_rigid(spec, state, cmd, load_torque, dt, constraint, tau_m)

    tau_gear = _contact_torque(spec, state)
    tau_deliv = _deliver(spec, tau_gear, state.output_velocity,
                         state.transmission.cycles)

    # Rotor: motor torque vs. gear reaction and bearing drag.
    acc_r = (tau_m - tau_gear / tr.ratio
             - spec.motor.rotor_damping * state.rotor_velocity
             ) / spec.motor.rotor_inertia
    w_r = state.rotor_velocity + dt * acc_r
    th_r = state.rotor_angle + dt * w_r

    if isinstance(constraint, LockedOutput):
        w_o, th_o = 0.0, state.output_angle
    elif isinstance(constraint, HeldVelocity):
        w_o = constraint.omega
        th_o = state.output_angle + dt * w_o
    else:
        inertia = constraint.inertia if constraint.inertia is not None \
            else spec.load_inertia
        damping = constraint.damping if constraint.damping is not None \
            else spec.load_damping
        acc_o = (tau_deliv + load_torque
                 - damping * state.output_velocity) / inertia
        w_o = state.output_velocity + dt * acc_o
        th_o = state.output_angle + dt * w_o

    return replace(
        state,
        t=state.t + dt,
        rotor_angle=th_r,
        rotor_velocity=w_r,
        output_angle=th_o,
        output_velocity=w_o,
        current=_commanded_current(spec, state, cmd),
        delivered_torque=tau_deliv,
        transmission=replace(state.transmission,
                             input_angle=th_r, output_angle=th_o),
    )


def _step_rigid(
    spec: ActuatorSpec,
    state: ActuatorState,
    cmd: ControlCommand,
    load_torque: float,
    dt: float,
    constraint: OutputConstraint,
    tau_m: float,
) -> ActuatorState:
    """Ideal geared path: output = rotor / ratio algebraically."""
    tr = spec.transmission
    tau_deliv = _deliver(spec, tau_m * tr.ratio, state.output_velocity,
                         state.transmission.cycles)

    if isinstance(constraint, LockedOutput):
        w_o, th_o = 0.0, state.output_angle
    elif isinstance(constraint, HeldVelocity):
        w_o = constraint.omega
        th_o = state.output_angle + dt * w_o
    else:
        inertia = constraint.inertia if constraint.inertia is not None \
            else spec.load_inertia
        damping = constraint.damping if constraint.damping is not None \
            else spec.load_damping
        # Rotor inertia and drag reflect through the square of the ratio.
        j_eff = inertia + spec.motor.rotor_inertia * tr.ratio ** 2
        drag = damping + spec.motor.rotor_damping * tr.ratio ** 2
        acc_o = (tau_deliv + load_torque
                 - drag * state.output_velocity) / j_eff
        w_o = state.output_velocity + dt * acc_o
        th_o = state.output_angle + dt * w_o

    return replace(
        state,
        t=state.t + dt,
        rotor_angle=th_o * tr.ratio,
        rotor_velocity=w_o * tr.ratio,
        output_angle=th_o,
        output_velocity=w_o,
        current=_commanded_current(spec, state, cmd),
        delivered_torque=tau_deliv,
        transmission=replace(state.transmission,
                             input_angle=th_o * tr.ratio, output_angle=th_o),
    )


def electrical_power(spec: ActuatorSpec, state: ActuatorState,
                     motor_torque: float) -> float:
    """Electrical input power for a given acting motor torque.

    Shaft power counts only when positive (no regeneration into the
    supply); copper loss I^2*R and the controller's quiescent draw are
    always paid, so the result is never below the copper loss.
    """
    i = motor_torque / spec.motor.kt
    shaft = max(0.0, motor_torque * state.rotor_velocity)
    return (shaft + i * i * spec.motor.resistance
            + spec.motor.quiescent_power)


# Config loading -------------------------------------------------------

def actuator_from_dict(cfg: dict) -> ActuatorSpec:
    if cfg.get("schema_version") != 1:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}")
    if cfg.get("kind") != "actuator":
        raise ConfigError(f"expected kind 'actuator', got {cfg.get('kind')!r}")
    try:
        motor = MotorSpec(**cfg.get("motor", {}))
        trans = TransmissionSpec(**cfg.get("transmission", {}))
        fields = {k: cfg[k] for k in (
            "torque_limit", "encoder_bits", "inner_rate",
            "load_inertia", "load_damping", "name") if k in cfg}
        return ActuatorSpec(motor=motor, transmission=trans, **fields)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad actuator config: {e}") from e


def load_actuator(source: str | Path) -> ActuatorSpec:
    """Load an actuator spec from a preset name or a JSON file path."""
    path = Path(source)
    if not path.suffix:
        from importlib import resources

        ref = resources.files("cyclobot").joinpath(
            f"configs/actuators/{source}.json")
        if not ref.is_file():
            raise ConfigError(f"unknown actuator preset {source!r}")
        cfg = json.loads(ref.read_text())
    else:
        if not path.is_file():
            raise ConfigError(f"actuator config not found: {source}")
        cfg = json.loads(path.read_text())
    return actuator_from_dict(cfg)
