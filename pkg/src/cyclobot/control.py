"""Two-rate joint control loop with learned-policy inference.

A policy network runs at 25 Hz on an observation assembled from IMU,
joint feedback, the velocity command, and its own previous action; the
resulting position targets are held and served by per-joint PD loops at
250 Hz over the CAN segments.  All joint data crosses the simulated wire
encoding, so quantization effects are part of the loop.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import fieldbus
from .actuator import (
    ActuatorSpec,
    ActuatorState,
    FreeOutput,
    electrical_power,
    output_position_estimate,
    step,
)
from .errors import ConfigError
from .geometry import quat_conjugate, quat_norm, quat_rotate

GRAVITY_WORLD = np.array([0.0, 0.0, -1.0])
COMMAND_FIELDS = ("vx", "vy", "wz")

_ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "elu": lambda x: np.where(x > 0.0, x, np.expm1(x)),
}


def projected_gravity(base_quat: np.ndarray) -> np.ndarray:
    """Unit gravity direction expressed in the base frame.

    `base_quat` is the IMU attitude (base-to-world, [w, x, y, z]).  The
    world down vector (0, 0, -1) is rotated into the base frame; the
    result has unit norm by construction.
    """
    base_quat = np.asarray(base_quat, dtype=float)
    n = quat_norm(base_quat)
    if abs(n - 1.0) > 1e-3:
        raise ValueError(f"base quaternion norm {n:.6f} is not close to 1")
    return quat_rotate(quat_conjugate(base_quat / n), GRAVITY_WORLD)


@dataclass(frozen=True)
class ObservationVector:
    """Policy input, in the fixed layout the descriptor documents."""

    base_angular_velocity: np.ndarray   # rad/s, base frame, 3
    gravity: np.ndarray                 # unit vector, base frame, 3
    joint_positions: np.ndarray         # rad, N
    joint_velocities: np.ndarray        # rad/s, N
    command: np.ndarray                 # (vx, vy, wz), 3
    previous_action: np.ndarray         # raw policy output, N

    def to_array(self) -> np.ndarray:
        return np.concatenate(
            [
                self.base_angular_velocity,
                self.gravity,
                self.joint_positions,
                self.joint_velocities,
                self.command,
                self.previous_action,
            ]
        )

    def __len__(self) -> int:
        return 9 + 3 * len(self.joint_positions)


def observation_layout(joint_names: Sequence[str]) -> str:
    """Human-readable layout descriptor for the observation vector.

    Joint names appear in wire order, so any reordering of the robot
    config changes the descriptor and therefore its checksum.
    """
    names = ",".join(joint_names)
    return (
        "obs-v1;"
        "base_angular_velocity:3;"
        "gravity:3;"
        f"joint_positions[{len(joint_names)}]:{names};"
        f"joint_velocities[{len(joint_names)}]:{names};"
        "command:vx,vy,wz;"
        f"previous_action[{len(joint_names)}]:{names}"
    )


def observation_layout_checksum(joint_names: Sequence[str]) -> str:
    return hashlib.sha256(
        observation_layout(joint_names).encode()).hexdigest()


def assemble_observation(
    base_quat: np.ndarray,
    base_angular_velocity: np.ndarray,
    joint_positions: np.ndarray,
    joint_velocities: np.ndarray,
    command: np.ndarray,
    previous_action: np.ndarray,
) -> ObservationVector:
    """Validate shapes and build one observation."""
    w = np.asarray(base_angular_velocity, dtype=float)
    q = np.asarray(joint_positions, dtype=float)
    dq = np.asarray(joint_velocities, dtype=float)
    c = np.asarray(command, dtype=float)
    a = np.asarray(previous_action, dtype=float)
    if w.shape != (3,):
        raise ValueError("base angular velocity must have 3 elements")
    if c.shape != (len(COMMAND_FIELDS),):
        raise ValueError("command must be (vx, vy, wz)")
    n = q.shape[0]
    if q.shape != (n,) or dq.shape != (n,) or a.shape != (n,):
        raise ValueError(
            "joint positions, velocities, and previous action must share "
            "one length")
    return ObservationVector(
        base_angular_velocity=w,
        gravity=projected_gravity(base_quat),
        joint_positions=q,
        joint_velocities=dq,
        command=c,
        previous_action=a,
    )


@dataclass(frozen=True)
class MlpPolicy:
    """Fully connected network: affine layers, one activation between."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "elu"
    action_scale: float = 0.25

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up, one per layer")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: shape mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input dim mismatch")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]


def policy_infer(policy: MlpPolicy, obs: np.ndarray) -> np.ndarray:
    """Forward pass.  The final layer is linear (no activation)."""
    x = np.asarray(obs, dtype=float)
    if x.shape != (policy.input_dim,):
        raise ValueError(
            f"observation length {x.shape} does not match policy input "
            f"{policy.input_dim}")
    act = _ACTIVATIONS[policy.activation]
    last = len(policy.weights) - 1
    for i, (w, b) in enumerate(zip(policy.weights, policy.biases)):
        x = w @ x + b
        if i != last:
            x = act(x)
    return x


def zero_policy(input_dim: int, output_dim: int,
                hidden: Sequence[int] = (32,)) -> MlpPolicy:
    """All-zero network: always outputs zeros.  Useful as a hold policy."""
    dims = [input_dim, *hidden, output_dim]
    ws = tuple(np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1))
    bs = tuple(np.zeros(dims[i + 1]) for i in range(len(dims) - 1))
    return MlpPolicy(weights=ws, biases=bs)


def policy_from_dict(cfg: dict) -> MlpPolicy:
    """Build a policy from the on-disk format (see docs/FORMATS.md).

    The file declares layer dims, activation, and action scale, then a
    flat weight array laid out layer by layer, each layer's weight
    matrix row-major followed by its bias.
    """
    if cfg.get("schema_version") != 1:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}")
    if cfg.get("kind") != "policy":
        raise ConfigError(f"expected kind 'policy', got {cfg.get('kind')!r}")
    dims = cfg.get("layer_dims")
    if not isinstance(dims, list) or len(dims) < 2:
        raise ConfigError("layer_dims must list at least input and output")
    flat = np.asarray(cfg.get("weights", []), dtype=float)
    need = sum(dims[i + 1] * dims[i] + dims[i + 1] for i in range(len(dims) - 1))
    if flat.shape != (need,):
        raise ConfigError(
            f"weights array has {flat.size} values, layer_dims require {need}")
    ws, bs = [], []
    at = 0
    for i in range(len(dims) - 1):
        n_out, n_in = dims[i + 1], dims[i]
        ws.append(flat[at:at + n_out * n_in].reshape(n_out, n_in))
        at += n_out * n_in
        bs.append(flat[at:at + n_out])
        at += n_out
    try:
        return MlpPolicy(
            weights=tuple(ws),
            biases=tuple(bs),
            activation=cfg.get("activation", "elu"),
            action_scale=float(cfg.get("action_scale", 0.25)),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def policy_to_dict(policy: MlpPolicy) -> dict:
    flat = []
    for w, b in zip(policy.weights, policy.biases):
        flat.extend(float(v) for v in w.reshape(-1))
        flat.extend(float(v) for v in b)
    return {
        "schema_version": 1,
        "kind": "policy",
        "layer_dims": policy.layer_dims,
        "activation": policy.activation,
        "action_scale": policy.action_scale,
        "weights": flat,
    }


def load_policy(path: str | Path) -> MlpPolicy:
    with open(path) as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
    return policy_from_dict(cfg)


# Loop setup -----------------------------------------------------------

@dataclass(frozen=True)
class LoopTiming:
    low_rate: float = 250.0
    policy_rate: float = 25.0

    def __post_init__(self) -> None:
        if self.low_rate <= 0 or self.policy_rate <= 0:
            raise ValueError("rates must be positive")
        d = self.low_rate / self.policy_rate
        if abs(d - round(d)) > 1e-9 or round(d) < 1:
            raise ValueError(
                "low_rate must be an integer multiple of policy_rate")

    @property
    def decimation(self) -> int:
        return int(round(self.low_rate / self.policy_rate))


@dataclass(frozen=True)
class JointSetup:
    """One joint's wiring: actuator, bus membership, servo gains."""

    name: str
    actuator: ActuatorSpec
    bus: int = 0
    node_id: int = 1
    default_pose: float = 0.0
    kp: float = 25.0
    kd: float = 0.5


@dataclass(frozen=True)
class RobotSetup:
    joints: tuple[JointSetup, ...]
    buses: tuple[fieldbus.BusConfig, ...]
    wire: fieldbus.JointWire = field(default_factory=fieldbus.JointWire)

    def __post_init__(self) -> None:
        if not self.joints:
            raise ConfigError("robot has no joints")
        seen = set()
        for j in self.joints:
            if not 0 <= j.bus < len(self.buses):
                raise ConfigError(f"joint {j.name!r}: bus {j.bus} undefined")
            key = (j.bus, j.node_id)
            if key in seen:
                raise ConfigError(
                    f"joint {j.name!r}: node id {j.node_id} reused on bus "
                    f"{j.bus}")
            seen.add(key)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def validate_feasible(self) -> list[fieldbus.FeasibilityReport]:
        """Raise unless every bus can carry its cycle traffic."""
        reports = []
        for b, bus in enumerate(self.buses):
            members = sum(1 for j in self.joints if j.bus == b)
            cfg = fieldbus.BusConfig(
                n_devices=max(members, 1),
                bitrate=bus.bitrate,
                cycle_rate=bus.cycle_rate,
                frames_per_device=bus.frames_per_device,
                payload_dlc=bus.payload_dlc,
            )
            rep = fieldbus.cycle_feasibility(cfg)
            if members and not rep.feasible:
                raise ConfigError(
                    f"bus {b} cannot carry its cycle traffic: "
                    + rep.describe())
            reports.append(rep)
        return reports


def setup_from_dict(cfg: dict) -> RobotSetup:
    """Build a robot setup from the on-disk format.

    Each joint names its actuator by preset name or file path; presets
    resolve against the packaged actuator configs.
    """
    from .actuator import load_actuator

    if cfg.get("schema_version") != 1:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}")
    if cfg.get("kind") != "robot_setup":
        raise ConfigError(
            f"expected kind 'robot_setup', got {cfg.get('kind')!r}")
    bus_cfgs = cfg.get("buses")
    if not isinstance(bus_cfgs, list) or not bus_cfgs:
        raise ConfigError("robot setup needs a non-empty buses list")
    joint_cfgs = cfg.get("joints")
    if not isinstance(joint_cfgs, list) or not joint_cfgs:
        raise ConfigError("robot setup needs a non-empty joints list")

    # Actuator presets are typically shared; load each source once.
    specs: dict[str, ActuatorSpec] = {}
    joints = []
    names = set()
    for i, j in enumerate(joint_cfgs):
        try:
            name = j["name"]
            source = j["actuator"]
        except (KeyError, TypeError) as e:
            raise ConfigError(f"joint #{i}: missing field {e}") from e
        if name in names:
            raise ConfigError(f"duplicate joint name {name!r}")
        names.add(name)
        if source not in specs:
            specs[source] = load_actuator(source)
        joints.append(JointSetup(
            name=name,
            actuator=specs[source],
            bus=int(j.get("bus", 0)),
            node_id=int(j.get("node_id", i + 1)),
            default_pose=float(j.get("default_pose", 0.0)),
            kp=float(j.get("kp", 25.0)),
            kd=float(j.get("kd", 0.5)),
        ))

    buses = []
    for b, bc in enumerate(bus_cfgs):
        members = sum(1 for j in joints if j.bus == b)
        try:
            buses.append(fieldbus.BusConfig(
                n_devices=max(members, 1),
                bitrate=float(bc.get("bitrate", 1_000_000.0)),
                cycle_rate=float(bc.get("cycle_rate", 250.0)),
                frames_per_device=int(bc.get("frames_per_device", 2)),
                payload_dlc=int(bc.get("payload_dlc", 8)),
            ))
        except ValueError as e:
            raise ConfigError(f"bus #{b}: {e}") from e

    try:
        wire = fieldbus.JointWire(**cfg.get("wire", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad wire config: {e}") from e
    return RobotSetup(joints=tuple(joints), buses=tuple(buses), wire=wire)


def load_setup(path: str | Path) -> RobotSetup:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"robot setup not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    return setup_from_dict(cfg)


ImuSample = tuple[np.ndarray, np.ndarray]   # (quat wxyz, angular velocity)
ImuModel = Callable[[float], ImuSample]
CommandFn = Callable[[float], np.ndarray]


def constant_imu(quat: np.ndarray | None = None) -> ImuModel:
    q = np.array([1.0, 0.0, 0.0, 0.0]) if quat is None else np.asarray(quat)
    w = np.zeros(3)
    return lambda t: (q, w)


@dataclass
class LoopLog:
    """Per-tick trajectory of one run.  Arrays are (ticks, ...)."""

    joint_names: list[str]
    times: np.ndarray
    policy_tick: np.ndarray            # bool, policy ran this tick
    observations: np.ndarray           # (ticks, obs_dim), held between updates
    actions: np.ndarray                # (ticks, N), held between updates
    setpoints: np.ndarray              # (ticks, N)
    positions: np.ndarray              # (ticks, N), wire-decoded feedback
    velocities: np.ndarray             # (ticks, N)
    torques: np.ndarray                # (ticks, N), delivered
    bus_utilization: np.ndarray        # (ticks, n_buses), actual stuffed bits
    electrical_power: np.ndarray       # (ticks,), W summed over joints
    torque_limits: np.ndarray          # (N,)
    layout_checksum: str

    @property
    def n_low_ticks(self) -> int:
        return len(self.times)

    @property
    def n_policy_ticks(self) -> int:
        return int(np.sum(self.policy_tick))

    def torque_headroom(self) -> np.ndarray:
        """Per-joint max |torque| / limit over the run."""
        if self.n_low_ticks == 0:
            return np.zeros(len(self.joint_names))
        return np.max(np.abs(self.torques), axis=0) / self.torque_limits

    def headroom_ok(self, fraction: float = 0.3) -> bool:
        """True when every joint stayed at or under `fraction` of its limit."""
        return bool(np.all(self.torque_headroom() <= fraction))


def run_loop(
    setup: RobotSetup,
    policy: MlpPolicy,
    duration: float,
    command: CommandFn | np.ndarray | None = None,
    timing: LoopTiming | None = None,
    imu: ImuModel | None = None,
    initial_positions: np.ndarray | None = None,
) -> LoopLog:
    """Run the two-rate loop for `duration` seconds.

    Low-level ticks = floor(duration * low_rate); the policy fires on
    every decimation-th tick starting at tick 0.  Deterministic: a
    second run with identical inputs produces identical logs.
    """
    timing = timing or LoopTiming()
    imu = imu or constant_imu()
    n = setup.n_joints
    if command is None:
        command_fn: CommandFn = lambda t: np.zeros(3)
    elif callable(command):
        command_fn = command
    else:
        cvec = np.asarray(command, dtype=float)
        if cvec.shape != (3,):
            raise ConfigError("command must be (vx, vy, wz)")
        command_fn = lambda t: cvec
    if policy.input_dim != 9 + 3 * n:
        raise ConfigError(
            f"policy input dim {policy.input_dim} does not match the "
            f"{9 + 3 * n}-element observation for {n} joints")
    if policy.output_dim != n:
        raise ConfigError(
            f"policy output dim {policy.output_dim} does not match "
            f"{n} joints")
    setup.validate_feasible()

    dt_low = 1.0 / timing.low_rate
    n_ticks = int(math.floor(duration * timing.low_rate + 1e-9))
    decimation = timing.decimation
    n_buses = len(setup.buses)

    states = []
    for i, j in enumerate(setup.joints):
        q0 = j.default_pose if initial_positions is None \
            else float(initial_positions[i])
        states.append(ActuatorState.initial(j.actuator, q0))
    substeps = [max(1, int(round(j.actuator.inner_rate / timing.low_rate)))
                for j in setup.joints]

    obs_dim = 9 + 3 * n
    log = LoopLog(
        joint_names=setup.joint_names(),
        times=np.zeros(n_ticks),
        policy_tick=np.zeros(n_ticks, dtype=bool),
        observations=np.zeros((n_ticks, obs_dim)),
        actions=np.zeros((n_ticks, n)),
        setpoints=np.zeros((n_ticks, n)),
        positions=np.zeros((n_ticks, n)),
        velocities=np.zeros((n_ticks, n)),
        torques=np.zeros((n_ticks, n)),
        bus_utilization=np.zeros((n_ticks, n_buses)),
        electrical_power=np.zeros(n_ticks),
        torque_limits=np.array([j.actuator.torque_limit
                                for j in setup.joints]),
        layout_checksum=observation_layout_checksum(setup.joint_names()),
    )

    default_pose = np.array([j.default_pose for j in setup.joints])
    prev_action = np.zeros(n)
    action = np.zeros(n)
    setpoints = default_pose.copy()
    obs_arr = np.zeros(obs_dim)

    for tick in range(n_ticks):
        t = tick * dt_low

        # Feedback path: actuator state -> frame -> decoded joint state.
        cycle_bits = np.zeros(n_buses)
        q_meas = np.zeros(n)
        dq_meas = np.zeros(n)
        for i, j in enumerate(setup.joints):
            st = states[i]
            frame, _ = fieldbus.encode_feedback(
                setup.wire, j.node_id,
                output_position_estimate(j.actuator, st),
                st.rotor_velocity / j.actuator.transmission.ratio,
                st.delivered_torque,
            )
            cycle_bits[j.bus] += fieldbus.stuffed_frame_length(frame)
            _, q_meas[i], dq_meas[i], _ = fieldbus.decode_feedback(
                frame, setup.wire)

        # Policy at the decimated rate; targets held in between.
        if tick % decimation == 0:
            quat, gyro = imu(t)
            obs = assemble_observation(
                quat, gyro, q_meas, dq_meas, command_fn(t), prev_action)
            obs_arr = obs.to_array()
            action = policy_infer(policy, obs_arr)
            setpoints = default_pose + action * policy.action_scale
            prev_action = action
            log.policy_tick[tick] = True

        # Command path and actuator stepping.
        power = 0.0
        for i, j in enumerate(setup.joints):
            frame, _ = fieldbus.encode_command(
                setup.wire, j.node_id, float(setpoints[i]), 0.0,
                j.kp, j.kd, 0.0)
            cycle_bits[j.bus] += fieldbus.stuffed_frame_length(frame)
            cmd = fieldbus.decode_command(frame, setup.wire)
            st = states[i]
            sub = substeps[i]
            dt_sub = dt_low / sub
            for _ in range(sub):
                st = step(j.actuator, st, cmd, 0.0, dt_sub, FreeOutput())
            states[i] = st
            power += electrical_power(
                j.actuator, st, j.actuator.motor.kt * st.current)
            log.torques[tick, i] = st.delivered_torque

        log.times[tick] = t
        log.observations[tick] = obs_arr
        log.actions[tick] = action
        log.setpoints[tick] = setpoints
        log.positions[tick] = q_meas
        log.velocities[tick] = dq_meas
        for b, bus in enumerate(setup.buses):
            log.bus_utilization[tick, b] = (
                cycle_bits[b] * bus.cycle_rate / bus.bitrate)
        log.electrical_power[tick] = power

    return log
