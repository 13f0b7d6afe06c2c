"""Teleoperation: clutched pose retargeting and damped least-squares IK.

Controller poses stream in at a fixed rate with a clutch and a gripper
channel.  While the clutch is engaged, the controller's motion since the
engage event is replayed onto the end effector, starting from wherever
the arm was.  Two mappings are provided: a direct global-frame delta
(keyboard/mouse rigs) and a frame-aligned delta for handheld trackers
whose axes differ from the robot's.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import (
    quat_conjugate,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    quat_to_rotation_vector,
)
from .kinematics import KinematicChain, Pose, forward_kinematics, jacobian

POSE_STREAM_HEADER = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz",
                      "clutch", "gripper"]


@dataclass(frozen=True)
class PoseSample:
    t: float
    pose: Pose
    clutch: bool
    gripper: float


@dataclass(frozen=True)
class PoseStream:
    samples: tuple[PoseSample, ...]

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return self.samples[-1].t if self.samples else 0.0

    def at(self, t: float) -> PoseSample:
        """Zero-order hold: latest sample with sample.t <= t."""
        if not self.samples:
            raise ValueError("empty pose stream")
        lo, hi = 0, len(self.samples) - 1
        if t <= self.samples[0].t:
            return self.samples[0]
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.samples[mid].t <= t:
                lo = mid
            else:
                hi = mid - 1
        return self.samples[lo]


def load_pose_stream(path: str | Path) -> PoseStream:
    """Read a pose stream CSV (see docs/FORMATS.md for the format)."""
    with open(path, newline="") as f:
        return parse_pose_stream(f.read(), name=str(path))


def parse_pose_stream(text: str, name: str = "<stream>") -> PoseStream:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ConfigError(f"{name}: empty pose stream")
    header = [c.strip() for c in rows[0]]
    if header != POSE_STREAM_HEADER:
        raise ConfigError(
            f"{name}: bad header {header!r}, expected {POSE_STREAM_HEADER!r}")
    samples = []
    last_t = -math.inf
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(POSE_STREAM_HEADER):
            raise ConfigError(f"{name}: line {i}: expected "
                              f"{len(POSE_STREAM_HEADER)} columns")
        try:
            vals = [float(c) for c in row]
        except ValueError as e:
            raise ConfigError(f"{name}: line {i}: {e}") from e
        t = vals[0]
        if t < last_t:
            raise ConfigError(f"{name}: line {i}: time goes backwards")
        last_t = t
        quat = np.array(vals[4:8])
        try:
            quat = quat_normalize(quat)
        except ValueError as e:
            raise ConfigError(f"{name}: line {i}: {e}") from e
        samples.append(PoseSample(
            t=t,
            pose=Pose(np.array(vals[1:4]), quat),
            clutch=bool(int(vals[8])),
            gripper=vals[9],
        ))
    if not samples:
        raise ConfigError(f"{name}: empty pose stream")
    return PoseStream(tuple(samples))


def save_pose_stream(stream: PoseStream, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(POSE_STREAM_HEADER)
        for s in stream.samples:
            w.writerow([
                repr(s.t),
                *[repr(float(v)) for v in s.pose.position],
                *[repr(float(v)) for v in s.pose.orientation],
                int(s.clutch),
                repr(s.gripper),
            ])


# Clutch mappings -------------------------------------------------------

@dataclass(frozen=True)
class ClutchState:
    """Reference poses captured at the rising clutch edge."""

    engaged: bool = False
    ref_controller: Pose = field(default_factory=Pose.identity)
    ref_effector: Pose = field(default_factory=Pose.identity)


def engage(controller: Pose, effector: Pose) -> ClutchState:
    return ClutchState(True, controller, effector)


def _apply_rotation_delta(dq: np.ndarray, q: np.ndarray) -> np.ndarray:
    # A pure-scalar quaternion is the identity rotation regardless of
    # its magnitude; skipping the product keeps q bit-identical, which
    # makes the engage-instant target exactly equal the current pose.
    if dq[1] == 0.0 and dq[2] == 0.0 and dq[3] == 0.0:
        return np.asarray(q, dtype=float).copy()
    return quat_multiply(dq, q)


def headless_target(clutch: ClutchState, controller: Pose) -> Pose:
    """Global-frame delta mapping.

    The controller's translation and rotation since engage, both
    expressed in the world frame, are applied to the reference effector
    pose.  At the engage instant the delta is exactly identity, so the
    target equals the current effector pose and the arm does not jump.
    """
    dp = controller.position - clutch.ref_controller.position
    dq = quat_multiply(controller.orientation,
                       quat_conjugate(clutch.ref_controller.orientation))
    return Pose(
        clutch.ref_effector.position + dp,
        _apply_rotation_delta(dq, clutch.ref_effector.orientation),
    )


@dataclass(frozen=True)
class FrameAlignment:
    """Orientation of the operator's frame and the robot base frame.

    Identity on both sides makes the aligned mapping coincide with the
    global-frame one bit for bit.
    """

    user: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    robot: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))


def vr_target(clutch: ClutchState, controller: Pose,
              frames: FrameAlignment | None = None) -> Pose:
    """Frame-aligned delta mapping for handheld trackers.

    The controller delta is expressed in the operator's local frame,
    re-expressed along the robot base axes, and then applied to the
    reference effector pose in the world frame.  "Hand forward" moves
    the effector along the robot's forward axis regardless of how the
    two frames are oriented.
    """
    frames = frames or FrameAlignment()
    qu, qr = frames.user, frames.robot
    qu_i, qr_i = quat_conjugate(qu), quat_conjugate(qr)

    dp_world = controller.position - clutch.ref_controller.position
    dq_world = quat_multiply(controller.orientation,
                             quat_conjugate(clutch.ref_controller.orientation))

    # World delta -> operator frame -> robot frame -> world again.  A
    # scalar (identity) rotation delta is frame-independent, so the
    # conjugations are skipped for it; see _apply_rotation_delta.
    dp_user = quat_rotate(qu_i, dp_world)
    dp_out = quat_rotate(qr, dp_user)
    if dq_world[1] == 0.0 and dq_world[2] == 0.0 and dq_world[3] == 0.0:
        dq_out = dq_world
    else:
        dq_user = quat_multiply(qu_i, quat_multiply(dq_world, qu))
        dq_out = quat_multiply(qr, quat_multiply(dq_user, qr_i))

    return Pose(
        clutch.ref_effector.position + dp_out,
        _apply_rotation_delta(dq_out, clutch.ref_effector.orientation),
    )


# Damped least-squares IK ----------------------------------------------

@dataclass(frozen=True)
class IkParams:
    damping: float = 1e-3            # lambda in the DLS normal equations
    position_weight: float = 1.0
    orientation_weight: float = 0.5
    max_step: float = 0.05           # rad, per-joint per-iteration cap
    position_tolerance: float = 1e-3  # m
    orientation_tolerance: float | None = None  # rad; None: position only
    max_iterations: int = 200
    condition_threshold: float = 1e4


@dataclass(frozen=True)
class IkStep:
    dq: np.ndarray
    position_error: float
    orientation_error: float
    singular: bool


def ik_step(chain: KinematicChain, q: np.ndarray, target: Pose,
            params: IkParams | None = None) -> IkStep:
    """One damped least-squares step toward `target`.

    dq = J^T (J J^T + lambda^2 I)^-1 e with weighted rows.  When any
    joint's step exceeds max_step the whole vector is rescaled so the
    largest component equals max_step; scaling (rather than per-joint
    clipping) keeps the step a descent direction.  Near-singular chains
    are flagged but still stepped: the damping keeps the update finite.
    """
    params = params or IkParams()
    pose = forward_kinematics(chain, q)
    err = pose.error_to(target)
    p_err = float(np.linalg.norm(err[0:3]))
    o_err = float(np.linalg.norm(err[3:6]))

    J = jacobian(chain, q)
    w = np.array([params.position_weight] * 3
                 + [params.orientation_weight] * 3)
    Jw = J * w[:, None]
    ew = err * w

    sv = np.linalg.svd(Jw, compute_uv=False)
    k = min(6, chain.n_joints)
    singular = bool(
        k == 0 or sv[k - 1] <= 0.0
        or sv[0] / max(sv[k - 1], 1e-300) > params.condition_threshold)

    lam2 = params.damping ** 2
    A = Jw @ Jw.T + lam2 * np.eye(6)
    dq = Jw.T @ np.linalg.solve(A, ew)
    biggest = float(np.max(np.abs(dq))) if dq.size else 0.0
    if biggest > params.max_step:
        dq = dq * (params.max_step / biggest)
    return IkStep(dq=dq, position_error=p_err, orientation_error=o_err,
                  singular=singular)


@dataclass(frozen=True)
class IkResult:
    q: np.ndarray
    converged: bool
    iterations: int
    position_error: float
    orientation_error: float
    singular: bool


def _converged(params: IkParams, p_err: float, o_err: float) -> bool:
    if p_err > params.position_tolerance:
        return False
    if params.orientation_tolerance is not None \
            and o_err > params.orientation_tolerance:
        return False
    return True


def solve_ik(chain: KinematicChain, q0: np.ndarray, target: Pose,
             params: IkParams | None = None) -> IkResult:
    """Iterate ik_step to convergence with a monotone error safeguard.

    If a full step would increase the weighted error norm, the step is
    halved (up to a few times) before being taken, so the error norm
    never increases between iterations.  Joint limits are enforced
    after every update.  When no step length makes progress and the
    orientation tolerance is None, the stall is a local minimum of the
    combined metric: the orientation preference is dropped and the
    solve continues on position alone, which is the only term the
    convergence test cares about.  Deterministic.
    """
    params = params or IkParams()
    eff = params
    q = chain.clamp(np.asarray(q0, dtype=float).copy())
    w = np.array([eff.position_weight] * 3
                 + [eff.orientation_weight] * 3)

    def werr(qv: np.ndarray) -> float:
        e = forward_kinematics(chain, qv).error_to(target)
        return float(np.linalg.norm(e * w))

    saw_singular = False
    last = ik_step(chain, q, target, eff)
    for it in range(params.max_iterations):
        saw_singular = saw_singular or last.singular
        if _converged(params, last.position_error, last.orientation_error):
            return IkResult(q, True, it, last.position_error,
                            last.orientation_error, saw_singular)
        base = werr(q)
        dq = last.dq
        q_new = chain.clamp(q + dq)
        improved = False
        for _ in range(8):
            if werr(q_new) <= base:
                improved = True
                break
            dq = 0.5 * dq
            q_new = chain.clamp(q + dq)
        if not improved and params.orientation_tolerance is None \
                and eff.orientation_weight > 0.0:
            eff = replace(eff, orientation_weight=0.0)
            w = np.array([eff.position_weight] * 3 + [0.0] * 3)
            last = ik_step(chain, q, target, eff)
            continue
        q = q_new
        last = ik_step(chain, q, target, eff)
    saw_singular = saw_singular or last.singular
    return IkResult(
        q, _converged(params, last.position_error, last.orientation_error),
        params.max_iterations, last.position_error, last.orientation_error,
        saw_singular)


# Stream replay ---------------------------------------------------------

@dataclass
class ReplayLog:
    times: np.ndarray
    joint_angles: np.ndarray      # (ticks, N)
    targets: list[Pose]           # commanded effector pose per tick
    achieved: list[Pose]          # FK pose per tick
    clutch: np.ndarray            # bool per tick
    gripper: np.ndarray
    singular: np.ndarray          # bool per tick
    engage_jumps: np.ndarray      # |target - effector| at each engage tick

    @property
    def max_engage_jump(self) -> float:
        return float(np.max(self.engage_jumps)) if len(self.engage_jumps) \
            else 0.0


def replay(
    stream: PoseStream,
    chain: KinematicChain,
    q0: np.ndarray,
    mode: str = "headless",
    frames: FrameAlignment | None = None,
    params: IkParams | None = None,
    tick_rate: float = 250.0,
) -> ReplayLog:
    """Replay a recorded pose stream through the IK pipeline.

    The stream is resampled zero-order-hold onto the tick grid.  One
    DLS step runs per tick while the clutch is engaged; when it is
    open the joints hold.  Deterministic for a given input.
    """
    if mode not in ("headless", "vr"):
        raise ConfigError(f"unknown teleop mode {mode!r}")
    params = params or IkParams()
    q = chain.clamp(np.asarray(q0, dtype=float).copy())
    n_ticks = int(math.floor(stream.duration * tick_rate + 1e-9)) + 1

    times = np.zeros(n_ticks)
    angles = np.zeros((n_ticks, chain.n_joints))
    targets: list[Pose] = []
    achieved: list[Pose] = []
    clutch_col = np.zeros(n_ticks, dtype=bool)
    gripper_col = np.zeros(n_ticks)
    singular_col = np.zeros(n_ticks, dtype=bool)
    jumps = []

    clutch = ClutchState()
    for tick in range(n_ticks):
        t = tick / tick_rate
        sample = stream.at(t)
        effector = forward_kinematics(chain, q)

        if sample.clutch and not clutch.engaged:
            clutch = engage(sample.pose, effector)
            target = (headless_target(clutch, sample.pose)
                      if mode == "headless"
                      else vr_target(clutch, sample.pose, frames))
            rot_jump = quat_to_rotation_vector(quat_multiply(
                target.orientation, quat_conjugate(effector.orientation)))
            jumps.append(max(
                float(np.linalg.norm(target.position - effector.position)),
                float(np.linalg.norm(rot_jump))))
        elif not sample.clutch:
            clutch = ClutchState()

        if clutch.engaged:
            target = (headless_target(clutch, sample.pose)
                      if mode == "headless"
                      else vr_target(clutch, sample.pose, frames))
            st = ik_step(chain, q, target, params)
            q = chain.clamp(q + st.dq)
            singular_col[tick] = st.singular
        else:
            target = effector

        times[tick] = t
        angles[tick] = q
        targets.append(target)
        achieved.append(forward_kinematics(chain, q))
        clutch_col[tick] = clutch.engaged
        gripper_col[tick] = sample.gripper

    return ReplayLog(
        times=times,
        joint_angles=angles,
        targets=targets,
        achieved=achieved,
        clutch=clutch_col,
        gripper=gripper_col,
        singular=singular_col,
        engage_jumps=np.array(jumps),
    )
