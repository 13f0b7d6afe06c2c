"""Serial-chain kinematics: config parsing, forward kinematics, Jacobian.

A chain is an ordered list of revolute joints.  Each joint carries a
fixed origin transform (applied first) and a unit rotation axis in its
local frame.  Chains are loaded from a JSON description, see
docs/FORMATS.md for the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import (
    quat_conjugate,
    quat_from_axis_angle,
    quat_from_rpy,
    quat_identity,
    quat_multiply,
    quat_norm,
    quat_rotate,
    quat_to_rotation_vector,
)

SCHEMA_VERSION = 1

# Tolerance on |axis| - 1.  Axes are rejected, not renormalized, so a
# config typo like [1, 1, 0] fails loudly instead of silently rotating
# about a different axis.
_AXIS_TOL = 1e-9


@dataclass(frozen=True)
class Pose:
    """Rigid transform: position and orientation quaternion [w, x, y, z]."""

    position: np.ndarray
    orientation: np.ndarray

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), quat_identity())

    def compose(self, other: "Pose") -> "Pose":
        """This pose followed by `other` expressed in this pose's frame."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_multiply(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(qi, self.position), qi)

    def error_to(self, target: "Pose") -> np.ndarray:
        """6-vector [dp; rotation vector] taking this pose to `target`.

        Both parts are expressed in the world frame: dp = p_t - p and the
        rotation vector is log(q_t * q^-1).
        """
        dq = quat_multiply(target.orientation, quat_conjugate(self.orientation))
        return np.concatenate(
            [target.position - self.position, quat_to_rotation_vector(dq)]
        )


@dataclass(frozen=True)
class Joint:
    name: str
    axis: np.ndarray
    origin: Pose
    lower: float = -math.pi
    upper: float = math.pi


@dataclass(frozen=True)
class KinematicChain:
    name: str
    joints: tuple[Joint, ...]
    tip: Pose = field(default_factory=Pose.identity)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def limits(self) -> np.ndarray:
        """(N, 2) array of [lower, upper] per joint."""
        return np.array([[j.lower, j.upper] for j in self.joints]).reshape(-1, 2)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lims = self.limits()
        return np.clip(q, lims[:, 0], lims[:, 1])


def _parse_origin(raw: dict, where: str) -> Pose:
    xyz = raw.get("xyz", [0.0, 0.0, 0.0])
    if len(xyz) != 3:
        raise ConfigError(f"{where}: origin xyz must have 3 elements")
    if "quat" in raw and "rpy" in raw:
        raise ConfigError(f"{where}: origin gives both quat and rpy")
    if "quat" in raw:
        q = np.asarray(raw["quat"], dtype=float)
        if q.shape != (4,):
            raise ConfigError(f"{where}: origin quat must have 4 elements")
        n = quat_norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ConfigError(f"{where}: origin quat is not unit norm")
        q = q / n
    elif "rpy" in raw:
        rpy = raw["rpy"]
        if len(rpy) != 3:
            raise ConfigError(f"{where}: origin rpy must have 3 elements")
        q = quat_from_rpy(*[float(v) for v in rpy])
    else:
        q = quat_identity()
    return Pose(np.asarray(xyz, dtype=float), q)


def chain_from_dict(cfg: dict) -> KinematicChain:
    """Build a chain from a parsed config dict, validating as we go."""
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION}"
        )
    if cfg.get("kind", "chain") != "chain":
        raise ConfigError(f"expected kind 'chain', got {cfg.get('kind')!r}")
    name = cfg.get("name", "chain")
    joints: list[Joint] = []
    seen: set[str] = set()
    for i, raw in enumerate(cfg.get("joints", [])):
        jname = raw.get("name")
        if not jname:
            raise ConfigError(f"joint #{i}: missing name")
        if jname in seen:
            raise ConfigError(f"joint {jname!r}: duplicate name")
        seen.add(jname)
        axis = np.asarray(raw.get("axis", ()), dtype=float)
        if axis.shape != (3,):
            raise ConfigError(f"joint {jname!r}: axis must have 3 elements")
        if abs(float(np.linalg.norm(axis)) - 1.0) > _AXIS_TOL:
            raise ConfigError(f"joint {jname!r}: axis is not a unit vector")
        origin = _parse_origin(raw.get("origin", {}), f"joint {jname!r}")
        limits = raw.get("limits")
        if limits is None:
            lower, upper = -math.pi, math.pi
        else:
            if len(limits) != 2:
                raise ConfigError(f"joint {jname!r}: limits must be [lower, upper]")
            lower, upper = float(limits[0]), float(limits[1])
            if lower >= upper:
                raise ConfigError(f"joint {jname!r}: limits are inverted")
        joints.append(Joint(jname, axis, origin, lower, upper))
    tip = _parse_origin(cfg["tip"], "tip") if "tip" in cfg else Pose.identity()
    return KinematicChain(name=name, joints=tuple(joints), tip=tip)


def chain_to_dict(chain: KinematicChain) -> dict:
    """Inverse of chain_from_dict; round-trips losslessly."""
    joints = []
    for j in chain.joints:
        joints.append(
            {
                "name": j.name,
                "axis": [float(v) for v in j.axis],
                "origin": {
                    "xyz": [float(v) for v in j.origin.position],
                    "quat": [float(v) for v in j.origin.orientation],
                },
                "limits": [j.lower, j.upper],
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "chain",
        "name": chain.name,
        "joints": joints,
        "tip": {
            "xyz": [float(v) for v in chain.tip.position],
            "quat": [float(v) for v in chain.tip.orientation],
        },
    }


def load_chain(source: str | Path) -> KinematicChain:
    """Load a chain from a preset name or a JSON file path."""
    path = Path(source)
    if not path.suffix:
        from importlib import resources

        ref = resources.files("cyclobot").joinpath(
            f"configs/morphologies/{source}.json")
        if not ref.is_file():
            raise ConfigError(f"unknown morphology preset {source!r}")
        text = ref.read_text()
    else:
        if not path.is_file():
            raise ConfigError(f"chain config not found: {source}")
        text = path.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: not valid JSON ({e})") from e
    return chain_from_dict(cfg)


def save_chain(chain: KinematicChain, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(chain_to_dict(chain), f, indent=2)
        f.write("\n")


def _check_q(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n_joints,):
        raise ValueError(
            f"expected {chain.n_joints} joint angles, got shape {q.shape}"
        )
    return q


def forward_kinematics(chain: KinematicChain, q: np.ndarray) -> Pose:
    """World pose of the chain tip for joint angles q (radians)."""
    q = _check_q(chain, q)
    pose = Pose.identity()
    for joint, angle in zip(chain.joints, q):
        pose = pose.compose(joint.origin)
        pose = Pose(pose.position, quat_multiply(
            pose.orientation, quat_from_axis_angle(joint.axis, float(angle))))
    return pose.compose(chain.tip)


def joint_frames(chain: KinematicChain, q: np.ndarray) -> list[Pose]:
    """World pose of each joint frame (at the rotation point, pre-rotation)."""
    q = _check_q(chain, q)
    frames = []
    pose = Pose.identity()
    for joint, angle in zip(chain.joints, q):
        pose = pose.compose(joint.origin)
        frames.append(pose)
        pose = Pose(pose.position, quat_multiply(
            pose.orientation, quat_from_axis_angle(joint.axis, float(angle))))
    return frames


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Geometric Jacobian, world frame, at the chain tip.

    Shape (6, N): rows 0..2 map joint rates to tip linear velocity,
    rows 3..5 to angular velocity.  For a revolute joint the angular
    column is the world axis and the linear column is axis x (p_tip - p_joint).
    """
    q = _check_q(chain, q)
    n = chain.n_joints
    J = np.zeros((6, n))
    if n == 0:
        return J
    frames = joint_frames(chain, q)
    p_tip = forward_kinematics(chain, q).position
    for i, (joint, frame) in enumerate(zip(chain.joints, frames)):
        z = quat_rotate(frame.orientation, joint.axis)
        J[0:3, i] = np.cross(z, p_tip - frame.position)
        J[3:6, i] = z
    return J
