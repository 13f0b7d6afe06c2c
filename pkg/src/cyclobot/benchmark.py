"""Robot comparison metrics: performance factor and its per-cost ratio.

The performance factor is the mean peak joint torque normalized by the
product of height and weight; dividing by platform cost gives a
price-performance number.  Robot descriptions come from JSON files with
per-value source annotations, since public torque figures range from
datasheet values to estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

G_DEFAULT = 9.81

_TORQUE_SOURCES = ("datasheet", "estimate")


@dataclass(frozen=True)
class JointTorque:
    name: str
    peak_torque: float           # Nm, absolute

    def __post_init__(self) -> None:
        if self.peak_torque < 0:
            raise ConfigError(
                f"joint {self.name!r}: peak_torque must be >= 0")


@dataclass(frozen=True)
class RobotSpec:
    name: str
    joints: tuple[JointTorque, ...]
    height: float                # m
    mass: float                  # kg
    cost: float                  # common currency units
    gravity: float = G_DEFAULT
    hardware_open: bool = False
    software_open: bool = False
    torque_source: str = "datasheet"

    def __post_init__(self) -> None:
        if len(self.joints) < 1:
            raise ConfigError(f"robot {self.name!r}: needs at least 1 joint")
        if self.height <= 0 or self.mass <= 0:
            raise ConfigError(
                f"robot {self.name!r}: height and mass must be positive")
        if self.cost <= 0:
            raise ConfigError(f"robot {self.name!r}: cost must be positive")
        if self.gravity <= 0:
            raise ConfigError(f"robot {self.name!r}: gravity must be positive")
        if self.torque_source not in _TORQUE_SOURCES:
            raise ConfigError(
                f"robot {self.name!r}: torque_source must be one of "
                f"{_TORQUE_SOURCES}, got {self.torque_source!r}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)


def performance_factor(spec: RobotSpec, weight_mode: str = "mg") -> float:
    """Mean peak torque over height times weight.

    `weight_mode` selects the denominator's weight term: "mg" (newtons,
    the default) or "m" (kilograms only, for sensitivity checks).
    """
    if weight_mode == "mg":
        weight = spec.mass * spec.gravity
    elif weight_mode == "m":
        weight = spec.mass
    else:
        raise ConfigError(f"weight_mode must be 'mg' or 'm', "
                          f"got {weight_mode!r}")
    total = sum(j.peak_torque for j in spec.joints)
    return total / (spec.n_joints * spec.height * weight)


def performance_per_dollar(spec: RobotSpec,
                           weight_mode: str = "mg") -> float:
    return performance_factor(spec, weight_mode) / spec.cost


@dataclass(frozen=True)
class RankedRow:
    rank: int
    name: str
    p_hat: float
    phi: float
    cost: float
    n_joints: int
    hardware_open: bool
    software_open: bool
    torque_source: str


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[RankedRow, ...]
    weight_mode: str = "mg"

    def to_csv(self) -> str:
        lines = ["rank,name,performance_factor,performance_per_dollar,"
                 "cost,n_joints,hardware_open,software_open,torque_source"]
        for r in self.rows:
            lines.append(
                f"{r.rank},{r.name},{repr(r.p_hat)},{repr(r.phi)},"
                f"{repr(r.cost)},{r.n_joints},{int(r.hardware_open)},"
                f"{int(r.software_open)},{r.torque_source}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        # All costs are assumed to share one currency; the ranking is
        # meaningless otherwise.
        head = ("rank", "name", "p_hat", "phi", "cost", "joints",
                "hw", "sw", "torques")
        body = [(str(r.rank), r.name, f"{r.p_hat:.4f}", f"{r.phi:.3e}",
                 f"{r.cost:.0f}", str(r.n_joints),
                 "open" if r.hardware_open else "closed",
                 "open" if r.software_open else "closed",
                 r.torque_source) for r in self.rows]
        widths = [max(len(head[c]), *(len(row[c]) for row in body))
                  if body else len(head[c]) for c in range(len(head))]
        lines = ["# price-performance ranking; costs assumed to share "
                 "one currency",
                 "  ".join(h.ljust(w) for h, w in zip(head, widths))]
        for row in body:
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
        return "\n".join(lines) + "\n"


def compare(specs: list[RobotSpec], weight_mode: str = "mg") -> ComparisonReport:
    """Rank robots by performance per cost, descending.

    Ties break by name, ascending lexicographic, so the ranking is a
    total order.  Duplicate names are rejected.
    """
    if not specs:
        raise ConfigError("compare needs at least one robot spec")
    seen = set()
    for s in specs:
        if s.name in seen:
            raise ConfigError(f"duplicate robot name {s.name!r}")
        seen.add(s.name)
    scored = sorted(
        specs,
        key=lambda s: (-performance_per_dollar(s, weight_mode), s.name))
    rows = tuple(
        RankedRow(
            rank=i + 1,
            name=s.name,
            p_hat=performance_factor(s, weight_mode),
            phi=performance_per_dollar(s, weight_mode),
            cost=s.cost,
            n_joints=s.n_joints,
            hardware_open=s.hardware_open,
            software_open=s.software_open,
            torque_source=s.torque_source,
        )
        for i, s in enumerate(scored))
    return ComparisonReport(rows=rows, weight_mode=weight_mode)


# Config loading -------------------------------------------------------

def robot_from_dict(cfg: dict) -> RobotSpec:
    if cfg.get("schema_version") != 1:
        raise ConfigError(
            f"unsupported schema_version {cfg.get('schema_version')!r}")
    if cfg.get("kind") != "robot":
        raise ConfigError(f"expected kind 'robot', got {cfg.get('kind')!r}")
    try:
        joints = tuple(JointTorque(j["name"], float(j["peak_torque"]))
                       for j in cfg["joints"])
    except (KeyError, TypeError) as e:
        raise ConfigError(f"bad joints list: {e}") from e
    try:
        return RobotSpec(
            name=cfg["name"],
            joints=joints,
            height=float(cfg["height"]),
            mass=float(cfg["mass"]),
            cost=float(cfg["cost"]),
            gravity=float(cfg.get("gravity", G_DEFAULT)),
            hardware_open=bool(cfg.get("hardware_open", False)),
            software_open=bool(cfg.get("software_open", False)),
            torque_source=cfg.get("torque_source", "datasheet"),
        )
    except KeyError as e:
        raise ConfigError(f"robot config missing field {e}") from e


def load_robot(path: str | Path) -> RobotSpec:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"robot spec not found: {path}")
    return robot_from_dict(json.loads(p.read_text()))
