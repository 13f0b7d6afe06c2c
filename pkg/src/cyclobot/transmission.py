"""Cycloidal gearbox model: compliance, backlash, efficiency, wear.

The gearbox is reduced to a lumped torsional element between the motor
(input) and the joint (output).  Torque transmits through a dead zone of
width `backlash` followed by a linear spring of stiffness `stiffness`,
both measured on the output side.  Losses are split into a load- and
speed-dependent efficiency surface plus a Coulomb term that is inflated
while the printed gear surfaces run in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

# Couplings at or above this stiffness are treated as rigid: the
# explicit integrator in the actuator model is unstable there, and the
# intended meaning of such a config is an ideal geared joint.
RIGID_STIFFNESS = 1.0e6


@dataclass(frozen=True)
class TransmissionSpec:
    """Parameters of one gearbox unit.

    Stiffness and backlash defaults follow bench measurements of a
    15:1 printed cycloidal stage; loss coefficients are tuned so the
    efficiency surface sits in the high-80s to low-90s percent over the
    1-8 Nm, 0.5-3 rad/s operating window.
    """

    ratio: float = 15.0
    stiffness: float = 319.49        # Nm/rad, output side
    backlash_init: float = 0.0187    # rad, output side, dead-zone width
    damping: float = 1.0             # Nm*s/rad across the engaged spring
    eta0: float = 0.955              # no-load efficiency intercept
    k_tau: float = 0.0075            # efficiency drop per Nm of load
    k_omega: float = 0.01            # efficiency drop per rad/s of speed
    tau_coulomb: float = 0.03        # Nm, output side, after break-in
    rated_torque: float = 10.0       # Nm, reference load for wear scaling
    backlash_max: float = 0.05       # rad, wear asymptote
    wear_cycles: float = 30000.0     # cycles to ~63% of the wear budget
    breakin_amp: float = 1.5         # peak extra Coulomb fraction
    breakin_center: float = 7200.0   # cycles at peak break-in friction
    breakin_width: float = 3600.0    # cycles, Gaussian width

    def __post_init__(self) -> None:
        if self.ratio <= 0:
            raise ValueError("ratio must be positive")
        if self.stiffness <= 0:
            raise ValueError("stiffness must be positive")
        if self.backlash_init < 0:
            raise ValueError("backlash_init must be non-negative")
        if self.backlash_max < self.backlash_init:
            raise ValueError("backlash_max must be >= backlash_init")
        if self.rated_torque <= 0:
            raise ValueError("rated_torque must be positive")
        if self.wear_cycles <= 0:
            raise ValueError("wear_cycles must be positive")

    @property
    def is_rigid(self) -> bool:
        return self.stiffness >= RIGID_STIFFNESS


@dataclass(frozen=True)
class TransmissionState:
    """Mutable-by-replacement state of one gearbox unit."""

    input_angle: float = 0.0      # rad, motor side
    output_angle: float = 0.0     # rad, joint side
    cycles: float = 0.0           # raw load cycles seen
    wear_cycles: float = 0.0      # cycles weighted by load severity
    backlash: float = 0.0         # rad, current dead-zone width

    @staticmethod
    def initial(spec: TransmissionSpec) -> "TransmissionState":
        return TransmissionState(backlash=spec.backlash_init)


def transmit_torque(
    spec: TransmissionSpec, input_angle: float, output_angle: float,
    backlash: float | None = None,
) -> float:
    """Output-side spring torque for the given shaft angles.

    The deflection is delta = input/ratio - output.  Inside the dead
    zone (|delta| <= backlash/2) the gears are not in contact and no
    torque transmits; outside, torque is linear in the overlap past the
    dead-zone edge.
    """
    b = spec.backlash_init if backlash is None else backlash
    delta = input_angle / spec.ratio - output_angle
    half = 0.5 * b
    if abs(delta) <= half:
        return 0.0
    return spec.stiffness * (delta - math.copysign(half, delta))


def efficiency(spec: TransmissionSpec, tau: float, omega: float) -> float:
    """Transmission efficiency at output torque tau and speed omega.

    Affine in |tau| and |omega|, clamped to [0.05, 1.0].  The floor
    keeps downstream power ratios finite for out-of-envelope queries.
    """
    eta = spec.eta0 - spec.k_tau * abs(tau) - spec.k_omega * abs(omega)
    return min(1.0, max(0.05, eta))


def wear_backlash(spec: TransmissionSpec, wear_cycles: float) -> float:
    """Backlash after `wear_cycles` load-weighted cycles."""
    grown = 1.0 - math.exp(-wear_cycles / spec.wear_cycles)
    return spec.backlash_init + (spec.backlash_max - spec.backlash_init) * grown


def apply_wear(
    spec: TransmissionSpec,
    state: TransmissionState,
    cycles: float,
    peak_torque: float,
) -> TransmissionState:
    """Advance wear by `cycles` load cycles at the given peak torque.

    Severity scales the effective cycle count by peak/rated torque, so
    backlash approaches backlash_max but never exceeds it regardless of
    load.  Incremental application composes: two calls of n cycles each
    equal one call of 2n at the same torque.
    """
    if cycles < 0:
        raise ValueError("cycle count must be non-negative")
    if peak_torque < 0:
        raise ValueError("peak_torque must be non-negative")
    wear = state.wear_cycles + cycles * (peak_torque / spec.rated_torque)
    return replace(
        state,
        cycles=state.cycles + cycles,
        wear_cycles=wear,
        backlash=wear_backlash(spec, wear),
    )


def breakin_friction_multiplier(spec: TransmissionSpec, cycles: float) -> float:
    """Coulomb friction multiplier during surface break-in.

    A Gaussian bump in cycle count: fresh units start near 1, friction
    peaks at 1 + breakin_amp around breakin_center cycles, and decays
    back to 1 as the surfaces polish.  Always >= 1.
    """
    z = (cycles - spec.breakin_center) / spec.breakin_width
    return 1.0 + spec.breakin_amp * math.exp(-z * z)
