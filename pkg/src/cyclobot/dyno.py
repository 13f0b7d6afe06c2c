"""Virtual dynamometer: the full bench-test suite for one actuator.

Procedures mirror a physical test stand: an efficiency map against a
velocity-source brake, a static stiffness ramp, a backlash probe, a
gravity-pendulum endurance run, a multi-unit consistency study, and an
arm-level reach repeatability test.  Every procedure is deterministic
given its seed, and every log carries that seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .actuator import (
    ActuatorSpec,
    ActuatorState,
    ControlCommand,
    FreeOutput,
    HeldVelocity,
    LockedOutput,
    electrical_power,
    read_encoder,
    step,
)
from .errors import ConfigError, SimulationError
from .kinematics import KinematicChain, forward_kinematics
from .teleop import IkParams, solve_ik
from .transmission import (
    TransmissionState,
    apply_wear,
    breakin_friction_multiplier,
)

G = 9.81  # m/s^2

DEFAULT_TORQUE_GRID = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
DEFAULT_SPEED_GRID = (0.5, 1.5, 3.0)
# Smaller grid for endurance checkpoints, biased toward low torque where
# friction changes show up most clearly in the efficiency ratio.
DURABILITY_TORQUE_GRID = (1.0, 2.0, 4.0)
DURABILITY_SPEED_GRID = (1.0, 2.0)


def _fresh_state(spec: ActuatorSpec,
                 trans: TransmissionState | None) -> ActuatorState:
    state = ActuatorState.initial(spec)
    if trans is not None:
        return replace(state, transmission=replace(
            trans, input_angle=0.0, output_angle=0.0))
    return state


def _run(spec: ActuatorSpec, state: ActuatorState, cmd: ControlCommand,
         constraint, seconds: float) -> ActuatorState:
    dt = 1.0 / spec.inner_rate
    for _ in range(int(round(seconds * spec.inner_rate))):
        state = step(spec, state, cmd, 0.0, dt, constraint)
    return state


# Efficiency map --------------------------------------------------------

@dataclass(frozen=True)
class EfficiencyCell:
    torque: float                # Nm, commanded at the output
    speed: float                 # rad/s, held by the brake
    mech_power: float            # W, load cell x speed, window mean
    mech_power_integrated: float  # W, integrated work / window time
    elec_power: float            # W, window mean
    mech_efficiency: float
    total_efficiency: float
    valid: bool


@dataclass(frozen=True)
class EfficiencyMap:
    cells: tuple[EfficiencyCell, ...]
    torque_grid: tuple[float, ...]
    speed_grid: tuple[float, ...]
    seed: int
    settle: float
    window: float

    def cell(self, torque: float, speed: float) -> EfficiencyCell:
        for c in self.cells:
            if c.torque == torque and c.speed == speed:
                return c
        raise KeyError(f"no cell at ({torque}, {speed})")

    def valid_cells(self) -> list[EfficiencyCell]:
        return [c for c in self.cells if c.valid]


def _measure_cell(
    spec: ActuatorSpec,
    tau_cmd: float,
    omega: float,
    settle: float,
    window: float,
    noise_sigma: float,
    rng: np.random.Generator,
    trans: TransmissionState | None,
) -> EfficiencyCell:
    if tau_cmd > spec.torque_limit:
        return EfficiencyCell(tau_cmd, omega, math.nan, math.nan, math.nan,
                              math.nan, math.nan, valid=False)
    state = _fresh_state(spec, trans)
    # Pre-spin the rotor so the settle window is spent on torque, not
    # on accelerating to the brake speed.
    state = replace(state, rotor_velocity=omega * spec.transmission.ratio,
                    output_velocity=omega)
    cmd = ControlCommand(mode="torque", setpoint=tau_cmd)
    held = HeldVelocity(omega)
    state = _run(spec, state, cmd, held, settle)

    dt = 1.0 / spec.inner_rate
    n = int(round(window * spec.inner_rate))
    tau_meas = np.empty(n)
    p_elec = np.empty(n)
    for k in range(n):
        state = step(spec, state, cmd, 0.0, dt, held)
        tau_meas[k] = state.delivered_torque
        p_elec[k] = electrical_power(
            spec, state, spec.motor.kt * state.current)
    if noise_sigma > 0.0:
        tau_meas = tau_meas + rng.normal(0.0, noise_sigma, size=n)

    p_samples = tau_meas * omega
    mech_power = float(np.mean(p_samples))
    work = 0.0
    for p in p_samples:
        work += p * dt
    mech_integrated = work / (n * dt)
    elec_power = float(np.mean(p_elec))
    cmd_power = tau_cmd * omega
    valid = cmd_power > 0.0 and mech_power > 0.0
    return EfficiencyCell(
        torque=tau_cmd,
        speed=omega,
        mech_power=mech_power,
        mech_power_integrated=mech_integrated,
        elec_power=elec_power,
        mech_efficiency=mech_power / cmd_power if valid else math.nan,
        total_efficiency=mech_power / elec_power if valid else math.nan,
        valid=valid,
    )


def run_efficiency_map(
    spec: ActuatorSpec,
    torque_grid: tuple[float, ...] = DEFAULT_TORQUE_GRID,
    speed_grid: tuple[float, ...] = DEFAULT_SPEED_GRID,
    settle: float = 1.0,
    window: float = 0.5,
    noise_sigma: float = 0.01,
    seed: int = 0,
    transmission_state: TransmissionState | None = None,
) -> EfficiencyMap:
    """Sweep commanded torque against brake speed and log efficiencies.

    Each cell holds its setpoint for `settle` seconds before a
    `window`-second measurement.  Mechanical efficiency is measured
    output power over commanded power; total efficiency is measured
    output power over electrical input power.  Cells whose torque the
    unit cannot produce are marked invalid.
    """
    if any(t <= 0 for t in torque_grid) or any(w <= 0 for w in speed_grid):
        raise ConfigError("torque and speed grids must be positive")
    cells = []
    for i, tau in enumerate(torque_grid):
        for j, omega in enumerate(speed_grid):
            rng = np.random.default_rng([seed, i, j])
            cells.append(_measure_cell(
                spec, float(tau), float(omega), settle, window,
                noise_sigma, rng, transmission_state))
    return EfficiencyMap(
        cells=tuple(cells),
        torque_grid=tuple(float(t) for t in torque_grid),
        speed_grid=tuple(float(w) for w in speed_grid),
        seed=seed,
        settle=settle,
        window=window,
    )


# Stiffness ramp --------------------------------------------------------

@dataclass(frozen=True)
class StiffnessResult:
    torques: np.ndarray          # commanded, Nm, in ramp order
    deflections: np.ndarray      # rad at the output, window means
    stiffness: float             # Nm/rad from the fit
    slope_positive: float
    slope_negative: float
    fit_range: tuple[float, float]
    max_residual: float          # rad, worst fit deviation


def run_stiffness_test(
    spec: ActuatorSpec,
    max_torque: float = 20.0,
    resolution: float = 1.0,
    fit_range: tuple[float, float] = (4.0, 10.0),
    settle: float = 0.5,
    window: float = 0.25,
) -> StiffnessResult:
    """Static stiffness from a torque ramp against a locked output.

    The torque command ramps 0 -> +max -> 0 -> -max -> 0; at each hold
    the rig records commanded torque against the measured input-side
    deflection (motor displacement divided by the gear ratio, read by
    the stand's displacement instrument, not the joint encoder).  A
    line is fitted per loading direction over |torque| in `fit_range`;
    stiffness is the inverse of the mean fitted slope, so the backlash
    dead zone near zero never enters the fit.
    """
    if resolution <= 0 or max_torque <= 0:
        raise ConfigError("max_torque and resolution must be positive")
    lo, hi = fit_range
    if not 0 < lo < hi:
        raise ConfigError("fit_range must satisfy 0 < lo < hi")
    if hi > max_torque:
        raise ConfigError("fit_range exceeds the ramp's maximum torque")

    n_steps = int(round(max_torque / resolution))
    up = [k * resolution for k in range(n_steps + 1)]
    ramp = (up + up[-2::-1]
            + [-t for t in up[1:]] + [-t for t in up[-2::-1]])

    state = _fresh_state(spec, None)
    dt = 1.0 / spec.inner_rate
    n_window = int(round(window * spec.inner_rate))
    ratio = spec.transmission.ratio

    torques = []
    deflections = []
    for tau_cmd in ramp:
        cmd = ControlCommand(mode="torque", setpoint=float(tau_cmd))
        state = _run(spec, state, cmd, LockedOutput(), settle)
        acc = 0.0
        for _ in range(n_window):
            state = step(spec, state, cmd, 0.0, dt, LockedOutput())
            acc += state.rotor_angle / ratio - state.output_angle
        torques.append(float(tau_cmd))
        deflections.append(acc / n_window)

    tq = np.array(torques)
    de = np.array(deflections)
    pos = (tq >= lo) & (tq <= hi)
    neg = (tq <= -lo) & (tq >= -hi)
    if np.sum(pos) < 3 or np.sum(neg) < 3:
        raise ConfigError(
            f"fit range {fit_range} covers fewer than 3 samples per "
            f"direction at resolution {resolution}")
    cp = np.polyfit(tq[pos], de[pos], 1)
    cn = np.polyfit(tq[neg], de[neg], 1)
    slope = 0.5 * (cp[0] + cn[0])
    resid = max(
        float(np.max(np.abs(np.polyval(cp, tq[pos]) - de[pos]))),
        float(np.max(np.abs(np.polyval(cn, tq[neg]) - de[neg]))),
    )
    return StiffnessResult(
        torques=tq,
        deflections=de,
        stiffness=1.0 / slope,
        slope_positive=float(cp[0]),
        slope_negative=float(cn[0]),
        fit_range=(lo, hi),
        max_residual=resid,
    )


# Backlash probe --------------------------------------------------------

@dataclass(frozen=True)
class BacklashMeasurement:
    backlash: float              # rad at the output
    travel: float                # rad, raw encoder travel / ratio
    probe_torque: float


def measure_backlash(
    spec: ActuatorSpec,
    transmission_state: TransmissionState | None = None,
    probe_torque: float = 0.2,
    settle: float = 0.4,
) -> BacklashMeasurement:
    """Free-travel probe against a locked output.

    A small +- probe torque brings the gear train onto each flank in
    turn; the difference between the two joint-encoder readings is the
    free travel plus the elastic wind-up, and the elastic part
    (2 * probe / stiffness, from the unit's rated stiffness) is
    subtracted out.  Resolution is limited by the encoder: the result
    lands within one output-side encoder step of the true value.
    """
    if probe_torque <= 0:
        raise ConfigError("probe_torque must be positive")
    state = _fresh_state(spec, transmission_state)
    ratio = spec.transmission.ratio

    cmd = ControlCommand(mode="torque", setpoint=probe_torque)
    state = _run(spec, state, cmd, LockedOutput(), settle)
    enc_pos = read_encoder(spec, state.rotor_angle)

    cmd = ControlCommand(mode="torque", setpoint=-probe_torque)
    state = _run(spec, state, cmd, LockedOutput(), settle)
    enc_neg = read_encoder(spec, state.rotor_angle)

    travel = (enc_pos - enc_neg) / ratio
    elastic = 2.0 * probe_torque / spec.transmission.stiffness
    return BacklashMeasurement(
        backlash=max(0.0, travel - elastic),
        travel=travel,
        probe_torque=probe_torque,
    )


# Unit-to-unit variation ------------------------------------------------

@dataclass(frozen=True)
class UnitVariation:
    """Multiplicative per-unit scatter of the build-sensitive parameters.

    The backlash default reproduces an absolute spread of 0.0042 rad
    around the nominal 0.0187 rad dead zone.
    """

    sigma_stiffness: float = 0.05
    sigma_backlash: float = 0.0042 / 0.0187
    sigma_friction: float = 0.10


def draw_units(
    spec: ActuatorSpec,
    n_units: int,
    rng: np.random.Generator,
    variation: UnitVariation | None = None,
) -> list[ActuatorSpec]:
    """Sample `n_units` as-built actuators around the nominal spec."""
    variation = variation or UnitVariation()
    units = []
    for _ in range(n_units):
        fk = max(0.05, 1.0 + variation.sigma_stiffness * rng.standard_normal())
        fb = max(0.0, 1.0 + variation.sigma_backlash * rng.standard_normal())
        fc = max(0.05, 1.0 + variation.sigma_friction * rng.standard_normal())
        tr = spec.transmission
        units.append(replace(spec, transmission=replace(
            tr,
            stiffness=tr.stiffness * fk,
            backlash_init=min(tr.backlash_max, tr.backlash_init * fb),
            tau_coulomb=tr.tau_coulomb * fc,
        )))
    return units


# Consistency study -----------------------------------------------------

@dataclass(frozen=True)
class ConsistencyReport:
    torque_grid: tuple[float, ...]
    speed: float
    torque_errors: np.ndarray        # (units, points), measured - desired
    mech_efficiency: np.ndarray      # (units, points)
    backlash: np.ndarray             # (units,), measured
    max_torque_error: float
    efficiency_spread: float         # max across-unit spread at one point
    backlash_sigma: float            # sample sigma, ddof=1
    seed: int


def _compensated_command(spec: ActuatorSpec, tau_des: float,
                         omega: float) -> float:
    """Torque command that makes the nominal unit deliver tau_des.

    Inverts the loss model: solves eta(t, w) * t = tau_des + coulomb
    for the gear torque t (the affine efficiency makes this a
    quadratic), then adds back the rotor drag reflected to the output.
    """
    tr = spec.transmission
    rhs = tau_des + tr.tau_coulomb * breakin_friction_multiplier(tr, 0.0)
    a = tr.k_tau
    b = tr.eta0 - tr.k_omega * abs(omega)
    if a == 0.0:
        t_gear = rhs / b
    else:
        disc = b * b - 4.0 * a * rhs
        if disc <= 0.0:
            raise SimulationError(
                f"torque {tau_des} Nm is beyond the loss model's "
                f"invertible range at {omega} rad/s")
        t_gear = (b - math.sqrt(disc)) / (2.0 * a)
    drag = (spec.motor.rotor_damping * tr.ratio * tr.ratio) * omega
    return t_gear + drag


def run_consistency(
    spec: ActuatorSpec,
    n_units: int = 6,
    speed: float = 1.0,
    torque_grid: tuple[float, ...] = DEFAULT_TORQUE_GRID,
    variation: UnitVariation | None = None,
    settle: float = 0.5,
    window: float = 0.25,
    noise_sigma: float = 0.01,
    seed: int = 0,
) -> ConsistencyReport:
    """Torque-tracking and efficiency comparison across as-built units.

    Each sampled unit runs the torque grid at the test speed with the
    nominal loss model applied as calibration feedforward, so the
    reported torque error is the unit's deviation from the product
    calibration, plus measurement noise.  Backlash is probed per unit.
    """
    rng = np.random.default_rng([seed, 0])
    units = draw_units(spec, n_units, rng, variation)
    n_pts = len(torque_grid)
    errors = np.zeros((n_units, n_pts))
    eff = np.zeros((n_units, n_pts))
    backlash = np.zeros(n_units)

    for u, unit in enumerate(units):
        for p, tau_des in enumerate(torque_grid):
            tau_cmd = _compensated_command(spec, float(tau_des), speed)
            if tau_cmd > unit.torque_limit:
                raise SimulationError(
                    f"compensated command {tau_cmd:.2f} Nm exceeds the "
                    f"unit torque limit")
            cell_rng = np.random.default_rng([seed, 1, u, p])
            cell = _measure_cell(
                unit, tau_cmd, speed, settle, window, noise_sigma,
                cell_rng, None)
            delivered = cell.mech_power / speed
            errors[u, p] = delivered - tau_des
            eff[u, p] = delivered / tau_cmd
        backlash[u] = measure_backlash(unit).backlash

    # An empty torque grid skips the tracking study (backlash only).
    spread = float(np.max(np.max(eff, axis=0) - np.min(eff, axis=0))) \
        if n_pts else 0.0
    return ConsistencyReport(
        torque_grid=tuple(float(t) for t in torque_grid),
        speed=speed,
        torque_errors=errors,
        mech_efficiency=eff,
        backlash=backlash,
        max_torque_error=float(np.max(np.abs(errors))) if n_pts else 0.0,
        efficiency_spread=spread,
        backlash_sigma=float(np.std(backlash, ddof=1)) if n_units > 1 else 0.0,
        seed=seed,
    )


# Durability ------------------------------------------------------------

@dataclass(frozen=True)
class Pendulum:
    mass: float = 0.5        # kg
    length: float = 0.5      # m
    damping: float = 0.05    # Nm*s/rad at the pivot

    @property
    def inertia(self) -> float:
        return self.mass * self.length * self.length

    @property
    def gravity_torque_max(self) -> float:
        return self.mass * G * self.length


@dataclass(frozen=True)
class SweepProfile:
    low: float = math.radians(-45.0)
    high: float = math.radians(90.0)
    frequency: float = 0.5   # Hz, full cycles

    def angle(self, t: float) -> float:
        mid = 0.5 * (self.low + self.high)
        amp = 0.5 * (self.high - self.low)
        return mid - amp * math.cos(2.0 * math.pi * self.frequency * t)

    def rate(self, t: float) -> float:
        amp = 0.5 * (self.high - self.low)
        w = 2.0 * math.pi * self.frequency
        return amp * w * math.sin(w * t)


@dataclass(frozen=True)
class BurstResult:
    peak_torque: float
    tracking_rms: float      # rad
    cycles: float


def run_pendulum_burst(
    spec: ActuatorSpec,
    pendulum: Pendulum,
    sweep: SweepProfile,
    cycles: float = 2.0,
    transmission_state: TransmissionState | None = None,
    kp: float = 40.0,
    kd: float = 2.0,
) -> BurstResult:
    """Track the endurance sweep for a few cycles with full dynamics.

    Used to verify the rig can follow the profile and to record the
    peak output torque of one cycle, which scales the wear model during
    the accelerated portion of the endurance run.
    """
    state = _fresh_state(spec, transmission_state)
    state = replace(state,
                    rotor_angle=sweep.low * spec.transmission.ratio,
                    output_angle=sweep.low)
    dt = 1.0 / spec.inner_rate
    n = int(round(cycles / sweep.frequency * spec.inner_rate))
    constraint = FreeOutput(inertia=pendulum.inertia,
                            damping=pendulum.damping)
    mgl = pendulum.gravity_torque_max
    peak = 0.0
    err2 = 0.0
    for k in range(n):
        t = k * dt
        cmd = ControlCommand(
            mode="position",
            setpoint=sweep.angle(t),
            velocity_setpoint=sweep.rate(t),
            kp=kp, kd=kd,
            tau_ff=mgl * math.sin(sweep.angle(t)),
        )
        gravity = -mgl * math.sin(state.output_angle)
        state = step(spec, state, cmd, gravity, dt, constraint)
        peak = max(peak, abs(state.delivered_torque))
        e = state.output_angle - sweep.angle(t)
        err2 += e * e
    return BurstResult(
        peak_torque=peak,
        tracking_rms=math.sqrt(err2 / n),
        cycles=cycles,
    )


def free_pendulum_energy(
    pendulum: Pendulum,
    theta0: float,
    seconds: float,
    dt: float = 1e-3,
) -> np.ndarray:
    """Mechanical energy series of the unpowered pendulum.

    Semi-implicit Euler, matching the endurance rig integrator.  With
    any positive damping the series is non-increasing, which pins down
    the sign conventions of the gravity and damping terms.
    """
    theta = theta0
    omega = 0.0
    n = int(round(seconds / dt))
    e = np.empty(n + 1)

    def energy(th: float, w: float) -> float:
        return (0.5 * pendulum.inertia * w * w
                + pendulum.mass * G * pendulum.length * (1.0 - math.cos(th)))

    e[0] = energy(theta, omega)
    gamma = pendulum.damping / pendulum.inertia
    w2 = G / pendulum.length
    for k in range(n):
        omega += dt * (-w2 * math.sin(theta) - gamma * omega)
        theta += dt * omega
        e[k + 1] = energy(theta, omega)
    return e


@dataclass(frozen=True)
class DurabilityRow:
    hour: float
    cycles: float
    backlash_measured: float
    backlash_model: float
    mech_efficiency: float
    total_efficiency: float


@dataclass(frozen=True)
class DurabilityLog:
    rows: tuple[DurabilityRow, ...]
    peak_torque: float
    tracking_rms: float
    seed: int

    def hours(self) -> np.ndarray:
        return np.array([r.hour for r in self.rows])

    def backlash_series(self) -> np.ndarray:
        return np.array([r.backlash_measured for r in self.rows])

    def total_efficiency_series(self) -> np.ndarray:
        return np.array([r.total_efficiency for r in self.rows])


def _checkpoint_hours(hours: float) -> list[float]:
    # Hourly through hour 12, then every 12 hours.
    out = [float(h) for h in range(0, int(min(12, hours)) + 1)]
    h = 24.0
    while h <= hours:
        out.append(h)
        h += 12.0
    if out[-1] != hours:
        out.append(float(hours))
    return out


def run_durability(
    spec: ActuatorSpec,
    hours: float = 60.0,
    pendulum: Pendulum | None = None,
    sweep: SweepProfile | None = None,
    seed: int = 0,
    settle: float = 0.5,
    window: float = 0.3,
    noise_sigma: float = 0.01,
) -> DurabilityLog:
    """Accelerated endurance run with periodic bench checkpoints.

    The load is a gravity pendulum swept through the endurance profile.
    Dynamics run only in measurement windows: a tracked burst verifies
    the rig and records the peak cycle torque, then wear advances
    analytically by cycle count between checkpoints.  At each
    checkpoint the stand measures backlash and a small efficiency grid.
    """
    pendulum = pendulum or Pendulum()
    sweep = sweep or SweepProfile()
    if hours <= 0:
        raise ConfigError("hours must be positive")
    if spec.torque_limit < pendulum.gravity_torque_max:
        raise SimulationError(
            f"pendulum needs {pendulum.gravity_torque_max:.3f} Nm at "
            f"horizontal, above the {spec.torque_limit:.3f} Nm limit")

    burst = run_pendulum_burst(spec, pendulum, sweep)
    trans = TransmissionState.initial(spec.transmission)

    rows = []
    for hour in _checkpoint_hours(hours):
        target_cycles = hour * 3600.0 * sweep.frequency
        delta = target_cycles - trans.cycles
        if delta > 0:
            trans = apply_wear(spec.transmission, trans, delta,
                               burst.peak_torque)
        probe = measure_backlash(spec, transmission_state=trans)
        emap = run_efficiency_map(
            spec,
            torque_grid=DURABILITY_TORQUE_GRID,
            speed_grid=DURABILITY_SPEED_GRID,
            settle=settle,
            window=window,
            noise_sigma=noise_sigma,
            seed=seed * 100003 + int(hour),
            transmission_state=trans,
        )
        cells = emap.valid_cells()
        rows.append(DurabilityRow(
            hour=hour,
            cycles=trans.cycles,
            backlash_measured=probe.backlash,
            backlash_model=trans.backlash,
            mech_efficiency=float(np.mean([c.mech_efficiency
                                           for c in cells])),
            total_efficiency=float(np.mean([c.total_efficiency
                                            for c in cells])),
        ))
    return DurabilityLog(
        rows=tuple(rows),
        peak_torque=burst.peak_torque,
        tracking_rms=burst.tracking_rms,
        seed=seed,
    )


# Reach repeatability ---------------------------------------------------

@dataclass(frozen=True)
class ReachReport:
    target_names: tuple[str, ...]
    positions: np.ndarray        # (targets, reps, 3)
    sigmas: np.ndarray           # (targets,), RMS radial deviation, m
    pooled_sigma: float          # m
    commanded: np.ndarray        # (targets, N) joint solutions
    seed: int


DEFAULT_REACH_CONFIGS = (
    (0.4, 0.5, 0.6, -0.4, 0.3),
    (-0.5, 0.7, 0.9, 0.2, -0.6),
    (0.2, 1.0, -0.8, 0.5, 0.1),
    (-0.3, 0.4, 0.7, -0.6, 0.8),
)


def run_reach_repeatability(
    chain: KinematicChain,
    spec: ActuatorSpec,
    target_configs: tuple[tuple[float, ...], ...] | None = None,
    reps: int = 100,
    seed: int = 0,
    backlash: float | None = None,
    encoder_lsb: float | None = None,
    ik_params: IkParams | None = None,
) -> ReachReport:
    """Repeated point-to-point reaches with backlash-limited rest states.

    Targets are poses (from reference joint configs through FK); each
    is solved once by IK, then visited `reps` times.  Per visit every
    joint settles somewhere inside its backlash dead band, plus the
    encoder's quantization residual, and the resulting tip position is
    recorded.  Sigma per target is the RMS distance to the target's
    mean; the pooled value is the RMS across targets.
    """
    if target_configs is None:
        if chain.n_joints != len(DEFAULT_REACH_CONFIGS[0]):
            raise ConfigError(
                "default reach targets assume a 5-joint arm; pass "
                "target_configs for other chains")
        target_configs = DEFAULT_REACH_CONFIGS
    if reps < 2:
        raise ConfigError("reps must be at least 2")
    params = ik_params or IkParams()
    b = spec.transmission.backlash_init if backlash is None else backlash
    lsb_out = (spec.encoder_lsb / spec.transmission.ratio
               if encoder_lsb is None else encoder_lsb)

    n = chain.n_joints
    q0 = np.full(n, 0.1)
    solutions = []
    for i, cfg in enumerate(target_configs):
        target = forward_kinematics(chain, np.asarray(cfg, dtype=float))
        res = solve_ik(chain, q0, target, params)
        if not res.converged:
            raise SimulationError(
                f"reach target #{i} is unreachable: position error "
                f"{res.position_error:.4f} m after {res.iterations} "
                f"iterations")
        solutions.append(res.q)

    rng = np.random.default_rng([seed, 2])
    n_targets = len(target_configs)
    positions = np.zeros((n_targets, reps, 3))
    for ti, q_cmd in enumerate(solutions):
        for r in range(reps):
            rest = (q_cmd
                    + rng.uniform(-0.5, 0.5, size=n) * b
                    + rng.uniform(-0.5, 0.5, size=n) * lsb_out)
            positions[ti, r] = forward_kinematics(chain, rest).position

    sigmas = np.zeros(n_targets)
    for ti in range(n_targets):
        mean = positions[ti].mean(axis=0)
        d2 = np.sum((positions[ti] - mean) ** 2, axis=1)
        sigmas[ti] = math.sqrt(float(np.mean(d2)))
    pooled = math.sqrt(float(np.mean(sigmas ** 2)))
    return ReachReport(
        target_names=tuple(f"target_{i}" for i in range(n_targets)),
        positions=positions,
        sigmas=sigmas,
        pooled_sigma=pooled,
        commanded=np.array(solutions),
        seed=seed,
    )
