"""Actuator integration: current lag, boundary conditions, power, config."""

import math
from dataclasses import replace

import numpy as np
import pytest

from cyclobot.actuator import (
    ActuatorSpec,
    ActuatorState,
    ControlCommand,
    FreeOutput,
    HeldVelocity,
    LockedOutput,
    MotorSpec,
    actuator_from_dict,
    electrical_power,
    load_actuator,
    output_position_estimate,
    read_encoder,
    step,
)
from cyclobot.errors import ConfigError
from cyclobot.transmission import TransmissionSpec, breakin_friction_multiplier


def _rigid_spec(**kw):
    return replace(load_actuator("6512"),
                   transmission=replace(
                       load_actuator("6512").transmission, stiffness=1e6),
                   **kw)


def test_command_current_lags_one_step():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="torque", setpoint=3.0)
    s1 = step(spec, state, cmd)
    # The commanded current is computed this step but acts next step.
    want = 3.0 / (spec.transmission.ratio * spec.motor.kt)
    assert s1.current == pytest.approx(want)
    assert s1.rotor_velocity == 0.0  # no torque acted during step one
    s2 = step(spec, s1, cmd)
    assert s2.rotor_velocity != 0.0


def test_current_limit_binds():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    s1 = step(spec, state, ControlCommand(mode="torque", setpoint=1e6))
    # Torque demand is clamped to the output limit before conversion.
    want = min(spec.torque_limit / (spec.transmission.ratio * spec.motor.kt),
               spec.motor.current_limit)
    assert abs(s1.current) <= want + 1e-12


def test_back_emf_shrinks_current_headroom():
    spec = load_actuator("6512")
    fast = replace(ActuatorState.initial(spec), rotor_velocity=360.0)
    s1 = step(spec, fast, ControlCommand(mode="torque", setpoint=12.0))
    v_room = spec.motor.bus_voltage - spec.motor.kt * 360.0
    demand = 12.0 / (spec.transmission.ratio * spec.motor.kt)
    assert v_room / spec.motor.resistance < demand  # the clamp binds here
    assert s1.current == pytest.approx(v_room / spec.motor.resistance)
    assert s1.current < spec.motor.current_limit


def test_encoder_floor_quantization():
    spec = load_actuator("6512")
    lsb = spec.encoder_lsb
    assert read_encoder(spec, 0.0) == 0.0
    assert read_encoder(spec, 2.7 * lsb) == pytest.approx(2 * lsb)
    assert read_encoder(spec, -0.3 * lsb) == pytest.approx(-lsb)
    est = output_position_estimate(
        spec, replace(ActuatorState.initial(spec), rotor_angle=2.7 * lsb))
    assert est == pytest.approx(2 * lsb / spec.transmission.ratio)


def test_locked_output_does_not_move():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="torque", setpoint=5.0)
    for _ in range(500):
        state = step(spec, state, cmd, constraint=LockedOutput())
    assert state.output_angle == 0.0
    assert state.output_velocity == 0.0
    assert state.rotor_angle > 0.0  # wind-up crossed the dead zone


def test_held_velocity_tracks_exactly():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="torque", setpoint=2.0)
    dt = 1.0 / spec.inner_rate
    for k in range(100):
        state = step(spec, state, cmd, constraint=HeldVelocity(1.5))
        assert state.output_velocity == 1.5
    assert state.output_angle == pytest.approx(100 * dt * 1.5)


def test_rigid_path_keeps_shafts_locked_together():
    spec = _rigid_spec()
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="position", setpoint=0.5, kp=30.0, kd=1.0)
    for _ in range(2000):
        state = step(spec, state, cmd)
        assert state.rotor_angle == pytest.approx(
            state.output_angle * spec.transmission.ratio, abs=1e-12)
    assert state.output_angle == pytest.approx(0.5, abs=0.01)


def test_soft_position_loop_settles_near_setpoint():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="position", setpoint=0.4, kp=30.0, kd=1.0)
    for _ in range(3000):
        state = step(spec, state, cmd)
    # Steady-state error is bounded by backlash plus PD droop.
    assert abs(state.output_angle - 0.4) < 0.05
    assert abs(state.output_velocity) < 0.01


def test_delivered_torque_respects_limit():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="torque", setpoint=500.0, tau_ff=500.0)
    for _ in range(1000):
        state = step(spec, state, cmd, constraint=HeldVelocity(1.0))
        assert abs(state.delivered_torque) <= spec.torque_limit + 1e-12


def test_coulomb_drag_only_when_moving():
    # Friction keys off the output velocity carried in the state, so the
    # drag appears on the step after motion begins.
    spec = _rigid_spec()
    tr = spec.transmission
    cmd = ControlCommand(mode="torque", setpoint=0.0)
    state = ActuatorState.initial(spec)
    idle = step(spec, state, cmd, constraint=HeldVelocity(0.0))
    assert idle.delivered_torque == 0.0
    moving = step(spec, step(spec, state, cmd, constraint=HeldVelocity(1.0)),
                  cmd, constraint=HeldVelocity(1.0))
    want = -tr.tau_coulomb * breakin_friction_multiplier(tr, 0.0)
    assert moving.delivered_torque == pytest.approx(want)


def test_backdriving_pays_inverse_efficiency():
    # Gear torque opposing the motion costs more than it delivers.  The
    # setpoint keeps the current at 2 A across steps; the second step is
    # the one that sees the held velocity.
    spec = _rigid_spec()
    tau_gear = spec.motor.kt * 2.0 * spec.transmission.ratio
    cmd = ControlCommand(mode="torque", setpoint=tau_gear)
    state = replace(ActuatorState.initial(spec), current=2.0)
    fwd = step(spec, step(spec, state, cmd, constraint=HeldVelocity(1.0)),
               cmd, constraint=HeldVelocity(1.0))
    back = step(spec, step(spec, state, cmd, constraint=HeldVelocity(-1.0)),
                cmd, constraint=HeldVelocity(-1.0))
    assert fwd.delivered_torque < tau_gear
    assert back.delivered_torque > tau_gear  # losses add against motion


def test_electrical_power_formula():
    spec = load_actuator("6512")
    state = replace(ActuatorState.initial(spec), rotor_velocity=50.0)
    tau_m = 0.2
    want = (tau_m * 50.0 + (tau_m / spec.motor.kt) ** 2
            * spec.motor.resistance + spec.motor.quiescent_power)
    assert electrical_power(spec, state, tau_m) == pytest.approx(want)
    # Negative shaft power is not recovered into the supply.
    braking = electrical_power(
        spec, replace(state, rotor_velocity=-50.0), tau_m)
    floor = (tau_m / spec.motor.kt) ** 2 * spec.motor.resistance \
        + spec.motor.quiescent_power
    assert braking == pytest.approx(floor)


def test_step_is_deterministic():
    spec = load_actuator("6512")
    cmd = ControlCommand(mode="position", setpoint=0.3, kp=20.0, kd=0.8)

    def run():
        st = ActuatorState.initial(spec)
        for _ in range(500):
            st = step(spec, st, cmd)
        return st

    a, b = run(), run()
    assert a == b


def test_step_validates_dt():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand()
    with pytest.raises(ValueError):
        step(spec, state, cmd, dt=0.0)
    with pytest.raises(ValueError):
        step(spec, state, cmd, dt=0.01)  # above 1/inner_rate


def test_command_validation():
    with pytest.raises(ValueError):
        ControlCommand(mode="warp")
    with pytest.raises(ValueError):
        ControlCommand(kp=-1.0)


def test_velocity_mode_tracks_rate():
    spec = load_actuator("6512")
    state = ActuatorState.initial(spec)
    cmd = ControlCommand(mode="velocity", setpoint=2.0, kd=4.0)
    for _ in range(3000):
        state = step(spec, state, cmd)
    assert state.output_velocity == pytest.approx(2.0, abs=0.3)


def test_spec_validation():
    with pytest.raises(ValueError):
        MotorSpec(kt=0.0)
    with pytest.raises(ValueError):
        ActuatorSpec(torque_limit=0.0)
    with pytest.raises(ValueError):
        ActuatorSpec(encoder_bits=0)


def test_presets_load_and_differ():
    a = load_actuator("6512")
    b = load_actuator("5010")
    assert a.name == "6512" and b.name == "5010"
    assert a.torque_limit == 12.0 and b.torque_limit == 6.0
    assert a.transmission.ratio == b.transmission.ratio == 15.0


def test_unknown_preset_and_missing_file():
    with pytest.raises(ConfigError):
        load_actuator("9999")
    with pytest.raises(ConfigError):
        load_actuator("/nonexistent/actuator.json")


def test_from_dict_validation():
    with pytest.raises(ConfigError):
        actuator_from_dict({"schema_version": 2, "kind": "actuator"})
    with pytest.raises(ConfigError):
        actuator_from_dict({"schema_version": 1, "kind": "robot"})
    with pytest.raises(ConfigError):
        actuator_from_dict({"schema_version": 1, "kind": "actuator",
                            "motor": {"kt": -1.0}})
    spec = actuator_from_dict({"schema_version": 1, "kind": "actuator"})
    assert spec.transmission.ratio == TransmissionSpec().ratio
