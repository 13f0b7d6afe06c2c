"""Virtual dynamometer procedures against closed-form expectations."""

import math
from dataclasses import replace

import numpy as np
import pytest

from cyclobot.actuator import load_actuator
from cyclobot.dyno import (
    DEFAULT_REACH_CONFIGS,
    Pendulum,
    SweepProfile,
    UnitVariation,
    draw_units,
    free_pendulum_energy,
    measure_backlash,
    run_consistency,
    run_durability,
    run_efficiency_map,
    run_pendulum_burst,
    run_reach_repeatability,
    run_stiffness_test,
)
from cyclobot.errors import ConfigError, SimulationError
from cyclobot.kinematics import load_chain

OUTPUT_ENCODER_STEP = 2.0 * math.pi / 4096 / 15


@pytest.fixture(scope="module")
def spec():
    return load_actuator("6512")


def _ideal(spec):
    """Lossless drivetrain: every efficiency mechanism switched off."""
    return replace(
        spec,
        motor=replace(spec.motor, rotor_damping=0.0, quiescent_power=0.0),
        transmission=replace(
            spec.transmission,
            eta0=1.0, k_tau=0.0, k_omega=0.0,
            tau_coulomb=0.0, breakin_amp=0.0,
        ),
    )


def test_efficiency_map_mid_range(spec):
    emap = run_efficiency_map(spec, torque_grid=(2.0, 4.0, 6.0),
                              speed_grid=(1.0, 2.0))
    assert len(emap.cells) == 6
    for c in emap.cells:
        assert c.valid
        assert 0.84 <= c.mech_efficiency <= 0.96
        assert c.total_efficiency <= c.mech_efficiency
        # Mean-of-samples and integrated-work routes must agree.
        assert abs(c.mech_power - c.mech_power_integrated) <= 1e-9


def test_efficiency_map_flags_unreachable_torque(spec):
    emap = run_efficiency_map(spec, torque_grid=(4.0, spec.torque_limit + 1.0),
                              speed_grid=(1.0,), settle=0.3, window=0.2)
    good = emap.cell(4.0, 1.0)
    bad = emap.cell(spec.torque_limit + 1.0, 1.0)
    assert good.valid and not bad.valid
    assert math.isnan(bad.mech_efficiency)
    assert emap.valid_cells() == [good]
    with pytest.raises(KeyError):
        emap.cell(99.0, 1.0)


def test_efficiency_map_grid_validation(spec):
    with pytest.raises(ConfigError):
        run_efficiency_map(spec, torque_grid=(0.0, 2.0))
    with pytest.raises(ConfigError):
        run_efficiency_map(spec, speed_grid=(-1.0,))


def test_ideal_unit_measures_near_unit_efficiency(spec):
    emap = run_efficiency_map(_ideal(spec), torque_grid=(3.0, 6.0),
                              speed_grid=(1.0,), noise_sigma=0.0)
    for c in emap.cells:
        assert c.valid
        assert abs(c.mech_efficiency - 1.0) <= 1e-6


def test_efficiency_map_repeats_bitwise(spec):
    a = run_efficiency_map(spec, torque_grid=(3.0,), speed_grid=(1.5,),
                           settle=0.3, window=0.2, seed=7)
    b = run_efficiency_map(spec, torque_grid=(3.0,), speed_grid=(1.5,),
                           settle=0.3, window=0.2, seed=7)
    assert a.cells == b.cells


def test_stiffness_recovers_rated_value(spec):
    res = run_stiffness_test(spec)
    assert res.stiffness == pytest.approx(319.49, rel=2e-3)
    assert res.slope_positive == pytest.approx(1.0 / 319.49, rel=2e-3)
    assert res.slope_negative == pytest.approx(1.0 / 319.49, rel=2e-3)
    assert res.max_residual <= 1e-6
    assert res.fit_range == (4.0, 10.0)
    # The ramp visits both flanks and returns to zero.
    assert res.torques[0] == 0.0
    assert res.torques.min() == -20.0 and res.torques.max() == 20.0


@pytest.mark.parametrize("k", [100.0, 2000.0])
def test_stiffness_tracks_synthetic_units(spec, k):
    unit = replace(spec, transmission=replace(spec.transmission, stiffness=k))
    res = run_stiffness_test(unit)
    assert abs(res.stiffness - k) / k <= 5e-3


def test_stiffness_validation(spec):
    with pytest.raises(ConfigError):
        run_stiffness_test(spec, max_torque=-1.0)
    with pytest.raises(ConfigError):
        run_stiffness_test(spec, fit_range=(10.0, 4.0))
    with pytest.raises(ConfigError, match="exceeds"):
        run_stiffness_test(spec, fit_range=(4.0, 30.0))
    # The ramp visits each level twice (up and down); at 6 Nm steps only
    # one level lands inside [4, 10], two visits, short of three samples.
    with pytest.raises(ConfigError, match="fewer than 3"):
        run_stiffness_test(spec, resolution=6.0)


def test_backlash_probe_hits_configured_value(spec):
    m = measure_backlash(spec)
    assert abs(m.backlash - spec.transmission.backlash_init) \
        <= OUTPUT_ENCODER_STEP
    # Raw travel includes the elastic wind-up on both flanks.
    assert m.travel == pytest.approx(
        m.backlash + 2.0 * m.probe_torque / spec.transmission.stiffness,
        abs=1e-12)


def test_backlash_probe_tracks_worn_unit(spec):
    unit = replace(spec, transmission=replace(spec.transmission,
                                              backlash_init=0.0229))
    m = measure_backlash(unit)
    assert abs(m.backlash - 0.0229) <= OUTPUT_ENCODER_STEP
    with pytest.raises(ConfigError):
        measure_backlash(spec, probe_torque=0.0)


def test_draw_units_scatter_and_caps(spec):
    rng = np.random.default_rng(60)
    units = draw_units(spec, 6, rng)
    assert len(units) == 6
    stiff = {u.transmission.stiffness for u in units}
    assert len(stiff) == 6
    for u in units:
        assert u.transmission.backlash_init <= u.transmission.backlash_max
        assert u.transmission.stiffness > 0
        assert u.transmission.tau_coulomb >= 0
    again = draw_units(spec, 6, np.random.default_rng(60))
    assert [u.transmission.stiffness for u in again] \
        == [u.transmission.stiffness for u in units]


def test_consistency_small_batch(spec):
    rep = run_consistency(spec, n_units=3, torque_grid=(2.0, 4.0), seed=1)
    assert rep.torque_errors.shape == (3, 2)
    assert rep.mech_efficiency.shape == (3, 2)
    assert rep.backlash.shape == (3,)
    assert rep.max_torque_error == np.max(np.abs(rep.torque_errors))
    assert rep.max_torque_error <= 0.5
    assert rep.efficiency_spread > 0.0
    assert rep.backlash_sigma > 0.0


def test_consistency_backlash_only_fast_path(spec):
    full = run_consistency(spec, n_units=3, torque_grid=(2.0,), seed=4)
    quick = run_consistency(spec, n_units=3, torque_grid=(), seed=4)
    # The unit draw consumes its own seed stream, so skipping the
    # tracking study leaves the backlash census unchanged.
    assert np.array_equal(quick.backlash, full.backlash)
    assert quick.max_torque_error == 0.0
    assert quick.efficiency_spread == 0.0


def test_consistency_rejects_uncompensatable_torque(spec):
    with pytest.raises(SimulationError, match="exceeds"):
        run_consistency(spec, n_units=1, torque_grid=(11.5,))


def test_pendulum_burst_tracks_profile(spec):
    pend, prof = Pendulum(), SweepProfile()
    burst = run_pendulum_burst(spec, pend, prof)
    # Rigid-body demand along the commanded profile.  The inertial term
    # unloads gravity at the crest, so the peak sits below m*g*l.
    ts = np.linspace(0.0, 1.0 / prof.frequency, 4001)
    amp = 0.5 * (prof.high - prof.low)
    w = 2.0 * math.pi * prof.frequency
    demand = (pend.inertia * amp * w * w * np.cos(w * ts)
              + pend.damping * np.array([prof.rate(t) for t in ts])
              + pend.gravity_torque_max
              * np.sin([prof.angle(t) for t in ts]))
    ideal = float(np.max(np.abs(demand)))
    assert ideal < pend.gravity_torque_max
    assert abs(burst.peak_torque - ideal) / ideal < 0.15
    assert burst.peak_torque < spec.torque_limit
    assert burst.tracking_rms < 0.05
    assert burst.cycles == 2.0


def test_free_pendulum_energy_never_increases():
    e = free_pendulum_energy(Pendulum(), theta0=1.0, seconds=3.0)
    assert np.all(np.diff(e) <= 1e-12)
    assert e[-1] < e[0]


def test_durability_short_campaign(spec):
    log = run_durability(spec, hours=6.0)
    assert [r.hour for r in log.rows] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    b = log.backlash_series()
    assert np.all(np.diff(b) >= 0.0)
    assert b[-1] < spec.transmission.backlash_max
    assert abs(log.rows[0].backlash_model
               - spec.transmission.backlash_init) <= 1e-12
    # Wear advances by the commanded cycle budget.
    assert log.rows[-1].cycles == pytest.approx(6 * 3600 * 0.5)
    for r in log.rows:
        assert abs(r.backlash_measured - r.backlash_model) \
            <= OUTPUT_ENCODER_STEP
        assert 0.0 < r.total_efficiency <= r.mech_efficiency
    assert log.tracking_rms < 0.05


def test_durability_validation(spec):
    with pytest.raises(ConfigError):
        run_durability(spec, hours=0.0)
    weak = replace(spec, torque_limit=2.0)
    with pytest.raises(SimulationError, match="pendulum"):
        run_durability(weak, hours=1.0)


def test_reach_repeatability_band(spec):
    chain = load_chain("arm5")
    rep = run_reach_repeatability(chain, spec, reps=20, seed=0)
    assert rep.positions.shape == (4, 20, 3)
    assert len(rep.sigmas) == 4
    assert 0.2e-3 <= rep.pooled_sigma <= 12e-3
    assert rep.pooled_sigma == pytest.approx(
        math.sqrt(float(np.mean(rep.sigmas ** 2))))
    again = run_reach_repeatability(chain, spec, reps=20, seed=0)
    assert np.array_equal(rep.positions, again.positions)


def test_reach_with_perfect_joints_is_exact(spec):
    chain = load_chain("arm5")
    rep = run_reach_repeatability(chain, spec, reps=5, seed=0,
                                  backlash=0.0, encoder_lsb=0.0)
    assert rep.pooled_sigma <= 1e-12


def test_reach_grows_with_backlash(spec):
    chain = load_chain("arm5")
    sigmas = []
    for b in (0.005, 0.02):
        rep = run_reach_repeatability(chain, spec, reps=30, seed=0,
                                      backlash=b, encoder_lsb=0.0)
        sigmas.append(rep.pooled_sigma)
    assert sigmas[0] < sigmas[1]


def test_reach_validation(spec):
    chain = load_chain("arm5")
    with pytest.raises(ConfigError, match="reps"):
        run_reach_repeatability(chain, spec, reps=1)
    with pytest.raises(ConfigError, match="5-joint"):
        run_reach_repeatability(load_chain("quadruped_leg"), spec)
    assert len(DEFAULT_REACH_CONFIGS[0]) == 5


def test_unit_variation_defaults_match_fleet_spread():
    v = UnitVariation()
    assert v.sigma_backlash == pytest.approx(0.0042 / 0.0187)
