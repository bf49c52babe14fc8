"""Benchmarking: sequences, recovery, engines, decay fits."""

import json
import math

import numpy as np
import pytest

from aeonsim import benchmarking as bench
from aeonsim import device as dev
from aeonsim import rotations as rot
from aeonsim.errors import FitError

PI = math.pi


def test_sequences_deterministic_per_stream():
    grp = rot.canonical_clifford_group()
    a = bench.generate_sequence(dev.rng_stream(5, 0, 0), 30, grp)
    b = bench.generate_sequence(dev.rng_stream(5, 0, 0), 30, grp)
    c = bench.generate_sequence(dev.rng_stream(5, 0, 1), 30, grp)
    assert a == b
    assert a != c


def test_recovery_completes_to_identity_and_flip():
    grp = rot.canonical_clifford_group()
    rng = np.random.default_rng(2)
    flip = bench.FLIP
    for _ in range(40):
        seq = bench.generate_sequence(rng, int(rng.integers(1, 12)), grp)
        net = rot.Rotation.identity()
        for k in seq:
            net = rot.compose(grp[k].rotation, net)
        rec_i = bench.recovery_element(grp, net, flip=False)
        total = rot.compose(rec_i.rotation, net)
        assert total.overlap(rot.Rotation.identity()) == pytest.approx(1.0, abs=1e-9)
        rec_f = bench.recovery_element(grp, net, flip=True)
        total = rot.compose(rec_f.rotation, net)
        assert total.overlap(flip) == pytest.approx(1.0, abs=1e-9)


def test_realize_pulse_round_trip():
    d = dev.default_device()
    cases = [
        rot.AxisAngle(0.0, PI / 2),          # x: two couplings
        rot.AxisAngle(-PI / 2, PI),          # -z: two couplings
        rot.AxisAngle(rot.PHI_Z, PI / 2),    # +z: single coupling
        rot.AxisAngle(rot.PHI_M, 3 * PI / 2),
    ]
    for aa in cases:
        pulse = bench.realize_pulse(d, aa)
        j = d.exchange_from_voltages(np.asarray(pulse.v_x))
        back = rot.exchange_to_rotation(j, d.pulse_s)
        assert abs((back.phi - aa.phi + PI) % (2 * PI) - PI) < 1e-9
        assert back.theta == pytest.approx(aa.theta, rel=1e-9)


def test_noiseless_device_rb_is_exact():
    d = dev.default_device()
    cfg = bench.RbConfig(depths=(1, 3, 6), n_sequences=3, seed=7)
    data = bench.run_rb(d, cfg, engine="device")
    np.testing.assert_allclose(data.surv_identity, 1.0, atol=1e-9)
    np.testing.assert_allclose(data.surv_flip, 0.0, atol=1e-9)
    fit = bench.fit_rb(data)
    assert fit.p == pytest.approx(1.0, abs=1e-9)
    assert fit.lam == 1.0
    assert fit.leak_per_clifford == 0.0


def test_channel_engine_depolarizing_recovery():
    eps = 1e-3
    cfg = bench.RbConfig(depths=(1, 2, 4, 8, 16, 32, 64), n_sequences=25, seed=11)
    data = bench.run_rb(
        None, cfg, engine="channel", inject=bench.InjectedError(depol_per_pulse=eps)
    )
    fit = bench.fit_rb(data)
    assert fit.err_per_pulse == pytest.approx(eps, rel=0.1)
    assert fit.leak_per_clifford == 0.0


def test_channel_engine_leakage_recovery():
    leak = 1e-3
    nmax = int(2.5 / (leak * 11 / 6))
    depths = tuple(int(round(x)) for x in np.geomspace(1, nmax, 7))
    cfg = bench.RbConfig(depths=depths, n_sequences=25, seed=12)
    data = bench.run_rb(
        None, cfg, engine="channel", inject=bench.InjectedError(leak_per_pulse=leak)
    )
    fit = bench.fit_rb(data)
    per_pulse = 1.0 - (1.0 - fit.leak_per_clifford) ** (1.0 / fit.avg_pulses)
    assert per_pulse == pytest.approx(leak, rel=0.15)


def test_interleaved_subtracts_reference():
    cfg = bench.RbConfig(depths=(1, 2, 4, 8, 16, 32), n_sequences=20, seed=13)
    out = bench.interleaved_rb(
        None,
        cfg,
        rot.AxisAngle(-PI / 2, PI),
        engine="channel",
        inject=bench.InjectedError(gate_depol=1e-3),
    )
    assert out["gate_error"] == pytest.approx(1e-3, abs=2e-4)


def test_interleaved_gate_error_may_be_negative():
    # no gate error injected: subtraction noise can legitimately go below
    # zero and must be reported unclamped
    cfg = bench.RbConfig(
        depths=(1, 2, 4, 8, 16), n_sequences=8, shots=200, seed=3
    )
    out = bench.interleaved_rb(
        None,
        cfg,
        rot.AxisAngle(-PI / 2, PI),
        engine="channel",
        inject=bench.InjectedError(depol_per_pulse=5e-4),
    )
    assert isinstance(out["gate_error"], float)
    assert abs(out["gate_error"]) < 5e-3


def test_channel_engine_shot_sampling_reproducible():
    cfg = bench.RbConfig(depths=(1, 4), n_sequences=4, shots=50, seed=21)
    inj = bench.InjectedError(depol_per_pulse=1e-3)
    d1 = bench.run_rb(None, cfg, engine="channel", inject=inj)
    d2 = bench.run_rb(None, cfg, engine="channel", inject=inj)
    np.testing.assert_array_equal(d1.surv_identity, d2.surv_identity)


def test_device_rb_with_noise_decays():
    d = dev.default_device().with_noise(
        dev.NoiseConfig(voltage_sigma_v=4e-4, gradient_sigma_hz=0.0, seed=5)
    )
    cfg = bench.RbConfig(depths=(1, 6, 12), n_sequences=4, shots=30, seed=3)
    data = bench.run_rb(d, cfg, engine="device")
    diff = np.mean(data.surv_identity - data.surv_flip, axis=1)
    assert diff[0] > diff[-1] + 0.02


def test_flat_sum_reports_unit_lambda():
    cfg = bench.RbConfig(depths=(1, 2, 4, 8), n_sequences=10, seed=17)
    data = bench.run_rb(
        None, cfg, engine="channel", inject=bench.InjectedError(depol_per_pulse=2e-3)
    )
    fit = bench.fit_rb(data)
    assert fit.lam == 1.0
    assert fit.leak_per_clifford == 0.0


def test_oscillation_fit_recovers_parameters():
    t = np.linspace(0, 3e-6, 240)
    y = 0.5 + 0.4 * np.cos(2 * PI * 2.2e6 * t - 0.7) * np.exp(-((t / 1.1e-6) ** 2))
    fit = bench.fit_oscillation_decay(t, y)
    assert fit.omega / (2 * PI) == pytest.approx(2.2e6, rel=1e-6)
    assert fit.t_decay_s == pytest.approx(1.1e-6, rel=1e-6)
    assert fit.n_oscillations == pytest.approx(2.2e6 * 1.1e-6, rel=1e-6)


def test_oscillation_fit_pure_cosine_sentinel():
    t = np.linspace(0, 2e-6, 150)
    y = 0.2 + 0.35 * np.cos(2 * PI * 4.0e6 * t + 0.1)
    fit = bench.fit_oscillation_decay(t, y)
    assert math.isinf(fit.t_decay_s)
    assert math.isinf(fit.n_oscillations)
    assert fit.omega / (2 * PI) == pytest.approx(4.0e6, rel=1e-9)


def test_oscillation_fit_rejects_noise():
    rng = np.random.default_rng(4)
    t = np.linspace(0, 1e-6, 100)
    with pytest.raises(FitError):
        bench.fit_oscillation_decay(t, rng.normal(size=t.size))


def test_rb_report_format():
    cfg = bench.RbConfig(depths=(1, 2, 4), n_sequences=5, seed=1)
    data = bench.run_rb(
        None, cfg, engine="channel", inject=bench.InjectedError(depol_per_pulse=1e-3)
    )
    fit = bench.fit_rb(data)
    doc = json.loads(bench.rb_report(data, fit))
    assert set(doc) == {"config", "config_hash", "per_depth", "fit"}
    assert len(doc["config_hash"]) == 16
    assert len(doc["per_depth"]) == 3
    assert doc["fit"]["avg_pulses_per_clifford"] == pytest.approx(11.0 / 6.0)
    # keys are sorted for byte-stable output
    assert bench.rb_report(data, fit) == bench.rb_report(data, fit)
