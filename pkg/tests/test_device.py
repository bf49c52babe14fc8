"""Device model: virtual gates, exchange laws, noise, pulse simulation."""

import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from aeonsim import device as dev
from aeonsim import hilbert as hb
from aeonsim import rotations as rot
from aeonsim.errors import ConfigError


def test_compensation_first_column_frozen():
    d = dev.default_device()
    v = np.zeros(6)
    v[0] = 1.0
    out = d.compensation.virtualize(v)
    np.testing.assert_allclose(out, [1.0, -0.19, 0.06, 0.0, 0.0, 0.0], atol=1e-12)


def test_compensation_round_trip():
    d = dev.default_device()
    rng = np.random.default_rng(2)
    v = rng.normal(size=6)
    back = d.compensation.devirtualize(d.compensation.virtualize(v))
    np.testing.assert_allclose(back, v, atol=1e-12)


def test_compensation_rejects_barrier_feedback():
    m = np.eye(6)
    m[3, 0] = 0.2  # barriers must not feed back on plungers
    with pytest.raises(ConfigError):
        dev.CompensationMatrix(m)


def test_exchange_law_anchors():
    law = dev.ExchangeLaw(a_hz=1e6, b_per_v=52.983, c=0.0)
    assert law.j_hz(0.0) == pytest.approx(1e6, rel=1e-12)
    assert law.j_hz(0.1) == pytest.approx(199.99652672055223e6, rel=1e-12)
    assert law.v_for(law.j_hz(0.0431)) == pytest.approx(0.0431, abs=1e-12)
    with pytest.raises(ValueError):
        law.v_for(0.0)


def test_detuning_penalty_common_mode_free():
    d = dev.default_device()
    base = dev.detuning_penalty((1e-3, -2e-3, 0.5e-3), d.sensitivities)
    shifted = dev.detuning_penalty((6e-3, 3e-3, 5.5e-3), d.sensitivities)
    for pair in base:
        assert base[pair] == pytest.approx(shifted[pair], rel=1e-12)
    neutral = dev.detuning_penalty((2e-3, 2e-3, 2e-3), d.sensitivities)
    for pair in neutral:
        assert neutral[pair] == pytest.approx(1.0, rel=1e-12)


def test_rng_streams_are_independent_and_stable():
    a1 = dev.rng_stream(7, 1, 2).standard_normal(4)
    a2 = dev.rng_stream(7, 1, 2).standard_normal(4)
    b = dev.rng_stream(7, 1, 3).standard_normal(4)
    np.testing.assert_array_equal(a1, a2)
    assert np.abs(a1 - b).max() > 1e-12


def test_noise_sampling_shapes():
    cfg = dev.NoiseConfig(voltage_sigma_v=1e-3, gradient_sigma_hz=2e4, seed=0)
    draw = dev.sample_noise(cfg, dev.rng_stream(0, 1))
    assert np.asarray(draw.voltage_offsets_v).shape == (6,)
    assert np.asarray(draw.gradients_hz).shape == (3,)
    silent = dev.sample_noise(dev.NoiseConfig(), dev.rng_stream(0, 2))
    assert np.abs(np.asarray(silent.voltage_offsets_v)).max() == 0.0


def test_exchange_from_voltages_minus_inf_is_exactly_off():
    d = dev.default_device()
    j = d.exchange_from_voltages(np.array([0.07, -np.inf, 0.07]))
    assert j.j13 == 0.0
    assert j.j12 > 0 and j.j23 > 0


def test_cross_talk_is_opt_in():
    d = dev.default_device()
    v = np.array([0.07, 0.05, 0.06])
    j_plain = d.exchange_from_voltages(v)
    j_cross = d.exchange_from_voltages(v, apply_cross=True)
    assert j_plain.j12 != j_cross.j12
    # a pulse simulation defaults to no cross-talk
    off = d.exchange_from_voltages(np.array([0.07, -np.inf, 0.07]), apply_cross=True)
    assert off.j13 == 0.0


def test_voltages_for_exchange_round_trip():
    d = dev.default_device()
    j = hb.ExchangeVector(j12=35e6, j23=18e6, j13=0.0)
    v = d.voltages_for_exchange(j)
    assert v[1] == -np.inf
    back = d.exchange_from_voltages(v)
    assert back.j12 == pytest.approx(35e6, rel=1e-12)
    assert back.j23 == pytest.approx(18e6, rel=1e-12)
    assert back.j13 == 0.0


def test_simulate_pulse_matches_direct_propagator():
    d = dev.default_device()
    j = hb.ExchangeVector(j12=42e6, j23=13e6, j13=7e6)
    pulse = dev.PulseSpec(v_x=tuple(d.voltages_for_exchange(j)), duration_s=10e-9)
    rho = hb.initialize_singlet()
    out = d.simulate_pulse(rho, pulse)
    u = expm(-1j * hb.build_hamiltonian(j) * 10e-9)
    np.testing.assert_allclose(out, u @ rho @ u.conj().T, atol=1e-9)


def test_ramped_pulse_uses_piecewise_segments():
    d = dev.default_device()
    pulse = dev.PulseSpec(
        v_x=(0.06, -np.inf, 0.05), duration_s=10e-9, ramp_s=2e-9
    )
    segs = d._segments(pulse, dev.NoiseDraw.none(), False)
    assert len(segs) == 33  # 16 up, plateau, 16 down
    total = sum(dt for _, dt in segs)
    assert total == pytest.approx(10e-9 + 2 * 2e-9, rel=1e-12)


def test_gradient_noise_causes_leakage():
    d = dev.default_device()
    draw = dev.NoiseDraw(
        voltage_offsets_v=(0.0,) * 6, gradients_hz=(2e6, -1e6, 0.5e6)
    )
    pulse = dev.PulseSpec(v_x=(-np.inf, -np.inf, -np.inf), duration_s=400e-9)
    rho = d.simulate_pulse(hb.initialize_singlet(), pulse, draw=draw)
    assert hb.leakage_population(rho) > 1e-4


def test_device_config_round_trip(tmp_path):
    cfg = {
        "exchange_law": {
            "12": {"A_hz": 2e6, "B_per_v": 50.0, "C": 0.1},
        },
        "cross_matrix": [[1, -0.08, -0.08], [-0.24, 1, -0.18], [-0.15, -0.19, 1]],
        "noise": {"voltage_sigma_v": 1e-4, "gradient_sigma_hz": 3e4, "seed": 9},
        "pulse_s": 8e-9,
        "fields": {"f_uniform_hz": 1e9, "gradients_hz": [100.0, 0.0, -50.0]},
    }
    path = tmp_path / "device.json"
    path.write_text(json.dumps(cfg))
    d = dev.load_device(path)
    assert d.laws["12"].a_hz == 2e6
    assert d.laws["13"].a_hz == 1e6  # untouched default
    assert d.pulse_s == 8e-9
    assert d.noise.seed == 9
    assert d.fields.f_uniform_hz == 1e9


def test_device_config_rejects_unknown_pair(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"exchange_law": {"14": {"A_hz": 1, "B_per_v": 1}}}))
    with pytest.raises(ConfigError):
        dev.load_device(path)


def test_device_config_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        dev.load_device(path)


def test_fingerpinch_map_shape_and_symmetry():
    d = dev.default_device()
    v = np.linspace(0.05, 0.08, 7)
    p0 = dev.fingerpinch_map(d, ("12", "23"), v, v, apply_cross=False)
    assert p0.shape == (7, 7)
    # equal couplings rotate about -z and preserve the initial state
    np.testing.assert_allclose(np.diag(p0), 1.0, atol=1e-9)
    # map is symmetric for the symmetric pair sweep without cross-talk
    np.testing.assert_allclose(p0, p0.T, atol=1e-9)


def test_fingerpinch_hadamard_changes_contrast():
    d = dev.default_device()
    v = np.linspace(0.05, 0.08, 5)
    plain = dev.fingerpinch_map(d, ("12", "23"), v, v, apply_cross=False)
    had = dev.fingerpinch_map(d, ("12", "23"), v, v, hadamard=True, apply_cross=False)
    assert np.abs(plain - had).max() > 0.05
