"""Rotation algebra, pulse-axis mapping and Clifford compilation."""

import json
import math

import numpy as np
import pytest

from aeonsim import rotations as rot
from aeonsim.errors import ProtocolError
from aeonsim.hilbert import ExchangeVector


def random_rotation(rng):
    v = rng.normal(size=4)
    v /= np.linalg.norm(v)
    return rot.Rotation(w=float(v[0]), v=tuple(v[1:]))


def test_identity_and_inverse():
    rng = np.random.default_rng(3)
    for _ in range(50):
        r = random_rotation(rng)
        assert rot.compose(r, r.inverse()).approx_equal(rot.Rotation.identity())
        assert 0.0 <= r.angle < 2.0 * math.pi + 1e-12


def test_compose_matches_unitary_product():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a, b = random_rotation(rng), random_rotation(rng)
        u = rot.to_unitary(rot.compose(a, b))
        u_ref = rot.to_unitary(a) @ rot.to_unitary(b)
        # unitaries agree up to global sign
        assert min(
            np.abs(u - u_ref).max(), np.abs(u + u_ref).max()
        ) < 1e-12


def test_so3_is_a_homomorphism():
    rng = np.random.default_rng(5)
    for _ in range(60):
        a, b = random_rotation(rng), random_rotation(rng)
        np.testing.assert_allclose(
            rot.so3_matrix(rot.compose(a, b)),
            rot.so3_matrix(a) @ rot.so3_matrix(b),
            atol=1e-12,
        )


def test_rotation_normalization_guard():
    with pytest.raises(ValueError):
        rot.Rotation(w=1.0, v=(0.5, 0.0, 0.0))


def test_single_coupling_axes():
    assert rot.exchange_to_rotation(ExchangeVector(40e6, 0, 0), 1e-9).phi == pytest.approx(rot.PHI_M)
    assert rot.exchange_to_rotation(ExchangeVector(0, 40e6, 0), 1e-9).phi == pytest.approx(rot.PHI_N)
    assert rot.exchange_to_rotation(ExchangeVector(0, 0, 40e6), 1e-9).phi == pytest.approx(rot.PHI_Z)


def test_balanced_pair_pulse_is_pi_about_minus_z():
    aa = rot.exchange_to_rotation(ExchangeVector(50e6, 50e6, 0.0), 10e-9)
    assert aa.phi == pytest.approx(-math.pi / 2.0, abs=1e-12)
    assert aa.theta == pytest.approx(math.pi, rel=1e-12)


def test_rotation_angle_scales_with_duration():
    j = ExchangeVector(30e6, 10e6, 5e6)
    a1 = rot.exchange_to_rotation(j, 10e-9)
    a2 = rot.exchange_to_rotation(j, 20e-9)
    assert a2.theta == pytest.approx(2 * a1.theta, rel=1e-12)
    assert a2.phi == pytest.approx(a1.phi, abs=1e-12)


def test_exchange_to_rotation_zero():
    aa = rot.exchange_to_rotation(ExchangeVector(0.0, 0.0, 0.0), 10e-9)
    assert aa.theta == 0.0


def test_two_coupling_group_statistics():
    grp = rot.canonical_clifford_group()
    assert len(grp) == 24
    assert rot.avg_pulse_count(grp) == pytest.approx(11.0 / 6.0, abs=1e-12)
    assert max(el.pulse_count for el in grp) == 3
    hist = {}
    for el in grp:
        hist[el.pulse_count] = hist.get(el.pulse_count, 0) + 1
    assert hist == {0: 1, 1: 6, 2: 13, 3: 4}


def test_group_elements_compose_to_their_words():
    for el in rot.canonical_clifford_group():
        if not el.decomposition:
            continue
        net = rot.compose_sequence(el.decomposition)
        assert net.approx_equal(el.rotation) or net.approx_equal(
            rot.Rotation(w=-el.rotation.w, v=tuple(-x for x in el.rotation.v))
        )


def test_group_closure_under_composition():
    grp = rot.canonical_clifford_group()
    rng = np.random.default_rng(11)
    for _ in range(80):
        a, b = rng.integers(0, 24, size=2)
        prod = rot.compose(grp[a].rotation, grp[b].rotation)
        rot.match_element(grp, prod)  # raises if not in the group


def test_clifford_detection():
    grp = rot.canonical_clifford_group()
    for el in grp:
        assert rot.is_clifford_rotation(el.rotation)
    assert not rot.is_clifford_rotation(
        rot.Rotation.from_axis_angle(rot.AxisAngle(0.3, 1.0))
    )


def test_single_coupling_quarter_turns_do_not_close():
    # 90-degree pulses about two tilted single-coupling axes are not
    # Clifford rotations, so breadth-first closure must refuse them
    gens = [
        rot.Rotation.from_axis_angle(rot.AxisAngle(rot.PHI_Z, math.pi / 2)),
        rot.Rotation.from_axis_angle(rot.AxisAngle(rot.PHI_N, math.pi / 2)),
    ]
    with pytest.raises(ProtocolError):
        rot.generate_clifford_group(gens)


@pytest.mark.parametrize(
    "axes,avg,hist",
    [
        ((rot.PHI_Z, rot.PHI_N), 8.0 / 3.0, {0: 1, 1: 3, 3: 19, 4: 1}),
        ((rot.PHI_Z, rot.PHI_M), 8.0 / 3.0, {0: 1, 1: 3, 3: 19, 4: 1}),
        ((rot.PHI_M, rot.PHI_N), 3.0, {0: 1, 3: 20, 4: 3}),
    ],
)
def test_single_coupling_compiled_groups(axes, avg, hist):
    grp = rot.compile_clifford_group(axes)
    assert len(grp) == 24
    assert rot.avg_pulse_count(grp) == pytest.approx(avg, abs=1e-9)
    counts = {}
    for el in grp:
        counts[el.pulse_count] = counts.get(el.pulse_count, 0) + 1
    assert counts == hist
    assert max(counts) <= 4


def test_compiled_words_use_only_their_axes():
    axes = (rot.PHI_Z, rot.PHI_N)
    for el in rot.compile_clifford_group(axes):
        for aa in el.decomposition:
            assert any(abs(aa.phi - a) < 1e-9 for a in axes)
        if el.decomposition:
            net = rot.compose_sequence(el.decomposition)
            assert min(
                abs(net.w - el.rotation.w) + np.abs(np.subtract(net.v, el.rotation.v)).max(),
                abs(net.w + el.rotation.w) + np.abs(np.add(net.v, el.rotation.v)).max(),
            ) < 1e-8


def test_decompose_rotation_arbitrary_target():
    rng = np.random.default_rng(21)
    axes = (rot.PHI_Z, rot.PHI_M)
    for _ in range(20):
        target = random_rotation(rng)
        word = rot.decompose_rotation(target, axes)
        net = rot.compose_sequence(word)
        assert min(
            abs(net.w - target.w) + np.abs(np.subtract(net.v, target.v)).max(),
            abs(net.w + target.w) + np.abs(np.add(net.v, target.v)).max(),
        ) < 1e-6


def test_match_element_rejects_non_member():
    grp = rot.canonical_clifford_group()
    with pytest.raises(ProtocolError):
        rot.match_element(grp, rot.Rotation.from_axis_angle(rot.AxisAngle(0.0, 0.7)))


def test_clifford_table_export():
    grp = rot.canonical_clifford_group()
    doc = json.loads(rot.export_clifford_table(grp))
    assert len(doc) == 24
    assert set(doc[0]) >= {"index", "quaternion", "word"}
