"""Blind randomized benchmarking on the encoded exchange-only qubit.

Single-shot readout distinguishes the encoded ``|0>`` from everything
else, so each random Clifford sequence is run twice: once compiled to the
identity and once to a bit flip.  The per-depth difference of the two
survival curves isolates depolarization (``a * p^N``); their sum isolates
leakage out of the encoded subspace (``c0 + c1 * lam^N``), which single
shots cannot otherwise separate from qubit error.

Two engines share the sequence generator.  The device engine plays every
pulse of every Clifford on the simulated device (fresh quasi-static noise
draw per shot).  The channel engine replaces physical noise with injected
per-pulse depolarizing and leakage channels and computes survivals in one
deterministic pass, which makes recovered-versus-injected comparisons
exact and fast.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .calibration import PAIR_INDEX, solve_exchange_for_rotation
from .device import DeviceModel, NoiseDraw, PulseSpec, rng_stream, sample_noise
from .errors import FitError
from .hilbert import ExchangeVector, initialize_singlet, measure_p0
from .rotations import (
    AxisAngle,
    ONE_J_AXES,
    Rotation,
    canonical_clifford_group,
    avg_pulse_count,
    compose,
    match_element,
    so3_matrix,
)

TWO_PI = 2.0 * math.pi

FLIP = Rotation.from_axis_angle(AxisAngle(0.0, math.pi))  # pi about x


@dataclass(frozen=True)
class RbConfig:
    """Benchmarking run geometry and sampling."""

    depths: tuple[int, ...] = (1, 2, 4, 8, 12, 16, 24)
    n_sequences: int = 20
    shots: int | None = None
    seed: int = 0
    idle_s: float = 0.0
    apply_cross: bool = False


@dataclass(frozen=True)
class InjectedError:
    """Per-pulse channel strengths for the channel engine.

    ``depol_per_pulse`` is the average gate infidelity added per pulse;
    ``leak_per_pulse`` is the encoded-subspace population lost per pulse.
    """

    depol_per_pulse: float = 0.0
    leak_per_pulse: float = 0.0
    gate_depol: float = 0.0


@dataclass(frozen=True)
class RbData:
    config: RbConfig
    depths: tuple[int, ...]
    surv_identity: np.ndarray
    surv_flip: np.ndarray
    avg_pulses: float
    interleaved: AxisAngle | None = None


def generate_sequence(rng: np.random.Generator, depth: int, group) -> list[int]:
    """Uniformly random Clifford indices for one sequence."""
    return [int(k) for k in rng.integers(0, len(group), size=depth)]


def recovery_element(group, net: Rotation, flip: bool):
    """Group element completing ``net`` to identity or to the bit flip."""
    target = compose(FLIP, net.inverse()) if flip else net.inverse()
    return match_element(group, target)


# ---------------------------------------------------------------------------
# Device engine


def realize_pulse(device: DeviceModel, aa: AxisAngle) -> PulseSpec:
    """Voltages that make the device play rotation ``aa`` in one pulse.

    Axes matching a single coupling use that pair alone; anything else is
    solved in its two-pair wedge.
    """
    omega = aa.theta / (TWO_PI * device.pulse_s)
    if omega == 0.0:
        return PulseSpec(v_x=(-np.inf, -np.inf, -np.inf), duration_s=device.pulse_s)
    j = None
    for pair, axis_phi in ONE_J_AXES.items():
        if abs((aa.phi - axis_phi + math.pi) % TWO_PI - math.pi) < 1e-9:
            j = {p: (omega if p == pair else 0.0) for p in PAIR_INDEX}
            break
    if j is None:
        from .calibration import pairs_for_axis

        j = solve_exchange_for_rotation(aa.phi, omega, pairs_for_axis(aa.phi))
    v = device.voltages_for_exchange(
        ExchangeVector(j12=j["12"], j23=j["23"], j13=j["13"])
    )
    return PulseSpec(v_x=tuple(v), duration_s=device.pulse_s)


def _sequence_survival_device(
    device: DeviceModel,
    pulses: list[PulseSpec],
    draw: NoiseDraw | None,
    apply_cross: bool,
) -> float:
    rho = initialize_singlet()
    for pulse in pulses:
        rho = device.simulate_pulse(rho, pulse, draw=draw, apply_cross=apply_cross)
    return measure_p0(rho)


def _run_device_engine(device, cfg, group, interleaved, executor):
    pulse_cache: dict[AxisAngle, PulseSpec] = {}

    def pulses_for(aa: AxisAngle) -> PulseSpec:
        if aa not in pulse_cache:
            pulse_cache[aa] = realize_pulse(device, aa)
        return pulse_cache[aa]

    idle = (
        PulseSpec(v_x=(-np.inf, -np.inf, -np.inf), duration_s=cfg.idle_s)
        if cfg.idle_s > 0
        else None
    )
    inter_el = None
    if interleaved is not None:
        inter_el = match_element(group, Rotation.from_axis_angle(interleaved))

    def one_cell(args):
        di, si, depth = args
        rng = rng_stream(cfg.seed, di, si)
        indices = generate_sequence(rng, depth, group)
        out = []
        for flip in (False, True):
            net = Rotation.identity()
            seq_pulses: list[PulseSpec] = []
            for k in indices:
                el = group[k]
                for aa in el.decomposition:
                    seq_pulses.append(pulses_for(aa))
                net = compose(el.rotation, net)
                if interleaved is not None:
                    seq_pulses.append(pulses_for(interleaved))
                    net = compose(inter_el.rotation, net)
                if idle is not None:
                    seq_pulses.append(idle)
            rec = recovery_element(group, net, flip)
            for aa in rec.decomposition:
                seq_pulses.append(pulses_for(aa))
            if cfg.shots is None:
                out.append(_sequence_survival_device(device, seq_pulses, None, cfg.apply_cross))
            else:
                hits = 0
                for shot in range(cfg.shots):
                    shot_rng = rng_stream(cfg.seed, di, si, int(flip), shot)
                    draw = sample_noise(device.noise, shot_rng)
                    p0 = _sequence_survival_device(device, seq_pulses, draw, cfg.apply_cross)
                    hits += int(shot_rng.random() < p0)
                out.append(hits / cfg.shots)
        return out

    cells = [
        (di, si, depth)
        for di, depth in enumerate(cfg.depths)
        for si in range(cfg.n_sequences)
    ]
    mapper = map if executor is None else executor.map
    flat = list(mapper(one_cell, cells))
    surv_id = np.array([r[0] for r in flat]).reshape(len(cfg.depths), cfg.n_sequences)
    surv_fl = np.array([r[1] for r in flat]).reshape(len(cfg.depths), cfg.n_sequences)
    return surv_id, surv_fl


# ---------------------------------------------------------------------------
# Channel-injection engine


def _run_channel_engine(cfg, group, inject: InjectedError, interleaved):
    lam_dep = 1.0 - 2.0 * inject.depol_per_pulse
    keep = 1.0 - inject.leak_per_pulse
    lam_gate = 1.0 - 2.0 * inject.gate_depol
    inter_el = None
    if interleaved is not None:
        inter_el = match_element(group, Rotation.from_axis_angle(interleaved))

    surv_id = np.empty((len(cfg.depths), cfg.n_sequences))
    surv_fl = np.empty_like(surv_id)
    for di, depth in enumerate(cfg.depths):
        for si in range(cfg.n_sequences):
            rng = rng_stream(cfg.seed, di, si)
            indices = generate_sequence(rng, depth, group)
            net = Rotation.identity()
            r = np.array([0.0, 0.0, 1.0])
            trace = 1.0
            for k in indices:
                el = group[k]
                n_p = el.pulse_count
                r = so3_matrix(el.rotation) @ r
                scale = (lam_dep * keep) ** n_p
                r = r * scale
                trace *= keep**n_p
                net = compose(el.rotation, net)
                if interleaved is not None:
                    r = so3_matrix(inter_el.rotation) @ r
                    r = r * (lam_gate * lam_dep * keep)
                    trace *= keep
                    net = compose(inter_el.rotation, net)
            for flip in (False, True):
                rec = recovery_element(group, net, flip)
                rr = so3_matrix(rec.rotation) @ r
                scale = (lam_dep * keep) ** rec.pulse_count
                rr = rr * scale
                tr = trace * keep**rec.pulse_count
                p0 = 0.5 * (tr + rr[2])
                if cfg.shots is not None:
                    shot_rng = rng_stream(cfg.seed, di, si, int(flip), 1000)
                    p0 = shot_rng.binomial(cfg.shots, min(1.0, max(0.0, p0))) / cfg.shots
                if flip:
                    surv_fl[di, si] = p0
                else:
                    surv_id[di, si] = p0
    return surv_id, surv_fl


def run_rb(
    device: DeviceModel | None,
    cfg: RbConfig,
    group=None,
    engine: str = "device",
    inject: InjectedError | None = None,
    interleaved: AxisAngle | None = None,
    executor=None,
) -> RbData:
    """Run blind randomized benchmarking and return paired survival data.

    ``engine="device"`` plays pulses on ``device``; ``engine="channel"``
    uses injected per-pulse channels and needs no device.  The interleaved
    rotation, when given, must itself be a Clifford element.
    """
    if group is None:
        group = canonical_clifford_group()
    if engine == "device":
        if device is None:
            raise ValueError("device engine needs a device model")
        surv_id, surv_fl = _run_device_engine(device, cfg, group, interleaved, executor)
    elif engine == "channel":
        surv_id, surv_fl = _run_channel_engine(
            cfg, group, inject or InjectedError(), interleaved
        )
    else:
        raise ValueError(f"unknown engine {engine!r}")
    avg = avg_pulse_count(group)
    if interleaved is not None:
        avg += 1.0
    return RbData(
        config=cfg,
        depths=tuple(cfg.depths),
        surv_identity=surv_id,
        surv_flip=surv_fl,
        avg_pulses=avg,
        interleaved=interleaved,
    )


# ---------------------------------------------------------------------------
# Decay fitting


@dataclass(frozen=True)
class RbFit:
    p: float
    amplitude: float
    lam: float
    c0: float
    c1: float
    err_per_clifford: float
    leak_per_clifford: float
    err_per_pulse: float
    avg_pulses: float


def _fit_exponential(depths, y, with_offset: bool, flat_threshold: float = 1e-12):
    """Least-squares fit of y = c0 + c1 * r^N (c0 optionally fixed at 0)."""
    depths = np.asarray(depths, dtype=float)
    y = np.asarray(y, dtype=float)
    span = float(y.max() - y.min())
    if span < flat_threshold:
        # flat curve: no decay resolvable
        if with_offset:
            return float(np.mean(y)), 0.0, 1.0
        return 0.0, float(np.mean(y)), 1.0

    if with_offset:
        # allow r slightly above 1 so the optimizer can cross the boundary
        # freely; non-decaying results are discarded by the caller
        def resid(x):
            c0, c1, r = x
            return c0 + c1 * np.clip(r, 0.0, 1.05) ** depths - y

        guesses = [
            np.array([y[-1], y[0] - y[-1], 0.99]),
            np.array([0.0, y[0], 0.95]),
            np.array([np.mean(y), span, 0.9]),
        ]
    else:
        def resid(x):
            c1, r = x
            return c1 * np.clip(r, 0.0, 1.0) ** depths - y

        slope = None
        pos = y > 1e-12
        if pos.sum() >= 2:
            coef = np.polyfit(depths[pos], np.log(y[pos]), 1)
            slope = (math.exp(coef[1]), math.exp(coef[0]))
        guesses = [np.array([1.0, 0.98]), np.array([y[0], 0.9])]
        if slope is not None:
            guesses.insert(0, np.array([slope[0], min(1.0, slope[1])]))

    best = None
    for g in guesses:
        try:
            res = least_squares(resid, g, method="lm")
        except Exception:  # noqa: BLE001 - try next start
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise FitError("exponential decay fit failed for all starts")
    if with_offset:
        c0, c1, r = best.x
        r = min(max(r, 0.0), 1.05)
    else:
        (c1, r), c0 = best.x, 0.0
        r = min(max(r, 0.0), 1.0)
    return float(c0), float(c1), float(r)


def fit_rb(data: RbData) -> RbFit:
    """Fit the paired survival curves and convert to error rates.

    The difference curve fixes the depolarizing parameter p, the sum curve
    the leakage parameter; error per Clifford combines both, and error per
    pulse divides by the average pulses per Clifford of the group used.
    """
    diff = np.mean(data.surv_identity - data.surv_flip, axis=1)
    total = np.mean(data.surv_identity + data.surv_flip, axis=1)
    _, amp, p = _fit_exponential(data.depths, diff, with_offset=False)
    c0, c1, lam = _fit_exponential(data.depths, total, with_offset=True)
    # the sum curve carries scatter from the two recovery words differing
    # in length; keep the decay model only when it is an actual decay
    # (lam < 1, positive excess over the asymptote) and beats a flat line
    # decisively, otherwise report no resolvable leakage
    model = c0 + c1 * lam ** np.asarray(data.depths, dtype=float)
    rss_decay = float(np.sum((model - total) ** 2))
    rss_flat = float(np.sum((total - total.mean()) ** 2))
    if lam >= 1.0 or c1 <= 0.0 or rss_flat <= 3.0 * rss_decay:
        c0, c1, lam = float(total.mean()), 0.0, 1.0
    epc = 0.5 * (1.0 - p) + 0.5 * (1.0 - lam)
    return RbFit(
        p=p,
        amplitude=amp,
        lam=lam,
        c0=c0,
        c1=c1,
        err_per_clifford=epc,
        leak_per_clifford=1.0 - lam,
        err_per_pulse=epc / data.avg_pulses,
        avg_pulses=data.avg_pulses,
    )


def interleaved_rb(
    device: DeviceModel | None,
    cfg: RbConfig,
    gate: AxisAngle,
    group=None,
    engine: str = "device",
    inject: InjectedError | None = None,
    executor=None,
) -> dict:
    """Reference-plus-interleaved benchmarking of one Clifford gate.

    The gate error is the difference of the two per-Clifford error rates;
    a negative difference is reported unchanged.
    """
    ref = run_rb(device, cfg, group=group, engine=engine, inject=inject, executor=executor)
    inter = run_rb(
        device,
        cfg,
        group=group,
        engine=engine,
        inject=inject,
        interleaved=gate,
        executor=executor,
    )
    fit_ref = fit_rb(ref)
    fit_int = fit_rb(inter)
    return {
        "reference": fit_ref,
        "interleaved": fit_int,
        "gate_error": fit_int.err_per_clifford - fit_ref.err_per_clifford,
        "gate_leakage": fit_int.leak_per_clifford - fit_ref.leak_per_clifford,
    }


# ---------------------------------------------------------------------------
# Free-evolution decay


@dataclass(frozen=True)
class OscillationFit:
    baseline: float
    amplitude: float
    omega: float
    phase: float
    t_decay_s: float
    n_oscillations: float


def fit_oscillation_decay(t_s, y) -> OscillationFit:
    """Fit y(t) = B + A cos(omega t + phase) exp(-(t/T)^2).

    A fit whose envelope does not decay over the sampled span reports
    ``t_decay_s = inf`` (and an infinite oscillation count if the
    frequency is finite).

    Raises:
        FitError: if no start converges.
    """
    t = np.asarray(t_s, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 8:
        raise FitError("need at least 8 samples to fit an oscillating decay")
    span = float(t.max() - t.min())
    b0 = float(np.mean(y))
    a0 = 0.5 * float(y.max() - y.min())
    # frequency seed from the discrete spectrum on a uniform resample
    tu = np.linspace(t.min(), t.max(), 4 * t.size)
    yu = np.interp(tu, t, y)
    spec = np.abs(np.fft.rfft(yu - yu.mean()))
    freqs = np.fft.rfftfreq(tu.size, tu[1] - tu[0])
    w0 = TWO_PI * freqs[int(np.argmax(spec))] if spec.size > 1 else 0.0

    def resid(x):
        b, a, w, ph, log_g = x
        damp = np.exp(-np.minimum(t**2 * math.exp(min(log_g, 700.0)), 700.0))
        return b + a * np.cos(w * t + ph) * damp - y

    best = None
    for ph0 in (0.0, 0.5 * math.pi, math.pi, -0.5 * math.pi):
        for tdec in (span, 0.3 * span, 3.0 * span):
            try:
                res = least_squares(
                    resid,
                    np.array([b0, a0, w0, ph0, -2.0 * math.log(tdec)]),
                    method="lm",
                )
            except Exception:  # noqa: BLE001 - try next start
                continue
            if best is None or res.cost < best.cost:
                best = res
    if best is None:
        raise FitError("oscillating decay fit failed for all starts")
    b, a, w, ph, log_g = best.x
    t_decay = math.inf if log_g < -1400.0 else math.exp(-0.5 * log_g)
    rms = math.sqrt(2.0 * best.cost / y.size)
    if t_decay > 50.0 * span:
        # envelope not resolved within the window: report no decay
        t_decay = math.inf
    if a < 0:
        a, ph = -a, ph + math.pi
    w = abs(w)
    ph = (ph + math.pi) % TWO_PI - math.pi
    n_osc = (w * t_decay / TWO_PI) if math.isfinite(t_decay) else math.inf
    if rms > 0.2 * max(abs(a), 1e-12):
        raise FitError(f"oscillating decay fit residual {rms:.3g} too large", rms)
    return OscillationFit(
        baseline=float(b),
        amplitude=float(a),
        omega=float(w),
        phase=float(ph),
        t_decay_s=float(t_decay),
        n_oscillations=float(n_osc),
    )


# ---------------------------------------------------------------------------
# Reports


def rb_report(data: RbData, fit: RbFit) -> str:
    """JSON report with config hash, per-depth statistics and fit values."""
    cfg = data.config
    cfg_doc = {
        "depths": list(cfg.depths),
        "n_sequences": cfg.n_sequences,
        "shots": cfg.shots,
        "seed": cfg.seed,
        "idle_s": cfg.idle_s,
        "apply_cross": cfg.apply_cross,
        "interleaved": (
            [data.interleaved.phi, data.interleaved.theta] if data.interleaved else None
        ),
    }
    blob = json.dumps(cfg_doc, sort_keys=True).encode()
    doc = {
        "config": cfg_doc,
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
        "per_depth": [
            {
                "N": int(n),
                "diff_mean": float(np.mean(data.surv_identity[i] - data.surv_flip[i])),
                "sum_mean": float(np.mean(data.surv_identity[i] + data.surv_flip[i])),
                "identity_mean": float(np.mean(data.surv_identity[i])),
                "flip_mean": float(np.mean(data.surv_flip[i])),
            }
            for i, n in enumerate(data.depths)
        ],
        "fit": {
            "p": fit.p,
            "amplitude": fit.amplitude,
            "lambda": fit.lam,
            "c0": fit.c0,
            "c1": fit.c1,
            "error_per_clifford": fit.err_per_clifford,
            "leakage_per_clifford": fit.leak_per_clifford,
            "error_per_pulse": fit.err_per_pulse,
            "avg_pulses_per_clifford": fit.avg_pulses,
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)
