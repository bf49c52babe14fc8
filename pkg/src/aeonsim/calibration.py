"""Germ-based closed-loop calibration of exchange rotations.

A germ amplifies small axis and angle errors of a probe pulse: with a probe
rotation ``R_phi(theta)`` and a pre-calibrated helper ``R_eta(chi)``, the
germ composes ``U(N) = U_ax^N * U_ang^N`` where ``U_ax = R_phi(theta)^(2q)``
and ``U_ang = (R_eta(chi) * R_phi(theta)^q)^2``, and ``q`` is the smallest
integer making ``q*theta*`` an odd multiple of pi.  At the calibration
point the germ is the identity and its Clifford-twirled survival fidelity
is 1; away from it, fringes of spacing pi/(2N) form around a central peak
whose width shrinks as 1/N.

Calibration proceeds by sweeping two virtual barrier voltages, measuring
the twirled fidelity cell by cell on the simulated device, tracking the
central peak through an N-doubling schedule, and finally fitting the
analytic fidelity surface to pin the target voltages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from .device import DeviceModel, rng_stream
from .errors import CalibrationDiverged, ConfigError, DetectionError, FitError
from .hilbert import (
    DIM,
    ExchangeVector,
    embed_qubit_unitary,
    initialize_singlet,
    measure_p0,
)
from .rotations import (
    AxisAngle,
    Rotation,
    canonical_clifford_group,
    compose,
    exchange_to_rotation,
    so3_matrix,
    to_unitary,
)

TWO_PI = 2.0 * math.pi

# Swept-pair wedge per target axis: positive couplings of these two pairs
# reach axis angles strictly between their single-coupling axes.
_WEDGES = (
    (("12", "13"), (-math.pi / 6.0, math.pi / 2.0)),
    (("13", "23"), (math.pi / 2.0, 7.0 * math.pi / 6.0)),
    (("12", "23"), (-5.0 * math.pi / 6.0, -math.pi / 6.0)),
)


def pairs_for_axis(phi: float) -> tuple[str, str]:
    """The two exchange pairs whose positive couplings realize axis ``phi``."""
    for pairs, (lo, hi) in _WEDGES:
        d = (phi - lo) % TWO_PI
        width = (hi - lo) % TWO_PI
        if 1e-12 < d < width - 1e-12:
            return pairs
    raise ConfigError(
        f"axis phi={phi:.6f} lies on a single-coupling axis; pick the pair "
        "explicitly"
    )


def solve_exchange_for_rotation(
    phi: float, omega_hz: float, pairs: tuple[str, str]
) -> dict[str, float]:
    """Couplings (Hz) of the two active pairs so the pulse rotates about
    ``phi`` at total rate ``omega_hz``; the third pair stays at zero.

    Raises:
        ConfigError: if the axis is not reachable with non-negative
            couplings of the given pairs.
    """
    x = omega_hz * math.cos(phi)
    z = omega_hz * math.sin(phi)
    active = set(pairs)
    if active == {"12", "23"}:
        j_minus = x / math.sqrt(3.0)
        j_plus = -z
        j = {"12": j_plus + j_minus, "23": j_plus - j_minus, "13": 0.0}
    elif active == {"12", "13"}:
        j12 = 2.0 * x / math.sqrt(3.0)
        j = {"12": j12, "13": z + 0.5 * j12, "23": 0.0}
    elif active == {"13", "23"}:
        j23 = -2.0 * x / math.sqrt(3.0)
        j = {"23": j23, "13": z + 0.5 * j23, "12": 0.0}
    else:
        raise ConfigError(f"unknown pair combination {pairs}")
    for p in pairs:
        if j[p] < -1e-9:
            raise ConfigError(
                f"axis phi={phi:.6f} needs negative J{p}; not reachable with "
                f"pairs {pairs}"
            )
        j[p] = max(0.0, j[p])
    return j


def choose_germ_exponent(theta_star: float, max_q: int = 16) -> tuple[int, int]:
    """Smallest q >= 1 with ``q * theta_star = s * pi`` for odd integer s.

    Raises:
        ConfigError: if no such q exists up to ``max_q`` (the target angle
            must be an odd-over-integer rational multiple of pi).
    """
    for q in range(1, max_q + 1):
        x = q * theta_star / math.pi
        s = round(x)
        if abs(x - s) < 1e-9 and s % 2 == 1 and s > 0:
            return q, s
    raise ConfigError(
        f"target angle {theta_star:.6f} has no odd-multiple-of-pi germ "
        f"exponent q <= {max_q}"
    )


@dataclass(frozen=True)
class GermConfig:
    """Germ calibration target and believed helper-pulse parameters."""

    phi_star: float
    theta_star: float
    q: int
    s: int
    eta: float
    chi: float = math.pi
    pulse_s: float = 10e-9

    @staticmethod
    def for_target(
        phi_star: float,
        theta_star: float,
        eta: float | None = None,
        chi: float = math.pi,
        pulse_s: float = 10e-9,
    ) -> "GermConfig":
        q, s = choose_germ_exponent(theta_star)
        if eta is None:
            eta = phi_star + math.pi / 2.0
        return GermConfig(phi_star, theta_star, q, s, eta, chi, pulse_s)


def build_germ_sequence(
    cfg: GermConfig, probe: AxisAngle, n_reps: int
) -> tuple[tuple[str, AxisAngle], ...]:
    """Expand the germ into a time-ordered pulse list.

    Each entry is ``("probe", probe)`` or ``("precal", R_eta(chi))``.  One
    angle-amplifying repetition plays q probes, the helper, q probes and
    the helper again; the N axis-amplifying repetitions then play 2q probes
    each.  At ``probe = (phi_star, theta_star)`` the whole sequence
    composes to the identity up to global phase.
    """
    if n_reps < 1:
        raise ValueError(f"germ repetitions must be >= 1, got {n_reps}")
    precal = ("precal", AxisAngle(cfg.eta, cfg.chi))
    ang_block = (("probe", probe),) * cfg.q + (precal,)
    seq = (ang_block * 2) * n_reps + (("probe", probe),) * (2 * cfg.q * n_reps)
    return seq


# ---------------------------------------------------------------------------
# Twirled survival fidelity


def twirl_fidelity(
    u,
    cliffords=None,
    shots: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Clifford-twirled survival fidelity of a net operation.

    Averages ``|<0| C_i^dag U C_i |0>|^2`` over the 24 single-qubit
    Cliffords.  ``u`` may be a Rotation (two-level path) or an (8, 8)
    propagator, in which case the Cliffords act identically on both gauge
    sectors and survival is the encoded-``|0>`` population.

    With ``shots`` given, each term is replaced by a binomial estimate with
    that many shots, in randomized term order.

    Returns:
        (fidelity, standard error); the standard error is 0 exactly in the
        shot-free case.
    """
    group = canonical_clifford_group() if cliffords is None else list(cliffords)
    survivals = []
    if isinstance(u, Rotation):
        for el in group:
            net = compose(compose(el.rotation.inverse(), u), el.rotation)
            survivals.append(net.w**2 + net.v[2] ** 2)
    else:
        u = np.asarray(u, dtype=complex)
        if u.shape != (DIM, DIM):
            raise ValueError(f"expected Rotation or (8, 8) propagator, got {u.shape}")
        rho0 = initialize_singlet()
        for el in group:
            c8 = embed_qubit_unitary(to_unitary(el.rotation))
            v = c8.conj().T @ u @ c8
            survivals.append(measure_p0(v @ rho0 @ v.conj().T))
    survivals = np.asarray(survivals)
    if shots is None:
        return float(np.mean(survivals)), 0.0
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    if rng is None:
        rng = np.random.default_rng()
    order = rng.permutation(len(survivals))
    est = np.empty(len(survivals))
    for k in order:
        est[k] = rng.binomial(shots, min(1.0, max(0.0, survivals[k]))) / shots
    stderr = math.sqrt(float(np.sum(est * (1.0 - est) / shots))) / len(est)
    return float(np.mean(est)), stderr


_Z_COLUMNS: np.ndarray | None = None


def _clifford_z_columns() -> np.ndarray:
    """Third column of each canonical Clifford's Bloch rotation matrix."""
    global _Z_COLUMNS
    if _Z_COLUMNS is None:
        _Z_COLUMNS = np.stack(
            [so3_matrix(el.rotation)[:, 2] for el in canonical_clifford_group()]
        )
    return _Z_COLUMNS


def _twirl_from_quaternion(w, v):
    """Vectorized exact twirl from net quaternions (w (...,), v (..., 3))."""
    z = _clifford_z_columns()
    proj = np.einsum("...j,kj->...k", v, z)
    return w**2 + np.mean(proj**2, axis=-1)


# ---------------------------------------------------------------------------
# Analytic fidelity surface


def spread_polynomial(m: int, x):
    """Spread polynomial S_m: S_m(sin^2 a) = sin^2(m a), for x in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12) or np.any(x > 1.0 + 1e-12):
        raise ValueError("spread polynomial argument outside [0, 1]")
    a = np.arcsin(np.sqrt(np.clip(x, 0.0, 1.0)))
    return np.sin(m * a) ** 2


def chebyshev_u(m: int, x):
    """Chebyshev polynomial of the second kind, trigonometric evaluation
    for |x| <= 1 and hyperbolic continuation outside."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    inside = np.abs(x) <= 1.0
    t = np.arccos(np.clip(x[inside], -1.0, 1.0))
    st = np.sin(t)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.sin((m + 1) * t) / st
    # limits at the endpoints where sin(t) vanishes
    ends = st < 1e-9
    val[ends] = (m + 1) * np.sign(np.cos(t[ends])) ** m
    out[inside] = val
    if np.any(~inside):
        xo = x[~inside]
        a = np.arccosh(np.abs(xo))
        hv = np.sinh((m + 1) * a) / np.sinh(a)
        out[~inside] = np.where(xo > 0, hv, (-1.0) ** m * hv)
    return out


def analytic_fidelity(phi, theta, eta: float, chi: float, n_reps: int, cfg: GermConfig):
    """Closed-form twirled fidelity of the germ at probe (phi, theta).

    The helper rotation is ``R_eta(chi)``.  The composed rotation entering
    the fringe factors is ``R_eta(chi) * R_phi(q*theta)`` (the q-fold
    repeated probe), and the axis-amplification angle per repetition is the
    accumulated ``2*q*theta`` rather than the bare pulse angle; this is the
    convention that reproduces the brute-force Clifford twirl for all N,
    including odd N at the calibration point.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    q = cfg.q
    half_chi = 0.5 * chi
    theta_q = q * theta
    # composed rotation R_eta(chi) * R_phi(q theta): quaternion (wc, vc)
    ch, sh = math.cos(half_chi), math.sin(half_chi)
    ct, st = np.cos(0.5 * theta_q), np.sin(0.5 * theta_q)
    wc = ch * ct - sh * st * np.cos(phi - eta)
    vx = ch * st * np.cos(phi) + sh * ct * math.cos(eta)
    vy = -sh * st * np.sin(phi - eta)
    vz = ch * st * np.sin(phi) + sh * ct * math.sin(eta)
    sin2_half = 1.0 - wc**2

    rx, rz = np.cos(phi), np.sin(phi)
    alpha = 2.0 * n_reps * q * theta

    s2n = spread_polynomial(2 * n_reps, np.clip(sin2_half, 0.0, 1.0))
    u2n1 = chebyshev_u(2 * n_reps - 1, wc)
    u4n1 = chebyshev_u(4 * n_reps - 1, wc)

    cross_sq = (rx * vz - rz * vx) ** 2 + vy**2
    dot = rx * vx + rz * vz
    bracket = np.cos(alpha) * s2n + cross_sq * np.sin(0.5 * alpha) ** 2 * u2n1**2
    term2 = 0.5 * dot * np.sin(alpha) * u4n1
    return 1.0 - (2.0 / 3.0) * (bracket + term2 + np.sin(0.5 * alpha) ** 2)


# ---------------------------------------------------------------------------
# Voltage-space sweeps


@dataclass(frozen=True)
class FidelityMap:
    """Twirled fidelity on a 2-D barrier voltage grid (rows follow v2)."""

    v1: np.ndarray
    v2: np.ndarray
    f: np.ndarray
    stderr: np.ndarray | None
    pairs: tuple[str, str]
    n_reps: int
    cfg: GermConfig


def _quat_power(w, v, n: int):
    """Integer power of unit quaternions, vectorized."""
    norm_v = np.sqrt(np.sum(v**2, axis=-1))
    half = np.arctan2(norm_v, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        axis = v / norm_v[..., None]
    axis = np.where(norm_v[..., None] > 1e-300, axis, 0.0)
    wn = np.cos(n * half)
    vn = np.sin(n * half)[..., None] * axis
    # pure-scalar quaternions: w = +-1
    scalar = norm_v <= 1e-300
    wn = np.where(scalar, np.sign(w) ** n, wn)
    return wn, vn


def _quat_multiply(w1, v1, w2, v2):
    w = w1 * w2 - np.sum(v1 * v2, axis=-1)
    v = (
        w1[..., None] * v2
        + w2[..., None] * v1
        + np.cross(v1, v2)
    )
    return w, v


def germ_net_quaternion(
    cfg: GermConfig,
    probe_phi,
    probe_theta,
    n_reps: int,
    precal: Rotation | None = None,
):
    """Net germ rotation quaternion, vectorized over probe arrays.

    Uses exact integer-power identities for the repeated blocks; equals the
    composition of :func:`build_germ_sequence` pulse by pulse.
    """
    phi = np.asarray(probe_phi, dtype=float)
    theta = np.asarray(probe_theta, dtype=float)
    if precal is None:
        precal = Rotation.from_axis_angle(AxisAngle(cfg.eta, cfg.chi))
    pw = np.broadcast_to(np.cos(0.5 * cfg.q * theta), phi.shape).copy()
    sin_q = np.sin(0.5 * cfg.q * theta)
    pv = np.stack(
        [sin_q * np.cos(phi), np.zeros_like(phi), sin_q * np.sin(phi)], axis=-1
    )
    cw = np.asarray(precal.w, dtype=float)
    cv = np.asarray(precal.v, dtype=float)
    gw, gv = _quat_multiply(cw, np.broadcast_to(cv, pv.shape), pw, pv)
    aw, av = _quat_power(gw, gv, 2 * n_reps)
    ax_w = np.cos(0.5 * 2 * cfg.q * n_reps * theta)
    sin_ax = np.sin(0.5 * 2 * cfg.q * n_reps * theta)
    ax_v = np.stack(
        [sin_ax * np.cos(phi), np.zeros_like(phi), sin_ax * np.sin(phi)], axis=-1
    )
    return _quat_multiply(ax_w, ax_v, aw, av)


def sweep_fidelity(
    device: DeviceModel,
    cfg: GermConfig,
    pairs: tuple[str, str],
    v1: np.ndarray,
    v2: np.ndarray,
    n_reps: int,
    shots: int | None = None,
    seed: int = 0,
    executor=None,
    precal_actual: Rotation | None = None,
) -> FidelityMap:
    """Measure the germ's twirled fidelity over a barrier-voltage grid.

    Per cell, the probe pulse is whatever rotation the device delivers at
    those voltages (exchange law, pulse duration); the germ is composed
    pulse by pulse and twirled.  Cells are independent work units; rows go
    through ``executor.map`` when an executor is supplied.  With ``shots``,
    per-cell binomial sampling uses counter-split RNG streams so results
    do not depend on scheduling.

    ``precal_actual`` injects a helper pulse differing from the believed
    ``(eta, chi)`` (calibration-transfer error studies).
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    idx = {p: i for i, p in enumerate(PAIR_INDEX)}
    i1, i2 = idx[pairs[0]], idx[pairs[1]]

    def compute_row(r: int):
        phis = np.empty(v1.size)
        thetas = np.empty(v1.size)
        for c, va in enumerate(v1):
            v_x = np.full(3, -np.inf)
            v_x[i1] = va
            v_x[i2] = v2[r]
            j = device.exchange_from_voltages(v_x)
            aa = exchange_to_rotation(j, cfg.pulse_s)
            phis[c] = aa.phi
            thetas[c] = aa.theta
        w, v = germ_net_quaternion(cfg, phis, thetas, n_reps, precal=precal_actual)
        f_exact = _twirl_from_quaternion(w, v)
        if shots is None:
            return f_exact, np.zeros_like(f_exact)
        z = _clifford_z_columns()
        proj = np.einsum("cj,kj->ck", v, z)
        surv = np.clip(w[:, None] ** 2 + proj**2, 0.0, 1.0)
        f_row = np.empty(v1.size)
        err_row = np.empty(v1.size)
        for c in range(v1.size):
            rng = rng_stream(seed, n_reps, r, c)
            order = rng.permutation(surv.shape[1])
            est = np.empty(surv.shape[1])
            for k in order:
                est[k] = rng.binomial(shots, surv[c, k]) / shots
            f_row[c] = est.mean()
            err_row[c] = math.sqrt(float(np.sum(est * (1 - est) / shots))) / est.size
        return f_row, err_row

    rows = range(v2.size)
    mapper = map if executor is None else executor.map
    results = list(mapper(compute_row, rows))
    f = np.stack([r[0] for r in results])
    err = np.stack([r[1] for r in results])
    return FidelityMap(v1, v2, f, err if shots else None, tuple(pairs), n_reps, cfg)


PAIR_INDEX = ("12", "13", "23")


# ---------------------------------------------------------------------------
# Peak detection and staged tracking


@dataclass(frozen=True)
class PeakEstimate:
    v1: float
    v2: float
    stderr_v1: float
    stderr_v2: float
    cells: int


def find_peak(fmap: FidelityMap, previous: tuple[float, float] | None = None) -> PeakEstimate:
    """Locate the tracked fidelity peak on a map.

    The map is smoothed with a one-cell Gaussian filter and thresholded at
    exactly 0.80 of the filtered maximum; among the connected
    above-threshold regions, the one whose centroid lies nearest the
    previous peak (Euclidean, voltage space) is selected, or the region
    containing the global maximum when there is no previous peak.  Returns
    the intensity-weighted centroid.

    Raises:
        DetectionError: if the map has no contrast (flat within 1e-9
            relative) or no usable region.
    """
    f = np.asarray(fmap.f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise DetectionError("fidelity map contains non-finite values")
    smooth = ndimage.gaussian_filter(f, sigma=1.0, mode="nearest")
    fmax, fmin = float(smooth.max()), float(smooth.min())
    if fmax - fmin <= 1e-9 * max(abs(fmax), 1e-30):
        raise DetectionError("fidelity map is flat; no peak to detect")
    mask = smooth >= 0.80 * fmax
    labels, n_regions = ndimage.label(mask)
    if n_regions == 0:
        raise DetectionError("no cells above the 80% threshold")

    def centroid(region_mask):
        wts = smooth * region_mask
        total = wts.sum()
        rows, cols = np.nonzero(region_mask)
        wr = wts[rows, cols]
        c1 = float(np.sum(fmap.v1[cols] * wr) / total)
        c2 = float(np.sum(fmap.v2[rows] * wr) / total)
        s1 = float(np.sqrt(np.sum((fmap.v1[cols] - c1) ** 2 * wr) / total))
        s2 = float(np.sqrt(np.sum((fmap.v2[rows] - c2) ** 2 * wr) / total))
        return c1, c2, s1, s2, rows.size

    if previous is None:
        rmax, cmax = np.unravel_index(np.argmax(smooth), smooth.shape)
        pick = labels[rmax, cmax]
    else:
        best, best_d = None, np.inf
        for lab in range(1, n_regions + 1):
            c1, c2, *_ = centroid(labels == lab)
            d = math.hypot(c1 - previous[0], c2 - previous[1])
            if d < best_d:
                best, best_d = lab, d
        pick = best
    c1, c2, s1, s2, cells = centroid(labels == pick)
    return PeakEstimate(c1, c2, s1, s2, cells)


# ---------------------------------------------------------------------------
# Final surface fit


@dataclass(frozen=True)
class LawFit:
    """Fitted exponential law of one pair (A held at its configured scale)."""

    a_hz: float
    b_per_v: float
    c: float


@dataclass(frozen=True)
class CalFit:
    laws: dict
    chi: float
    residual_rms: float
    n_restarts_used: int


def _map_model(params, fmap: FidelityMap, a_scales, eta: float):
    b1, c1, b2, c2, chi = params
    cfg = fmap.cfg
    vv1, vv2 = np.meshgrid(fmap.v1, fmap.v2)
    by_pair = {
        fmap.pairs[0]: a_scales[0] * np.exp(b1 * vv1 + c1),
        fmap.pairs[1]: a_scales[1] * np.exp(b2 * vv2 + c2),
    }
    j12 = by_pair.get("12", 0.0)
    j23 = by_pair.get("23", 0.0)
    j13 = by_pair.get("13", 0.0)
    j_minus = 0.5 * (j12 - j23)
    j_plus = 0.5 * (j12 + j23)
    x = math.sqrt(3.0) * j_minus
    z = j13 - j_plus
    omega = np.hypot(x, z)
    phi = np.arctan2(z, x)
    theta = TWO_PI * omega * cfg.pulse_s
    return analytic_fidelity(phi, theta, eta, chi, fmap.n_reps, cfg)


def fit_final(
    fmap: FidelityMap,
    assumed_laws: dict,
    peak_v: tuple[float, float] | None = None,
    seed: int = 0,
    n_restarts: int = 8,
    max_residual: float = 0.05,
) -> CalFit:
    """Fit the analytic fidelity surface to the final map.

    Free parameters are B and C of each swept pair's exchange law plus the
    helper angle chi (A is held at its configured scale: A and C shift the
    same degree of freedom).  Damped least squares with numeric Jacobians,
    restarted from 8 jittered seeds around the assumed laws.

    When ``peak_v`` is given (the measured peak of this map), each start's
    C offsets are chosen so the model's calibration point sits on that
    peak; without this the start can alias onto a neighboring high-N
    fringe and the fit converges to a shifted law.

    Raises:
        FitError: if no restart converges to residual RMS below
            ``max_residual``.
    """
    cfg = fmap.cfg
    law1, law2 = assumed_laws[fmap.pairs[0]], assumed_laws[fmap.pairs[1]]
    a_scales = (law1.a_hz, law2.a_hz)
    x0 = np.array([law1.b_per_v, law1.c, law2.b_per_v, law2.c, cfg.chi])
    data = fmap.f
    j_tgt = None
    if peak_v is not None:
        omega = cfg.theta_star / (TWO_PI * cfg.pulse_s)
        j = solve_exchange_for_rotation(cfg.phi_star, omega, fmap.pairs)
        j_tgt = (j[fmap.pairs[0]], j[fmap.pairs[1]])

    def pin_offsets(start):
        start[1] = math.log(j_tgt[0] / a_scales[0]) - start[0] * peak_v[0]
        start[3] = math.log(j_tgt[1] / a_scales[1]) - start[2] * peak_v[1]

    def residuals(params):
        return (_map_model(params, fmap, a_scales, cfg.eta) - data).ravel()

    best = None
    used = 0
    for k in range(n_restarts):
        rng = rng_stream(seed, 77, k)
        start = x0.copy()
        if k > 0:
            start[0] *= 1.0 + 0.03 * rng.standard_normal()
            start[2] *= 1.0 + 0.03 * rng.standard_normal()
            start[1] += 0.05 * rng.standard_normal()
            start[3] += 0.05 * rng.standard_normal()
            start[4] += 0.05 * rng.standard_normal()
        if j_tgt is not None:
            pin_offsets(start)
        try:
            res = least_squares(residuals, start, method="lm", xtol=1e-14, ftol=1e-14)
        except Exception:  # noqa: BLE001 - restart on solver breakdown
            continue
        used = k + 1
        if best is None or res.cost < best.cost:
            best = res
        if math.sqrt(2.0 * best.cost / data.size) < 1e-10:
            break
    if best is None:
        raise FitError("all fit restarts failed")
    rms = math.sqrt(2.0 * best.cost / data.size)
    if rms > max_residual:
        raise FitError(f"fidelity surface fit residual {rms:.3g} too large", rms)
    b1, c1, b2, c2, chi = best.x
    laws = {
        fmap.pairs[0]: LawFit(a_scales[0], float(b1), float(c1)),
        fmap.pairs[1]: LawFit(a_scales[1], float(b2), float(c2)),
    }
    return CalFit(laws=laws, chi=float(chi), residual_rms=rms, n_restarts_used=used)


def fitted_rotation_at(
    fit: CalFit, pairs: tuple[str, str], v1: float, v2: float, pulse_s: float
) -> AxisAngle:
    """Probe rotation the fitted model assigns to a voltage point."""
    j_active = {
        pairs[0]: fit.laws[pairs[0]].a_hz
        * math.exp(fit.laws[pairs[0]].b_per_v * v1 + fit.laws[pairs[0]].c),
        pairs[1]: fit.laws[pairs[1]].a_hz
        * math.exp(fit.laws[pairs[1]].b_per_v * v2 + fit.laws[pairs[1]].c),
    }
    j = {p: j_active.get(p, 0.0) for p in PAIR_INDEX}
    return exchange_to_rotation(
        ExchangeVector(j12=j["12"], j23=j["23"], j13=j["13"]), pulse_s
    )


def solve_fit_voltages(fit: CalFit, cfg: GermConfig, pairs: tuple[str, str]):
    """Voltages where the fitted laws put the probe exactly on target."""
    omega = cfg.theta_star / (TWO_PI * cfg.pulse_s)
    j = solve_exchange_for_rotation(cfg.phi_star, omega, pairs)
    out = []
    for p, v in zip(pairs, (j[pairs[0]], j[pairs[1]])):
        law = fit.laws[p]
        out.append((math.log(v / law.a_hz) - law.c) / law.b_per_v)
    return tuple(out)


# ---------------------------------------------------------------------------
# Staged closed loop


@dataclass(frozen=True)
class CalibrationStage:
    n_reps: int
    window: tuple[tuple[float, float], tuple[float, float]]
    peak_v: tuple[float, float]
    stderr: tuple[float, float]


@dataclass(frozen=True)
class CalibrationResult:
    target: dict
    pairs: tuple[str, str]
    stages: tuple[CalibrationStage, ...]
    fit: dict
    final: dict

    def to_json(self) -> str:
        doc = {
            "target": self.target,
            "pairs": list(self.pairs),
            "stages": [
                {
                    "N": st.n_reps,
                    "window": [list(st.window[0]), list(st.window[1])],
                    "peak_v": list(st.peak_v),
                    "stderr": list(st.stderr),
                }
                for st in self.stages
            ],
            "fit": self.fit,
            "final": self.final,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


@dataclass(frozen=True)
class CalibrationOptions:
    schedule: tuple[int, ...] = (1, 2, 4, 8, 16, 24)
    grid_points: int = 21
    window0_v: float = 0.030
    shots: int | None = None
    seed: int = 0
    max_jump_windows: float = 1.5


def run_calibration(
    device: DeviceModel,
    phi_star: float,
    theta_star: float,
    options: CalibrationOptions = CalibrationOptions(),
    eta: float | None = None,
    chi: float = math.pi,
    pairs: tuple[str, str] | None = None,
    assumed_laws: dict | None = None,
    precal_actual: Rotation | None = None,
    executor=None,
) -> CalibrationResult:
    """Track the germ fidelity peak through an N-doubling schedule and fit
    the final map.

    The starting window centers on the assumed-law voltage solution; each
    stage shrinks the window in proportion to 1/N (never below 3x the
    previous grid resolution) and re-centers on the peak found by
    :func:`find_peak`.  The last stage's map is fitted with
    :func:`fit_final` and the fitted laws are solved for the voltages that
    put the probe on target.

    Raises:
        CalibrationDiverged: if a stage's peak jumps by more than
            ``max_jump_windows`` windows.
    """
    cfg = GermConfig.for_target(phi_star, theta_star, eta=eta, chi=chi)
    cfg = GermConfig(
        cfg.phi_star, cfg.theta_star, cfg.q, cfg.s, cfg.eta, cfg.chi, device.pulse_s
    )
    if pairs is None:
        pairs = pairs_for_axis(phi_star)
    laws = dict(device.laws) if assumed_laws is None else dict(assumed_laws)
    omega = theta_star / (TWO_PI * device.pulse_s)
    j_tgt = solve_exchange_for_rotation(phi_star, omega, pairs)
    center = [laws[p].v_for(j_tgt[p]) for p in pairs]

    stages: list[CalibrationStage] = []
    fmap = None
    window = options.window0_v
    resolution = window / (options.grid_points - 1)
    prev_peak: tuple[float, float] | None = None
    n0 = options.schedule[0]
    for stage_idx, n_reps in enumerate(options.schedule):
        if stage_idx > 0:
            shrink = options.schedule[stage_idx - 1] / n_reps
            window = max(window * shrink, 3.0 * resolution)
        v1 = np.linspace(center[0] - window / 2, center[0] + window / 2, options.grid_points)
        v2 = np.linspace(center[1] - window / 2, center[1] + window / 2, options.grid_points)
        resolution = window / (options.grid_points - 1)
        fmap = sweep_fidelity(
            device,
            cfg,
            pairs,
            v1,
            v2,
            n_reps,
            shots=options.shots,
            seed=options.seed + stage_idx,
            executor=executor,
            precal_actual=precal_actual,
        )
        # anchor stage 0 to the nominal solution: germs are identity on a
        # lattice of voltage points and the global maximum may sit on a
        # neighboring lattice point
        anchor = prev_peak if prev_peak is not None else (center[0], center[1])
        peak = find_peak(fmap, previous=anchor)
        if prev_peak is not None:
            jump = math.hypot(peak.v1 - prev_peak[0], peak.v2 - prev_peak[1])
            if jump > options.max_jump_windows * window:
                raise CalibrationDiverged(
                    f"peak jumped {jump:.4g} V at stage N={n_reps}", stage_idx
                )
        stages.append(
            CalibrationStage(
                n_reps=n_reps,
                window=((v1[0], v1[-1]), (v2[0], v2[-1])),
                peak_v=(peak.v1, peak.v2),
                stderr=(peak.stderr_v1, peak.stderr_v2),
            )
        )
        center = [peak.v1, peak.v2]
        prev_peak = (peak.v1, peak.v2)

    fit = fit_final(fmap, laws, peak_v=prev_peak, seed=options.seed)
    v_final = solve_fit_voltages(fit, cfg, pairs)
    aa = fitted_rotation_at(fit, pairs, v_final[0], v_final[1], cfg.pulse_s)
    final = {
        f"v_x{pairs[0]}": v_final[0],
        f"v_x{pairs[1]}": v_final[1],
        "phi": aa.phi,
        "theta": aa.theta,
    }
    fit_doc = {
        "chi": fit.chi,
        "residual_rms": fit.residual_rms,
        "laws": {
            p: {"A_hz": lf.a_hz, "B_per_v": lf.b_per_v, "C": lf.c}
            for p, lf in fit.laws.items()
        },
    }
    return CalibrationResult(
        target={"phi": phi_star, "theta": theta_star, "q": cfg.q, "s": cfg.s},
        pairs=tuple(pairs),
        stages=tuple(stages),
        fit=fit_doc,
        final=final,
    )
