"""Voltage-level model of a triple-dot device.

The model maps physical gate voltages to virtual gates through a
compensation matrix, virtual barrier voltages to exchange couplings through
per-pair exponential laws (with optional exchange cross-talk), and virtual
plunger offsets to a multiplicative detuning penalty on each coupling.
Quasi-static Gaussian noise draws perturb the virtual voltages and add a
magnetic gradient; a draw is held fixed for the duration of one shot.

Virtual gate vectors are ordered ``(P1, P2, P3, X12, X13, X23)`` and
exchange pair vectors ``(12, 13, 23)`` throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import hilbert
from .errors import ConfigError
from .hilbert import ExchangeVector, FieldConfig

VIRTUAL_GATE_ORDER = ("p1", "p2", "p3", "x12", "x13", "x23")
PAIR_ORDER = ("12", "13", "23")

# Compensation matrix of the reference device: virtual = C @ physical.
# Lower-left block zero and lower-right identity, so barrier gates are
# already virtual and plungers pick up barrier cross-capacitance.
DEFAULT_COMPENSATION = np.array(
    [
        [1.00, 0.19, 0.18, 0.51, 0.67, 0.21],
        [-0.19, 1.00, 0.20, 0.38, 0.36, 0.49],
        [0.06, 0.20, 1.00, 0.16, 0.98, 0.53],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    ]
)

# Relative cross-response of each exchange coupling to the other barrier
# gates (rows/columns in pair order 12, 13, 23).
DEFAULT_CROSS = np.array(
    [
        [1.00, -0.08, -0.08],
        [-0.24, 1.00, -0.18],
        [-0.15, -0.19, 1.00],
    ]
)


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Deterministic RNG stream split by a counter path.

    Streams for different paths are independent regardless of the order in
    which parallel tasks consume them.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


@dataclass(frozen=True)
class CompensationMatrix:
    """Virtual gate transform ``v_virtual = C @ v_physical``."""

    matrix: np.ndarray = field(default_factory=lambda: DEFAULT_COMPENSATION.copy())

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (6, 6):
            raise ConfigError(f"compensation matrix must be 6x6, got {m.shape}")
        if not np.allclose(m[3:, :3], 0.0, atol=1e-12):
            raise ConfigError("compensation matrix lower-left block must be zero")
        if not np.allclose(m[3:, 3:], np.eye(3), atol=1e-12):
            raise ConfigError("compensation matrix lower-right block must be identity")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ConfigError("compensation matrix is singular")
        object.__setattr__(self, "matrix", m)

    def virtualize(self, v_physical) -> np.ndarray:
        v = np.asarray(v_physical, dtype=float)
        if v.shape != (6,):
            raise ValueError(f"expected 6 physical gate voltages, got {v.shape}")
        return self.matrix @ v

    def devirtualize(self, v_virtual) -> np.ndarray:
        v = np.asarray(v_virtual, dtype=float)
        if v.shape != (6,):
            raise ValueError(f"expected 6 virtual gate voltages, got {v.shape}")
        return np.linalg.solve(self.matrix, v)


@dataclass(frozen=True)
class ExchangeLaw:
    """Exponential barrier-voltage law ``J = A * exp(B*V + C)`` (J in Hz)."""

    a_hz: float
    b_per_v: float
    c: float = 0.0

    def j_hz(self, v) -> np.ndarray | float:
        return self.a_hz * np.exp(self.b_per_v * np.asarray(v, dtype=float) + self.c)

    def v_for(self, j_hz: float) -> float:
        if j_hz <= 0:
            raise ValueError("exchange must be positive to invert the law")
        return (math.log(j_hz / self.a_hz) - self.c) / self.b_per_v


@dataclass(frozen=True)
class DetuningSensitivity:
    """Quadratic sensitivity of one coupling to tilt and dimple detuning.

    The penalty is ``exp(alpha_tilt * eps_t**2 + alpha_dimple * eps_d**2)``
    with ``eps_t = (eps2 - eps1)/2`` and ``eps_d = eps3 - (eps1 + eps2)/2``;
    a common-mode plunger shift changes nothing.
    """

    alpha_tilt: float = 0.0
    alpha_dimple: float = 0.0


def detuning_penalty(plunger_offsets, sensitivities: dict[str, DetuningSensitivity]) -> dict[str, float]:
    """Multiplicative exchange penalty per pair for virtual plunger offsets
    (volts, relative to the deep symmetry spot)."""
    e1, e2, e3 = np.asarray(plunger_offsets, dtype=float)
    eps_t = 0.5 * (e2 - e1)
    eps_d = e3 - 0.5 * (e1 + e2)
    out = {}
    for pair in PAIR_ORDER:
        s = sensitivities.get(pair, DetuningSensitivity())
        out[pair] = float(np.exp(s.alpha_tilt * eps_t**2 + s.alpha_dimple * eps_d**2))
    return out


@dataclass(frozen=True)
class NoiseConfig:
    """Quasi-static Gaussian noise magnitudes.

    ``voltage_sigma_v`` applies per virtual gate (scalar or 6-vector) and
    ``gradient_sigma_hz`` per dot (scalar or 3-vector).  One draw is taken
    per shot and held fixed while the shot's pulses play out.
    """

    voltage_sigma_v: float | tuple = 0.0
    gradient_sigma_hz: float | tuple = 0.0
    seed: int = 0

    def sigma_v(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.voltage_sigma_v, dtype=float), (6,)).copy()

    def sigma_b(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.gradient_sigma_hz, dtype=float), (3,)).copy()


@dataclass(frozen=True)
class NoiseDraw:
    """One quasi-static noise realization."""

    voltage_offsets_v: np.ndarray
    gradients_hz: np.ndarray

    @staticmethod
    def none() -> "NoiseDraw":
        return NoiseDraw(np.zeros(6), np.zeros(3))


def sample_noise(noise: NoiseConfig, rng: np.random.Generator) -> NoiseDraw:
    """Draw quasi-static voltage and gradient offsets from ``rng``."""
    return NoiseDraw(
        voltage_offsets_v=rng.normal(0.0, 1.0, size=6) * noise.sigma_v(),
        gradients_hz=rng.normal(0.0, 1.0, size=3) * noise.sigma_b(),
    )


@dataclass(frozen=True)
class PulseSpec:
    """One exchange pulse in virtual-voltage space.

    ``v_x`` holds the three virtual barrier voltages (pair order); ``-inf``
    keeps a coupling switched off exactly.  ``plunger_offsets_v`` are
    virtual plunger excursions relative to the deep symmetry spot.  A
    nonzero ``ramp_s`` adds linear voltage rise and fall of that duration,
    each sliced into 16 piecewise-constant segments.
    """

    v_x: tuple[float, float, float]
    duration_s: float
    plunger_offsets_v: tuple[float, float, float] = (0.0, 0.0, 0.0)
    ramp_s: float = 0.0


@dataclass(frozen=True)
class DeviceModel:
    """Ground-truth device used by the simulated experiments."""

    compensation: CompensationMatrix = field(default_factory=CompensationMatrix)
    laws: dict = field(
        default_factory=lambda: {p: ExchangeLaw(1.0e6, 52.983, 0.0) for p in PAIR_ORDER}
    )
    cross: np.ndarray | None = field(default_factory=lambda: DEFAULT_CROSS.copy())
    sensitivities: dict = field(default_factory=dict)
    dss_location_v: tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    fields: FieldConfig = FieldConfig()
    pulse_s: float = 10e-9
    idle_v: float = -0.5

    def __post_init__(self):
        if self.cross is not None:
            m = np.asarray(self.cross, dtype=float)
            if m.shape != (3, 3):
                raise ConfigError(f"cross matrix must be 3x3, got {m.shape}")
            if not np.allclose(np.diag(m), 1.0, atol=1e-12):
                raise ConfigError("cross matrix diagonal must be 1")
            object.__setattr__(self, "cross", m)
        for p in PAIR_ORDER:
            if p not in self.laws:
                raise ConfigError(f"missing exchange law for pair {p}")

    def exchange_from_voltages(
        self,
        v_x,
        plunger_offsets=(0.0, 0.0, 0.0),
        apply_cross: bool = False,
    ) -> ExchangeVector:
        """Exchange couplings (Hz) for virtual barrier voltages (pair order).

        Cross-talk between barriers is opt-in; the detuning penalty applies
        whenever plunger offsets are nonzero.
        """
        v = np.asarray(v_x, dtype=float)
        if v.shape != (3,):
            raise ValueError(f"expected 3 barrier voltages, got {v.shape}")
        if apply_cross and self.cross is not None:
            finite = np.where(np.isinf(v), 0.0, v)
            mixed = self.cross @ finite
            v = np.where(np.isinf(v), v, mixed)
        j = {p: float(self.laws[p].j_hz(v[i])) for i, p in enumerate(PAIR_ORDER)}
        if np.any(np.asarray(plunger_offsets) != 0.0):
            pen = detuning_penalty(plunger_offsets, self.sensitivities)
            j = {p: j[p] * pen[p] for p in PAIR_ORDER}
        return ExchangeVector(j12=j["12"], j23=j["23"], j13=j["13"])

    def voltages_for_exchange(self, j: ExchangeVector) -> np.ndarray:
        """Barrier voltages (pair order) hitting ``j`` with cross-talk off;
        couplings of exactly zero map to ``-inf``."""
        out = []
        for pair, val in zip(PAIR_ORDER, (j.j12, j.j13, j.j23)):
            out.append(-np.inf if val == 0.0 else self.laws[pair].v_for(val))
        return np.array(out)

    def _segments(self, pulse: PulseSpec, draw: NoiseDraw, apply_cross: bool):
        """Piecewise-constant (ExchangeVector, duration) segments of a pulse."""
        dv = draw.voltage_offsets_v
        plungers = np.asarray(pulse.plunger_offsets_v, dtype=float) + dv[:3]
        v_target = np.asarray(pulse.v_x, dtype=float) + dv[3:]
        segs = []
        if pulse.ramp_s > 0.0:
            v_idle = np.full(3, self.idle_v) + dv[3:]
            dt = pulse.ramp_s / 16.0
            for k in range(16):
                frac = (k + 0.5) / 16.0
                segs.append((v_idle + frac * (v_target - v_idle), plungers, dt))
        segs.append((v_target, plungers, pulse.duration_s))
        if pulse.ramp_s > 0.0:
            dt = pulse.ramp_s / 16.0
            v_idle = np.full(3, self.idle_v) + dv[3:]
            for k in range(16):
                frac = 1.0 - (k + 0.5) / 16.0
                segs.append((v_idle + frac * (v_target - v_idle), plungers, dt))
        out = []
        for v, plungers_k, dt in segs:
            j = self.exchange_from_voltages(v, plungers_k, apply_cross=apply_cross)
            out.append((j, dt))
        return out

    def simulate_pulse(
        self,
        rho: np.ndarray,
        pulse: PulseSpec,
        draw: NoiseDraw | None = None,
        apply_cross: bool = False,
    ) -> np.ndarray:
        """Propagate a density matrix through one pulse under a noise draw.

        Barrier cross-talk is opt-in per experiment (``apply_cross``); a
        device without a cross matrix ignores the flag.
        """
        if draw is None:
            draw = NoiseDraw.none()
        apply_cross = apply_cross and self.cross is not None
        fields = FieldConfig(
            f_uniform_hz=self.fields.f_uniform_hz,
            gradients_hz=tuple(
                np.asarray(self.fields.gradients_hz) + draw.gradients_hz
            ),
        )
        segments = [
            (hilbert.build_hamiltonian(j, fields), dt)
            for j, dt in self._segments(pulse, draw, apply_cross)
        ]
        return hilbert.evolve_piecewise(rho, segments)

    def with_noise(self, noise: NoiseConfig) -> "DeviceModel":
        return replace(self, noise=noise)


def default_device() -> DeviceModel:
    """Reference device: printed compensation and cross matrices, exchange
    laws spanning 1 MHz at 0 V to 200 MHz at 100 mV, moderate detuning
    curvature, no noise."""
    return DeviceModel(
        sensitivities={
            "12": DetuningSensitivity(alpha_tilt=2.0e3, alpha_dimple=8.0e2),
            "13": DetuningSensitivity(alpha_tilt=5.0e2, alpha_dimple=2.0e3),
            "23": DetuningSensitivity(alpha_tilt=2.0e3, alpha_dimple=8.0e2),
        },
    )


def load_device(path) -> DeviceModel:
    """Build a device from a JSON config file; missing keys use defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read device config {path}: {exc}") from exc
    return device_from_dict(raw)


def device_from_dict(raw: dict) -> DeviceModel:
    base = default_device()
    kwargs = {}
    if "compensation_matrix" in raw:
        kwargs["compensation"] = CompensationMatrix(np.asarray(raw["compensation_matrix"]))
    if "cross_matrix" in raw:
        cm = raw["cross_matrix"]
        kwargs["cross"] = None if cm is None else np.asarray(cm, dtype=float)
    if "exchange_law" in raw:
        laws = dict(base.laws)
        for pair, d in raw["exchange_law"].items():
            if pair not in PAIR_ORDER:
                raise ConfigError(f"unknown exchange pair {pair!r}")
            try:
                laws[pair] = ExchangeLaw(d["A_hz"], d["B_per_v"], d.get("C", 0.0))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"bad exchange law for pair {pair}: {exc}") from exc
        kwargs["laws"] = laws
    if "dss" in raw:
        dss = raw["dss"]
        if "location_v" in dss:
            kwargs["dss_location_v"] = tuple(dss["location_v"])
        if "curvature" in dss:
            sens = {}
            for pair, ab in dss["curvature"].items():
                if pair not in PAIR_ORDER:
                    raise ConfigError(f"unknown exchange pair {pair!r}")
                sens[pair] = DetuningSensitivity(ab[0], ab[1])
            kwargs["sensitivities"] = sens
    if "noise" in raw:
        n = raw["noise"]
        kwargs["noise"] = NoiseConfig(
            voltage_sigma_v=_seq_or_scalar(n.get("voltage_sigma_v", 0.0)),
            gradient_sigma_hz=_seq_or_scalar(n.get("gradient_sigma_hz", 0.0)),
            seed=int(n.get("seed", 0)),
        )
    if "fields" in raw:
        fr = raw["fields"]
        try:
            kwargs["fields"] = FieldConfig(
                f_uniform_hz=float(fr.get("f_uniform_hz", 0.0)),
                gradients_hz=tuple(fr.get("gradients_hz", (0.0, 0.0, 0.0))),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad field config: {exc}") from exc
    if "pulse_s" in raw:
        kwargs["pulse_s"] = float(raw["pulse_s"])
    if "idle_v" in raw:
        kwargs["idle_v"] = float(raw["idle_v"])
    try:
        return replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid device config: {exc}") from exc


def _seq_or_scalar(x):
    return tuple(x) if isinstance(x, (list, tuple)) else float(x)


def fingerpinch_map(
    device: DeviceModel,
    pairs: tuple[str, str],
    v1: np.ndarray,
    v2: np.ndarray,
    hadamard: bool = False,
    duration_s: float | None = None,
    apply_cross: bool | None = None,
) -> np.ndarray:
    """P0 landscape of a fixed-duration exchange pulse over a barrier
    voltage grid (the classic fingerpinch pattern of concentric arcs).

    Args:
        pairs: the two swept pairs, e.g. ``("12", "23")``; the third
            coupling stays off.
        v1, v2: swept virtual barrier voltages.
        hadamard: sandwich the pulse between ideal Hadamard rotations
            (needed to resolve rotations about the x-like axes).
        apply_cross: override the device's cross-talk default.

    Returns:
        Array of shape ``(len(v2), len(v1))`` with P0 per cell.
    """
    for p in pairs:
        if p not in PAIR_ORDER:
            raise ConfigError(f"unknown exchange pair {p!r}")
    if pairs[0] == pairs[1]:
        raise ConfigError("fingerpinch needs two distinct pairs")
    duration_s = device.pulse_s if duration_s is None else duration_s
    if apply_cross is None:
        apply_cross = device.cross is not None
    rho0 = hilbert.initialize_singlet()
    if hadamard:
        h2 = (1.0 / math.sqrt(2.0)) * np.array([[1, 1], [1, -1]], dtype=complex)
        h8 = hilbert.embed_qubit_unitary(h2)
        rho0 = h8 @ rho0 @ h8.conj().T
    out = np.empty((v2.size, v1.size))
    idx = {p: i for i, p in enumerate(PAIR_ORDER)}
    for r, vb in enumerate(np.asarray(v2, dtype=float)):
        for c, va in enumerate(np.asarray(v1, dtype=float)):
            v_x = np.full(3, -np.inf)
            v_x[idx[pairs[0]]] = va
            v_x[idx[pairs[1]]] = vb
            j = device.exchange_from_voltages(v_x, apply_cross=apply_cross)
            h = hilbert.build_hamiltonian(j, device.fields)
            rho = hilbert.evolve_const(rho0, h, duration_s)
            if hadamard:
                rho = h8 @ rho @ h8.conj().T
            out[r, c] = hilbert.measure_p0(rho)
    return out
