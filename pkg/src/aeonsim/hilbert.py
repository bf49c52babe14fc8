"""Exact dynamics of three exchange-coupled spins-1/2.

Everything in this module works on the full 8-dimensional product space of
three spins.  The product basis is ordered ``|s1 s2 s3>`` with dot 1 as the
most significant bit and spin-up before spin-down, i.e. index
``4*d1 + 2*d2 + d3`` where ``d_i = 0`` for up and ``1`` for down.

Exchange couplings and magnetic fields are given in Hz; the factor of 2*pi
that converts them to angular frequencies is applied exactly once, inside
:func:`build_hamiltonian` (and :func:`qubit_block`).  Hamiltonians are
therefore in rad/s and evolution times in seconds.

The encoded qubit lives in the two total-spin-1/2 doublets: ``|0>`` is the
state whose outer pair (dots 1 and 3) forms a singlet, ``|1>`` the
orthogonal doublet state with the outer pair in a triplet.  The spin
projection m_S = +-1/2 of each doublet is an unobserved gauge degree of
freedom, and the total-spin-3/2 quadruplet is leakage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

G_FACTOR = 2.0
"""Electron g-factor used for tesla -> Hz conversion (fixed by design)."""

BOHR_MAGNETON_HZ_PER_T = 13.996244936e9
"""mu_B / h in Hz/T."""

DIM = 8

_SZ = np.diag([0.5, -0.5]).astype(complex)
_SX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
_SY = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


def _embed(op: np.ndarray, dot: int) -> np.ndarray:
    """Embed a single-spin operator acting on ``dot`` (1, 2 or 3)."""
    ops = [_ID2, _ID2, _ID2]
    ops[dot - 1] = op
    return np.kron(ops[0], np.kron(ops[1], ops[2]))


# Spin operators S_{x,y,z} for each dot, in the product basis.
SPIN_OPS = {
    dot: tuple(_embed(c, dot) for c in (_SX, _SY, _SZ)) for dot in (1, 2, 3)
}

SZ_TOTAL = sum(SPIN_OPS[d][2] for d in (1, 2, 3))


def _dot_product(i: int, j: int) -> np.ndarray:
    return sum(SPIN_OPS[i][c] @ SPIN_OPS[j][c] for c in range(3))


_EXCHANGE_TERMS = {
    "12": _dot_product(1, 2),
    "23": _dot_product(2, 3),
    "13": _dot_product(1, 3),
}


@dataclass(frozen=True)
class ExchangeVector:
    """Exchange couplings (Hz) for the three dot pairs."""

    j12: float
    j23: float
    j13: float

    @property
    def j_plus(self) -> float:
        """(J12 + J23) / 2."""
        return 0.5 * (self.j12 + self.j23)

    @property
    def j_minus(self) -> float:
        """(J12 - J23) / 2."""
        return 0.5 * (self.j12 - self.j23)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.j12, self.j23, self.j13)


@dataclass(frozen=True)
class FieldConfig:
    """Magnetic field environment.

    Attributes:
        f_uniform_hz: uniform Zeeman splitting in Hz (already converted
            from tesla by the caller or :func:`zeeman_from_tesla`).
        gradients_hz: per-dot deviations ``b_i`` from the uniform field, Hz.
    """

    f_uniform_hz: float = 0.0
    gradients_hz: tuple[float, float, float] = (0.0, 0.0, 0.0)


def zeeman_from_tesla(b_tesla: float) -> float:
    """Uniform Zeeman frequency (Hz) of a field given in tesla, g = 2."""
    return G_FACTOR * BOHR_MAGNETON_HZ_PER_T * b_tesla


def build_hamiltonian(j: ExchangeVector, fields: FieldConfig | None = None) -> np.ndarray:
    """Three-spin Hamiltonian (rad/s) in the 8-dim product basis.

    H = sum_pairs 2*pi*J_ij S_i.S_j + sum_i 2*pi*(f_B + b_i) S_z,i

    Args:
        j: pairwise exchange couplings in Hz.
        fields: Zeeman terms; omitted means zero field.

    Returns:
        Hermitian ``(8, 8)`` complex array.
    """
    h = 2.0 * np.pi * (
        j.j12 * _EXCHANGE_TERMS["12"]
        + j.j23 * _EXCHANGE_TERMS["23"]
        + j.j13 * _EXCHANGE_TERMS["13"]
    )
    if fields is not None:
        for dot, b in zip((1, 2, 3), fields.gradients_hz):
            h = h + 2.0 * np.pi * (fields.f_uniform_hz + b) * SPIN_OPS[dot][2]
    return h


def eigenspectrum(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending, rad/s) and eigenvectors of a Hamiltonian.

    Raises:
        ValueError: if ``h`` is not Hermitian within 1e-10.
    """
    h = np.asarray(h)
    if h.shape != (DIM, DIM):
        raise ValueError(f"expected an (8, 8) Hamiltonian, got {h.shape}")
    if not np.allclose(h, h.conj().T, atol=1e-10 * max(1.0, np.abs(h).max())):
        raise ValueError("Hamiltonian is not Hermitian within tolerance")
    return np.linalg.eigh(h)


def _basis_vector(*indices_amplitudes: tuple[int, float]) -> np.ndarray:
    v = np.zeros(DIM, dtype=complex)
    for idx, amp in indices_amplitudes:
        v[idx] = amp
    return v


def _build_encoded_basis():
    s2 = 1.0 / np.sqrt(2.0)
    s3 = 1.0 / np.sqrt(3.0)
    s6 = 1.0 / np.sqrt(6.0)
    s23 = np.sqrt(2.0 / 3.0)
    # Product-basis indices: 4*d1 + 2*d2 + d3, 0 = up.
    zero_up = _basis_vector((0b001, s2), (0b100, -s2))
    zero_dn = _basis_vector((0b011, s2), (0b110, -s2))
    one_up = _basis_vector((0b010, s23), (0b001, -s6), (0b100, -s6))
    one_dn = _basis_vector((0b011, s6), (0b110, s6), (0b101, -s23))
    quad = [
        _basis_vector((0b000, 1.0)),
        _basis_vector((0b010, s3), (0b001, s3), (0b100, s3)),
        _basis_vector((0b011, s3), (0b110, s3), (0b101, s3)),
        _basis_vector((0b111, 1.0)),
    ]
    return zero_up, zero_dn, one_up, one_dn, quad


@dataclass(frozen=True)
class EncodedBasis:
    """Encoded qubit basis vectors and subspace projectors.

    ``zero``/``one`` hold the two gauge copies (m_S = +1/2 then -1/2) of the
    logical states; ``leakage`` the four quadruplet states.  ``p0``, ``p1``
    and ``p_leak`` are the corresponding projectors and resolve the identity.
    """

    zero: tuple[np.ndarray, np.ndarray]
    one: tuple[np.ndarray, np.ndarray]
    leakage: tuple[np.ndarray, ...]
    p0: np.ndarray
    p1: np.ndarray
    p_leak: np.ndarray

    def gauge_sector(self, m_index: int) -> np.ndarray:
        """(8, 2) isometry onto the qubit block of one gauge sector.

        Columns are ``|0, m>`` and ``|1, m>``; ``m_index`` 0 is m_S = +1/2.
        """
        return np.column_stack([self.zero[m_index], self.one[m_index]])


def _projector(vectors) -> np.ndarray:
    p = np.zeros((DIM, DIM), dtype=complex)
    for v in vectors:
        p += np.outer(v, v.conj())
    return p


_Z_UP, _Z_DN, _O_UP, _O_DN, _QUAD = _build_encoded_basis()

ENCODED = EncodedBasis(
    zero=(_Z_UP, _Z_DN),
    one=(_O_UP, _O_DN),
    leakage=tuple(_QUAD),
    p0=_projector([_Z_UP, _Z_DN]),
    p1=_projector([_O_UP, _O_DN]),
    p_leak=_projector(_QUAD),
)


def initialize_singlet() -> np.ndarray:
    """Density matrix after outer-pair singlet preparation.

    The preparation leaves dot 2 unpolarized, so the state is the equal
    mixture of ``|0>`` over both gauge sectors: rank 2, P0 = 1, zero leakage.
    """
    return 0.5 * (
        np.outer(_Z_UP, _Z_UP.conj()) + np.outer(_Z_DN, _Z_DN.conj())
    )


def _check_density(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"expected an (8, 8) density matrix, got {rho.shape}")
    if abs(np.trace(rho).real - 1.0) > 1e-9 or abs(np.trace(rho).imag) > 1e-9:
        raise ValueError("density matrix trace differs from 1")
    return rho


def propagator(h: np.ndarray, tau_s: float) -> np.ndarray:
    """Unitary exp(-i H tau) via eigendecomposition.

    Args:
        h: Hermitian Hamiltonian, rad/s.
        tau_s: duration in seconds; must be non-negative.
    """
    if tau_s < 0:
        raise ValueError(f"negative evolution time: {tau_s}")
    vals, vecs = eigenspectrum(h)
    phase = np.exp(-1j * vals * tau_s)
    return (vecs * phase) @ vecs.conj().T


def evolve_const(rho: np.ndarray, h: np.ndarray, tau_s: float) -> np.ndarray:
    """Evolve a density matrix under a constant Hamiltonian for ``tau_s``."""
    rho = _check_density(rho)
    u = propagator(h, tau_s)
    return u @ rho @ u.conj().T


def evolve_piecewise(rho: np.ndarray, segments) -> np.ndarray:
    """Evolve through ``segments`` = iterable of (hamiltonian, tau_s) in time order."""
    rho = _check_density(rho)
    for h, tau_s in segments:
        u = propagator(h, tau_s)
        rho = u @ rho @ u.conj().T
    return rho


def _population(rho: np.ndarray, proj: np.ndarray) -> float:
    p = np.trace(proj @ rho)
    if abs(p.imag) > 1e-9 or p.real < -1e-9 or p.real > 1 + 1e-9:
        raise ValueError(f"projector expectation out of range: {p}")
    return float(min(1.0, max(0.0, p.real)))


def measure_p0(rho: np.ndarray) -> float:
    """Population of the encoded ``|0>`` subspace (both gauge sectors)."""
    return _population(_check_density(rho), ENCODED.p0)


def leakage_population(rho: np.ndarray) -> float:
    """Population of the total-spin-3/2 quadruplet."""
    return _population(_check_density(rho), ENCODED.p_leak)


def qubit_block(j: ExchangeVector) -> np.ndarray:
    """Two-level Hamiltonian (rad/s) on the encoded qubit.

    H = -(1/2) * 2*pi * [sqrt(3) J_- sigma_x + (J13 - J_+) sigma_z]

    Equals the projection of :func:`build_hamiltonian` (at zero field) onto
    either gauge sector, up to a gauge-uniform multiple of the identity.
    """
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    return -np.pi * (
        np.sqrt(3.0) * j.j_minus * sx + (j.j13 - j.j_plus) * sz
    )


def project_qubit(op: np.ndarray, m_index: int = 0) -> np.ndarray:
    """Restrict an (8, 8) operator to the qubit block of one gauge sector."""
    iso = ENCODED.gauge_sector(m_index)
    return iso.conj().T @ np.asarray(op) @ iso


def embed_qubit_unitary(u2: np.ndarray) -> np.ndarray:
    """Lift a 2x2 qubit unitary to the 8-dim space.

    Acts identically on both gauge sectors and as the identity on the
    leakage quadruplet.
    """
    u2 = np.asarray(u2, dtype=complex)
    u8 = ENCODED.p_leak.copy()
    for m in (0, 1):
        iso = ENCODED.gauge_sector(m)
        u8 += iso @ u2 @ iso.conj().T
    return u8


def matrix_to_csv(m: np.ndarray) -> str:
    """Serialize a complex matrix as row-major CSV of re,im pairs.

    The first line is a header naming each column; basis order is the
    module-level product basis (``|s1 s2 s3>``, dot 1 most significant,
    spin-up first).
    """
    m = np.asarray(m, dtype=complex)
    cols = []
    for c in range(m.shape[1]):
        cols.extend([f"re{c}", f"im{c}"])
    lines = [",".join(cols)]
    for row in m:
        parts = []
        for z in row:
            parts.extend([repr(float(z.real)), repr(float(z.imag))])
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def matrix_from_csv(text: str) -> np.ndarray:
    """Inverse of :func:`matrix_to_csv`."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty matrix CSV")
    rows = []
    for ln in lines[1:]:
        try:
            vals = [float(x) for x in ln.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad matrix CSV value: {exc}") from exc
        if len(vals) % 2:
            raise ConfigError("matrix CSV row has an odd number of columns")
        rows.append([complex(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)])
    return np.array(rows, dtype=complex)
