"""
polsense.polmodel
-----------------

Forward model of a fiber built from ``N`` concatenated sections. Each
section applies a DGD element ``T``, then a rotation ``R`` and finally a
PDL element ``Gamma``; the overall Jones matrix at angular frequency
``omega`` is

    H(omega) = A_N T(omega) A_{N-1} T(omega) ... A_1 T(omega),
    A_n = Gamma(gamma_n) R(phi_n, psi_n).

Jones matrices are plain ``(2, 2)`` complex ndarrays; stacks of them are
``(..., 2, 2)`` arrays. All containers in this module are immutable.
"""

from dataclasses import dataclass
from typing import Iterable, List, NamedTuple

import numpy as np

from .errors import GridError

__all__ = [
    "SectionParams",
    "ChannelParams",
    "FrequencyGrid",
    "FrequencyResponse",
    "TapSequence",
    "make_pdl",
    "make_rotation",
    "make_dgd",
    "section_matrix",
    "channel_response",
    "impulse_taps",
    "response_distance",
]

# Two unit-circle samples closer than this are treated as the same point.
_ALIAS_TOL = 1e-9


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class SectionParams(NamedTuple):
    """PDL extinction (nepers), rotation angle and rotation phase (rad)."""

    gamma: float
    phi: float
    psi: float


@dataclass(frozen=True, eq=False)
class ChannelParams:
    """
    Parameters of an ``N``-section channel.

    Attributes
    ----------
    gamma, phi, psi : ndarray, shape (N,)
        Per-section PDL extinction and rotation angles, section 1 first
        (closest to the transmitter). Angles are kept unwrapped.
    tau : float
        DGD per section, shared by all sections.
    """

    gamma: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        g = _frozen(self.gamma, float).reshape(-1)
        p = _frozen(self.phi, float).reshape(-1)
        s = _frozen(self.psi, float).reshape(-1)
        if not (g.shape == p.shape == s.shape):
            raise ValueError("gamma, phi and psi must have the same length")
        if g.size < 1:
            raise ValueError("a channel needs at least one section")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "phi", p)
        object.__setattr__(self, "psi", s)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def N(self) -> int:
        return self.gamma.size

    @property
    def sections(self) -> List[SectionParams]:
        return [SectionParams(float(g), float(p), float(s))
                for g, p, s in zip(self.gamma, self.phi, self.psi)]

    @classmethod
    def from_sections(cls, sections: Iterable, tau: float = 1.0):
        arr = np.asarray([tuple(s) for s in sections], dtype=float)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], tau)

    @classmethod
    def zeros(cls, N: int, tau: float = 1.0):
        z = np.zeros(N)
        return cls(z, z, z, tau)

    def as_vector(self) -> np.ndarray:
        """Interleaved ``[gamma_1, phi_1, psi_1, gamma_2, ...]`` vector."""
        return np.stack([self.gamma, self.phi, self.psi], axis=1).reshape(-1)

    @classmethod
    def from_vector(cls, vec, tau: float = 1.0):
        v = np.asarray(vec, dtype=float).reshape(-1, 3)
        return cls(v[:, 0], v[:, 1], v[:, 2], tau)

    def abs_cos_phi(self) -> np.ndarray:
        return np.abs(np.cos(self.phi))

    def __eq__(self, other):
        if not isinstance(other, ChannelParams):
            return NotImplemented
        return (self.tau == other.tau
                and np.array_equal(self.gamma, other.gamma)
                and np.array_equal(self.phi, other.phi)
                and np.array_equal(self.psi, other.psi))

    def __repr__(self):
        return (f"ChannelParams(gamma={self.gamma.tolist()}, phi={self.phi.tolist()}, "
                f"psi={self.psi.tolist()}, tau={self.tau})")


def min_phase_gap(phases) -> float:
    """Smallest distance between the points ``exp(1j*phases)`` on the unit circle."""
    a = np.sort(np.mod(phases, 2 * np.pi))
    if a.size < 2:
        return np.inf
    gaps = np.diff(np.append(a, a[0] + 2 * np.pi))
    return float(2 * np.sin(min(gaps.min(), np.pi) / 2))


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """
    Angular frequencies at which a response is sampled.

    The sample points must be distinct on the unit circle, i.e. the phase
    factors ``exp(1j*omega*tau)`` must be pairwise distinct, otherwise two
    samples carry the same information.
    """

    omegas: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        w = _frozen(self.omegas, float).reshape(-1)
        if w.size < 1:
            raise GridError("frequency grid is empty")
        if not np.all(np.isfinite(w)):
            raise GridError("frequency grid contains non-finite values")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise GridError(f"tau must be positive, got {self.tau}")
        if min_phase_gap(w * self.tau) < _ALIAS_TOL:
            raise GridError("frequency grid is aliased: phase factors repeat")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def canonical(cls, L: int, tau: float = 1.0):
        """``L`` equispaced samples per free spectral range, ``omega_i tau = 2 pi i / L``."""
        if L < 1:
            raise GridError(f"L must be at least 1, got {L}")
        return cls(2 * np.pi * np.arange(L) / (L * tau), tau)

    @property
    def L(self) -> int:
        return self.omegas.size

    @property
    def phases(self) -> np.ndarray:
        """Unit-circle points ``z_i = exp(1j*omega_i*tau)``."""
        return np.exp(1j * self.omegas * self.tau)

    def is_canonical(self) -> bool:
        ref = 2 * np.pi * np.arange(self.L) / self.L
        return bool(np.allclose(self.omegas * self.tau, ref, rtol=0, atol=1e-12))

    def __eq__(self, other):
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self.tau == other.tau and np.array_equal(self.omegas, other.omegas)


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Jones matrices ``matrices[i]`` sampled at ``grid.omegas[i]``."""

    grid: FrequencyGrid
    matrices: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrices, complex)
        if m.shape != (self.grid.L, 2, 2):
            raise GridError(
                f"expected matrices of shape ({self.grid.L}, 2, 2), got {m.shape}")
        object.__setattr__(self, "matrices", m)

    @property
    def L(self) -> int:
        return self.grid.L

    def energy(self) -> float:
        """Sum of squared Frobenius norms over the grid."""
        return float(np.sum(np.abs(self.matrices) ** 2))


@dataclass(frozen=True, eq=False)
class TapSequence:
    """
    Matrix coefficients ``h_0 .. h_D`` of ``H(z) = sum_m h_m z**m`` with
    ``z = exp(1j*omega*tau)``.
    """

    taps: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        t = _frozen(self.taps, complex)
        if t.ndim != 3 or t.shape[1:] != (2, 2) or t.shape[0] < 1:
            raise ValueError(f"taps must have shape (D+1, 2, 2), got {t.shape}")
        object.__setattr__(self, "taps", t)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def degree(self) -> int:
        return self.taps.shape[0] - 1

    def __len__(self):
        return self.taps.shape[0]

    def evaluate(self, grid: FrequencyGrid) -> FrequencyResponse:
        if grid.tau != self.tau:
            raise GridError("grid and taps use different tau")
        powers = grid.phases[:, None] ** np.arange(len(self))[None, :]
        return FrequencyResponse(grid, np.einsum("im,mab->iab", powers, self.taps))


def make_pdl(gamma: float) -> np.ndarray:
    """PDL element ``diag(exp(gamma/2), exp(-gamma/2))``."""
    return np.array([[np.exp(gamma / 2), 0], [0, np.exp(-gamma / 2)]], dtype=complex)


def make_rotation(phi: float, psi: float) -> np.ndarray:
    """Unitary rotation with angle ``phi`` and phase ``psi``."""
    c, s = np.cos(phi), np.sin(phi)
    e = np.exp(1j * psi)
    return np.array([[c, 1j * e * s], [1j * np.conj(e) * s, c]], dtype=complex)


def make_dgd(omega: float, tau: float) -> np.ndarray:
    """DGD element ``diag(1, exp(1j*omega*tau))``."""
    return np.array([[1, 0], [0, np.exp(1j * omega * tau)]], dtype=complex)


def section_matrix(gamma, phi, psi) -> np.ndarray:
    """
    Frequency-independent part ``Gamma(gamma) R(phi, psi)`` of a section.

    Broadcasts: array inputs of shape ``S`` give an ``S + (2, 2)`` stack.
    """
    gamma, phi, psi = np.broadcast_arrays(*(np.asarray(x, dtype=float)
                                            for x in (gamma, phi, psi)))
    up, dn = np.exp(gamma / 2), np.exp(-gamma / 2)
    c, s = np.cos(phi), np.sin(phi)
    e = np.exp(1j * psi)
    out = np.empty(gamma.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = up * c
    out[..., 0, 1] = up * 1j * e * s
    out[..., 1, 0] = dn * 1j * np.conj(e) * s
    out[..., 1, 1] = dn * c
    return out


def channel_response(params: ChannelParams, grid: FrequencyGrid) -> FrequencyResponse:
    """Cascade response on ``grid``; section 1 acts first, section N last."""
    if grid.tau != params.tau:
        raise GridError("grid and channel use different tau")
    A = section_matrix(params.gamma, params.phi, params.psi)
    z = grid.phases
    H = np.broadcast_to(np.eye(2, dtype=complex), (grid.L, 2, 2)).copy()
    for n in range(params.N):
        H[:, 1, :] *= z[:, None]
        H = A[n] @ H
    return FrequencyResponse(grid, H)


def impulse_taps(params: ChannelParams) -> TapSequence:
    """
    Exact tap representation of the cascade by polynomial multiplication.

    Each section maps ``G(z) -> A diag(1, z) G(z)``: the first row keeps its
    degree and the second row moves up by one, so ``N`` sections give
    ``N + 1`` taps.
    """
    A = section_matrix(params.gamma, params.phi, params.psi)
    G = np.eye(2, dtype=complex)[None]
    for n in range(params.N):
        shifted = np.zeros((G.shape[0] + 1, 2, 2), dtype=complex)
        shifted[:-1, 0, :] = G[:, 0, :]
        shifted[1:, 1, :] = G[:, 1, :]
        G = A[n] @ shifted
    return TapSequence(G, params.tau)


def response_distance(a: FrequencyResponse, b: FrequencyResponse) -> float:
    """Sum over the grid of squared Frobenius distances."""
    if a.grid != b.grid:
        raise GridError("responses are sampled on different grids")
    return float(np.sum(np.abs(a.matrices - b.matrices) ** 2))
