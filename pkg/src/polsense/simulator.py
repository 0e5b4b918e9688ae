"""
polsense.simulator
------------------

Ground-truth channel trajectories and noisy Jones-matrix measurements.

Rotation angles follow independent Gaussian random walks whose per-step
variances come from a :class:`PerturbationProfile`; PDL and DGD stay fixed.
Every measured matrix is the exact cascade response plus circular complex
Gaussian noise with ``E|z|^2 = sigma2_z`` per entry.

Randomness is drawn from named substreams of one master seed (``init``,
``walk`` and ``noise``, the latter two split further per time step), so
changing the noise level leaves the channel trajectory untouched.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .polmodel import (ChannelParams, FrequencyGrid, FrequencyResponse,
                       channel_response)

__all__ = [
    "PerturbationProfile",
    "NoiseModel",
    "ScenarioConfig",
    "Measurements",
    "MeasurementSeries",
    "substream",
    "sample_initial",
    "evolve",
    "add_noise",
    "generate_scenario",
    "snr_to_sigma2",
]

_STREAMS = {"init": 0, "walk": 1, "noise": 2}

DEFAULT_SECTION = 2
DEFAULT_WINDOW = (15, 35)
DEFAULT_VARIANCE = 0.1


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent generator for stream ``name`` (optionally per index) of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_STREAMS[name],) + tuple(index))
    return np.random.default_rng(ss)


@dataclass(frozen=True, eq=False)
class PerturbationProfile:
    """
    Random-walk variances, ``sigma2[n, k]`` for ``phi`` and ``rho2[n, k]``
    for ``psi`` (rad^2), shape ``(N, K + 1)``. Column 0 is unused since the
    walk starts at ``k = 1``.
    """

    sigma2: np.ndarray
    rho2: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma2, dtype=float)
        r = np.array(self.rho2, dtype=float)
        if s.ndim != 2 or s.shape != r.shape or s.shape[1] < 1:
            raise ConfigError(f"sigma2 and rho2 must be matching (N, K+1) arrays, "
                              f"got {s.shape} and {r.shape}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(r))):
            raise ConfigError("walk variances must be finite")
        if np.any(s < 0) or np.any(r < 0):
            raise ConfigError("walk variances must be nonnegative")
        s.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "sigma2", s)
        object.__setattr__(self, "rho2", r)

    @property
    def N(self) -> int:
        return self.sigma2.shape[0]

    @property
    def K(self) -> int:
        return self.sigma2.shape[1] - 1

    @classmethod
    def zeros(cls, N: int, K: int):
        return cls(np.zeros((N, K + 1)), np.zeros((N, K + 1)))

    @classmethod
    def window(cls, N: int, K: int, section: int = DEFAULT_SECTION,
               window: Tuple[int, int] = DEFAULT_WINDOW,
               sigma2: float = DEFAULT_VARIANCE, rho2: Optional[float] = None):
        """Constant variances on ``section`` (1-based) for ``k`` in ``window`` (inclusive)."""
        if not 1 <= section <= N:
            raise ConfigError(f"section {section} outside 1..{N}")
        rho2 = sigma2 if rho2 is None else rho2
        s = np.zeros((N, K + 1))
        r = np.zeros((N, K + 1))
        k1, k2 = max(window[0], 1), min(window[1], K)
        s[section - 1, k1:k2 + 1] = sigma2
        r[section - 1, k1:k2 + 1] = rho2
        return cls(s, r)

    def __eq__(self, other):
        if not isinstance(other, PerturbationProfile):
            return NotImplemented
        return np.array_equal(self.sigma2, other.sigma2) and np.array_equal(self.rho2, other.rho2)


@dataclass(frozen=True)
class NoiseModel:
    """Per-entry variance ``E|z|^2`` of the Jones-matrix estimation error."""

    sigma2_z: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma2_z) and self.sigma2_z >= 0):
            raise ConfigError(f"sigma2_z must be finite and >= 0, got {self.sigma2_z}")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """
    Everything needed to generate one scenario.

    When ``perturbation`` is omitted, section 2 (or the only section when
    ``N == 1``) walks with variance 0.1 for ``k`` in ``[15, 35]``.
    """

    N: int = 5
    K: int = 50
    tau: float = 1.0
    L: int = 6
    gamma_range: Tuple[float, float] = (0.07, 0.17)
    angle_range: Tuple[float, float] = (-np.pi, np.pi)
    perturbation: Optional[PerturbationProfile] = None
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.K < 0 or self.L < 1:
            raise ConfigError(f"need N >= 1, K >= 0, L >= 1; got N={self.N}, K={self.K}, L={self.L}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError(f"tau must be positive, got {self.tau}")
        for name in ("gamma_range", "angle_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ConfigError(f"{name} must be a finite [low, high] pair, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.perturbation is None:
            object.__setattr__(self, "perturbation", PerturbationProfile.window(
                self.N, self.K, section=min(DEFAULT_SECTION, self.N)))
        elif (self.perturbation.N, self.perturbation.K) != (self.N, self.K):
            raise ConfigError(
                f"perturbation profile is {self.perturbation.N}x{self.perturbation.K + 1}, "
                f"expected {self.N}x{self.K + 1}")

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.canonical(self.L, self.tau)

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if ("N" in changes or "K" in changes) and "perturbation" not in changes:
            fields["perturbation"] = None
        fields.update(changes)
        return ScenarioConfig(**fields)

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return all(getattr(self, k) == getattr(other, k) for k in self.__dataclass_fields__)


@dataclass(frozen=True)
class Measurements:
    """What an estimator is allowed to see: the grid and the noisy responses."""

    grid: FrequencyGrid
    responses: Tuple[FrequencyResponse, ...]

    def __len__(self):
        return len(self.responses)

    def __getitem__(self, k):
        return self.responses[k]

    def __iter__(self):
        return iter(self.responses)


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    """
    Noisy responses ``noisy[k]`` for ``k = 0..K`` together with the ground
    truth that produced them. Estimators get :attr:`observed` only.
    """

    grid: FrequencyGrid
    noisy: np.ndarray
    clean: np.ndarray
    truth: Tuple[ChannelParams, ...]

    @property
    def K(self) -> int:
        return len(self.truth) - 1

    @property
    def observed(self) -> Measurements:
        return Measurements(self.grid, tuple(FrequencyResponse(self.grid, m) for m in self.noisy))

    def truth_array(self) -> np.ndarray:
        """Ground truth as a ``(K + 1, N, 3)`` array of (gamma, phi, psi)."""
        return np.stack([np.stack([t.gamma, t.phi, t.psi], axis=1) for t in self.truth])


def sample_initial(config: ScenarioConfig, rng: np.random.Generator) -> ChannelParams:
    gamma = rng.uniform(*config.gamma_range, size=config.N)
    phi = rng.uniform(*config.angle_range, size=config.N)
    psi = rng.uniform(*config.angle_range, size=config.N)
    return ChannelParams(gamma, phi, psi, config.tau)


def evolve(theta_prev: ChannelParams, profile: PerturbationProfile, k: int,
           rng: np.random.Generator) -> ChannelParams:
    """One random-walk step of the rotation angles; ``k`` indexes the profile column."""
    if not 1 <= k <= profile.K:
        raise ValueError(f"step {k} outside 1..{profile.K}")
    d_phi = rng.standard_normal(theta_prev.N) * np.sqrt(profile.sigma2[:, k])
    d_psi = rng.standard_normal(theta_prev.N) * np.sqrt(profile.rho2[:, k])
    return ChannelParams(theta_prev.gamma, theta_prev.phi + d_phi,
                         theta_prev.psi + d_psi, theta_prev.tau)


def _complex_noise(shape, sigma2_z, rng):
    return np.sqrt(sigma2_z / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_noise(resp: FrequencyResponse, model: NoiseModel,
              rng: np.random.Generator) -> FrequencyResponse:
    if model.sigma2_z == 0:
        return resp
    z = _complex_noise(resp.matrices.shape, model.sigma2_z, rng)
    return FrequencyResponse(resp.grid, resp.matrices + z)


def generate_scenario(config: ScenarioConfig) -> MeasurementSeries:
    grid = config.grid
    theta = sample_initial(config, substream(config.seed, "init"))
    truth = [theta]
    for k in range(1, config.K + 1):
        theta = evolve(theta, config.perturbation, k, substream(config.seed, "walk", k))
        truth.append(theta)
    clean = np.stack([channel_response(t, grid).matrices for t in truth])
    noisy = np.stack([
        add_noise(FrequencyResponse(grid, clean[k]), config.noise,
                  substream(config.seed, "noise", k)).matrices
        for k in range(config.K + 1)])
    clean.setflags(write=False)
    noisy.setflags(write=False)
    return MeasurementSeries(grid, noisy, clean, tuple(truth))


def snr_to_sigma2(clean: np.ndarray, snr_db: float) -> float:
    """Noise variance giving a per-entry SNR of ``snr_db`` against ``clean`` responses."""
    return float(np.mean(np.abs(np.asarray(clean)) ** 2) * 10 ** (-snr_db / 10))


def stack_responses(responses: Sequence[FrequencyResponse]) -> np.ndarray:
    return np.stack([r.matrices for r in responses])
