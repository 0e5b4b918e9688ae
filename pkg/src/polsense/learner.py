"""
polsense.learner
----------------

Physics-based estimator: the cascade model itself is the trainable
function. Parameters are fitted by Adam on the loss

    loss(theta_hat) = sum_i || H_meas(omega_i) - H(omega_i; theta_hat) ||_F^2

with exact gradients from prefix/suffix products of the per-section
factors ``P_n = A_n diag(1, z)``. Tracking warm-starts each time step from
the previous solution.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, GridError
from .estimates import EstimateSeries
from .polmodel import ChannelParams, FrequencyResponse, section_matrix

__all__ = [
    "OptimizerConfig",
    "AdamState",
    "FitResult",
    "loss",
    "loss_gradient",
    "response_jacobian",
    "fit",
    "track",
]


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Adam settings. ``M`` iterations at ``k = 0``, ``M_track`` (default
    ``M``) for warm-started steps. ``grad_tol`` enables early stopping when
    the gradient norm drops below it. ``n_model`` fits a model with fewer
    sections than the channel has. With ``carry_state`` (default) tracking
    keeps the Adam moments and step count from one time step to the next,
    as a single optimizer reused over time would; otherwise every step
    starts from fresh moments.
    """

    M: int = 300
    alpha: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    M_track: Optional[int] = None
    grad_tol: Optional[float] = None
    n_model: Optional[int] = None
    carry_state: bool = True

    def __post_init__(self):
        if self.M_track is None:
            object.__setattr__(self, "M_track", self.M)
        if not (isinstance(self.M, (int, np.integer)) and self.M >= 1):
            raise ConfigError(f"M must be an integer >= 1, got {self.M}")
        if not (isinstance(self.M_track, (int, np.integer)) and self.M_track >= 1):
            raise ConfigError(f"M_track must be an integer >= 1, got {self.M_track}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ConfigError("grad_tol must be positive when set")
        if self.n_model is not None and self.n_model < 1:
            raise ConfigError("n_model must be >= 1 when set")


@dataclass(frozen=True, eq=False)
class AdamState:
    """First and second moment estimates and the number of steps taken."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, size: int):
        return cls(np.zeros(size), np.zeros(size), 0)


@dataclass(frozen=True, eq=False)
class FitResult:
    params: ChannelParams
    losses: np.ndarray
    final_loss: float
    grad_norm: float
    iterations: int = field(default=0)
    state: Optional[AdamState] = None


def _factors(vec, z):
    """Per-section factors ``P_n(z_i)``, shape (N, L, 2, 2), and the ``A_n``."""
    v = vec.reshape(-1, 3)
    A = section_matrix(v[:, 0], v[:, 1], v[:, 2])
    P = np.repeat(A[:, None], z.size, axis=1)
    P[..., :, 1] *= z[None, :, None]
    return A, P


def _section_derivatives(vec):
    """``dA_n/dgamma``, ``dA_n/dphi``, ``dA_n/dpsi``, shape (N, 3, 2, 2)."""
    v = vec.reshape(-1, 3)
    g, p, s = v[:, 0], v[:, 1], v[:, 2]
    up, dn = np.exp(g / 2), np.exp(-g / 2)
    c, sn = np.cos(p), np.sin(p)
    e = np.exp(1j * s)
    ec = np.conj(e)
    d = np.zeros((v.shape[0], 3, 2, 2), dtype=complex)
    # gamma
    d[:, 0, 0, 0] = 0.5 * up * c
    d[:, 0, 0, 1] = 0.5 * up * 1j * e * sn
    d[:, 0, 1, 0] = -0.5 * dn * 1j * ec * sn
    d[:, 0, 1, 1] = -0.5 * dn * c
    # phi
    d[:, 1, 0, 0] = -up * sn
    d[:, 1, 0, 1] = up * 1j * e * c
    d[:, 1, 1, 0] = dn * 1j * ec * c
    d[:, 1, 1, 1] = -dn * sn
    # psi
    d[:, 2, 0, 1] = -up * e * sn
    d[:, 2, 1, 0] = dn * ec * sn
    return d


def _prefix_suffix(A, P, z):
    # prefixes use the same operation order as channel_response so that the
    # loss at the true parameters is exactly zero
    N, L = P.shape[:2]
    eye = np.broadcast_to(np.eye(2, dtype=complex), (L, 2, 2))
    prefix = np.empty((N + 1, L, 2, 2), dtype=complex)
    suffix = np.empty((N + 1, L, 2, 2), dtype=complex)
    prefix[0] = eye
    suffix[N] = eye
    for n in range(N):
        H = prefix[n].copy()
        H[:, 1, :] *= z[:, None]
        prefix[n + 1] = A[n] @ H
        suffix[N - 1 - n] = suffix[N - n] @ P[N - 1 - n]
    return prefix, suffix


def _model(vec, z):
    v = vec.reshape(-1, 3)
    A = section_matrix(v[:, 0], v[:, 1], v[:, 2])
    H = np.broadcast_to(np.eye(2, dtype=complex), (z.size, 2, 2)).copy()
    for n in range(A.shape[0]):
        H[:, 1, :] *= z[:, None]
        H = A[n] @ H
    return H


def _value_and_grad(vec, target, z):
    """Loss and its gradient in the interleaved parameter vector."""
    A, P = _factors(vec, z)
    prefix, suffix = _prefix_suffix(A, P, z)
    E = target - prefix[-1]
    value = float(np.sum(E.real ** 2 + E.imag ** 2))
    # W_n = S_n^H E Q_{n-1}^H ; grad = -2 Re sum conj(W_n) * (dA D)
    Sh = np.conj(np.swapaxes(suffix[1:], -1, -2))
    Qh = np.conj(np.swapaxes(prefix[:-1], -1, -2))
    W = Sh @ E[None] @ Qh
    cols = np.stack([np.ones_like(z), z], axis=-1)
    Msum = np.einsum("nlab,lb->nab", np.conj(W), cols)
    dA = _section_derivatives(vec)
    grad = -2.0 * np.real(np.einsum("npab,nab->np", dA, Msum))
    return value, grad.reshape(-1)


def _check(params: ChannelParams, measured: FrequencyResponse):
    if measured.grid.tau != params.tau:
        raise GridError("model tau does not match the measurement grid")


def loss(params: ChannelParams, measured: FrequencyResponse) -> float:
    _check(params, measured)
    E = measured.matrices - _model(params.as_vector(), measured.grid.phases)
    return float(np.sum(np.abs(E) ** 2))


def loss_gradient(params: ChannelParams, measured: FrequencyResponse) -> np.ndarray:
    """Gradient of :func:`loss`, interleaved as ``[dgamma_1, dphi_1, dpsi_1, ...]``."""
    _check(params, measured)
    return _value_and_grad(params.as_vector(), measured.matrices, measured.grid.phases)[1]


def response_jacobian(params: ChannelParams, grid) -> np.ndarray:
    """
    Real Jacobian of the stacked response ``[Re H, Im H]`` (length ``8 L``)
    with respect to the ``3 N`` interleaved parameters.

    Small singular values mark directions along which the response barely
    changes, i.e. overparameterized realizations.
    """
    vec = params.as_vector()
    z = grid.phases
    A, P = _factors(vec, z)
    prefix, suffix = _prefix_suffix(A, P, z)
    dA = _section_derivatives(vec)
    N = params.N
    cols = []
    for n in range(N):
        for j in range(3):
            X = dA[n, j][None].repeat(z.size, axis=0)
            X[:, :, 1] *= z[:, None]
            dH = suffix[n + 1] @ X @ prefix[n]
            cols.append(np.concatenate([dH.real.ravel(), dH.imag.ravel()]))
    return np.stack(cols, axis=1)


def fit(measured: FrequencyResponse, init: ChannelParams, cfg: OptimizerConfig,
        iterations: Optional[int] = None, state: Optional[AdamState] = None) -> FitResult:
    """
    Run Adam from ``init`` for ``iterations`` steps (default ``cfg.M``).

    ``losses[m]`` is the loss at the iterate before step ``m``; the final
    loss is evaluated after the last step. ``state`` resumes an earlier
    run's moments; the returned result carries the updated state.
    """
    _check(init, measured)
    M = cfg.M if iterations is None else int(iterations)
    if M < 1:
        raise ConfigError(f"iteration count must be >= 1, got {M}")
    z = measured.grid.phases
    target = measured.matrices
    theta = init.as_vector().astype(float)
    if state is None:
        state = AdamState.fresh(theta.size)
    if state.m.shape != theta.shape:
        raise ConfigError("optimizer state does not match the parameter count")
    m, v, t0 = state.m.copy(), state.v.copy(), state.t
    losses = np.empty(M)
    b1, b2 = cfg.beta1, cfg.beta2
    done = M
    for it in range(M):
        value, g = _value_and_grad(theta, target, z)
        if not (np.isfinite(value) and np.all(np.isfinite(g))):
            raise DivergenceError(f"non-finite loss or gradient at iteration {it}", iteration=it)
        losses[it] = value
        if cfg.grad_tol is not None and np.linalg.norm(g) < cfg.grad_tol:
            done = it
            break
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        t = t0 + it + 1
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(f"non-finite parameters after iteration {it}", iteration=it)
    value, g = _value_and_grad(theta, target, z)
    if not np.isfinite(value):
        raise DivergenceError("non-finite final loss", iteration=done)
    return FitResult(ChannelParams.from_vector(theta, init.tau), losses[:done],
                     value, float(np.linalg.norm(g)), done, AdamState(m, v, t0 + done))


def track(measurements: Sequence[FrequencyResponse], cfg: OptimizerConfig,
          N: int) -> EstimateSeries:
    """
    Fit every time step: zero init and ``cfg.M`` iterations at ``k = 0``,
    then warm starts with ``cfg.M_track`` iterations. The Adam moments
    carry over between steps unless ``cfg.carry_state`` is false.

    ``measurements`` is any sequence of responses; the estimator never sees
    ground truth.
    """
    if len(measurements) == 0:
        raise ValueError("empty measurement series")
    n_model = cfg.n_model or N
    tau = measurements[0].grid.tau
    current = ChannelParams.zeros(n_model, tau)
    estimates: List[ChannelParams] = []
    residuals, curves = [], []
    state = None
    for k, resp in enumerate(measurements):
        iters = cfg.M if k == 0 else cfg.M_track
        try:
            result = fit(resp, current, cfg, iterations=iters,
                         state=state if cfg.carry_state else None)
        except DivergenceError as exc:
            raise DivergenceError(f"step {k}: {exc}", iteration=exc.iteration, step=k) from exc
        current = result.params
        state = result.state
        estimates.append(current)
        residuals.append(result.final_loss)
        curves.append(result.losses)
    return EstimateSeries.from_params("learn", estimates, residuals, curves)
