"""Per-time-step estimates produced by either estimator."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .polmodel import ChannelParams

__all__ = ["EstimateSeries"]


@dataclass(frozen=True, eq=False)
class EstimateSeries:
    """
    Estimated channel states for ``k = 0..K``.

    Attributes
    ----------
    name : str
        Estimator label, ``"isa"`` or ``"learn"``.
    params : ndarray, shape (K + 1, N, 3)
        Estimated (gamma, phi, psi) per step and section.
    residuals : ndarray, shape (K + 1,)
        Response-level residual per step, ``sum_i ||H_meas - H(theta_hat)||^2``.
    diagnostics : list, optional
        Estimator-specific per-step extras (peel diagnostics for ISA, loss
        trajectories for the learner).
    """

    name: str
    params: np.ndarray
    residuals: np.ndarray
    tau: float = 1.0
    diagnostics: Optional[List] = field(default=None, repr=False)

    def __post_init__(self):
        p = np.array(self.params, dtype=float)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"params must have shape (K+1, N, 3), got {p.shape}")
        r = np.array(self.residuals, dtype=float).reshape(-1)
        if r.shape[0] != p.shape[0]:
            raise ValueError("one residual per time step is required")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "residuals", r)

    @property
    def K(self) -> int:
        return self.params.shape[0] - 1

    @property
    def N(self) -> int:
        return self.params.shape[1]

    def __len__(self):
        return self.params.shape[0]

    def at(self, k: int) -> ChannelParams:
        p = self.params[k]
        return ChannelParams(p[:, 0], p[:, 1], p[:, 2], self.tau)

    def abs_cos_phi(self) -> np.ndarray:
        """``|cos phi_hat_n(k)|`` traces, shape ``(K + 1, N)``; NaN for failed steps."""
        return np.abs(np.cos(self.params[:, :, 1]))

    @classmethod
    def from_params(cls, name, params_list, residuals, diagnostics=None):
        arr = np.stack([np.stack([p.gamma, p.phi, p.psi], axis=1) for p in params_list])
        return cls(name, arr, residuals, params_list[0].tau, diagnostics)
