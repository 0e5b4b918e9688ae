"""
polsense.isa
------------

Layer-peeling (inverse scattering) estimator.

The measured response is first converted to the taps ``h_0 .. h_N`` of
``H(z) = sum_m h_m z**m``. For the cascade ``H(z) = A_N diag(1, z) G(z)``
the end taps are rank one,

    h_0 = (A_N e1) (row 1 of g_0),    h_N = (A_N e2) (row 2 of g_{N-1}),

so their dominant left singular vectors give the two columns of
``A_N = Gamma(gamma_N) R(phi_N, psi_N)`` up to scale. From those columns
the section parameters follow in closed form. Multiplying by ``A_N^-1``
and undoing ``diag(1, z)`` leaves the taps of sections ``1 .. N-1``, and
the procedure repeats.

Estimates are only defined up to sign flips that commute through the
cascade; ``phi`` is reported in ``[0, pi/2]`` except that section 1 absorbs
a possible global sign so that the estimate reproduces the response.
"""

from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from .errors import DegenerateSectionError, GridError, UnderdeterminedError
from .polmodel import (ChannelParams, FrequencyResponse, SectionParams,
                       TapSequence, make_pdl, make_rotation, min_phase_gap)

__all__ = [
    "PeelDiagnostics",
    "response_to_taps",
    "extract_last_section",
    "peel",
    "run_isa",
]

# |tan phi| (or |cot phi|) below this makes gamma and psi unidentifiable.
DEGENERATE_RATIO = 1e-9
# End taps with relative norm below this cannot be peeled.
ZERO_TAP = 1e-12


@dataclass(frozen=True)
class PeelDiagnostics:
    """
    Bookkeeping for one extracted section.

    ``residual_first`` and ``residual_last`` are the norms of the rows that
    must vanish after de-embedding (row 2 of ``b_0``, row 1 of ``b_D``),
    each relative to the norm of its own tap.
    ``cond_first``/``cond_last`` are smallest-to-largest singular value
    ratios of ``h_0`` and ``h_D`` (0 for an exactly rank-one tap).
    """

    section: int
    cond_first: float
    cond_last: float
    residual_first: float = 0.0
    residual_last: float = 0.0
    degenerate: bool = False
    finite: bool = True

    @property
    def residual(self) -> float:
        return self.residual_first + self.residual_last


def response_to_taps(resp: FrequencyResponse, N: int) -> TapSequence:
    """
    Least-squares fit of ``N + 1`` taps to the sampled response.

    On the canonical grid with ``L = N + 1`` this is the exact inverse DFT;
    for larger ``L`` the Vandermonde columns are orthogonal and the fit
    averages out noise.
    """
    grid = resp.grid
    if grid.L < N + 1:
        raise UnderdeterminedError(f"{N + 1} taps need at least {N + 1} frequencies, got {grid.L}")
    if min_phase_gap(grid.omegas * grid.tau) < 1e-9:
        raise GridError("aliased frequency grid")
    z = grid.phases
    V = z[:, None] ** np.arange(N + 1)[None, :]
    coef, *_ = np.linalg.lstsq(V, resp.matrices.reshape(grid.L, 4), rcond=None)
    return TapSequence(coef.reshape(N + 1, 2, 2), grid.tau)


def _dominant_direction(tap):
    U, s, _ = np.linalg.svd(tap)
    cond = s[1] / s[0] if s[0] > 0 else 0.0
    return U[:, 0], float(cond)


def _wrap(angle):
    return float(np.angle(np.exp(1j * angle))) if angle != -np.pi else np.pi


def extract_last_section(taps: TapSequence) -> Tuple[SectionParams, PeelDiagnostics]:
    """
    Parameters of the outermost section from the two end taps.

    With ``u ~ A e1`` and ``v ~ A e2`` (each up to an unknown complex
    scale), ``u1 v2 ~ cos^2 phi`` and ``-u2 v1 ~ sin^2 phi`` share one
    phase, ``|u1 v1| / |u2 v2| = exp(2 gamma)`` and
    ``arg(u2 v2 / (u1 v1)) = -2 psi``.
    """
    if taps.degree < 1:
        raise DegenerateSectionError("need at least two taps to extract a section")
    h = taps.taps
    scale = np.linalg.norm(h)
    for tap in (h[0], h[-1]):
        if not np.all(np.isfinite(tap)):
            diag = PeelDiagnostics(taps.degree, np.nan, np.nan, finite=False)
            return SectionParams(np.nan, np.nan, np.nan), diag
        if np.linalg.norm(tap) < ZERO_TAP * scale:
            raise DegenerateSectionError("end tap vanishes; section cannot be identified")

    u, cond_first = _dominant_direction(h[0])
    v, cond_last = _dominant_direction(h[-1])
    diag = PeelDiagnostics(taps.degree, cond_first, cond_last)

    au1, au2, av1, av2 = np.abs(u[0]), np.abs(u[1]), np.abs(v[0]), np.abs(v[1])
    # r1 = u2/u1 and r2 = v1/v2 both scale with tan(phi)
    small_tan = au2 < DEGENERATE_RATIO * au1 and av1 < DEGENERATE_RATIO * av2
    small_cot = au1 < DEGENERATE_RATIO * au2 and av2 < DEGENERATE_RATIO * av1
    if small_tan or small_cot:
        phi = 0.0 if small_tan else np.pi / 2
        return SectionParams(0.0, phi, 0.0), replace(diag, degenerate=True)

    p = u[0] * v[1]
    q = -u[1] * v[0]
    w = p + q
    common = w / np.abs(w) if np.abs(w) > 0 else 1.0
    cos2 = max(np.real(p * np.conj(common)), 0.0)
    sin2 = max(np.real(q * np.conj(common)), 0.0)
    phi = float(np.arctan2(np.sqrt(sin2), np.sqrt(cos2)))

    gamma = float(0.5 * np.log((au1 * av1) / (au2 * av2)))
    psi = -0.5 * float(np.angle(u[1] * v[1] * np.conj(u[0] * v[0])))
    # psi is fixed modulo pi by the ratio; pick the branch with tan(phi) >= 0
    e = np.exp(1j * psi)
    sign = (np.real(u[1] * np.conj(u[0]) * np.conj(1j * np.conj(e)))
            + np.real(v[0] * np.conj(v[1]) * np.conj(1j * e)))
    if sign < 0:
        psi = _wrap(psi + np.pi)

    ok = np.isfinite(gamma) and np.isfinite(phi) and np.isfinite(psi)
    return SectionParams(gamma, phi, psi), replace(diag, finite=bool(ok))


def _inverse_section(sec: SectionParams):
    return make_rotation(-sec.phi, sec.psi) @ make_pdl(-sec.gamma)


def peel(taps: TapSequence, sec: SectionParams, return_residuals: bool = False):
    """
    Remove the outermost section ``sec`` from ``taps``.

    Computes ``b_m = A^-1 h_m`` and rebuilds ``g_m`` from row 1 of ``b_m``
    and row 2 of ``b_{m+1}``. With ``return_residuals`` the relative norms
    of the discarded rows are returned as well.
    """
    if taps.degree < 1:
        raise ValueError("cannot peel a single tap")
    b = _inverse_section(SectionParams(*sec)) @ taps.taps
    g = np.empty((taps.degree, 2, 2), dtype=complex)
    g[:, 0, :] = b[:-1, 0, :]
    g[:, 1, :] = b[1:, 1, :]
    out = TapSequence(g, taps.tau)
    if not return_residuals:
        return out
    res = (_ratio(b[0, 1, :], b[0]), _ratio(b[-1, 0, :], b[-1]))
    return out, res


def _ratio(row, tap):
    scale = np.linalg.norm(tap)
    return float(np.linalg.norm(row) / scale) if scale > 0 else 0.0


def run_isa(resp: FrequencyResponse, N: int, tau: float = None
            ) -> Tuple[ChannelParams, List[PeelDiagnostics]]:
    """
    Estimate all ``N`` sections by repeated extraction and peeling.

    Returns the estimate (section 1 first) and one :class:`PeelDiagnostics`
    per section, also section 1 first. Finite noisy input never raises;
    degradation shows up in the diagnostics.
    """
    tau = resp.grid.tau if tau is None else float(tau)
    if tau != resp.grid.tau:
        raise GridError("tau does not match the response grid")
    taps = response_to_taps(resp, N)
    sections: List[SectionParams] = [None] * N
    diags: List[PeelDiagnostics] = [None] * N
    for n in range(N, 0, -1):
        try:
            sec, diag = extract_last_section(taps)
        except DegenerateSectionError as exc:
            raise DegenerateSectionError(f"section {n}: {exc}", section=n) from exc
        if diag.finite:
            taps, (r0, r1) = peel(taps, sec, return_residuals=True)
        else:
            r0 = r1 = np.nan
            taps = TapSequence(np.full((taps.degree, 2, 2), np.nan), taps.tau)
        sections[n - 1] = sec
        diags[n - 1] = replace(diag, section=n, residual_first=r0, residual_last=r1)

    # leftover tap is +-I; fold a negative global sign into section 1
    if np.real(np.trace(taps.taps[0])) < 0:
        g, p, s = sections[0]
        sections[0] = SectionParams(g, p + np.pi, s)
    return ChannelParams.from_sections(sections, tau), diags
