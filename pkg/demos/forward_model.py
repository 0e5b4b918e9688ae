"""
The cascade forward model
=========================

A fiber is modelled as N sections. Each one delays one polarization by
tau (DGD), rotates the state of polarization and applies polarization
dependent loss. This script builds a random five-section channel, samples
its Jones response on the canonical grid and checks the tap picture that
the inverse-scattering estimator relies on.
"""

import numpy as np

from polsense import ChannelParams, FrequencyGrid, channel_response, impulse_taps
from polsense.polmodel import make_pdl

rng = np.random.default_rng(1)

# PDL extinction in nepers; 0.17 Np is about 1.5 dB
print("Gamma(0.17) diagonal:", np.real(np.diag(make_pdl(0.17))))
print("PDL of one section in dB:", 20 / np.log(10) * 0.17)

channel = ChannelParams(gamma=rng.uniform(0.07, 0.17, 5),
                        phi=rng.uniform(-np.pi, np.pi, 5),
                        psi=rng.uniform(-np.pi, np.pi, 5))
print(channel)

# L = N + 1 equispaced samples per free spectral range
grid = FrequencyGrid.canonical(channel.N + 1)
H = channel_response(channel, grid)

# PDL makes the matrices non-unitary but every factor has |det| = 1
print("|det H(omega_i)|:", np.abs(np.linalg.det(H.matrices)))
print("singular values at omega_0:", np.linalg.svd(H.matrices[0], compute_uv=False))

# The response is a matrix polynomial of degree N in z = exp(j omega tau)
taps = impulse_taps(channel)
print("number of taps:", len(taps))
print("max |taps(z_i) - H(omega_i)|:",
      np.abs(taps.evaluate(grid).matrices - H.matrices).max())

# The first and last taps have rank one; their null directions are what
# the layer-peeling estimator exploits
for name, tap in (("h_0", taps.taps[0]), ("h_N", taps.taps[-1])):
    s = np.linalg.svd(tap, compute_uv=False)
    print(f"{name} singular values: {s[0]:.3e} {s[1]:.1e}")
