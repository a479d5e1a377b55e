"""Evaluate the semidefinite norm-value programs on planted channels:
with separated differential angles the partially decoupled value equals
the total path gain, and the one-dimensional relaxation sandwiches it
from below.

Run:  python demos/02_norm_values_and_bounds.py
"""

import numpy as np

from pdanm.channel import steering_from_cos
from pdanm.linalg import khatri_rao
from pdanm.sdp import build_an1d_value, build_pdan_value, solve

rng = np.random.default_rng(3)
n_bs = n_ue = 2
n_ris = 16

# two atoms, well separated on the RIS side
cos_psi = np.array([-0.45, 0.40])
gains = np.array([1.0, 2.0])
a_bu = khatri_rao(steering_from_cos(n_bs, [0.25, -0.6]),
                  steering_from_cos(n_ue, [0.7, 0.1]))
h = (a_bu * gains[None, :]) @ steering_from_cos(n_ris, cos_psi).conj().T

sol = solve(build_pdan_value(h, n_bs, n_ue))
sol_1d = solve(build_an1d_value(h, n_bs, n_ue))
print(f"separated case: total gain {gains.sum():.4f}")
print(f"  decoupled value {sol.objective:.6f}   ({sol.status}, {sol.iterations} iterations)")
print(f"  1-D relaxation  {sol_1d.objective:.6f} <= decoupled <= total gain")

# an arbitrary (dense) matrix only obeys the ordering, not equality
h_rand = rng.normal(size=h.shape) + 1j * rng.normal(size=h.shape)
v1 = solve(build_an1d_value(h_rand, n_bs, n_ue)).objective
v2 = solve(build_pdan_value(h_rand, n_bs, n_ue)).objective
print(f"random matrix: 1-D value {v1:.4f} <= decoupled value {v2:.4f}")

# absolute homogeneity
v_scaled = solve(build_pdan_value(3.0 * h, n_bs, n_ue)).objective
print(f"scaling: value(3H) = {v_scaled:.4f} = 3 * {sol.objective:.4f}")
