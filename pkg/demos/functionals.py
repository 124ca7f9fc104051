"""The auxiliary functionals on their own: pressure potential, log-equivalence, Bogovskii.

* f(gamma, r; r0) is sandwiched between multiples of (r - r0)^2; the script
  prints the tightest constant on r in [0.01, 3].
* (ln f)^2 and (f - 1)^2 are comparable with explicit constants.
* The periodic Bogovskii operator B = grad inv-Laplacian solves div B[f] = f
  with a curl-free field, and its H1 / L2 ratio is bounded.

Run:  python demos/functionals.py
"""
import numpy as np

from twophase import diagnostics as dg
from twophase.checks import smooth_field
from twophase.grid import Grid

r = np.arange(1, 301) * 0.01
for gamma in (1.0, 1.4, 2.0, 3.0):
    lower, upper, c = dg.press_sandwich(gamma, r, 1.0)
    print(f"gamma = {gamma:3.1f}: f / (r-1)^2 in [{lower:.4f}, {upper:.4f}]  ->  C = {c:.4f}")
print(f"f(1, 2; 1) = {float(dg.f_press(1.0, 2.0, 1.0)):.15f}  (2 ln 2 - 1 = {2 * np.log(2) - 1:.15f})")

c_a, c_b = dg.log_density_equivalence(0.5, 2.0)
print(f"\nfor 0.5 <= f <= 2:  {c_b:.4f} |f-1|^2 <= |ln f|^2 <= {c_a:.4f} |f-1|^2")

g = Grid(2, 64)
rng = np.random.default_rng(0)
f = smooth_field(g, rng, bandwidth=8)
nu = dg.bogovskii(g, f)
d = g.gradient(nu)
print(f"\nBogovskii on a random mean-zero field (64^2):")
print(f"  |div B[f] - f|_inf = {np.max(np.abs(g.divergence(nu) - f)):.1e}")
print(f"  |curl B[f]|_inf    = {np.max(np.abs(d[0, 1] - d[1, 0])):.1e}")
print(f"  |B[f]|_H1 / |f|_L2 = {dg.sobolev_norm(g, nu, 1) / dg.sobolev_norm(g, f, 0):.5f}")
