"""Two-machine power system with circular obstacles.

The safe set excludes two disks. This script shows how the quadratic level
set is stopped by an obstacle rather than by the decrease condition, and
prints the counterexample the verifier finds just above the certified level.

    python demos/03_two_machine_obstacles.py
"""

# %%
import numpy as np

from zubovroa import builtin
from zubovroa.quadratic import default_eps, linearize, search_c1, solve_dlyap, vp_eval
from zubovroa.verify import bisect_level, verify_quadratic

sys_ = builtin("two_machine")
Q = np.eye(2)
P = solve_dlyap(linearize(sys_), Q)
cert = search_c1(sys_, sys_.safety, P, Q, default_eps(Q))
print(f"c1 = {cert.c1:.4f} on box B = [-R, R], R = {cert.B_radius}")

# %% Bisection on c2
c2 = bisect_level(lambda c: verify_quadratic(sys_, sys_.safety, cert, c),
                  cert.c1 * (1 + 1e-6), 2.0, 1e-4)
print(f"certified c2 = {c2:.4f}")

# %% What stops it
v = verify_quadratic(sys_, sys_.safety, cert, c2 * 1.01)
print(f"c = {c2 * 1.01:.4f}: {v.status}")
if v.witness is not None:
    x = v.witness
    print(f"  witness {x}: V_P = {vp_eval(P, x):.5f}, g = {float(sys_.safety(x)):.6f}")
    print(f"  violated: {v.violated}")

# %% Safety margin along the certified ellipse
theta = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
L = np.linalg.cholesky(np.linalg.inv(P))
ring = np.sqrt(c2) * (np.stack([np.cos(theta), np.sin(theta)], 1) @ L.T)
print(f"max g on the certified ellipse: {np.max(sys_.safety(ring)):.6f} (must stay below 1)")
