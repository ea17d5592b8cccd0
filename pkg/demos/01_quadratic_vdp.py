"""Quadratic certificate for the reversed Van der Pol oscillator.

Walks through the quadratic half of the pipeline by hand: linearise at the
origin, solve the discrete Lyapunov equation, build the local certificate
level c1, then grow the level c2 by bisection with the interval verifier.

    python demos/01_quadratic_vdp.py
"""

# %%
import numpy as np

from zubovroa import builtin
from zubovroa.quadratic import (c2_upper_bound, default_eps, linearize, search_c1, solve_dlyap,
                                vp_eval)
from zubovroa.verify import bisect_level, verify_quadratic

sys_ = builtin("vdp")
print(f"{sys_.name}: n={sys_.n}, dt={sys_.dt}, domain {sys_.domain.lo} .. {sys_.domain.hi}")

# %% Linearisation and Lyapunov matrix
A = linearize(sys_)
Q = np.eye(2)
P = solve_dlyap(A, Q)
print("A =\n", A)
print("P =\n", P)
print("A'PA - P + Q residual:", np.abs(A.T @ P @ A - P + Q).max())

# %% Local certificate
cert = search_c1(sys_, sys_.safety, P, Q, default_eps(Q))
print(cert.report())

# %% Largest level inside the domain, then bisection
upper = c2_upper_bound(P, sys_.domain)
print(f"largest level set inside the domain: c = {upper:.4f}")

c2 = bisect_level(lambda c: verify_quadratic(sys_, sys_.safety, cert, c),
                  cert.c1 * (1 + 1e-6), upper, 1e-3 * upper)
verdict = verify_quadratic(sys_, sys_.safety, cert, c2)
print(f"certified c2 = {c2:.4f}: {verdict.status} after {verdict.boxes_processed} boxes")

# %% A level just above c2 for comparison
above = verify_quadratic(sys_, sys_.safety, cert, min(upper, 1.2 * c2))
print(f"c = {min(upper, 1.2 * c2):.4f}: {above.status}")
if above.witness is not None:
    x = above.witness
    print(f"  witness {x}, V_P = {vp_eval(P, x):.4f}, violated: {above.violated}")

# %% Area of the certified ellipse
area = np.pi * c2 / np.sqrt(np.linalg.det(P))
print(f"area of {{V_P <= {c2:.3f}}} = {area:.3f}")
