"""Four-dimensional power system: quadratic certificate and a 2-D slice.

Runs the quadratic pipeline on the 4-state system and writes a slice of
V_P through the (x_1, x_2) plane with x_3 = x_4 = 0 using the CLI. The
bisection can take a few minutes because boxes in four dimensions are
expensive to refine near the boundary.

    python demos/04_power4d_slice.py [output_dir]
"""

# %%
import sys
import tempfile
from pathlib import Path

import numpy as np

from zubovroa import builtin
from zubovroa.cli import main
from zubovroa.quadratic import c2_upper_bound, default_eps, linearize, search_c1, solve_dlyap
from zubovroa.verify import verify_quadratic

sys_ = builtin("power4d")
Q = np.eye(4)
P = solve_dlyap(linearize(sys_), Q)
cert = search_c1(sys_, sys_.safety, P, Q, default_eps(Q))
print(f"c1 = {cert.c1:.4f}; largest level inside the domain {c2_upper_bound(P, sys_.domain):.2f}")

# %% A few levels checked directly
for c in (50.0, 100.0, 130.0):
    v = verify_quadratic(sys_, sys_.safety, cert, c)
    print(f"c = {c:6.1f}: {v.status:10s} {v.boxes_processed} boxes")

# %% Slice through the CLI
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
main(["export-levelset", "--system", "power4d", "--out", str(out), "--resolution", "81",
      "--slice", "0,1", "--fix", "0,0,0,0"])
grid = np.loadtxt(out / "levelset.csv", delimiter=",", skiprows=1)
print(f"wrote {len(grid)} rows to {out / 'levelset.csv'}; V_P range on the slice "
      f"{grid[:, -1].min():.3f} .. {grid[:, -1].max():.3f}")
