"""
Topology-independent stability surface
======================================

Sweep the gains and record the worst-case delay margin at each grid point.
Gains below the surface keep every connected topology stable. The result is
written as CSV for plotting elsewhere.
"""

import pathlib
import sys

import numpy as np

from consensus_delay import boundary_surface, write_surface_csv

out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else pathlib.Path("surface_a.csv")

surf = boundary_surface("a", (0.5, 10.0), (0.1, 5.0), (50, 50))
with open(out, "w") as fh:
    write_surface_csv(surf, fh)
print(f"wrote {surf.tau.size} points to {out}")

# Stiffer position gain always tightens the bound.
j = np.argmin(abs(surf.k2 - 1.0))
for k in (1.0, 5.0, 10.0):
    i = np.argmin(abs(surf.k1 - k))
    print(f"k1={surf.k1[i]:.2f} k2={surf.k2[j]:.2f}: tau {surf.tau[i, j]:.4f}")

# Protocol B depends on group size; bigger groups are more restricted.
six = boundary_surface("b", (0.5, 10.0), (0.1, 5.0), (20, 20), n=6)
ten = boundary_surface("b", (0.5, 10.0), (0.1, 5.0), (20, 20), n=10)
print("n=10 below n=6 everywhere:", bool(np.all(ten.tau <= six.tau)))
print(f"median ratio {np.median(ten.tau / six.tau):.3f}")
