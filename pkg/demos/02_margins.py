"""
Delay margins of a topology
===========================

Every disagreement eigenvalue gives a second-order factor with its own
crossing delay. The smallest one is the margin of the whole group.
"""

import pathlib

from consensus_delay import ProtocolParams, absolute_margin, read_topology, spectrum, topology_margin

DATA = pathlib.Path(__file__).parent / "data"
hub = read_topology(DATA / "hub6.txt")

params = ProtocolParams("a", k1=5.0, k2=0.2)
dm = topology_margin(spectrum(hub, "a"), params)
for fc in dm.per_factor:
    print(f"lambda {fc.lam:+.4f}  omega {fc.omega:.4f}  tau {fc.tau:.4f}")
print(f"margin {dm.margin:.4f} at lambda {dm.exigent_lambda:+.4f}")

# lambda = -1 is the worst any connected graph can do under protocol A,
# so this delay is safe for every topology with these gains.
print(f"topology-free bound (A): {absolute_margin(params).tau:.4f}")

# Protocol B: the worst case grows with the group size.
b = ProtocolParams("b", 1.0, 1.0)
for n in (2, 6, 10, 50):
    print(f"n={n:3d}  protocol B bound {absolute_margin(b, n).tau:.4f}")

# High velocity gain can remove a crossing entirely for protocol A.
ring = read_topology(DATA / "ring6.txt")
dm = topology_margin(spectrum(ring, "a"), ProtocolParams("a", 1.0, 2.0))
print("factors with no crossing:", [round(fc.lam, 3) for fc in dm.per_factor if not fc.finite])
