"""
Spectral gap at the reducible solution
======================================

The linearization at (0, A0) splits per fiber Fourier mode.  Its distance from
zero decays like 1/delta on a nontrivial bundle and stays put on the torus.
"""

import numpy as np

from adiabatic_sw import geometry as geo
from adiabatic_sw import harness as hs
from adiabatic_sw import spectral as sp

deltas = [2, 4, 8, 16, 32]

res = sp.gap_sweep(geo.BundleSpec(ell=1), deltas, n=4)
for r in res:
    print("delta %5.1f  z %.6f  z*delta %.6f" % (r.delta, r.z, r.z * r.delta))
p, c, r2 = hs.fit_power_law([(r.delta, r.z) for r in res], range=(4, None))
print("fitted exponent %.4f  R^2 %.6f" % (p, r2))

# the product case: odd fiber count and a base holonomy
ctrl = sp.gap_sweep(geo.BundleSpec(ell=0), [8, 16, 32], n=6, n_fiber=7, hol=(0.3, 0.6))
print("torus control:", [round(r.z, 6) for r in ctrl])

# holomorphic sections of a degree d bundle on the base torus
for d in (-1, 0, 1, 2, 3):
    op = sp.dbar_kernel_handle(8, d)
    print("degree %+d  kernel %d  expected %d" % (d, sp.kernel_dimension(op), sp.riemann_roch_count(d)))
