"""
Circle bundle invariants under fiber shrinking
==============================================

A degree ell circle bundle over a flat torus, with the fiber scaled by delta.
"""

import numpy as np

from adiabatic_sw import geometry as geo

# the connection form constant and the curvature data, for a few scales
for ell in (0, 1, 3):
    print("ell =", ell)
    for delta in (1.0, 4.0, 16.0):
        inv = geo.boothby_wang_invariants(geo.BundleSpec(ell, delta=delta))
        ric = geo.ricci_matrix(inv)
        print("  delta %5.1f  lambda %+.4f  scal %+.5f  ricci eigenvalues %s  identities %s"
              % (delta, inv.lam, inv.scal, np.round(np.linalg.eigvalsh(ric), 5), inv.check()))

# lambda scales like 1/delta: the total space becomes a small circle over the torus
lams = [geo.boothby_wang_invariants(geo.BundleSpec(2, delta=d)).lam for d in (1, 2, 4, 8)]
print("lambda * delta:", np.round(np.multiply(lams, [1, 2, 4, 8]), 12))
