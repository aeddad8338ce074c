"""
Searching for critical points
=============================

Random small starts on an ell = 2 bundle in a nontrivial torsion class.
They all return to the reducible solution psi = 0.
"""

import numpy as np

from adiabatic_sw import lattice as lt
from adiabatic_sw import solver as sv
from adiabatic_sw import spectral as sp

lat = lt.build_lattice(lt.square_spec(4, ell=2, delta=8.0))
A0 = sp.reducible_background(lat, k=1)
system = sv.SWSystem(A0)
print("residual at the reducible:", sv.sw_residual(sv.configuration(system)))

for seed in range(3):
    r = sv.find_critical_point(sv.random_start(system, seed, 0.1, 0.1))
    print("seed %d  converged %s  reducible %s  iterations %2d  residual %.2e  |psi| %.1e"
          % (seed, r.converged, r.reducible, r.iterations, r.history[-1][2], lat.norm(r.config.phi)))
    print("        chern defect %.2e  decoupling %s" % (sv.chern_defect(r.config),
                                                       np.round(sv.decoupling_quantities(r.config), 15)))

# the convergence log of the last run
for row in r.log_rows()[:5]:
    print(row)
