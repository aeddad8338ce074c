"""
Large-delta classification and the contraction radius
=====================================================
"""

from adiabatic_sw import solver as sv

for g, ell in ((1, 3), (2, 5), (2, 4), (2, 0)):
    print("genus %d, ell %d" % (g, ell))
    for k, c in sv.classifier_table(g, ell):
        print("  k = %+d  %-32s %s" % (k, c.kind, c.normalization or ""))

# fixed point of y = 0.01 - 0.1 y^2 inside the certified ball
p = sv.TaubesProblem(mu=1.0, kappa=0.1, eps0=0.01)
print("admissible, radius:", sv.taubes_radius(p))
res = sv.taubes_solve(lambda x: x, lambda y: -0.01 + 0.1 * y ** 2, lambda y: y - 0.01 + 0.1 * y ** 2, p)
print("y = %.15f after %d steps, worst step ratio %.3g" % (res.y, res.iterations, res.max_ratio))

try:
    sv.taubes_solve(lambda x: x, lambda y: -0.1 + 5 * y ** 2, lambda y: y - 0.1 + 5 * y ** 2,
                    sv.TaubesProblem(1.0, 0.01, 0.1))
except sv.ContractionFailure as exc:
    print("understated constants:", exc)
