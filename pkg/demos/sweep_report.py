"""
A small sweep with the reporting harness
========================================

Equivalent to `python -m adiabatic_sw sweep plan.json --output out`.
"""

import json
import tempfile

from adiabatic_sw import geometry as geo
from adiabatic_sw import harness as hs
from adiabatic_sw import lattice as lt

plan = hs.SweepPlan(geo.BundleSpec(ell=1), [2, 4, 8, 16], [lt.square_spec(4, ell=1)],
                    ["gap_sweep", "anticommutator_convergence", "classifier_table"], seed=1)
print(json.dumps(plan.to_dict(), indent=1)[:300], "...")

rep = hs.run_sweep(plan, threads=2)
for name, exp in rep.experiments.items():
    print(name, "|", exp["anchor"])
    for fit in exp["fits"]:
        print("   fit", fit["quantity"], fit["exponent"], fit["r2"])

out = tempfile.mkdtemp()
print("written:", rep.write(out, "json"))
print(rep.to_csv().splitlines()[:4])
