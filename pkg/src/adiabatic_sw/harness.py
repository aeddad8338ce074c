"""Delta sweeps, grid refinement studies, power-law fits and reports.

A SweepPlan names a bundle, a delta ladder, a list of grids and a list of
experiments.  run_sweep evaluates every (experiment, grid, delta) cell on a
thread pool, records per-cell failures instead of raising, and assembles a
SweepReport whose JSON form is bit-identical between runs with the same plan
(wall-clock data lives in the separate "timestamps" block).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
import csv
import io
import json
import math
import os
import platform
import time

import numpy as np
import scipy

from . import geometry as geo
from . import lattice as lt
from . import solver as sv
from . import spectral as sp

SCHEMA = 1
EXPERIMENTS = ("gap_sweep", "residual_scaling", "decoupling_scaling", "classifier_table",
               "anticommutator_convergence", "reducible_stability")

# what each experiment measures; copied into every report row
ANCHORS = {
    "gap_sweep": "distance of 0 to the spectrum of the constrained linearization at the reducible, expected ~ 1/delta",
    "residual_scaling": "sup |psi| and sup |F_A| stay bounded as delta grows",
    "decoupling_scaling": "||T_A psi|| and || |alpha| |beta| || vanish in the adiabatic limit",
    "classifier_table": "torsion classes in the stable range carry only reducible solutions",
    "anticommutator_convergence": "{Z, T} + lambda T equals -i times the curvature block, up to discretization error",
    "reducible_stability": "random starts in the stable range converge to reducibles",
}
EXACT_ZERO = 1e-8


@dataclass
class SweepPlan:
    bundle: geo.BundleSpec
    deltas: list
    grids: list
    experiments: list
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.deltas = [float(d) for d in self.deltas]
        if not self.deltas:
            raise ValueError("deltas must be nonempty")
        if self.deltas != sorted(self.deltas) or min(self.deltas) <= 0:
            raise ValueError("deltas must be positive and sorted ascending")
        bad = [e for e in self.experiments if e not in EXPERIMENTS]
        if bad:
            raise ValueError("unknown experiments: %s" % bad)
        if not self.grids and set(self.experiments) - {"classifier_table"}:
            raise ValueError("at least one grid is needed")

    def opt(self, key, default):
        return self.options.get(key, default)

    def to_dict(self):
        return {"bundle": asdict(self.bundle), "deltas": self.deltas,
                "grids": [g.to_dict() for g in self.grids],
                "experiments": list(self.experiments), "seed": self.seed,
                "options": self.options}

    @classmethod
    def from_dict(cls, d):
        return cls(bundle=geo.BundleSpec(**d["bundle"]), deltas=d["deltas"],
                   grids=[lt.LatticeSpec.from_dict(g) for g in d.get("grids", [])],
                   experiments=list(d.get("experiments", [])), seed=int(d.get("seed", 0)),
                   options=dict(d.get("options", {})))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SweepReport:
    plan: dict
    experiments: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)

    def to_dict(self, with_timestamps=True):
        d = {"schema": SCHEMA, "plan": self.plan, "experiments": self.experiments,
             "environment": self.environment}
        if with_timestamps:
            d["timestamps"] = self.timestamps
        return d

    def to_json(self, with_timestamps=True):
        return json.dumps(_clean(self.to_dict(with_timestamps)), indent=2, sort_keys=True,
                          allow_nan=False)

    def long_rows(self):
        """Plot-ready long table: one row per (experiment, cell, quantity)."""
        out = []
        for name, exp in self.experiments.items():
            for row in exp["rows"]:
                keys = {k: row.get(k) for k in ("grid", "delta", "cell")}
                for q, v in row.items():
                    if q in ("grid", "delta", "cell", "anchor") or isinstance(v, (dict, list)):
                        continue
                    out.append({"experiment": name, "anchor": row["anchor"], **keys,
                                "quantity": q, "value": v})
            for fit in exp.get("fits", []):
                for q in ("exponent", "intercept", "r2"):
                    out.append({"experiment": name, "anchor": ANCHORS[name],
                                "grid": fit.get("grid"), "delta": None,
                                "cell": "fit:" + fit["quantity"], "quantity": q,
                                "value": fit.get(q)})
        return out

    def to_csv(self):
        buf = io.StringIO()
        cols = ["experiment", "grid", "delta", "cell", "quantity", "value", "anchor"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.long_rows():
            w.writerow({k: _csv_value(r.get(k)) for k in cols})
        return buf.getvalue()

    def write(self, outdir, fmt="json", stem="report"):
        os.makedirs(outdir, exist_ok=True)
        paths = []
        if fmt in ("json", "both"):
            paths.append(os.path.join(outdir, stem + ".json"))
            with open(paths[-1], "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.to_json() + "\n")
        if fmt in ("csv", "json", "both"):
            # the CSV companion is always written next to the JSON
            paths.append(os.path.join(outdir, stem + ".csv"))
            with open(paths[-1], "w", encoding="utf-8", newline="") as fh:
                fh.write(self.to_csv())
        return paths


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def fit_power_law(points, range=None):
    """Least-squares fit of log y = p log x + c.  Returns (p, c, R^2).

    range = (lo, hi) keeps the points with lo <= x <= hi (either end may be
    None).  A perfectly constant y is a perfect fit with R^2 = 1.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if range is not None:
        lo, hi = range
        pts = [(x, y) for x, y in pts if (lo is None or x >= lo) and (hi is None or x <= hi)]
    if len(pts) < 3:
        raise ValueError("need at least 3 points, got %d" % len(pts))
    if any(not (x > 0 and y > 0) for x, y in pts):
        raise ValueError("power-law fit needs positive data")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    A = np.column_stack([lx, np.ones_like(lx)])
    (p, c), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([p, c])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(ly ** 2))):
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(ly ** 2))) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(p), float(c), float(r2)


def _fit_row(quantity, pts, rng, grid=None):
    """Fit record, or the reason no fit was made."""
    row = {"quantity": quantity, "grid": grid,
           "delta_range": [rng[0], rng[1]] if rng else None}
    try:
        p, c, r2 = fit_power_law(pts, rng)
        row.update(exponent=p, intercept=c, r2=r2, points=len(pts), note=None)
    except ValueError as exc:
        row.update(exponent=None, intercept=None, r2=None, points=len(pts), note=str(exc))
    return row


# ---------------------------------------------------------------- cells

def _grid_label(spec):
    return "%dx%dx%d" % (spec.n_fiber, spec.n_x, spec.n_y)


def _lattice(spec, delta):
    return lt.build_lattice(spec.with_delta(delta))


def _k_class(bundle):
    return bundle.l_n_class % abs(bundle.ell) if bundle.ell else 0


def _solver_params(plan):
    return sv.SolverParams(**plan.opt("solver", {}))


def _perturbed_solve(plan, spec, delta, seed):
    """find_critical_point from the reducible plus a random perturbation."""
    lat = _lattice(spec, delta)
    A0 = sp.reducible_background(lat, _k_class(plan.bundle), tuple(plan.opt("hol", (0.0, 0.0))))
    eps = plan.opt("perturbation", 0.05)
    start = sv.random_start(A0, seed, psi_scale=eps, a_scale=eps)
    return sv.find_critical_point(start, _solver_params(plan))


def _cell_gap(plan, spec, delta, seed):
    lat = _lattice(spec, delta)
    A0 = sp.reducible_background(lat, _k_class(plan.bundle), tuple(plan.opt("hol", (0.0, 0.0))))
    z, zs, zf, _ = sp.linearization_gap(A0, plan.opt("exclude_harmonic", True))
    return {"z": z, "spinor_gap": zs, "form_gap": zf}


def _cell_residual(plan, spec, delta, seed):
    r = _perturbed_solve(plan, spec, delta, seed)
    c = r.config
    cur = lt.curvature(c.gauge(), check_branch=False)
    sup_F = max(float(np.max(np.abs(cur[k]))) for k in ("tx", "ty", "xy"))
    return {"residual": r.history[-1][2], "sup_psi": float(np.max(np.abs(c.phi))),
            "sup_F": sup_F, "iterations": r.iterations, "converged": r.converged,
            "reducible": r.reducible}


def _cell_decoupling(plan, spec, delta, seed):
    r = _perturbed_solve(plan, spec, delta, seed)
    t_norm, ab_norm = sv.decoupling_quantities(r.config)
    return {"T_psi": t_norm, "alpha_beta": ab_norm, "residual": r.history[-1][2],
            "converged": r.converged, "reducible": r.reducible}


def _cell_stability(plan, spec, delta, seed):
    lat = _lattice(spec, delta)
    A0 = sp.reducible_background(lat, _k_class(plan.bundle), tuple(plan.opt("hol", (0.0, 0.0))))
    system = sv.SWSystem(A0)
    n = plan.opt("n_starts", 20)
    scale = plan.opt("start_scale", 0.1)
    runs = []
    for i in range(n):
        r = sv.find_critical_point(sv.random_start(system, seed + i, scale, scale), _solver_params(plan))
        runs.append((r.converged, r.reducible, lat.norm(r.config.phi)))
    return {"starts": n, "converged": sum(a for a, _, _ in runs),
            "reducible": sum(b for _, b, _ in runs),
            "max_psi_norm": max(p for _, _, p in runs),
            "threshold": sv.reducibility_threshold(lat, _solver_params(plan).reducible_factor)}


def _cell_anticommutator(plan, spec, delta, seed):
    lat = _lattice(spec, delta)
    rng = np.random.default_rng(seed)
    amp = plan.opt("field_amplitude", 0.5)
    g = lt.link_field(lat, lt.smooth_form(lat, np.random.default_rng(seed + 1), amp=amp),
                      base=sp.reducible_background(lat, _k_class(plan.bundle)))
    return {"residual": lt.anticommutator_residual(g, rng=rng)}


CELLS = {"gap_sweep": _cell_gap, "residual_scaling": _cell_residual,
         "decoupling_scaling": _cell_decoupling, "reducible_stability": _cell_stability,
         "anticommutator_convergence": _cell_anticommutator}


def _run_cell(fn, plan, spec, delta, seed):
    t0 = time.perf_counter()
    try:
        out = fn(plan, spec, delta, seed)
        out["error"] = None
    except Exception as exc:                 # recorded, never aborts the sweep
        out = {"error": "%s: %s" % (type(exc).__name__, exc)}
    return out, time.perf_counter() - t0


def _cells(plan, name):
    if name == "anticommutator_convergence":
        # one cell per grid at the bundle's delta
        return [(g, plan.bundle.delta) for g in plan.grids]
    return [(g, d) for g in plan.grids for d in plan.deltas]


# ---------------------------------------------------------------- assembly

def _fit_range(plan):
    ds = plan.deltas
    lo = ds[1] if len(ds) > 3 else ds[0]      # drop the smallest delta when it leaves 3 points
    return (lo, None)


def _summarize(plan, name, rows):
    fits, summary = [], {}
    rng = _fit_range(plan)
    labels = []
    for r in rows:
        if r["grid"] not in labels:
            labels.append(r["grid"])
    ok = lambda r: r.get("error") is None
    if name == "gap_sweep":
        by_grid = {g: {r["delta"]: r["z"] for r in rows if r["grid"] == g and ok(r)} for g in labels}
        for g in labels:
            fits.append(_fit_row("z", sorted(by_grid[g].items()), rng, g))
        if len(labels) > 1:
            a, b = by_grid[labels[0]], by_grid[labels[1]]
            common = [d for d in a if d in b and (rng[0] is None or d >= rng[0])]
            summary["doubling_change"] = {str(d): abs(b[d] - a[d]) / abs(a[d]) for d in common}
            summary["max_doubling_change"] = max(summary["doubling_change"].values(), default=None)
    elif name in ("decoupling_scaling", "residual_scaling"):
        qs = ("T_psi", "alpha_beta") if name == "decoupling_scaling" else ("sup_psi", "sup_F")
        for g in labels:
            good = [r for r in rows if r["grid"] == g and ok(r)]
            for q in qs:
                vals = [r[q] for r in good]
                if vals and max(vals) < EXACT_ZERO:
                    fits.append({"quantity": q, "grid": g, "exponent": None, "intercept": None,
                                 "r2": None, "points": len(vals), "delta_range": list(rng),
                                 "note": "exactly zero: all values below %g" % EXACT_ZERO})
                else:
                    fits.append(_fit_row(q, [(r["delta"], r[q]) for r in good], rng, g))
        if name == "decoupling_scaling":
            summary["max_value"] = max((max(r["T_psi"], r["alpha_beta"]) for r in rows if ok(r)),
                                       default=None)
            summary["all_exactly_reducible"] = summary["max_value"] is not None and \
                summary["max_value"] < EXACT_ZERO
    elif name == "anticommutator_convergence":
        res = [r["residual"] for r in rows if ok(r)]
        summary["ratios"] = [res[i + 1] / res[i] for i in range(len(res) - 1)]
        summary["monotone"] = all(x < 1 for x in summary["ratios"])
    elif name == "reducible_stability":
        summary["all_reducible"] = all(ok(r) and r["reducible"] == r["starts"] for r in rows)
    summary["failed_cells"] = sum(1 for r in rows if not ok(r))
    return fits, summary


def _classifier_rows(plan):
    b = plan.bundle
    rows = []
    for k, cls in sv.classifier_table(b.genus, b.ell):
        rows.append({"cell": "k=%d" % k, "grid": None, "delta": None, "k": k,
                     "kind": cls.kind, "detail": cls.to_dict(), "anchor": ANCHORS["classifier_table"]})
    return rows


def environment():
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "machine": platform.machine()}


def run_sweep(plan, threads=1):
    """Execute a SweepPlan.  Deterministic given plan.seed; failures stay in their cells."""
    t_start = time.time()
    report = SweepReport(plan=plan.to_dict(), environment=environment())
    jobs = []
    for name in plan.experiments:
        if name == "classifier_table":
            continue
        for i, (g, d) in enumerate(_cells(plan, name)):
            jobs.append((name, g, d, plan.seed + 1000 * i))
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = [pool.submit(_run_cell, CELLS[n], plan, g, d, s) for n, g, d, s in jobs]
        results = [f.result() for f in futures]
    durations = {}
    for name in plan.experiments:
        if name == "classifier_table":
            t0 = time.perf_counter()
            rows = _classifier_rows(plan)
            durations[name] = {"table": time.perf_counter() - t0}
            report.experiments[name] = {"anchor": ANCHORS[name], "rows": rows, "fits": [],
                                        "summary": {"failed_cells": 0}}
            continue
        rows, times = [], {}
        for (n, g, d, s), (out, dt) in zip(jobs, results):
            if n != name:
                continue
            cell = "%s@%g" % (_grid_label(g), d)
            rows.append({"cell": cell, "grid": _grid_label(g), "delta": d, "seed": s,
                         "anchor": ANCHORS[name], **out})
            times[cell] = dt
        fits, summary = _summarize(plan, name, rows)
        report.experiments[name] = {"anchor": ANCHORS[name], "rows": rows, "fits": fits,
                                    "summary": summary}
        durations[name] = times
    report.timestamps = {"started": t_start, "finished": time.time(), "cell_seconds": durations}
    return report


def default_plan(bundle=None, experiments=("gap_sweep",), n=8, seed=0):
    """Default ladder {2, 4, 8, 16, 32} on an n x n base with the minimal fiber."""
    bundle = geo.BundleSpec(ell=1) if bundle is None else bundle
    grid = lt.square_spec(n, ell=bundle.ell)
    return SweepPlan(bundle, [2, 4, 8, 16, 32], [grid], list(experiments), seed)
