"""Command line front end.

    adiabatic-sw invariants --ell 1 3 --deltas 1 4 16
    adiabatic-sw spectrum --operator dirac --ell 1 --n 8 --delta 4 -k 6
    adiabatic-sw solve job.json --output out/
    adiabatic-sw sweep plan.json --threads 4 --output out/
    adiabatic-sw classify --genus 2 --ell 5
    adiabatic-sw verify --quick

Exit codes: 0 success, 1 a failed check (or a solve that did not
converge), 2 usage error.
"""
import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import geometry as geo
from . import lattice as lt
from . import solver as sv
from . import spectral as sp

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- output

def _rows_to_csv(rows):
    buf = io.StringIO()
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in cols})
    return buf.getvalue()


def _emit(args, stem, payload, rows=None):
    """Write payload (JSON) or rows (CSV) to --output/stem.* or stdout."""
    rows = rows if rows is not None else payload if isinstance(payload, list) else [payload]
    text = _rows_to_csv(rows) if args.format == "csv" else json.dumps(payload, indent=2, default=float) + "\n"
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        path = os.path.join(args.output, "%s.%s" % (stem, args.format))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- subcommands

def cmd_invariants(args):
    rows = []
    for ell in args.ell:
        for d in args.deltas:
            inv = geo.boothby_wang_invariants(geo.BundleSpec(ell, delta=d), args.sigma)
            rows.append({"ell": ell, "delta": d, "lam": inv.lam, "varphi": inv.varphi, "b": inv.b,
                         "sigma": inv.sigma, "kappa": inv.kappa, "scal": inv.scal,
                         "ricci_trace": float(np.trace(geo.ricci_matrix(inv))),
                         "identities_hold": inv.check()})
    _emit(args, "invariants", rows)
    return EXIT_OK if all(r["identities_hold"] for r in rows) else EXIT_FAIL


def _spec(ell, n, delta, fiber_factor=1):
    try:
        return lt.square_spec(n, ell=ell, delta=delta, fiber_factor=fiber_factor)
    except ValueError as exc:
        raise UsageError(str(exc))


def _spectrum_handle(args):
    if args.operator == "dbar":
        return sp.dbar_kernel_handle(args.n, args.degree, tuple(args.hol))
    lat = lt.build_lattice(_spec(args.ell, args.n, args.delta))
    if args.operator == "dirac":
        g = lt.reference_connection(lat, args.degree) if args.ell == 0 else \
            sp.reducible_background(lat, args.degree % abs(args.ell), tuple(args.hol))
        N = lat.size
        mv = lambda x: lt.apply_dirac(lat.delta, g, np.asarray(x).reshape(2, N)).reshape(-1)
        return sp.OperatorHandle(mv, 2 * N, complex, float(lat.h[1]), "dirac")
    A0 = sp.reducible_background(lat, args.degree % abs(args.ell) if args.ell else 0, tuple(args.hol))
    L = sv.linearization(sv.configuration(A0), exclude_harmonic=True)
    return sp.OperatorHandle(L.matvec, L.size, float, float(lat.h[1]), "linearization")


def cmd_spectrum(args):
    op = _spectrum_handle(args)
    req = sp.SpectrumRequest(op, args.k, args.target, args.tol, args.max_iterations, args.seed)
    try:
        res = sp.low_spectrum(req)
    except sp.SpectrumFailure as exc:
        print("spectrum: %s" % exc, file=sys.stderr)
        return EXIT_FAIL
    rep = sp.spectrum_report(args.delta, res)
    rows = [{"delta": rep["delta"], "index": i, "eigenvalue": e, "residual": r}
            for i, (e, r) in enumerate(zip(rep["eigenvalues"], rep["residuals"]))]
    _emit(args, "spectrum", rep, rows)
    return EXIT_OK


def _parse_start(start):
    if start.startswith("random:"):
        return "random", int(start.split(":", 1)[1])
    if start.startswith("reducible:"):
        parts = [p for p in start.split(":", 1)[1].split(",") if p]
        k = int(parts[0]) if parts else 0
        hol = tuple(float(p) for p in parts[1:3]) if len(parts) >= 3 else (0.0, 0.0)
        return "reducible", (k, hol)
    return "snapshot", start


def load_job(path):
    with open(path) as fh:
        job = json.load(fh)
    try:
        bundle = geo.BundleSpec(**job.get("bundle", {"ell": job["lattice"].get("ell", 0)}))
        spec = lt.LatticeSpec.from_dict(job["lattice"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError("bad job file: %s" % exc)
    if spec.ell != bundle.ell:
        raise UsageError("bundle and lattice disagree on ell")
    spec = spec.with_delta(bundle.delta)
    return bundle, spec, job.get("start", "reducible:"), dict(job.get("params", {}))


def build_start(bundle, spec, start, seed=None):
    lat = lt.build_lattice(spec)
    kind, val = _parse_start(start)
    if kind == "reducible":
        k, hol = val
        return sv.configuration(sp.reducible_background(lat, k, hol))
    A0 = sp.reducible_background(lat, bundle.l_n_class)
    if kind == "random":
        return sv.random_start(A0, val if seed is None else seed)
    snap_spec, fields = lt.load_snapshot(val)
    if snap_spec.to_dict() != spec.to_dict():
        raise UsageError("snapshot lattice does not match the job lattice")
    return sv.configuration(A0, fields.get("phi"), fields.get("a"))


def cmd_solve(args):
    if args.job:
        bundle, spec, start, params = load_job(args.job)
    else:
        bundle = geo.BundleSpec(args.ell, delta=args.delta, l_n_class=args.k)
        spec, start, params = _spec(args.ell, args.n, args.delta), args.start, {}
    try:
        p = sv.SolverParams(**params)
    except TypeError as exc:
        raise UsageError("bad solver params: %s" % exc)
    c0 = build_start(bundle, spec, start, None if args.job else args.seed)
    res = sv.find_critical_point(c0, p)
    c = res.config
    summary = {"converged": res.converged, "reducible": res.reducible, "iterations": res.iterations,
               "residual": res.history[-1][2], "functional": res.history[-1][1],
               "psi_norm": res.history[-1][3], "message": res.message,
               "lattice": spec.to_dict(), "start": start}
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        fmt = "json" if args.format == "json" else "binary"
        ext = "json" if fmt == "json" else "bin"
        lt.save_snapshot(os.path.join(args.output, "configuration.%s" % ext), c.lattice,
                         {"phi": c.phi, "a": c.a}, fmt)
        with open(os.path.join(args.output, "convergence.csv"), "w", newline="") as fh:
            fh.write(_rows_to_csv(res.log_rows()))
        with open(os.path.join(args.output, "solve.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
        print(os.path.join(args.output, "solve.json"))
    elif args.format == "csv":
        sys.stdout.write(_rows_to_csv(res.log_rows()))
    else:
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_sweep(args):
    from . import harness
    try:
        plan = harness.SweepPlan.load(args.plan)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise UsageError("bad plan file: %s" % exc)
    if args.seed is not None:
        plan.seed = args.seed
    rep = harness.run_sweep(plan, threads=args.threads)
    if args.output:
        for p in rep.write(args.output, args.format):
            print(p)
    else:
        sys.stdout.write(rep.to_csv() if args.format == "csv" else rep.to_json() + "\n")
    failed = sum(e["summary"].get("failed_cells", 0) for e in rep.experiments.values())
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_classify(args):
    if args.genus < 1:
        raise UsageError("genus must be at least 1")
    if args.k is None:
        table = sv.classifier_table(args.genus, args.ell)
        if not args.pullback or not args.torsion:
            table = [(k, sv.classify_adiabatic(sv.ClassifierInput(args.genus, args.ell, k, args.torsion,
                                                                  args.pullback))) for k, _ in table]
    else:
        table = [(args.k, sv.classify_adiabatic(sv.ClassifierInput(args.genus, args.ell, args.k,
                                                                   args.torsion, args.pullback)))]
    rows = []
    for k, c in table:
        d = c.to_dict()
        rows.append({"genus": args.genus, "ell": args.ell, "k": k, "kind": d["kind"],
                     "irreducible_degrees": " ".join(map(str, d["irreducible_degrees"])),
                     "component": (d["normalization"] or {}).get("component"),
                     "norm_sq": (d["normalization"] or {}).get("norm_sq"),
                     "torus_dim": d["torus_dim"], "limits_realized": d["limits_realized"]})
    _emit(args, "classify", rows)
    return EXIT_OK


def cmd_verify(args):
    from . import acceptance
    nums = args.criteria or None
    results = acceptance.run_all(quick=args.quick, numbers=nums, echo=lambda s: print(s, file=sys.stderr))
    payload = {"quick": args.quick, "criteria": [r.to_dict() for r in results],
               "passed": all(r.passed for r in results)}
    rows = [{"criterion": r.number, "title": r.title, "passed": r.passed, "seconds": r.seconds,
             "failed_checks": "; ".join(r.failures())} for r in results]
    _emit(args, "verify", payload, rows)
    return EXIT_OK if payload["passed"] else EXIT_FAIL


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--output", help="directory for report files (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--quick", action="store_true", help="small grids (verify)")

    p = _Parser(prog="adiabatic-sw", description="Adiabatic Seiberg-Witten lattice toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("invariants", parents=[common], help="bundle invariants over a delta ladder")
    s.add_argument("--ell", type=int, nargs="+", default=[1])
    s.add_argument("--deltas", type=float, nargs="+", default=[1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    s.add_argument("--sigma", type=float, default=0.0, help="base curvature")
    s.set_defaults(func=cmd_invariants)

    s = sub.add_parser("spectrum", parents=[common], help="low spectrum of one operator")
    s.add_argument("--operator", choices=("dirac", "dbar", "linearization"), default="dirac")
    s.add_argument("--ell", type=int, default=0)
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--delta", type=float, default=1.0)
    s.add_argument("--degree", type=int, default=0)
    s.add_argument("--hol", type=float, nargs=2, default=[0.0, 0.0])
    s.add_argument("-k", type=int, default=6)
    s.add_argument("--target", choices=("smallest_magnitude", "smallest_algebraic"),
                   default="smallest_magnitude")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iterations", type=int, default=20000)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("solve", parents=[common], help="one critical point search")
    s.add_argument("job", nargs="?", help="job file (JSON); flags below are used without one")
    s.add_argument("--ell", type=int, default=3)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--n", type=int, default=6)
    s.add_argument("--delta", type=float, default=16.0)
    s.add_argument("--start", default="random:0")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", parents=[common], help="run a sweep plan file")
    s.add_argument("plan")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("classify", parents=[common], help="adiabatic classification table")
    s.add_argument("--genus", type=int, required=True)
    s.add_argument("--ell", type=int, required=True)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--not-pullback", dest="pullback", action="store_false")
    s.add_argument("--non-torsion", dest="torsion", action="store_false")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    s.add_argument("--criteria", type=int, nargs="+", choices=range(1, 11))
    s.set_defaults(func=cmd_verify)
    return p


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.quick and args.command != "verify":
            raise UsageError("--quick applies to verify only")
        if args.seed is None:
            args.seed = 0 if args.command != "sweep" else None
        return args.func(args)
    except UsageError as exc:
        print("adiabatic-sw: error: %s" % exc, file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
