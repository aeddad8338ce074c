"""The ten acceptance checks, shared by the test suite and `verify`.

Each check returns a CriterionResult.  A check passes when every one of its
sub-checks holds at the stated tolerance and it finishes inside its time
budget.  quick=True shrinks grids and sample counts for a smoke run; the
test suite always runs the full versions.
"""
from dataclasses import dataclass, field
import math
import time

import numpy as np
import scipy.sparse as sps

from . import geometry as geo
from . import harness
from . import lattice as lt
from . import solver as sv
from . import spectral as sp
from . import spinors as spn


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    budget: float
    checks: dict = field(default_factory=dict)

    def line(self):
        return "criterion %2d %-34s %s  (%.1f s / %.0f s budget)" % (
            self.number, self.title, "PASS" if self.passed else "FAIL", self.seconds, self.budget)

    def failures(self):
        return [k for k, v in self.checks.items() if not v["ok"]]

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "seconds": self.seconds, "budget": self.budget, "checks": self.checks}


class _Checks:
    def __init__(self):
        self.items = {}

    def add(self, name, ok, **info):
        self.items[name] = {"ok": bool(ok), **{k: _plain(v) for k, v in info.items()}}
        return ok

    def close(self, name, value, target, tol):
        err = float(np.max(np.abs(np.asarray(value) - np.asarray(target))))
        return self.add(name, err <= tol, error=err, tol=tol)

    @property
    def ok(self):
        return all(v["ok"] for v in self.items.values())


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _run(number, title, budget, body, quick):
    t0 = time.perf_counter()
    ch = _Checks()
    try:
        body(ch, quick)
    except Exception as exc:               # a crash is a failed check, not a crash of the suite
        ch.add("exception", False, error="%s: %s" % (type(exc).__name__, exc))
    dt = time.perf_counter() - t0
    ch.add("runtime", dt <= budget, seconds=dt, budget=budget)
    return CriterionResult(number, title, ch.ok, dt, budget, ch.items)


# ---------------------------------------------------------------- 1

def _algebra(ch, quick):
    E = [spn.clifford(v) for v in np.eye(3)]
    I = np.eye(2)
    err = max(np.max(np.abs(E[i] @ E[j] + E[j] @ E[i] + 2 * (i == j) * I))
              for i in range(3) for j in range(3))
    ch.add("clifford relations", err <= 1e-12, error=err)
    rng = np.random.default_rng(1)
    worst = {"trace": 0.0, "hermitian": 0.0, "equivariance": 0.0, "frame": 0.0}
    for _ in range(50):
        phi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        t = spn.tau(phi)
        g = spn.spin_element(rng.standard_normal(4))
        worst["trace"] = max(worst["trace"], abs(np.trace(t)))
        worst["hermitian"] = max(worst["hermitian"], np.max(np.abs(t - t.conj().T)))
        worst["equivariance"] = max(worst["equivariance"],
                                    np.max(np.abs(spn.tau(g @ phi) - g @ t @ g.conj().T)))
        worst["frame"] = max(worst["frame"], np.max(np.abs(spn.tau_via_frame(phi) - t)))
    for k, v in worst.items():
        ch.add("tau " + k, v <= 1e-12, error=v)
    bw, ric, deform = 0.0, 0.0, 0.0
    for ell in (-3, -1, 0, 1, 2, 5):
        base = geo.boothby_wang_invariants(geo.BundleSpec(ell))
        for d in (0.5, 1.0, 2.0, 16.0, 100.0):
            inv = geo.boothby_wang_invariants(geo.BundleSpec(ell, delta=d))
            s = 1 + ell ** 2
            bw = max(bw, abs(inv.lam + ell / d) / s, abs(inv.b - inv.lam - inv.varphi) / s,
                     abs(inv.b) / s,
                     abs(inv.kappa - (inv.sigma - inv.lam ** 2 + 2 * inv.lam * inv.varphi)) / s,
                     abs(inv.scal - (2 * inv.kappa + 4 * inv.lam ** 2)) / s,
                     abs(inv.scal - 2 * (inv.sigma - ell ** 2 / d ** 2)) / s)
            ric = max(ric, abs(np.trace(geo.ricci_matrix(inv)) - inv.scal) / s)
            dd = geo.anisotropic_deform(base, d)
            deform = max(deform, abs(dd.lam - inv.lam) / s, abs(dd.varphi - inv.varphi) / s,
                         abs(dd.kappa - inv.kappa) / s, abs(dd.scal - inv.scal) / s)
    ch.add("bundle invariant identities", bw <= 1e-12, error=bw)
    ch.add("deformation matches direct invariants", deform <= 1e-12, error=deform)
    ch.add("ricci trace = scalar curvature", ric <= 1e-12, error=ric)


# ---------------------------------------------------------------- 2

def dirac_stencil_matrix(gauge):
    """Sparse matrix of delta Z + T + lambda/2 assembled entry by entry.

    Written from the stencils directly (centered fiber difference, forward
    dbar, its matrix adjoint) without calling the field operators, so it is
    an independent route to the same operator.
    """
    lat = gauge.lattice
    N = lat.size
    n = np.arange(N)
    ht, hx, hy = lat.h
    U = gauge.links
    ft, bt = lat.fwd[0], lat.bwd[0]
    # centered fiber difference
    Dt = sps.csr_matrix((U[0] / (2 * ht), (n, ft)), shape=(N, N)) \
        - sps.csr_matrix((np.conj(U[0][bt]) / (2 * ht), (n, bt)), shape=(N, N))
    P = (sps.csr_matrix((U[1] / hx, (n, lat.fwd[1])), shape=(N, N)) - sps.identity(N) / hx
         + 1j * (sps.csr_matrix((U[2] / hy, (n, lat.fwd[2])), shape=(N, N)) - sps.identity(N) / hy))
    Z = sps.bmat([[1j * Dt, None], [None, -1j * Dt]])
    T = sps.bmat([[None, P], [P.conj().T, None]])
    return (lat.delta * Z + T + 0.5 * lat.lam * sps.identity(2 * N)).tocsr(), Z.tocsr(), T.tocsr()


def _op_grids(quick):
    specs = [lt.LatticeSpec(8, 8, 8, delta=3.0), lt.square_spec(4, ell=1, delta=5.0)]
    if not quick:
        specs += [lt.LatticeSpec(16, 16, 16, delta=3.0), lt.square_spec(8, ell=1, delta=5.0)]
    return specs


def _operators(ch, quick):
    rng = np.random.default_rng(2)
    err = {"split": 0.0, "phi0": 0.0, "sa_D": 0.0, "sa_Z": 0.0, "sa_T": 0.0,
           "sa_L0": 0.0, "cov": 0.0, "herm": 0.0}
    for spec in _op_grids(quick):
        lat = lt.build_lattice(spec)
        g = lt.link_field(lat, lt.smooth_form(lat, rng), base=lt.reference_connection(lat, 1))
        phi = lat.random_spinor(rng)
        nrm = lambda x: float(np.linalg.norm(x))
        D, Z, T = dirac_stencil_matrix(g)
        vec = lambda x: x.reshape(-1)
        Dphi = lt.apply_dirac(lat.delta, g, phi)
        err["split"] = max(err["split"], nrm(vec(Dphi) - D @ vec(phi)) / nrm(Dphi))
        err["herm"] = max(err["herm"], abs(D - D.conj().T).max() / abs(D).max())
        # distinguished spinor at the trivial connection
        triv = lt.trivial_connection(lat)
        phi0 = np.stack([np.zeros(lat.size), np.full(lat.size, 1.0 + 0j)])
        r = lt.apply_dirac(lat.delta, triv, phi0) - 0.5 * lat.lam * phi0
        err["phi0"] = max(err["phi0"], nrm(r) / nrm(phi0))
        # self-adjointness in the g_delta pairing
        u, v = lat.random_spinor(rng), lat.random_spinor(rng)
        for key, op in (("sa_D", lambda x: lt.apply_dirac(lat.delta, g, x)),
                        ("sa_Z", lambda x: lt.apply_Z(g, x)), ("sa_T", lambda x: lt.apply_T(g, x))):
            a, b = lat.inner(op(u), v), lat.inner(u, op(v))
            err[key] = max(err[key], abs(a - b) / (lat.norm(op(u)) * lat.norm(v)))
        # constrained linearization at the reducible
        A0 = sp.reducible_background(lat, 0)
        L = sv.linearization(sv.configuration(A0))
        x, y = rng.standard_normal(L.size), rng.standard_normal(L.size)
        Lx, Ly = L.matvec(x), L.matvec(y)
        err["sa_L0"] = max(err["sa_L0"], abs(L.inner(Lx, y) - L.inner(x, Ly))
                           / math.sqrt(L.inner(Lx, Lx) * L.inner(y, y)))
        # gauge covariance
        gam = np.exp(1j * rng.uniform(0, 2 * np.pi, lat.size))
        lhs = lt.apply_dirac(lat.delta, g.gauge_transform(gam), gam * phi)
        err["cov"] = max(err["cov"], nrm(lhs - gam * Dphi) / nrm(Dphi))
    ch.add("D = delta Z + T + lambda/2 (stencil oracle)", err["split"] <= 1e-13, error=err["split"])
    ch.add("stencil matrix hermitian", err["herm"] <= 1e-13, error=err["herm"])
    ch.add("D phi0 = (lambda/2) phi0", err["phi0"] <= 1e-13, error=err["phi0"])
    for k in ("sa_D", "sa_Z", "sa_T", "sa_L0"):
        ch.add("self-adjoint " + k[3:], err[k] <= 1e-11, error=err[k])
    ch.add("gauge covariance", err["cov"] <= 1e-13, error=err["cov"])


# ---------------------------------------------------------------- 3

def anticommutator_ladder(ns, ell=1, delta=2.0, seed=5):
    """Residuals of the anti-commutator defect on one smooth field per grid."""
    out = []
    for n in ns:
        lat = lt.build_lattice(lt.square_spec(n, ell=ell, delta=delta))
        # the same continuum field on every grid: modes and amplitudes fixed by the seed
        g = lt.link_field(lat, lt.smooth_form(lat, np.random.default_rng(seed)),
                          base=lt.reference_connection(lat, 1))
        out.append(lt.anticommutator_residual(g, rng=np.random.default_rng(seed + 1)))
    return out


def _anticommutator(ch, quick):
    ns = (8, 16) if quick else (8, 16, 32)
    res = anticommutator_ladder(ns)
    ratios = [res[i + 1] / res[i] for i in range(len(res) - 1)]
    ch.add("residual decreases", all(r < 1 for r in ratios), residuals=res, ns=list(ns))
    for n, r in zip(ns, ratios):
        ch.add("ratio r(%d)/r(%d) <= 0.6" % (2 * n, n), r <= 0.6, ratio=r)


# ---------------------------------------------------------------- 4

def _chern(ch, quick):
    bad = []
    for spec in (lt.LatticeSpec(8, 8, 8), lt.square_spec(8, ell=1), lt.square_spec(6, ell=3)):
        lat = lt.build_lattice(spec)
        nt = lat.shape[0]
        for d in range(-2, 3):
            N = lt.flux_integer(lt.reference_connection(lat, d))
            if not (isinstance(N, int) and N == -d * nt):
                bad.append((spec.ell, "reference", d, N))
        for k in range(abs(spec.ell)):
            g = lt.flat_connection(lat, k, (0.2, 0.45))
            N = lt.flux_integer(g)
            if not (isinstance(N, int) and N % nt == 0 and (N // nt - k) % abs(spec.ell) == 0):
                bad.append((spec.ell, "flat", k, N))
    ch.add("integer flux for constructed gauges", not bad, failures=bad)
    lat = lt.build_lattice(lt.square_spec(6, ell=3, delta=16.0))
    A0 = lt.flat_connection(lat, 1)
    h = float(np.max(lat.h))
    for seed in ((0,) if quick else (0, 1)):
        r = sv.find_critical_point(sv.random_start(A0, seed, 0.1, 0.1))
        res = sv.sw_residual(r.config)
        defect = sv.chern_defect(r.config)
        ch.add("pairing identity at solution (seed %d)" % seed,
               r.converged and res <= 1e-8 and defect <= h,
               residual=res, defect=defect, bound=h)


# ---------------------------------------------------------------- 5

def _kernels(ch, quick):
    n = 12
    cases = [(-2, (0, 0)), (-1, (0, 0)), (0, (0, 0)), (0, (0.3, 0.7)), (1, (0, 0)), (2, (0, 0))]
    for d, hol in cases:
        op = sp.dbar_kernel_handle(n, d, hol)
        tol = sp.default_gap_tol(op)
        count = sp.kernel_dimension(op, tol)
        ev = np.linalg.eigvalsh(op.to_dense())
        dense = int(np.sum(np.abs(ev) < tol))
        expect = sp.riemann_roch_count(d, hol)
        ch.add("degree %d hol %s" % (d, hol), count == dense == expect,
               lanczos=count, dense=dense, riemann_roch=expect)


# ---------------------------------------------------------------- 6

GAP_DELTAS = (2.0, 4.0, 8.0, 16.0, 32.0)


def _gap(ch, quick):
    bundle = geo.BundleSpec(ell=1)
    n0 = 4 if quick else 8
    coarse = sp.gap_sweep(bundle, GAP_DELTAS, n=n0)
    pts = [(r.delta, r.z) for r in coarse]
    p, c, r2 = harness.fit_power_law(pts, (4.0, None))
    ch.add("fit exponent in [-1.15, -0.85]", -1.15 <= p <= -0.85, exponent=p, grid=n0)
    ch.add("fit R^2 >= 0.98", r2 >= 0.98, r2=r2)
    fine = sp.gap_sweep(bundle, [d for d in GAP_DELTAS if d >= 4.0], n=2 * n0)
    zc = {r.delta: r.z for r in coarse}
    change = {r.delta: abs(r.z - zc[r.delta]) / zc[r.delta] for r in fine}
    ch.add("stable under grid doubling (5%)", max(change.values()) <= 0.05,
           change={str(k): v for k, v in change.items()})
    pf, _, r2f = harness.fit_power_law([(r.delta, r.z) for r in fine])
    ch.add("doubled grid exponent within 5%", abs(pf - p) <= 0.05 * abs(p), exponent=pf, r2=r2f)


# ---------------------------------------------------------------- 7

def _decoupling(ch, quick):
    bundle = geo.BundleSpec(ell=2, l_n_class=1)
    grid = lt.square_spec(4 if quick else 6, ell=2)
    plan = harness.SweepPlan(bundle, [4, 8, 16, 32], [grid], ["decoupling_scaling"], seed=11,
                             options={"perturbation": 0.05})
    rep = harness.run_sweep(plan)
    exp = rep.experiments["decoupling_scaling"]
    rows = exp["rows"]
    ch.add("all cells converged", all(r.get("error") is None and r["converged"] for r in rows),
           residuals=[r.get("residual") for r in rows])
    if exp["summary"]["all_exactly_reducible"]:
        ch.add("exactly reducible branch: quantities < 1e-8", True,
               max_value=exp["summary"]["max_value"])
    else:
        for f in exp["fits"]:
            ok = f["exponent"] is not None and f["exponent"] <= -1.3
            ch.add("exponent of %s <= -1.3" % f["quantity"], ok, exponent=f["exponent"], r2=f["r2"])


# ---------------------------------------------------------------- 8

def _stability(ch, quick):
    lat = lt.build_lattice(lt.square_spec(6, ell=3, delta=16.0))
    A0 = lt.flat_connection(lat, 1)
    system = sv.SWSystem(A0)
    thr = sv.reducibility_threshold(lat)
    runs = []
    for seed in range(4 if quick else 20):
        r = sv.find_critical_point(sv.random_start(system, 100 + seed, 0.1, 0.1))
        runs.append((r.converged, r.reducible, lat.norm(r.config.phi)))
    ch.add("all runs converged", all(a for a, _, _ in runs), count=len(runs))
    ch.add("all runs reducible", all(b for _, b, _ in runs),
           max_psi_norm=max(p for _, _, p in runs), threshold=thr)


# ---------------------------------------------------------------- 9

GOLDEN = [
    ((2, 5, 2), sv.REDUCIBLE_ONLY, None),
    ((2, 5, 3), sv.REDUCIBLE_ONLY, None),
    ((1, 3, 1), sv.REDUCIBLE_ONLY, None),
    ((2, 4, 3), sv.REDUCIBLE_PLUS_UNIQUE, {"component": "beta", "norm_sq": 2}),
    ((2, 4, 1), sv.REDUCIBLE_PLUS_UNIQUE, {"component": "alpha", "norm_sq": 2}),
    ((3, 7, 5), sv.REDUCIBLE_PLUS_UNIQUE, {"component": "beta", "norm_sq": 4}),
    ((2, 0, 0), sv.REDUCIBLE_TORI, None),
    ((3, 0, 2), sv.IRREDUCIBLE_FAMILY, None),
    ((2, 0, 4), sv.EMPTY, None),
]


def _classifier(ch, quick):
    for (g, ell, k), kind, norm in GOLDEN:
        c = sv.classify_adiabatic(sv.ClassifierInput(g, ell, k))
        ok = c.kind == kind and (norm is None or c.normalization == norm)
        ch.add("g=%d ell=%d k=%d" % (g, ell, k), ok, got=c.kind, normalization=c.normalization)
    ch.add("stable range V(2,5) = {2,3}", sv.stable_range(2, 5) == {2, 3})
    g1 = all(c.kind == sv.REDUCIBLE_ONLY for ell in range(1, 8) for _, c in sv.classifier_table(1, ell))
    ch.add("genus one: reducible only for every class", g1)
    notpb = all(sv.classify_adiabatic(sv.ClassifierInput(g, 5, 2, is_pullback=False)).kind == sv.EMPTY
                for g in (1, 2, 3))
    ch.add("not pulled back: empty", notpb)
    tori = sv.classify_adiabatic(sv.ClassifierInput(2, 0, 0))
    ch.add("product case torus dimension 2g+1", tori.torus_dim == 5, dim=tori.torus_dim)
    ch.add("table has |ell| rows", len(sv.classifier_table(2, 5)) == 5)
    try:
        sv.classify_adiabatic(sv.ClassifierInput(0, 3, 1))
        ch.add("genus 0 rejected", False)
    except ValueError:
        ch.add("genus 0 rejected", True)


# ---------------------------------------------------------------- 10

def _taubes(ch, quick):
    ok, r = sv.taubes_radius(sv.TaubesProblem(1.0, 0.3, 0.0))
    ch.add("eps0 = 0 gives r = 0", ok and r == 0.0, r=r)
    ok, _ = sv.taubes_radius(sv.TaubesProblem(1.0, 0.25, 0.5))
    ch.add("q = 1/4, eps0 = 1/2 inadmissible", not ok)
    worst = 0.0
    for q, e in ((1.0, 0.125), (0.1, 0.01), (2.0, 0.1), (0.5, 0.3), (3.0, 0.08)):
        ok, r = sv.taubes_radius(sv.TaubesProblem(1.0, q, e))
        roots = np.sort(np.roots([q, -1.0, e]).real)
        worst = max(worst, abs(r - roots[0]))
    ch.add("radius is the smallest root of q r^2 - r + eps0", worst <= 1e-12, error=worst)
    _, r = sv.taubes_radius(sv.TaubesProblem(1.0, 1.0, 0.125))
    ch.close("q = 1, eps0 = 1/8", r, (1 - math.sqrt(0.5)) / 2, 1e-15)
    below = sv.taubes_radius(sv.TaubesProblem(1.0, 1.0, 0.25 * (1 - 1e-9)))[0]
    above = sv.taubes_radius(sv.TaubesProblem(1.0, 1.0, 0.25 * (1 + 1e-9)))[0]
    ch.add("admissibility boundary eps0 = 1/(4q)", below and not above)
    # scalar toy y - 0.01 + 0.1 y^2
    p = sv.TaubesProblem(1.0, 0.1, 0.01)
    res = sv.taubes_solve(lambda x: x, lambda y: -0.01 + 0.1 * y ** 2,
                          lambda y: y - 0.01 + 0.1 * y ** 2, p)
    root = (-1 + math.sqrt(1.004)) / 0.2
    ch.add("scalar toy root", abs(float(res.y) - root) <= 1e-13 and abs(res.y) <= res.radius,
           y=float(res.y), root=root, r=res.radius)
    # linear case
    b = np.array([0.02, -0.01, 0.005])
    L = np.diag([2.0, 3.0, 4.0])
    res = sv.taubes_solve(lambda x: np.linalg.solve(L, x), lambda y: b, lambda y: L @ y + b,
                          sv.TaubesProblem(2.0, 0.0, float(np.linalg.norm(b))), shape=(3,))
    ch.add("linear case: one step", res.iterations == 1
           and np.allclose(res.y, -np.linalg.solve(L, b), rtol=0, atol=1e-15), iterations=res.iterations)
    # vector problem N(y) = b + kappa |y| y
    rng = np.random.default_rng(7)
    M = rng.standard_normal((6, 6))
    Lv = M @ M.T + 3 * np.eye(6)
    mu = float(np.linalg.eigvalsh(Lv)[0])
    kappa = 0.4
    bv = 0.05 * rng.standard_normal(6)
    N = lambda y: bv + kappa * np.linalg.norm(y) * y
    pv = sv.TaubesProblem(mu, kappa, float(np.linalg.norm(bv)))
    res = sv.taubes_solve(lambda x: np.linalg.solve(Lv, x), N, lambda y: Lv @ y + N(y), pv, shape=(6,))
    ch.add("vector problem converges inside the ball",
           res.residual <= 1e-12 and np.linalg.norm(res.y) <= res.radius and res.max_ratio < 1,
           residual=res.residual, norm=float(np.linalg.norm(res.y)), r=res.radius)


CRITERIA = [
    (1, "exact algebra", 1.0, _algebra),
    (2, "operator identities", 30.0, _operators),
    (3, "anti-commutator convergence", 120.0, _anticommutator),
    (4, "chern quantization and pairing", 60.0, _chern),
    (5, "kernel counting", 120.0, _kernels),
    (6, "spectral gap scaling", 600.0, _gap),
    (7, "decoupling scaling", 900.0, _decoupling),
    (8, "adiabatic stability", 1200.0, _stability),
    (9, "classifier golden table", 1.0, _classifier),
    (10, "fixed point machinery", 1.0, _taubes),
]


def run_criterion(number, quick=False):
    num, title, budget, body = CRITERIA[number - 1]
    return _run(num, title, budget, body, quick)


def run_all(quick=False, numbers=None, echo=None):
    out = []
    for num, *_ in CRITERIA:
        if numbers is not None and num not in numbers:
            continue
        r = run_criterion(num, quick)
        if echo is not None:
            echo(r.line())
        out.append(r)
    return out
