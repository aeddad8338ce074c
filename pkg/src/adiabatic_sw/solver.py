"""Chern-Simons-Dirac functional on the lattice and its critical points.

A configuration is (psi, a) on a lattice with a fixed background connection
A0.  The 1-form a is imaginary valued; we store the real form theta = -i a
by its g_delta orthonormal components (see forms.py).  The connection
A0 + a acts through the links U0 * exp(i h' theta) with h' = (h_t/delta,
h_x, h_y).

    f(psi, a) = 1/2 <psi, D_{A0+a} psi>_delta + CS(a)
    CS(a)     = -<theta, *f0> - 1/2 <P theta, K P theta>

K is the symmetric curl of forms.py, P the Coulomb projection and *f0 the
Coulomb part of the background curvature.  Because P kills exact forms the
functional is exactly invariant under every lattice gauge transformation.
Its gradient is (D psi, J(psi) - *F) where J, the derivative of the Dirac
term in a, is the lattice current approximating c^{-1}(tau(psi)), and
*F = *f0 + P K P theta.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from . import forms
from . import lattice as lt


# ---------------------------------------------------------------- the system

class SWSystem:
    """Lattice, background connection and the cached background flux."""

    def __init__(self, background):
        self.background = background
        self.lattice = background.lattice
        self.fg = forms.form_gauge(self.lattice)
        lat = self.lattice
        self.hp = np.array([lat.h[0] / lat.delta, lat.h[1], lat.h[2]])
        cur = lt.curvature(background, check_branch=False)
        star_f0 = np.stack([cur["xy"], -lat.delta * cur["ty"], lat.delta * cur["tx"]])
        self.star_f0 = forms.coulomb_project(self.fg, star_f0)

    def links(self, theta):
        return self.background.links * np.exp(1j * self.hp[:, None] * theta)

    def gauge(self, theta):
        g = lt.GaugeField.__new__(lt.GaugeField)
        g.lattice, g.links = self.lattice, self.links(theta)
        g.label, g.extra = self.background.label + "+a", {}
        return g

    def P(self, a):
        return forms.coulomb_project(self.fg, a)

    def curl(self, a):
        return np.real(forms.curl(self.fg, a))

    def star_F(self, theta):
        """*F of A0 + a in the lattice model used by the functional."""
        return self.star_f0 + self.P(self.curl(self.P(theta)))


@dataclass
class Configuration:
    phi: np.ndarray
    a: np.ndarray
    system: SWSystem
    coulomb: bool = False

    @property
    def lattice(self):
        return self.system.lattice

    @property
    def delta(self):
        return self.system.lattice.delta

    def copy(self):
        return Configuration(self.phi.copy(), self.a.copy(), self.system, self.coulomb)

    def gauge(self):
        return self.system.gauge(self.a)


def configuration(background, phi=None, a=None):
    sys_ = background if isinstance(background, SWSystem) else SWSystem(background)
    lat = sys_.lattice
    phi = lat.zeros_spinor() if phi is None else np.asarray(phi, dtype=complex)
    a = np.zeros((3, lat.size)) if a is None else np.asarray(a, dtype=float)
    return Configuration(phi, a, sys_)


def gauge_act(c, f):
    """Gauge transformation gamma = exp(i f): psi -> gamma psi, theta -> theta - d f."""
    return Configuration(np.exp(1j * f) * c.phi, c.a - forms.d0(c.system.fg, f),
                         c.system, False)


# ---------------------------------------------------------------- lattice current

def _link_pairing(lat, psi, chi):
    """X_mu(n): coefficient of U_mu(n) in sum_n (D psi)(n) conj(chi(n))."""
    f = lat.fwd
    ht, hx, hy = lat.h
    cc = np.conj(chi)
    Xt = (1j * lat.delta / (2 * ht)) * (psi[0][..., f[0]] * cc[0] - psi[1][..., f[0]] * cc[1])
    Xx = psi[1][..., f[1]] * cc[0] / hx
    Xy = 1j * psi[1][..., f[2]] * cc[0] / hy
    return np.stack([Xt, Xx, Xy])


def current(system, psi, theta):
    """Gradient in theta of 1/2 <psi, D psi>_delta (a real 1-form)."""
    U = system.links(theta)
    X = _link_pairing(system.lattice, psi, psi)
    return -system.hp[:, None] * np.imag(U * X)


def _links_only_dirac(system, links, psi):
    """The link dependent part of D: D with links V minus D with zero links."""
    lat = system.lattice
    g = lt.GaugeField.__new__(lt.GaugeField)
    g.lattice, g.links, g.label, g.extra = lat, links, "", {}
    z = lt.GaugeField.__new__(lt.GaugeField)
    z.lattice, z.links, z.label, z.extra = lat, np.zeros_like(links), "", {}
    return lt.apply_dirac(lat.delta, g, psi) - lt.apply_dirac(lat.delta, z, psi)


# ---------------------------------------------------------------- functional

def sw_functional(c):
    sys_, lat = c.system, c.lattice
    Dpsi = lt.apply_dirac(lat.delta, c.gauge(), c.phi)
    dirac = 0.5 * lat.inner(Dpsi, c.phi).real
    pa = sys_.P(c.a)
    cs = -forms.inner(lat, c.a, sys_.star_f0).real - 0.5 * forms.inner(lat, pa, sys_.curl(pa)).real
    return dirac + cs


def sw_gradient(c, constrained=False):
    """(D psi, J(psi) - *F); with constrained=True the form slot is Coulomb projected."""
    sys_, lat = c.system, c.lattice
    Dpsi = lt.apply_dirac(lat.delta, c.gauge(), c.phi)
    J = current(sys_, c.phi, c.a)
    if constrained:
        J = sys_.P(J)
    return Dpsi, J - sys_.star_F(c.a)


def tangent_norm(lat, g):
    return math.sqrt(lat.norm(g[0]) ** 2 + forms.norm(lat, g[1]) ** 2)


def sw_residual(c):
    """g_delta norm of (D psi, J(psi) - *F): the Dirac and curvature equations."""
    return tangent_norm(c.lattice, sw_gradient(c))


def reducibility_threshold(lat, factor=1e-6):
    return factor * math.sqrt(lat.vol)


def is_reducible(c, factor=1e-6):
    return c.lattice.norm(c.phi) < reducibility_threshold(c.lattice, factor)


# ---------------------------------------------------------------- linearization

def _pack(psi, a):
    return np.concatenate([psi.real.ravel(), psi.imag.ravel(), a.ravel()])


def _unpack(lat, x):
    n2 = 2 * lat.size
    psi = (x[:n2] + 1j * x[n2:2 * n2]).reshape(2, lat.size)
    return psi, x[2 * n2:].reshape(3, lat.size)


def hessian_apply(c, dpsi, da):
    """Second derivative of the functional at c applied to (dpsi, da)."""
    sys_, lat = c.system, c.lattice
    U = sys_.links(c.a)
    hp = sys_.hp[:, None]
    g = c.gauge()
    V = U * (1j * hp * da)
    spin = lt.apply_dirac(lat.delta, g, dpsi) + _links_only_dirac(sys_, V, c.phi)
    X = _link_pairing(lat, dpsi, c.phi) + _link_pairing(lat, c.phi, dpsi)
    dJ = -hp * np.imag(U * X) - hp ** 2 * da * np.real(U * _link_pairing(lat, c.phi, c.phi))
    form = dJ - sys_.P(sys_.curl(sys_.P(da)))
    return spin, form


@dataclass
class Linearization:
    """Self-adjoint operator on real-packed pairs (Re psi, Im psi, theta).

    The inner product is dv_delta times the Euclidean one, so the matrix is
    symmetric.  project() applies Q (orthogonal to i psi) and P (Coulomb),
    and optionally removes the harmonic forms.
    """
    config: Configuration
    exclude_harmonic: bool = False
    size: int = field(init=False)

    def __post_init__(self):
        self.size = 7 * self.config.lattice.size
        psi = self.config.phi
        n = self.config.lattice.norm(psi)
        self._orbit = 1j * psi / n if n > 1e-300 else None

    def project(self, x):
        lat = self.config.lattice
        psi, a = _unpack(lat, x)
        if self._orbit is not None:
            psi = psi - lat.inner(psi, self._orbit).real * self._orbit
        a = self.config.system.P(a)
        if self.exclude_harmonic:
            a = forms.remove_harmonic(lat, a)
        return _pack(psi, a)

    def apply_unprojected(self, x):
        psi, a = _unpack(self.config.lattice, x)
        return _pack(*hessian_apply(self.config, psi, a))

    def matvec(self, x):
        return self.project(self.apply_unprojected(self.project(np.asarray(x, dtype=float))))

    def inner(self, x, y):
        return float(np.dot(x, y)) * self.config.lattice.dv

    def as_linear_operator(self):
        return LinearOperator((self.size, self.size), matvec=self.matvec, dtype=float)


def linearization(c, exclude_harmonic=False):
    return Linearization(c, exclude_harmonic)


# ---------------------------------------------------------------- search

@dataclass
class SolverParams:
    tol: float = 1e-10
    max_iter: int = 200
    newton_switch: float = 1e-3
    newton_max: int = 40
    armijo: float = 1e-4
    step0: float = 1.0
    min_step: float = 1e-12
    inner_tol: float = 1e-10
    inner_maxiter: int = 2000
    reducible_factor: float = 1e-6


@dataclass
class SolveResult:
    config: Configuration
    converged: bool
    reducible: bool
    iterations: int
    history: list
    message: str = ""

    def log_rows(self):
        return [dict(zip(("iteration", "functional", "residual", "psi_norm"), r)) for r in self.history]


class SolverFailure(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


def to_coulomb(c):
    """Gauge equivalent configuration with d*_delta theta = 0."""
    fg = c.system.fg
    u = forms.solve_poisson(fg, forms.d0_adj(fg, c.a))
    out = gauge_act(c, u)
    out.coulomb = True
    return out


def _merit(c):
    g = sw_gradient(c)
    return 0.5 * tangent_norm(c.lattice, g) ** 2, g


def _step(c, dpsi, da, s):
    return Configuration(c.phi + s * dpsi, c.a + s * da, c.system)


def _newton_direction(c, params):
    L = linearization(c)
    lat = c.lattice
    g = sw_gradient(c, constrained=True)
    rhs = -L.project(_pack(*g))
    x, _ = minres(L.as_linear_operator(), rhs, rtol=params.inner_tol, maxiter=params.inner_maxiter)
    return _unpack(lat, L.project(x))


def find_critical_point(start, params=None, raise_on_failure=False):
    """Merit-function descent with Newton steps.

    The functional itself is unbounded in both directions, so the globalizing
    phase descends the merit 1/2 ||grad f||^2, whose gradient is Hess f
    applied to grad f; Armijo backtracking makes the merit non-increasing
    along accepted steps.  Newton steps (MINRES on the constrained
    linearization, backtracked on the same merit) are used once the residual
    is below newton_switch, and earlier whenever a descent step reduced the
    residual by less than 10 percent; after an accepted Newton step the next
    step is Newton again.  A rejected Newton step falls back to descent.  Every accepted iterate is returned to Coulomb gauge.
    """
    p = SolverParams() if params is None else params
    c = to_coulomb(start)
    lat = c.lattice
    history = []
    phi_val, g = _merit(c)
    res = math.sqrt(2 * phi_val)
    history.append((0, sw_functional(c), res, lat.norm(c.phi)))
    it = 0
    newton_steps = 0
    stalled = False
    while res > p.tol and it < p.max_iter:
        it += 1
        use_newton = (res < p.newton_switch or stalled) and newton_steps < p.newton_max
        accepted = False
        for mode in (("newton", "flow") if use_newton else ("flow",)):
            if mode == "newton":
                dpsi, da = _newton_direction(c, p)
                slope = -2 * phi_val
                newton_steps += 1
            else:
                hg = hessian_apply(c, g[0], g[1])
                dpsi, da = -hg[0], -hg[1]
                slope = -tangent_norm(lat, hg) ** 2
            s = p.step0
            while s >= p.min_step:
                trial = _step(c, dpsi, da, s)
                t_val, _ = _merit(trial)
                if t_val <= phi_val + p.armijo * s * slope:
                    accepted = True
                    break
                s *= 0.5
            if accepted:
                break
        if not accepted:
            break
        c = to_coulomb(trial)
        phi_val, g = _merit(c)
        new_res = math.sqrt(2 * phi_val)
        # keep using Newton while it works; return to it when descent stalls
        stalled = mode == "newton" or new_res > 0.9 * res
        res = new_res
        history.append((it, sw_functional(c), res, lat.norm(c.phi)))
    converged = res <= p.tol
    reducible = lat.norm(c.phi) < reducibility_threshold(lat, p.reducible_factor)
    msg = "converged" if converged else ("line search stalled" if it < p.max_iter else "iteration cap")
    if not converged and raise_on_failure:
        raise SolverFailure("no convergence: %s, residual %.3e" % (msg, res), history)
    return SolveResult(c, converged, reducible, it, history, msg)


def random_start(background, seed, psi_scale=0.1, a_scale=0.1):
    """Small random configuration: psi and theta with unit-size entries times the scales."""
    sys_ = background if isinstance(background, SWSystem) else SWSystem(background)
    lat = sys_.lattice
    rng = np.random.default_rng(seed)
    phi = psi_scale * (rng.standard_normal((2, lat.size)) + 1j * rng.standard_normal((2, lat.size)))
    a = sys_.P(a_scale * rng.standard_normal((3, lat.size)))
    return Configuration(phi, a, sys_)


# ---------------------------------------------------------------- decoupling

def decoupling_quantities(c):
    """(||T_A psi||_delta, || |alpha| |beta| ||_delta) at a configuration."""
    lat = c.lattice
    g = c.gauge()
    T = lt.apply_T(g, c.phi)
    ab = np.abs(c.phi[0]) * np.abs(c.phi[1])
    return lat.norm(T), math.sqrt(lat.dv) * float(np.linalg.norm(ab))


def chern_defect(c):
    """|int eta_delta ^ c1(F_A) - (||alpha||^2 - ||beta||^2)/(4 pi)|."""
    lat = c.lattice
    _, pairing = lt.chern_pairing(c.gauge(), check_branch=False)
    al = float(np.sum(np.abs(c.phi[0]) ** 2)) * lat.dv
    be = float(np.sum(np.abs(c.phi[1]) ** 2)) * lat.dv
    return abs(pairing - (al - be) / (4 * math.pi))


# ---------------------------------------------------------------- classifier

REDUCIBLE_ONLY = "ReducibleOnly"
REDUCIBLE_PLUS_UNIQUE = "ReduciblePlusUniqueIrreducible"
IRREDUCIBLE_FAMILY = "IrreducibleFamily"
REDUCIBLE_TORI = "ReducibleTori"
EMPTY = "Empty"


@dataclass
class ClassifierInput:
    genus: int
    ell: int
    k: int = 0
    c1_is_torsion: bool = True
    is_pullback: bool = True

    def canonical(self):
        if self.genus < 1:
            raise ValueError("genus must be at least 1")
        k = self.k % abs(self.ell) if self.ell != 0 else self.k
        torsion = self.c1_is_torsion if self.ell != 0 else (k == 0)
        return ClassifierInput(self.genus, self.ell, k, torsion, self.is_pullback)


@dataclass
class Classification:
    kind: str
    reducible_tori: int = 0
    torus_dim: int = 0
    irreducible_degrees: tuple = ()
    normalization: dict = None
    limits_realized: bool = False
    note: str = ""

    def to_dict(self):
        return {"kind": self.kind, "reducible_tori": self.reducible_tori, "torus_dim": self.torus_dim,
                "irreducible_degrees": list(self.irreducible_degrees),
                "normalization": self.normalization, "limits_realized": self.limits_realized,
                "note": self.note}


def stable_range(genus, ell):
    """V = {g, ..., |ell| - g} mod ell; empty unless |ell| >= 2g."""
    L = abs(ell)
    if L < 2 * genus:
        return frozenset()
    return frozenset(v % L for v in range(genus, L - genus + 1))


def realization_range(genus, ell):
    """R = {0} u {g-1, ..., |ell| - g + 1} mod ell; empty unless |ell| >= 2g - 1."""
    L = abs(ell)
    if L < 2 * genus - 1 or L == 0:
        return frozenset()
    return frozenset({0} | {v % L for v in range(genus - 1, L - genus + 2)})


def classify_adiabatic(inp):
    c = inp.canonical()
    g, ell, k = c.genus, c.ell, c.k
    if not c.is_pullback or (ell != 0 and not c.c1_is_torsion):
        return Classification(EMPTY, note="not a pulled-back spin^c structure: no solutions for large delta")
    if ell == 0:
        if k == 0:
            return Classification(REDUCIBLE_TORI, 1, 2 * g + 1, note="product case, torsion class")
        if abs(k) <= g - 1:
            return Classification(IRREDUCIBLE_FAMILY, irreducible_degrees=(k,))
        return Classification(EMPTY, note="only degrees with |d| > g - 1")
    L = abs(ell)
    realized = k in realization_range(g, ell)
    if g == 1:
        return Classification(REDUCIBLE_ONLY, 1, 2 * g, limits_realized=realized,
                              note="genus one: only reducibles for every pulled-back structure")
    if k in stable_range(g, ell):
        return Classification(REDUCIBLE_ONLY, 1, 2 * g, limits_realized=realized,
                              note="k in the adiabatically stable range")
    if L >= 2 * g - 1:
        for d, comp in ((-(g - 1), "beta"), (g - 1, "alpha")):
            if (d - k) % L == 0:
                return Classification(REDUCIBLE_PLUS_UNIQUE, 1, 2 * g, (d,),
                                      {"component": comp, "norm_sq": 2 * abs(d)}, realized)
    degs = tuple(d for d in range(-(g - 1), g) if d != 0 and (d - k) % L == 0)
    if degs:
        return Classification(IRREDUCIBLE_FAMILY, 1, 2 * g, degs, limits_realized=realized)
    return Classification(REDUCIBLE_ONLY, 1, 2 * g, limits_realized=realized,
                          note="no representative degree with 0 < |d| <= g - 1")


def classifier_table(genus, ell):
    """Rows (k, Classification) for k = 0..|ell|-1, or k = -g..g when ell = 0."""
    ks = range(abs(ell)) if ell != 0 else range(-genus, genus + 1)
    return [(k, classify_adiabatic(ClassifierInput(genus, ell, k))) for k in ks]


# ---------------------------------------------------------------- fixed point step

@dataclass
class TaubesProblem:
    mu: float
    kappa: float
    eps0: float

    def __post_init__(self):
        for v in (self.mu, self.kappa, self.eps0):
            if not math.isfinite(v):
                raise ValueError("constants must be finite")
        if self.mu <= 0 or self.kappa < 0 or self.eps0 < 0:
            raise ValueError("need mu > 0, kappa >= 0, eps0 >= 0")

    @property
    def q(self):
        return self.kappa / self.mu


def taubes_radius(p):
    """(admissible, r): r is the smallest root of q r^2 - r + eps0 = 0.

    Written as 2 eps0 / (1 + sqrt(1 - 4 q eps0)) so that q = 0 gives eps0.
    Admissible when eps0 < 1/(4q) and eps0 < 1/2.
    """
    q, e = p.q, p.eps0
    disc = 1.0 - 4.0 * q * e
    admissible = disc > 0 and e < 0.5
    if disc < 0:
        return admissible, float("nan")
    return admissible, 2.0 * e / (1.0 + math.sqrt(disc))


class ContractionFailure(RuntimeError):
    pass


@dataclass
class TaubesResult:
    y: np.ndarray
    iterations: int
    radius: float
    residual: float
    max_ratio: float


def taubes_solve(L_solve, N, F, p, shape=(), tol=1e-13, max_iter=200, norm=None):
    """Fixed point iteration y <- -L^{-1} N(y) from y = 0.

    L_solve(x) returns L^{-1} x, N the nonlinear part, F = L + N for the
    final residual.  iterations counts the updates that moved y.  The radius comes from taubes_radius with eps0 / mu, the
    bound on ||L^{-1} N(0)||.  Raises ContractionFailure when an observed
    step ratio exceeds the certified contraction factor 2 q r.
    """
    norm = (lambda v: float(np.linalg.norm(v))) if norm is None else norm
    ok, r = taubes_radius(TaubesProblem(p.mu, p.kappa, p.eps0 / p.mu))
    if not ok:
        raise ValueError("problem is not admissible")
    bound = 2 * p.q * r
    y = np.zeros(shape)
    prev_step = None
    worst = 0.0
    it = 0
    for _ in range(max_iter):
        y_new = -np.asarray(L_solve(N(y)))
        step = norm(y_new - y)
        if prev_step is not None and prev_step > 0:
            ratio = step / prev_step
            worst = max(worst, ratio)
            if ratio > bound * (1 + 1e-9) + 1e-15:
                raise ContractionFailure("observed ratio %.3g exceeds certified %.3g" % (ratio, bound))
        y = y_new
        if step <= tol * max(1.0, norm(y)):
            break
        it += 1
        prev_step = step
    res = norm(np.asarray(F(y)))
    if norm(y) > r * (1 + 1e-12):
        raise ContractionFailure("iterate left the certified ball")
    return TaubesResult(y, it, r, res, worst)
