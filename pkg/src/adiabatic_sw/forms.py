"""Real 1-forms on the sheared lattice.

A form is stored by its components in the g_delta orthonormal coframe
(eta_delta, eta^1, eta^2), shape (3, N).  The component along the fiber is
delta times the value of the form on zeta, so the link phase along a fiber
edge is h_t * a_t / delta.  The inner product is dv_delta * sum a . a'.

Forms are uncharged: their differences use the trivial connection of the
lattice (or the pure mode phases on a fiber-mode base grid).
"""
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from . import lattice as lt


def form_gauge(lat):
    """Trivial links on a lattice, or the mode phases on a fiber-mode grid."""
    if isinstance(lat, lt.FiberModeLattice):
        g = lt.GaugeField.__new__(lt.GaugeField)
        g.lattice, g.links, g.label, g.extra = lat, lat.phase.copy(), "forms", {}
        return g
    g = lt.GaugeField.__new__(lt.GaugeField)
    g.lattice, g.links, g.label, g.extra = lat, np.ones((3, lat.size)), "forms", {}
    return g


def inner(lat, a, b):
    return complex(np.vdot(b, a)) * lat.dv


def norm(lat, a):
    return math.sqrt(max(inner(lat, a, a).real, 0.0))


def d0(fg, f):
    """Exterior derivative of a function with forward differences."""
    lat = fg.lattice
    return np.stack([lat.delta * lt.forward_derivative(fg, 0, f),
                     lt.forward_derivative(fg, 1, f),
                     lt.forward_derivative(fg, 2, f)])


def d0_adj(fg, a):
    """d*_delta, the exact adjoint of d0 for the g_delta weights."""
    lat = fg.lattice
    return (lat.delta * lt.forward_derivative_adj(fg, 0, a[0])
            + lt.forward_derivative_adj(fg, 1, a[1])
            + lt.forward_derivative_adj(fg, 2, a[2]))


def laplacian0(fg, f):
    return d0_adj(fg, d0(fg, f))


def curl(fg, a):
    """Symmetric lattice version of *_delta d on 1-forms.

    Continuum, in the orthonormal frame:
        (*da)_t = zeta_1 a_2 - zeta_2 a_1 + 2 lambda_delta a_t
        (*da)_1 = zeta_2 a_t - zeta_delta a_2
        (*da)_2 = zeta_delta a_1 - zeta_1 a_t
    The base curl in the t row uses forward differences (the same ones as the
    lattice d on edges), the a_t entries of the other rows use their exact
    adjoints, and the fiber derivative is centered.  The matrix is exactly
    symmetric, and on fiber invariant forms closed plus coclosed means
    parallel, as for the continuum operator.
    """
    lat = fg.lattice
    D = lambda mu, f: lt.forward_derivative(fg, mu, f)
    Ds = lambda mu, f: lt.forward_derivative_adj(fg, mu, f)
    C = lat.delta * lt.fiber_derivative(fg, a)
    out_t = D(1, a[2]) - D(2, a[1]) + 2 * lat.lam * a[0]
    out_1 = -Ds(2, a[0]) - C[2]
    out_2 = Ds(1, a[0]) + C[1]
    return np.stack([out_t, out_1, out_2])


class PoissonFailure(RuntimeError):
    pass


def operator_matrix(apply, ncomp, size, dtype=complex):
    """Dense matrix of a linear map on fields of shape (ncomp, size).

    The map is applied once to a batch holding every unit vector; all the
    lattice operators accept a batch axis between component and site axes.
    """
    B = ncomp * size
    X = np.zeros((ncomp, B, size), dtype=dtype)
    for c in range(ncomp):
        X[c, c * size + np.arange(size), np.arange(size)] = 1.0
    Y = apply(X if ncomp > 1 else X[0])
    Y = np.asarray(Y).reshape(ncomp, B, size)
    return Y.transpose(0, 2, 1).reshape(B, B)


class FiberPoisson:
    """Direct solver for laplacian0 with trivial links on a full lattice.

    Trivial links are fiber invariant, so the fiber Fourier transform splits
    the problem into one base-grid problem per fiber mode.  Each mode m != 0
    is positive definite and gets a sparse LU factorization; the mode m = 0
    has the constants as kernel and is solved by a pseudo-inverse on the
    mean-zero subspace.
    """

    def __init__(self, lat):
        self.lattice = lat
        nt = lat.shape[0]
        self.M = lat.size // nt
        self.factors = []
        for m in range(nt):
            red = lt.FiberModeLattice(lat, m)
            fg = form_gauge(red)
            A = operator_matrix(lambda f: laplacian0(fg, f), 1, self.M)
            if m == 0:
                self.factors.append(sla.pinvh(A))
            else:
                self.factors.append(splu(sp.csc_matrix(np.where(np.abs(A) > 1e-300, A, 0))))

    def solve(self, rhs):
        lat = self.lattice
        nt = lat.shape[0]
        real = not np.iscomplexobj(rhs)
        g = np.fft.fft(np.asarray(rhs).reshape(nt, self.M), axis=0) / nt
        out = np.empty_like(g)
        out[0] = self.factors[0] @ (g[0] - g[0].mean())
        for m in range(1, nt):
            out[m] = self.factors[m].solve(g[m])
        u = (np.fft.ifft(out, axis=0) * nt).ravel()
        return u.real if real else u


def fiber_poisson(lat):
    """Cached FiberPoisson for a lattice."""
    fp = getattr(lat, "_fiber_poisson", None)
    if fp is None:
        fp = FiberPoisson(lat)
        lat._fiber_poisson = fp
    return fp


def _trivial_full(fg):
    return isinstance(fg.lattice, lt.Lattice) and np.all(fg.links == 1)


def solve_poisson(fg, rhs, tol=1e-12, maxiter=5000, direct=None):
    """Solve laplacian0 u = rhs on the mean-zero subspace.

    With trivial links on a full lattice the fiber-mode direct solver is
    used; otherwise conjugate gradients.
    """
    lat = fg.lattice
    if direct is None:
        direct = _trivial_full(fg)
    if direct:
        rhs = np.asarray(rhs)
        return fiber_poisson(lat).solve(rhs - rhs.mean())
    n = lat.size
    rhs = np.asarray(rhs)
    cplx = np.iscomplexobj(rhs) or np.iscomplexobj(fg.links) and not np.allclose(fg.links, 1)
    dtype = complex if cplx else float
    const = np.ones(n) / math.sqrt(n)
    has_kernel = isinstance(lat, lt.Lattice) or getattr(lat, "m", 0) == 0

    def mv(u):
        u = np.asarray(u, dtype=dtype)
        out = laplacian0(fg, u)
        return out.real if dtype is float else out

    if has_kernel:
        rhs = rhs - const * np.vdot(const, rhs)
    A = LinearOperator((n, n), matvec=mv, dtype=dtype)
    scale = np.linalg.norm(rhs)
    if scale == 0:
        return np.zeros(n, dtype=dtype)
    u, info = cg(A, rhs.astype(dtype), rtol=tol, atol=0.0, maxiter=maxiter)
    if info != 0:
        res = np.linalg.norm(mv(u) - rhs) / scale
        if res > 1e3 * tol:
            raise PoissonFailure("Poisson solve did not converge (info=%d, residual %.2e)" % (info, res))
    if has_kernel:
        u = u - const * np.vdot(const, u)
    return u


def coulomb_project(fg, a, tol=1e-12):
    """g_delta-orthogonal projection onto ker d*_delta."""
    u = solve_poisson(fg, d0_adj(fg, a), tol=tol)
    return a - d0(fg, u)


def divergence_norm(fg, a):
    lat = fg.lattice
    return math.sqrt(lat.dv) * float(np.linalg.norm(d0_adj(fg, a)))


def harmonic_forms(lat):
    """Parallel forms of unit g_delta norm: eta^1, eta^2, and eta when ell = 0.

    For ell != 0 the form eta is not closed (d eta = 2 lambda * eta), so only
    the two base forms are harmonic.
    """
    n = 1.0 / math.sqrt(lat.vol)
    comps = (1, 2) if lat.spec.ell != 0 else (0, 1, 2)
    out = np.zeros((len(comps), 3, lat.size))
    for r, c in enumerate(comps):
        out[r, c] = n
    return out


def remove_harmonic(lat, a):
    """Drop the harmonic components (the directions of the flat moduli)."""
    if isinstance(lat, lt.FiberModeLattice) and lat.m != 0:
        return a
    a = a.copy()
    for k in ((1, 2) if lat.spec.ell != 0 else (0, 1, 2)):
        a[k] = a[k] - a[k].mean()
    return a
