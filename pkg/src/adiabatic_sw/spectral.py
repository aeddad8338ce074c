"""Low spectra of self-adjoint lattice operators and the spectral gap.

The eigensolver is a thick-restart Lanczos (Rayleigh-Ritz on a restarted
Krylov basis with full reorthogonalization).  Smallest-magnitude targets run
it on Op^2 and recover signs by a Rayleigh-Ritz step with Op itself on the
converged subspace, so no interior shift-invert solves are needed.

The gap of the linearization at a fiber-invariant reducible configuration
is computed per fiber mode with dense blocks, since Lanczos on Op^2 cannot
resolve eigenvalues of size 1/delta next to the fiber stencil norm
delta/h_t.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import forms
from . import lattice as lt


# ---------------------------------------------------------------- handles

@dataclass
class OperatorHandle:
    """A self-adjoint linear map on C^n (or R^n) with the Euclidean inner product.

    Lattice inner products carry a uniform weight dv, which does not change
    eigenvalues, so handles work with plain vectors.
    """
    matvec: callable
    size: int
    dtype: type = complex
    h: float = None
    label: str = ""
    dense: callable = None

    def to_dense(self):
        if self.dense is not None:
            return self.dense()
        E = np.eye(self.size, dtype=self.dtype)
        return np.column_stack([self.matvec(E[:, j]) for j in range(self.size)])


def diagonal_handle(values):
    v = np.asarray(values, dtype=float)
    return OperatorHandle(lambda x: v * x, v.size, float, label="diag", dense=lambda: np.diag(v))


def matrix_handle(A, h=None, label="matrix"):
    A = np.asarray(A)
    return OperatorHandle(lambda x: A @ x, A.shape[0], A.dtype.type, h, label, dense=lambda: A)


@dataclass
class SpectrumRequest:
    operator: OperatorHandle
    k: int = 4
    target: str = "smallest_magnitude"
    tol: float = 1e-8
    max_iterations: int = 4000
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.target not in ("smallest_magnitude", "smallest_algebraic"):
            raise ValueError("unknown target %r" % self.target)


class SpectrumFailure(RuntimeError):
    def __init__(self, msg, residuals, iterations):
        super().__init__(msg)
        self.residuals = residuals
        self.iterations = iterations


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int

    def pairs(self):
        return [(float(l), self.vectors[:, j]) for j, l in enumerate(self.eigenvalues)]


# ---------------------------------------------------------------- Lanczos

def _orth(V, w, passes=2):
    for _ in range(passes):
        if V.shape[1]:
            w = w - V @ (V.conj().T @ w)
    return w


def _thick_restart(apply, n, nev, dtype, tol, max_matvec, rng, check, proj=None, dim=None):
    """Smallest algebraic eigenpairs of a Hermitian map by thick-restart Lanczos.

    check(theta, X, AX) returns per-pair residuals in the caller's sense;
    the loop stops when the first nev are below tol.  proj, if given, keeps
    the Krylov space inside an invariant subspace of dimension n.
    """
    proj = (lambda v: v) if proj is None else proj
    dim = n if dim is None else dim
    m = min(dim, max(2 * nev + 20, 40))
    keep = min(dim - 1, nev + max(4, nev // 2)) if dim > 1 else 1

    def rand():
        v = rng.standard_normal(n)
        if dtype is complex:
            v = v + 1j * rng.standard_normal(n)
        return proj(v)

    V = np.zeros((n, 0), dtype=dtype)
    AV = np.zeros((n, 0), dtype=dtype)
    w = rand()
    used = 0
    best = None
    while True:
        while V.shape[1] < m:
            # a relative test: a tiny remainder is rounding noise, not a new direction
            w0 = np.linalg.norm(w)
            w = proj(_orth(V, proj(w)))
            nw = np.linalg.norm(w)
            if nw < 1e-10 * max(w0, 1e-300):
                w = rand()
                w0 = np.linalg.norm(w)
                w = proj(_orth(V, w))
                nw = np.linalg.norm(w)
                if nw < 1e-10 * w0:
                    break
            v = w / nw
            Av = apply(v)
            used += 1
            V = np.column_stack([V, v])
            AV = np.column_stack([AV, Av])
            w = Av
        H = V.conj().T @ AV
        theta, S = np.linalg.eigh(0.5 * (H + H.conj().T))
        X = V @ S
        AX = AV @ S
        res = check(theta, X, AX)
        best = (theta, X, AX, res)
        if np.all(res[:nev] <= tol) or V.shape[1] >= dim:
            return best, used, True
        if used >= max_matvec:
            return best, used, False
        # restart from the leading Ritz vectors, continue with the residual of
        # the first unconverged pair plus a fresh random direction every other
        # cycle (guards against missed multiplicities)
        j = int(np.argmax(res[:nev] > tol))
        r = AX[:, j] - theta[j] * X[:, j]
        V, AV = X[:, :keep], AX[:, :keep]
        w = r if (used // m) % 2 == 0 else r + 1e-3 * np.linalg.norm(r) * rand()


def _rayleigh_ritz(op, X, key):
    """Ritz pairs of op on span(X), sorted by key(eigenvalue), with residuals."""
    X, _ = np.linalg.qr(X)
    AX = np.column_stack([op.matvec(X[:, j]) for j in range(X.shape[1])])
    G = X.conj().T @ AX
    lam, Y = np.linalg.eigh(0.5 * (G + G.conj().T))
    order = np.argsort(key(lam), kind="stable")
    lam, Y = lam[order], Y[:, order]
    Z, AZ = X @ Y, AX @ Y
    return lam, Z, np.linalg.norm(AZ - Z * lam, axis=0)


def _lanczos_pass(op, k, target, tol, max_matvec, rng, lock=None):
    """One thick-restart run; with lock, on the complement of span(lock)."""
    n = op.size
    dtype = complex if op.dtype in (complex, np.complex128) else float
    P = None
    if lock is None:
        base = op.matvec
        free = n
    else:
        P = lambda v: _orth(lock, v)
        base = lambda v: P(op.matvec(P(v)))
        free = n - lock.shape[1]
    key = (lambda x: x) if target == "smallest_algebraic" else np.abs
    if target == "smallest_algebraic":
        def check(theta, X, AX):
            return np.linalg.norm(AX - X * theta, axis=0)
        (theta, X, _, _), used, ok = _thick_restart(base, n, min(k, free), dtype, tol, max_matvec, rng, check, P, free)
        X = X[:, :min(k, free)]
    else:
        extra = min(free, k + 2)

        def check(theta, X, AX):
            out = np.linalg.norm(AX - X * theta, axis=0)
            out[:extra] = _rayleigh_ritz(sp_handle, X[:, :extra], key)[2]
            return out
        sp_handle = OperatorHandle(base, n, dtype)
        apply2 = lambda v: base(base(v))
        (theta, X, _, _), used, ok = _thick_restart(apply2, n, extra, dtype, tol, max_matvec, rng, check, P, free)
        X = X[:, :extra]
    return X, used, ok, key


def low_spectrum(req):
    """k converged eigenpairs of a self-adjoint handle, sorted by the target.

    Single-vector Lanczos sees one copy of an exactly repeated eigenvalue at
    a time, so after convergence a second pass runs on the orthogonal
    complement of the accepted vectors; anything it finds below the current
    k-th value is merged in and the check repeats.
    """
    op = req.operator
    n, k = op.size, min(req.k, op.size)
    rng = np.random.default_rng(np.random.SeedSequence([req.seed, n, k]))
    X, used, ok, key = _lanczos_pass(op, k, req.target, req.tol, req.max_iterations, rng)
    vals, vecs, _ = _rayleigh_ritz(op, X, key)
    vals, vecs = vals[:k], vecs[:, :k]
    while ok and vecs.shape[1] < n:
        Y, u, ok2, _ = _lanczos_pass(op, 1, req.target, req.tol, req.max_iterations, rng, lock=vecs)
        used += u
        if not ok2:
            ok = False
            break
        cand, _, _ = _rayleigh_ritz(op, Y[:, :1], key)
        if key(cand)[0] >= key(vals)[-1] - req.tol:
            break
        vals, vecs, _ = _rayleigh_ritz(op, np.column_stack([vecs, Y[:, :1]]), key)
        vals, vecs = vals[:k], vecs[:, :k]
    # re-verify the residual contract by direct application
    R = np.array([np.linalg.norm(op.matvec(vecs[:, j]) - vals[j] * vecs[:, j]) for j in range(vecs.shape[1])])
    if not ok or np.any(R > req.tol):
        raise SpectrumFailure("Lanczos did not reach tol %.1e (best residuals %s)"
                              % (req.tol, np.array2string(R, precision=2)), R, used)
    return SpectrumResult(np.asarray(vals, dtype=float), vecs, R, used)


def spectrum_report(delta, result):
    return {"delta": float(delta), "eigenvalues": [float(v) for v in result.eigenvalues],
            "residuals": [float(v) for v in result.residuals], "iterations": int(result.iterations)}


def write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)


# ---------------------------------------------------------------- kernels

class NoReliableGap(RuntimeError):
    pass


def default_gap_tol(op):
    if op.h is None:
        raise ValueError("operator handle carries no grid spacing; pass gap_tol")
    return 10.0 * op.h ** 2


def kernel_dimension(op, gap_tol=None, safety=5.0, k0=4, tol=None, seed=0):
    """Number of eigenvalues with |lambda| < gap_tol.

    Eigenvalues are requested in growing batches until one exceeds
    10 gap_tol.  An eigenvalue inside [gap_tol, safety * gap_tol) means the
    kernel cannot be separated from the rest of the spectrum.
    """
    gap_tol = default_gap_tol(op) if gap_tol is None else gap_tol
    tol = gap_tol * 1e-3 if tol is None else tol
    k = min(k0, op.size)
    while True:
        res = low_spectrum(SpectrumRequest(op, k, "smallest_magnitude", tol, 20000, seed))
        mags = np.abs(res.eigenvalues)
        if mags.max() > 10 * gap_tol or k >= op.size:
            break
        k = min(op.size, 2 * k)
    if np.any((mags >= gap_tol) & (mags < safety * gap_tol)):
        raise NoReliableGap("eigenvalues within a factor %.1f above gap_tol=%.3g: %s"
                            % (safety, gap_tol, np.sort(mags)[:k]))
    return int(np.sum(mags < gap_tol))


def base_grid_gauge(n, degree, hol=(0.0, 0.0)):
    """Degree-d connection with holonomies on an n x n base torus (area pi).

    Built as the fiber-mode-0 slice of an untwisted lattice.
    """
    lat = lt.build_lattice(lt.LatticeSpec(4, n, n))
    g = lt.reference_connection(lat, degree)
    g.links[1] *= np.exp(2j * math.pi * hol[0] / n)
    g.links[2] *= np.exp(2j * math.pi * hol[1] / n)
    _, red = lt.fiber_mode(g, 0)
    return red


def dbar_kernel_handle(n, degree, hol=(0.0, 0.0)):
    """K = P^* P + W^2 for the forward dbar twisted by a degree-d bundle.

    W = (h/2)(Laplacian - |b|), b = 2 pi d / area the constant curvature, is a
    Wilson term: it is O(h) on the lowest Landau level, where the kernel of
    the continuum dbar lives, and O(1/h) on the doubler of the forward
    stencil, which has the opposite winding and would otherwise add zero
    modes for negative degree.
    """
    red = base_grid_gauge(n, degree, hol)
    lat = red.lattice
    h = float(lat.h[1])
    b = 2 * math.pi * abs(degree) / (lat.h[1] * lat.h[2] * lat.size)

    def lap(f):
        return sum(lt.forward_derivative_adj(red, mu, lt.forward_derivative(red, mu, f)) for mu in (1, 2))

    def W(f):
        return 0.5 * h * (lap(f) - b * f)

    def mv(f):
        return lt.apply_dbar_adj(red, lt.apply_dbar(red, f)) + W(W(f))

    dense = lambda: forms.operator_matrix(mv, 1, lat.size)
    return OperatorHandle(mv, lat.size, complex, h, "dbar(d=%d)" % degree, dense)


def dbar_handle(n, degree, hol=(0.0, 0.0)):
    """The plain forward dbar (not self-adjoint); dense matrix for oracles."""
    red = base_grid_gauge(n, degree, hol)
    return forms.operator_matrix(lambda f: lt.apply_dbar(red, f), 1, red.lattice.size)


def riemann_roch_count(degree, hol=(0.0, 0.0)):
    """Holomorphic sections of a degree-d line bundle on an elliptic curve."""
    if degree > 0:
        return degree
    if degree < 0:
        return 0
    return 1 if np.allclose(np.mod(hol, 1.0), 0.0) else 0


# ---------------------------------------------------------------- gap

def spinor_block(red_gauge):
    """Dense D_delta on one fiber mode."""
    lat = red_gauge.lattice
    return forms.operator_matrix(lambda X: lt.apply_dirac(lat.delta, red_gauge, X), 2, lat.size)


def _column_batch(apply, size, ncomp_out):
    X = np.eye(size, dtype=complex)
    Y = np.asarray(apply(X)).reshape(ncomp_out, size, size)
    return Y.transpose(0, 2, 1).reshape(ncomp_out * size, size)


def _constraint_columns(red, fg, exclude_harmonic):
    """Columns spanning range(d) (plus harmonic forms on mode 0), full column rank."""
    M = red.size
    C = _column_batch(lambda f: forms.d0(fg, f), M, 3)
    if red.m == 0:
        C = C[:, 1:]                 # d of the constants vanishes; drop one column
        if exclude_harmonic:
            C = np.column_stack([C, forms.harmonic_forms(red).reshape(-1, 3 * M).T])
    return C


def form_block(red, exclude_harmonic=True):
    """Dense -P K P on the Coulomb subspace of one fiber mode.

    Returns (matrix in an orthonormal basis of the constrained subspace,
    the basis).  The constraint set is the range of d on functions, plus the
    harmonic forms on mode 0 when exclude_harmonic is set.
    """
    fg = forms.form_gauge(red)
    K = forms.operator_matrix(lambda a: forms.curl(fg, a), 3, red.size)
    C = _constraint_columns(red, fg, exclude_harmonic)
    Q = sla.qr(C, mode="full")[0][:, C.shape[1]:]   # C has full column rank
    return -(Q.conj().T @ K @ Q), Q


def _fiber_symbol(red_gauge):
    """|sin(w + arg u_t)| / h_t if the effective fiber link is constant, else None."""
    u = red_gauge.links[0]
    if np.max(np.abs(u - u[0])) > 1e-13:
        return None
    return abs(math.sin(np.angle(u[0]))) / red_gauge.lattice.h[0]


@dataclass
class ModeGap:
    m: int
    spinor: float = None
    form: float = None
    skipped_spinor: bool = False


@dataclass
class GapResult:
    delta: float
    z: float
    spinor_gap: float
    form_gap: float
    modes: list = field(default_factory=list)
    error: str = None

    def to_dict(self):
        return {"delta": self.delta, "z": self.z, "spinor_gap": self.spinor_gap,
                "form_gap": self.form_gap, "error": self.error}


def reducible_background(lat, k=0, hol=(0.0, 0.0)):
    """The flat connection (A0) of the distinguished reducible configuration."""
    if lat.spec.ell == 0:
        g = lt.trivial_connection(lat)
        g.links[1] *= np.exp(2j * math.pi * hol[0] / lat.shape[1])
        g.links[2] *= np.exp(2j * math.pi * hol[1] / lat.shape[2])
        g.label = "flat(hol=%s)" % (tuple(hol),)
        return g
    return lt.flat_connection(lat, k, hol)


def linearization_gap(background, exclude_harmonic=True, modes=None):
    """Distance of 0 to the spectrum of the linearization at (0, A0), per fiber mode.

    At psi = 0 the linearization splits into D_delta on spinors and -P K P
    on Coulomb forms; both commute with fiber translations when A0 is fiber
    invariant.  Spinor modes whose exact lower bound delta |sin w_m|/h_t -
    |lambda|/2 (valid because Z is a scalar times the grading there and
    anticommutes with T) already exceeds the running minimum are skipped.
    Form blocks are real operators, so mode -m is the conjugate of mode m and
    only 0 <= m <= n_t/2 is diagonalized.
    """
    lat = background.lattice
    nt = lat.shape[0]
    modes = list(range(nt)) if modes is None else [m % nt for m in modes]
    reds = {m: lt.fiber_mode(background, m)[1] for m in modes}
    bounds = {}
    for m in modes:
        zeta = _fiber_symbol(reds[m])
        bounds[m] = -np.inf if zeta is None else lat.delta * zeta - abs(lat.lam) / 2
    out = []
    best_s = np.inf
    for m in sorted(modes, key=lambda m: bounds[m]):
        mg = ModeGap(m)
        if bounds[m] > best_s:
            mg.skipped_spinor = True
        else:
            ev = sla.eigvalsh(spinor_block(reds[m]))
            mg.spinor = float(np.min(np.abs(ev)))
            best_s = min(best_s, mg.spinor)
        mm = m % nt
        if mm <= nt - mm or (nt - mm) not in modes:
            A, _ = form_block(reds[m].lattice, exclude_harmonic)
            mg.form = float(np.min(np.abs(sla.eigvalsh(0.5 * (A + A.conj().T)))))
        out.append(mg)
    fgap = min((g.form for g in out if g.form is not None), default=np.inf)
    return min(best_s, fgap), best_s, fgap, sorted(out, key=lambda g: g.m)


def gap_sweep(bundle, deltas, n=8, fiber_factor=1, hol=(0.0, 0.0), exclude_harmonic=True,
              n_fiber=None):
    """[(delta, z_delta)] for the linearization at the reducible (0, A0).

    A0 is the flat connection in the torsion class bundle.l_n_class with base
    holonomy hol.  Per-delta failures are recorded in GapResult.error and do
    not stop the sweep.
    """
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas) or deltas != sorted(deltas):
        raise ValueError("deltas must be positive and increasing")
    results = []
    for d in deltas:
        try:
            if n_fiber is None:
                spec = lt.square_spec(n, ell=bundle.ell, delta=d, fiber_factor=fiber_factor)
            else:
                spec = lt.LatticeSpec(n_fiber, n, n, ell=bundle.ell, delta=d)
            lat = lt.build_lattice(spec)
            A0 = reducible_background(lat, bundle.l_n_class % abs(bundle.ell) if bundle.ell else 0, hol)
            z, zs, zf, modes = linearization_gap(A0, exclude_harmonic)
            results.append(GapResult(d, z, zs, zf, modes))
        except Exception as exc:          # recorded per delta
            results.append(GapResult(d, float("nan"), float("nan"), float("nan"), error=repr(exc)))
    return results
