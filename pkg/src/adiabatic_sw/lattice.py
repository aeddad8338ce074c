"""Sheared lattice model of a degree-ell circle bundle over the flat torus.

Coordinates (t, x, y) with t in [0, 2 pi) the fiber, (x, y) in [0, a) x [0, b),
a * b = pi.  The contact form is eta = dt + 2 ell y dx and the global frame is

    zeta = d/dt,   zeta_1 = d/dx - 2 ell y d/dt,   zeta_2 = d/dy,

so [zeta_1, zeta_2] = 2 ell zeta and d eta = -2 ell dx ^ dy.  The points
(t, x, y + b) and (t + 2 ell b x, x, y) are identified.

Sites carry integer indices (j, i, k).  A step along zeta_1 moves the fiber
index by -s k with s = ell n_t / (n_x n_y), which has to be an integer so
that every neighbour is again a lattice site.  Fields are stored as arrays of
shape (n_t, n_x, n_y) or flat with index (j n_x + i) n_y + k.

Gauge fields are compact U(1) links, U = exp(h A) with A imaginary.  Covariant
differences are forward differences along links; the fiber derivative is the
centered one so that i d/dt is exactly symmetric.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np

from .geometry import BundleSpec, boothby_wang_invariants, torus_sides

FIBER_LENGTH = 2 * math.pi
BRANCH_TOL = 1e-6


@dataclass(frozen=True)
class LatticeSpec:
    n_fiber: int
    n_x: int
    n_y: int
    ell: int = 0
    delta: float = 1.0
    l_degree: int = 0
    aspect: float = None

    def with_delta(self, delta):
        return LatticeSpec(self.n_fiber, self.n_x, self.n_y, self.ell, float(delta),
                           self.l_degree, self.aspect)

    def to_dict(self):
        return {"n_fiber": self.n_fiber, "n_x": self.n_x, "n_y": self.n_y,
                "ell": self.ell, "delta": self.delta, "l_degree": self.l_degree,
                "aspect": self.aspect}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_fiber"]), int(d["n_x"]), int(d["n_y"]), int(d.get("ell", 0)),
                   float(d.get("delta", 1.0)), int(d.get("l_degree", 0)), d.get("aspect"))


def square_spec(n, ell=0, delta=1.0, l_degree=0, fiber_factor=1):
    """LatticeSpec with an n x n base and the smallest compatible fiber resolution.

    For ell != 0 the fiber needs n_t = k n^2 / |ell| points (k = fiber_factor),
    for ell = 0 we take n_t = n * fiber_factor.
    """
    if ell == 0:
        nt = n * fiber_factor
    else:
        if (n * n) % abs(ell):
            raise ValueError("n^2 must be divisible by |ell|")
        nt = fiber_factor * n * n // abs(ell)
    return LatticeSpec(nt, n, n, ell, delta, l_degree)


class Lattice:
    """Index tables, spacings and weights for one LatticeSpec."""

    def __init__(self, spec):
        nt, nx, ny = spec.n_fiber, spec.n_x, spec.n_y
        if min(nt, nx, ny) < 4:
            raise ValueError("grid sizes must be >= 4")
        if not spec.delta > 0:
            raise ValueError("delta must be positive")
        if spec.l_degree != int(spec.l_degree):
            raise ValueError("l_degree must be an integer number of flux quanta")
        num = spec.ell * nt
        if num % (nx * ny):
            raise ValueError(
                "fiber grid incompatible with the twist: ell*n_fiber/(n_x*n_y) = %s is not an integer"
                % (num / (nx * ny)))
        self.spec = spec
        self.shape = (nt, nx, ny)
        self.size = nt * nx * ny
        self.s = num // (nx * ny)
        self.a, self.b = torus_sides(spec.aspect)
        self.h = np.array([FIBER_LENGTH / nt, self.a / nx, self.b / ny])
        self.delta = float(spec.delta)
        self.inv = boothby_wang_invariants(BundleSpec(spec.ell, delta=self.delta))
        self.lam = self.inv.lam              # lambda_delta = -ell/delta
        self.cell = float(np.prod(self.h))
        self.dv = self.cell / self.delta      # g_delta volume weight per site
        self.vol = self.size * self.dv
        self._tables()

    # ---- index machinery
    def flat(self, j, i, k):
        nt, nx, ny = self.shape
        return ((np.asarray(j) % nt) * nx + (np.asarray(i) % nx)) * ny + (np.asarray(k) % ny)

    def _tables(self):
        nt, nx, ny = self.shape
        j, i, k = np.meshgrid(np.arange(nt), np.arange(nx), np.arange(ny), indexing="ij")
        self.jik = (j, i, k)
        s = self.s
        tf = self.flat(j + 1, i, k)
        xf = self.flat(j - s * k, i + 1, k)
        wrap = (k == ny - 1)
        yf = np.where(wrap, self.flat(j + s * ny * i, i, 0), self.flat(j, i, k + 1))
        self.fwd = np.stack([tf.ravel(), xf.ravel(), yf.ravel()])
        self.bwd = np.empty_like(self.fwd)
        for mu in range(3):
            if np.unique(self.fwd[mu]).size != self.size:
                raise RuntimeError("neighbour map %d is not a bijection" % mu)
            self.bwd[mu][self.fwd[mu]] = np.arange(self.size)
        self.check_cocycle()
        # coordinates of sites in the fundamental domain
        self.t = (j * self.h[0]).ravel()
        self.x = (i * self.h[1]).ravel()
        self.y = (k * self.h[2]).ravel()

    def shift(self, mu, steps, idx=None):
        """Index reached from idx after `steps` forward (or backward) moves."""
        idx = np.arange(self.size) if idx is None else idx
        table = self.fwd[mu] if steps >= 0 else self.bwd[mu]
        for _ in range(abs(steps)):
            idx = table[idx]
        return idx

    def check_cocycle(self):
        """Exhaustive check of the gluing data on every 2-cell.

        t commutes with x and y, and x-then-y equals y-then-x followed by s
        backward fiber steps.  Going once around the base in x (resp. y)
        lands s*n_y*n_x = ell*n_t fiber steps away, i.e. back on the fiber.
        """
        f = self.fwd
        ok = (np.array_equal(f[1][f[0]], f[0][f[1]])
              and np.array_equal(f[2][f[0]], f[0][f[2]]))
        yx = f[2][f[1]]
        xy = f[1][f[2]]
        ok = ok and np.array_equal(xy, self.shift(0, -self.s, yx))
        if not ok:
            raise RuntimeError("cocycle condition violated")
        return True

    # ---- fields
    def zeros_spinor(self):
        return np.zeros((2, self.size), dtype=complex)

    def random_spinor(self, rng, scale=1.0):
        return scale * (rng.standard_normal((2, self.size)) + 1j * rng.standard_normal((2, self.size)))

    def inner(self, u, v):
        """g_delta inner product of spinor (or scalar) fields, linear in u."""
        return complex(np.vdot(v, u)) * self.dv

    def norm(self, u):
        return math.sqrt(max(self.inner(u, u).real, 0.0))

    def to_grid(self, f):
        return np.asarray(f).reshape(self.shape)

    def fiber_average(self, f):
        return self.to_grid(f).mean(axis=0)


def build_lattice(spec):
    return Lattice(spec)


# ---------------------------------------------------------------- gauge fields

@dataclass
class GaugeField:
    lattice: Lattice
    links: np.ndarray                      # (3, N) unit complex numbers
    label: str = "custom"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.links = np.asarray(self.links, dtype=complex)
        if self.links.shape != (3, self.lattice.size):
            raise ValueError("links must have shape (3, N)")

    def check(self, tol=1e-12):
        return bool(np.max(np.abs(np.abs(self.links) - 1.0)) <= tol)

    def copy(self):
        return GaugeField(self.lattice, self.links.copy(), self.label, dict(self.extra))

    def with_form(self, theta):
        """Links of A + i theta, theta = real frame components (3, N)."""
        h = self.lattice.h[:, None]
        return GaugeField(self.lattice, self.links * np.exp(1j * h * theta), self.label + "+a")

    def gauge_transform(self, gamma):
        """U_mu(n) -> gamma(n) U_mu(n) conj(gamma(n + mu))."""
        lat = self.lattice
        new = np.empty_like(self.links)
        for mu in range(3):
            new[mu] = gamma * self.links[mu] * np.conj(gamma[lat.fwd[mu]])
        return GaugeField(lat, new, self.label + "*g")


def trivial_connection(lat):
    return GaugeField(lat, np.ones((3, lat.size), dtype=complex), "trivial")


def reference_connection(lat, degree=None):
    """Fiber-invariant connection with base flux `degree` spread uniformly.

    Every base cell carries the phase -2 pi degree/(n_x n_y), which samples
    F(zeta_1, zeta_2) = -2 i degree (area pi), and U_t = 1.
    """
    d = lat.spec.l_degree if degree is None else int(degree)
    nt, nx, ny = lat.shape
    j, i, k = lat.jik
    theta = 2 * math.pi * d / (nx * ny)
    ux = np.exp(1j * theta * k)
    uy = np.where(k == ny - 1, np.exp(-1j * theta * ny * i), 1.0)
    links = np.stack([np.ones(lat.size), ux.ravel(), uy.ravel()]).astype(complex)
    return GaugeField(lat, links, "reference(%d)" % d, {"degree": d})


def flat_connection(lat, k, hol=(0.0, 0.0)):
    """Flat connection with fiber holonomy exp(2 pi i k/ell) and base holonomies.

    The fiber links carry exp(2 pi i k/(ell n_t)).  Because x-then-y differs
    from y-then-x by s fiber steps, flatness of the base cells forces a base
    flux of k quanta; it is provided by the same Landau-type links as in
    reference_connection.  hol = (h_x, h_y) in [0, 1)^2 multiplies the x links
    by exp(2 pi i h_x/n_x) and the y links by exp(2 pi i h_y/n_y).
    """
    ell = lat.spec.ell
    if ell == 0:
        raise ValueError("flat_connection needs ell != 0")
    if not 0 <= k < abs(ell):
        raise ValueError("k must satisfy 0 <= k < |ell|")
    hol = np.asarray(hol, dtype=float)
    if hol.shape != (2,):
        raise ValueError("genus one: two base holonomy parameters")
    nt, nx, ny = lat.shape
    g = reference_connection(lat, degree=-k)
    g.links[0] = np.exp(2j * math.pi * k / (ell * nt))
    g.links[1] *= np.exp(2j * math.pi * hol[0] / nx)
    g.links[2] *= np.exp(2j * math.pi * hol[1] / ny)
    g.label = "flat(k=%d)" % k
    g.extra = {"k": int(k), "hol": hol.tolist()}
    return g


def fiber_wilson_loops(gauge):
    """Product of fiber links around every fiber, shape (n_x, n_y)."""
    lat = gauge.lattice
    return np.prod(lat.to_grid(gauge.links[0]), axis=0)


def base_wilson_loops(gauge):
    """Holonomy along the x cycle (at y = 0) and the y cycle (at x = 0), at t = 0.

    Both cycles are closed lattice loops: moving n_x steps along zeta_1 at
    k = 0 returns to the start, and so does moving n_y steps along zeta_2 at
    i = 0.
    """
    lat = gauge.lattice
    nt, nx, ny = lat.shape
    out = []
    for mu, n in ((1, nx), (2, ny)):
        idx = lat.flat(0, 0, 0)
        w = 1.0 + 0j
        for _ in range(n):
            w *= gauge.links[mu][idx]
            idx = lat.fwd[mu][idx]
        assert idx == lat.flat(0, 0, 0)
        out.append(w)
    return np.array(out)


# ---------------------------------------------------------------- operators

def covariant_shift(gauge, mu, f):
    """(U_mu f(. + mu))(n)."""
    lat = gauge.lattice
    return gauge.links[mu] * f[..., lat.fwd[mu]]


def covariant_unshift(gauge, mu, f):
    """conj(U_mu(n - mu)) f(n - mu), the adjoint of covariant_shift."""
    lat = gauge.lattice
    b = lat.bwd[mu]
    return np.conj(gauge.links[mu][b]) * f[..., b]


def fiber_derivative(gauge, f):
    """Centered covariant difference along zeta (anti-symmetric)."""
    ht = gauge.lattice.h[0]
    return (covariant_shift(gauge, 0, f) - covariant_unshift(gauge, 0, f)) / (2 * ht)


def forward_derivative(gauge, mu, f):
    return (covariant_shift(gauge, mu, f) - f) / gauge.lattice.h[mu]


def forward_derivative_adj(gauge, mu, f):
    """Exact adjoint of forward_derivative (a backward difference, negated)."""
    return (covariant_unshift(gauge, mu, f) - f) / gauge.lattice.h[mu]


def apply_dbar(gauge, f):
    """P = nabla_1 + i nabla_2 with forward differences."""
    return forward_derivative(gauge, 1, f) + 1j * forward_derivative(gauge, 2, f)


def apply_dbar_adj(gauge, f):
    """P^* = nabla_1^* - i nabla_2^*, the exact matrix adjoint of P."""
    return forward_derivative_adj(gauge, 1, f) - 1j * forward_derivative_adj(gauge, 2, f)


def _check(gauge, phi):
    phi = np.asarray(phi)
    # a batch of fields may sit between the component and site axes
    if phi.shape[0] != 2 or phi.shape[-1] != gauge.lattice.size:
        raise ValueError("spinor field does not live on this lattice")
    return phi


def apply_Z(gauge, phi):
    """diag(i nabla_zeta, -i nabla_zeta) for the limiting fiber connection.

    In the global frame the limiting connection on the K factors is trivial
    along the fiber (b = 0), so only the connection of L enters.
    """
    phi = _check(gauge, phi)
    d = fiber_derivative(gauge, phi)
    return np.stack([1j * d[0], -1j * d[1]])


def apply_T(gauge, phi):
    """[[0, P], [P^*, 0]]."""
    phi = _check(gauge, phi)
    return np.stack([apply_dbar(gauge, phi[1]), apply_dbar_adj(gauge, phi[0])])


def apply_dirac(delta, gauge, phi):
    """D_delta = delta Z + T + lambda_delta / 2, built from the same blocks."""
    lat = gauge.lattice
    if abs(delta - lat.delta) > 1e-14 * max(1.0, delta):
        raise ValueError("delta differs from the lattice delta")
    phi = _check(gauge, phi)
    return delta * apply_Z(gauge, phi) + apply_T(gauge, phi) + 0.5 * lat.lam * phi


def dirac_operator(gauge):
    lat = gauge.lattice
    return lambda phi: apply_dirac(lat.delta, gauge, phi)


# ---------------------------------------------------------------- curvature

def _pentagon(gauge):
    """Oriented product around the x-y cell at every site (closing fiber steps included)."""
    lat = gauge.lattice
    U = gauge.links
    n = np.arange(lat.size)
    X = lat.fwd[1]
    Y = lat.fwd[2]
    m = Y[X]                                 # y(x(n))
    prod = U[1] * U[2][X]
    p = m
    s = lat.s
    if s > 0:
        for _ in range(s):                   # backward fiber steps down to x(y(n))
            q = lat.bwd[0][p]
            prod = prod * np.conj(U[0][q])
            p = q
    else:
        for _ in range(-s):
            prod = prod * U[0][p]
            p = lat.fwd[0][p]
    yn = Y[n]
    prod = prod * np.conj(U[1][yn]) * np.conj(U[2])
    return prod


def plaquettes(gauge):
    """Oriented loop products for the (t,x), (t,y) and (x,y) cells at every site."""
    lat = gauge.lattice
    U = gauge.links
    T, X, Y = lat.fwd
    ptx = U[0] * U[1][T] * np.conj(U[1]) * np.conj(U[0][X])
    pty = U[0] * U[2][T] * np.conj(U[2]) * np.conj(U[0][Y])
    return ptx, pty, _pentagon(gauge)


def curvature(gauge, check_branch=True):
    """Real plaquette angles f with F = i f / area for F(zeta,zeta_1), F(zeta,zeta_2), F(zeta_1,zeta_2).

    Returns a dict of per-site arrays: 'tx', 'ty', 'xy' hold the curvature
    components (imaginary numbers are represented by their imaginary part),
    'angles' the raw principal-branch angles, and 'ill_conditioned' the
    number of cells within BRANCH_TOL of the branch cut.
    """
    lat = gauge.lattice
    ht, hx, hy = lat.h
    ps = plaquettes(gauge)
    ang = [np.angle(p) for p in ps]
    bad = int(sum(np.sum(np.abs(np.abs(a) - math.pi) < BRANCH_TOL) for a in ang))
    if check_branch and bad:
        import warnings
        warnings.warn("%d plaquettes within %g of the branch cut" % (bad, BRANCH_TOL))
    return {"tx": ang[0] / (ht * hx), "ty": ang[1] / (ht * hy), "xy": ang[2] / (hx * hy),
            "angles": ang, "ill_conditioned": bad}


def flux_integer(gauge):
    """Gauge invariant integer 2 pi N = sum of x-y cell angles + s * sum of fiber loop angles.

    The product of all x-y cells times the s-th powers of all fiber loops is
    exactly one, so N is an integer for any link configuration; the sum is
    rounded and returned as an int (a large deviation means broken tables).
    """
    lat = gauge.lattice
    ang = np.angle(_pentagon(gauge)).sum()
    w = np.angle(fiber_wilson_loops(gauge)).sum()
    val = (ang + lat.s * w) / (2 * math.pi)
    N = int(round(val))
    if abs(val - N) > 1e-6:
        raise RuntimeError("flux sum %.12g is not an integer" % val)
    return N


def chern_pairing(gauge, check_branch=True):
    """(degree, pairing) with degree = (i / 2 pi) int_base F(zeta_1, zeta_2) and
    pairing = int eta_delta ^ c_1(F_A) = -(1/2 pi) sum f_xy dv_delta.

    The degree is -N / n_t from flux_integer, an exact integer for fields whose
    fiber loops are close to one another (for instance fiber invariant ones).
    """
    lat = gauge.lattice
    cur = curvature(gauge, check_branch)
    N = flux_integer(gauge)
    deg = -N / lat.shape[0]
    pairing = -float(np.sum(cur["xy"])) * lat.dv / (2 * math.pi)
    return deg, pairing


# ---------------------------------------------------------------- smooth samples

def twisted_mode(lat, m, p=0, q=0, center=0.5, width=0.35, terms=4):
    """A smooth function on the bundle of fiber charge m sampled on the sites.

    For m = 0 this is exp(2 pi i (p x/a + q y/b)).  For m != 0 the section
    condition g(x, y + b) = exp(2 i m ell b x) g(x, y) is met by a periodised
    Gaussian in y times plane waves in x.
    """
    ell = lat.spec.ell
    x, y, t = lat.x, lat.y, lat.t
    a, b = lat.a, lat.b
    if m == 0 or ell == 0:
        return np.exp(1j * m * t) * np.exp(2j * math.pi * (p * x / a + q * y / b))
    g = np.zeros(lat.size, dtype=complex)
    w = width * b
    for r in range(-terms, terms + 1):
        yy = y - r * b - center * b
        g += np.exp(-0.5 * (yy / w) ** 2) * np.exp(2j * m * ell * r * b * x) \
            * np.exp(2j * math.pi * p * x / a)
    return np.exp(1j * m * t) * g


def sample_form(lat, modes, rng=None):
    """Real smooth 1-form components theta (3, N) from a list of (comp, m, p, q, amp)."""
    theta = np.zeros((3, lat.size))
    for comp, m, p, q, amp in modes:
        theta[comp] += amp * np.real(twisted_mode(lat, m, p, q))
    return theta


def link_field(lat, theta, base=None):
    """Gauge field with links base * exp(i h theta) (midpoint rule not needed at O(h))."""
    base = trivial_connection(lat) if base is None else base
    return base.with_form(theta)


# ---------------------------------------------------------------- snapshots

def _site_major(lat, arr):
    """Reorder a flat field so that t runs fastest: shape (n_y, n_x, n_t)."""
    return np.transpose(lat.to_grid(arr), (2, 1, 0)).ravel()


def _from_site_major(lat, flat):
    nt, nx, ny = lat.shape
    return np.transpose(np.asarray(flat).reshape(ny, nx, nt), (2, 1, 0)).ravel()


def save_snapshot(path, lat, fields, fmt="binary"):
    """Write named complex/real fields with a LatticeSpec header.

    fields: dict name -> array with trailing dimension N.  The binary format is
    a JSON header line followed by little-endian float64 data in site-major
    order (t fastest); JSON stores the same numbers as lists.
    """
    header = {"lattice": lat.spec.to_dict(), "order": "t-fastest", "fields": []}
    chunks = []
    for name, arr in fields.items():
        arr = np.asarray(arr)
        lead = arr.shape[:-1]
        cplx = np.iscomplexobj(arr)
        flat = arr.reshape(-1, lat.size)
        data = np.stack([_site_major(lat, f) for f in flat])
        header["fields"].append({"name": name, "shape": list(lead), "complex": bool(cplx)})
        chunks.append(data)
    if fmt == "json":
        out = dict(header)
        out["data"] = {}
        for meta, data in zip(header["fields"], chunks):
            if meta["complex"]:
                out["data"][meta["name"]] = {"re": data.real.tolist(), "im": data.imag.tolist()}
            else:
                out["data"][meta["name"]] = data.tolist()
        with open(path, "w") as fh:
            json.dump(out, fh)
        return
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        for meta, data in zip(header["fields"], chunks):
            if meta["complex"]:
                buf = np.stack([data.real, data.imag], axis=-1)
            else:
                buf = data.real
            fh.write(np.ascontiguousarray(buf, dtype="<f8").tobytes())


def load_snapshot(path):
    """Inverse of save_snapshot; returns (LatticeSpec, dict of arrays)."""
    with open(path, "rb") as fh:
        first = fh.read(1)
        fh.seek(0)
        if first == b"{" and path.endswith(".json"):
            obj = json.load(fh)
            spec = LatticeSpec.from_dict(obj["lattice"])
            lat = Lattice(spec)
            out = {}
            for meta in obj["fields"]:
                raw = obj["data"][meta["name"]]
                if meta["complex"]:
                    data = np.array(raw["re"]) + 1j * np.array(raw["im"])
                else:
                    data = np.array(raw, dtype=float)
                rows = np.stack([_from_site_major(lat, r) for r in data])
                out[meta["name"]] = rows.reshape(tuple(meta["shape"]) + (lat.size,))
            return spec, out
        header = json.loads(fh.readline().decode())
        spec = LatticeSpec.from_dict(header["lattice"])
        lat = Lattice(spec)
        out = {}
        for meta in header["fields"]:
            rows = int(np.prod(meta["shape"])) if meta["shape"] else 1
            width = 2 if meta["complex"] else 1
            buf = np.frombuffer(fh.read(8 * rows * lat.size * width), dtype="<f8")
            buf = buf.reshape(rows, lat.size, width) if width == 2 else buf.reshape(rows, lat.size)
            data = buf[..., 0] + 1j * buf[..., 1] if width == 2 else buf.copy()
            data = np.stack([_from_site_major(lat, r) for r in data])
            out[meta["name"]] = data.reshape(tuple(meta["shape"]) + (lat.size,))
        return spec, out


# ---------------------------------------------------------------- fiber modes

class FiberModeLattice:
    """Base grid carrying one fiber Fourier mode of a fiber-invariant problem.

    A field exp(2 pi i m j / n_t) g(i, k) is reproduced by the base field g
    with effective links: the fiber link becomes the multiplier u_t exp(i w),
    w = 2 pi m / n_t, and the shear of the x and y steps becomes the magnetic
    phases exp(-i w s k) on x links and exp(i w s n_y i) on the wrapping y
    links.  The object mimics Lattice closely enough for every operator in
    this module to act on it unchanged.
    """

    def __init__(self, lat, m):
        nt, nx, ny = lat.shape
        self.parent = lat
        self.m = int(m)
        self.spec = lat.spec
        self.shape = (1, nx, ny)
        self.size = nx * ny
        self.h = lat.h
        self.delta = lat.delta
        self.lam = lat.lam
        self.inv = lat.inv
        self.s = lat.s
        self.dv = lat.dv * nt             # one mode carries the whole fiber
        self.vol = lat.vol
        self.omega = 2 * math.pi * self.m / nt
        i, k = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        self.ik = (i, k)
        flat = lambda i_, k_: (np.asarray(i_) % nx) * ny + (np.asarray(k_) % ny)
        ident = np.arange(self.size)
        self.fwd = np.stack([ident, flat(i + 1, k).ravel(), flat(i, k + 1).ravel()])
        self.bwd = np.empty_like(self.fwd)
        for mu in range(3):
            self.bwd[mu][self.fwd[mu]] = ident
        w = self.omega
        self.phase = np.stack([
            np.full(self.size, np.exp(1j * w)),
            np.exp(-1j * w * lat.s * k).ravel(),
            np.where(k == ny - 1, np.exp(1j * w * lat.s * ny * i), 1.0).ravel()])

    def inner(self, u, v):
        return complex(np.vdot(v, u)) * self.dv

    def norm(self, u):
        return math.sqrt(max(self.inner(u, u).real, 0.0))

    def zeros_spinor(self):
        return np.zeros((2, self.size), dtype=complex)

    def random_spinor(self, rng, scale=1.0):
        return scale * (rng.standard_normal((2, self.size)) + 1j * rng.standard_normal((2, self.size)))

    def lift(self, g):
        """The full-lattice field exp(i w j) g(i, k)."""
        nt = self.parent.shape[0]
        ph = np.exp(1j * self.omega * np.arange(nt))
        g = np.asarray(g)
        return (ph[:, None] * g.reshape(-1, 1, self.size)).reshape(g.shape[:-1] + (nt * self.size,)) \
            if g.ndim > 1 else (ph[:, None] * g[None, :]).ravel()


def is_fiber_invariant(gauge, tol=1e-14):
    g = gauge.links.reshape(3, *gauge.lattice.shape)
    return bool(np.max(np.abs(g - g[:, :1])) <= tol)


def fiber_mode(gauge, m):
    """(FiberModeLattice, GaugeField) for fiber mode m of a fiber invariant gauge field."""
    lat = gauge.lattice
    if not is_fiber_invariant(gauge):
        raise ValueError("fiber mode reduction needs fiber invariant links")
    red = FiberModeLattice(lat, m)
    base = gauge.links.reshape(3, lat.shape[0], -1)[:, 0, :]
    links = base * red.phase
    gf = GaugeField.__new__(GaugeField)
    gf.lattice, gf.links, gf.label, gf.extra = red, links, gauge.label + "[m=%d]" % m, {}
    return red, gf


# ---------------------------------------------------------------- anti-commutator

def curvature_block(gauge):
    """Per-site coefficients of the block i [[0, F01], [F10, 0]].

    F01 = F(zeta, zeta_1 + i zeta_2), F10 = F(zeta, zeta_1 - i zeta_2), with the
    fiber-transverse plaquettes averaged over the two fiber cells that the
    centered fiber difference touches.
    """
    lat = gauge.lattice
    cur = curvature(gauge, check_branch=False)
    b = lat.bwd[0]
    f1 = 0.5 * (cur["tx"] + cur["tx"][b])
    f2 = 0.5 * (cur["ty"] + cur["ty"][b])
    F1, F2 = 1j * f1, 1j * f2          # F(zeta, zeta_1), F(zeta, zeta_2)
    return F1 + 1j * F2, F1 - 1j * F2


def apply_curvature_block(gauge, phi, block=None):
    F01, F10 = curvature_block(gauge) if block is None else block
    return np.stack([1j * F01 * phi[1], 1j * F10 * phi[0]])


def anticommutator_defect(gauge, phi, block=None):
    """({Z, T} - i [[0, F01], [F10, 0]]) phi.

    Z here is the limiting block; the Levi-Civita block differs from it by
    the scalar lambda/2, so {Z_LC, T} + lambda T = {Z, T} and the expression
    is the defect of the anti-commutator identity.
    """
    zt = apply_Z(gauge, apply_T(gauge, phi)) + apply_T(gauge, apply_Z(gauge, phi))
    return zt - apply_curvature_block(gauge, phi, block)


def smooth_spinor(lat, rng, modes=3, fiber_modes=(0, 1, -1)):
    """Random smooth spinor built from a few low modes with O(1) coefficients."""
    phi = np.zeros((2, lat.size), dtype=complex)
    for c in range(2):
        for m in fiber_modes:
            for _ in range(modes):
                p, q = rng.integers(-1, 2, size=2)
                amp = rng.standard_normal() + 1j * rng.standard_normal()
                phi[c] += amp * twisted_mode(lat, m, p, q, center=rng.uniform(0.2, 0.8))
    return phi


def smooth_form(lat, rng, amp=0.5, fiber_modes=(0, 1)):
    """Random smooth real 1-form (coordinate components) from low modes."""
    theta = np.zeros((3, lat.size))
    for comp in range(3):
        for m in fiber_modes:
            p, q = rng.integers(-1, 2, size=2)
            c = amp * (rng.standard_normal() + 1j * rng.standard_normal())
            theta[comp] += np.real(c * twisted_mode(lat, m, p, q, center=rng.uniform(0.2, 0.8)))
    return theta


def anticommutator_residual(gauge, samples=None, rng=None):
    """Operator norm estimate of the anti-commutator defect on smooth fields.

    samples: list of spinor fields (default: four smooth random ones drawn
    from rng).  Returns max ||defect(phi)|| / ||phi||.
    """
    lat = gauge.lattice
    if samples is None:
        rng = np.random.default_rng(0) if rng is None else rng
        samples = [smooth_spinor(lat, rng) for _ in range(4)]
    block = curvature_block(gauge)
    worst = 0.0
    for phi in samples:
        r = lat.norm(anticommutator_defect(gauge, phi, block)) / lat.norm(phi)
        worst = max(worst, r)
    return worst
