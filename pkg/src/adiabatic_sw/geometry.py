"""Closed-form invariants of Killing metric almost contact structures.

Everything here is plain arithmetic on constant invariants.  The base surface
is a flat rectangular torus of area pi with sides (a, pi/a).
"""
from dataclasses import dataclass, replace
import math

import numpy as np

BASE_AREA = math.pi
RTOL = 1e-12


@dataclass(frozen=True)
class MacInvariants:
    lam: float
    varphi: float
    b: float
    sigma: float
    kappa: float
    scal: float
    delta: float = 1.0

    @classmethod
    def from_type(cls, lam, varphi, sigma, delta=1.0):
        """Fill in b, kappa and the scalar curvature from (lam, varphi, sigma)."""
        kappa = sigma - lam**2 + 2.0 * lam * varphi
        return cls(lam=lam, varphi=varphi, b=lam + varphi, sigma=sigma,
                   kappa=kappa, scal=2.0 * kappa + 4.0 * lam**2, delta=delta)

    def check(self, rtol=RTOL):
        scale = 1.0 + abs(self.lam) + abs(self.varphi) + abs(self.sigma)
        tol = rtol * scale**2
        ok = (abs(self.b - (self.lam + self.varphi)) <= tol
              and abs(self.kappa - (self.sigma - self.lam**2 + 2 * self.lam * self.varphi)) <= tol
              and abs(self.scal - (2 * self.kappa + 4 * self.lam**2)) <= tol
              and self.delta > 0)
        return ok


@dataclass(frozen=True)
class BundleSpec:
    ell: int
    genus: int = 1
    base_area: float = BASE_AREA
    delta: float = 1.0
    l_n_class: int = 0
    is_pullback: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive, got %r" % self.delta)
        if self.genus < 0:
            raise ValueError("genus must be nonnegative")
        if abs(self.base_area - BASE_AREA) > 1e-12:
            raise ValueError("base area is normalized to pi")
        if self.ell != 0:
            object.__setattr__(self, "l_n_class", int(self.l_n_class) % abs(self.ell))

    def with_delta(self, delta):
        return replace(self, delta=float(delta))


def torus_sides(aspect=None):
    """Side lengths (a, pi/a) of the flat base torus, square by default."""
    a = math.sqrt(math.pi) if aspect is None else float(aspect)
    return a, math.pi / a


def boothby_wang_invariants(spec, sigma_base=0.0):
    if not spec.delta > 0:
        raise ValueError("delta must be positive")
    ell, d = spec.ell, float(spec.delta)
    lam = -ell / d
    varphi = ell / d
    kappa = sigma_base - 3.0 * ell**2 / d**2
    scal = 2.0 * (sigma_base - ell**2 / d**2)
    return MacInvariants(lam=lam, varphi=varphi, b=0.0, sigma=float(sigma_base),
                         kappa=kappa, scal=scal, delta=d)


def anisotropic_deform(inv, delta):
    """Rescale the fiber direction of the metric by 1/delta**2."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if abs(inv.delta - 1.0) > RTOL:
        raise ValueError("deformations start from the reference metric (delta = 1)")
    return rescale_fiber(inv, delta)


def rescale_fiber(inv, delta):
    """The deformation formulas applied to any invariants, reference or not.

    The scale factors multiply in ``delta``, so repeated rescaling can be
    compared with a single one.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    lam = inv.lam / delta
    varphi = delta * inv.varphi + (delta - 1.0 / delta) * inv.lam
    # b = lam + varphi comes out as delta * b
    return MacInvariants.from_type(lam, varphi, inv.sigma, delta=inv.delta * delta)


def ricci_matrix(inv):
    l2 = inv.lam**2
    k = inv.kappa
    return np.array([[2 * l2, 0.0, 0.0],
                     [0.0, k + l2, -k],
                     [0.0, -k, k + l2]])
