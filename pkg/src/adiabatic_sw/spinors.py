"""Pointwise spinor algebra in three dimensions on C^2.

Spinors are pairs (alpha, beta).  The inner product is complex linear in the
first slot, <u, v> = sum u_k conj(v_k), which is the convention under which the
frame sum for the quadratic map reproduces its closed form.
"""
from dataclasses import dataclass

import numpy as np

C0 = np.array([[1j, 0], [0, -1j]])
C1 = np.array([[0, 1], [-1, 0]], dtype=complex)
C2 = np.array([[0, 1j], [1j, 0]])
GENERATORS = (C0, C1, C2)


@dataclass(frozen=True)
class Spinor:
    alpha: complex
    beta: complex

    def as_array(self):
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def norm2(self):
        return abs(self.alpha) ** 2 + abs(self.beta) ** 2


@dataclass(frozen=True)
class CoframeVector:
    c0: complex = 0.0
    c1: complex = 0.0
    c2: complex = 0.0

    def as_array(self):
        return np.array([self.c0, self.c1, self.c2], dtype=complex)

    def is_imaginary(self, tol=0.0):
        return bool(np.all(np.abs(self.as_array().real) <= tol))


def _vec(phi):
    if isinstance(phi, Spinor):
        return phi.as_array()
    return np.asarray(phi, dtype=complex)


def inner(u, v):
    return complex(np.sum(_vec(u) * np.conj(_vec(v))))


def clifford(v):
    """Clifford multiplication by a complexified 1-form in the adapted coframe."""
    c = v.as_array() if isinstance(v, CoframeVector) else np.asarray(v, dtype=complex)
    return c[0] * C0 + c[1] * C1 + c[2] * C2


def clifford_inverse(m):
    """Coefficients of the 1-form whose Clifford image is the traceless part of m."""
    m = np.asarray(m, dtype=complex)
    c = [-0.5 * np.trace(g @ m) for g in GENERATORS]
    return CoframeVector(*c)


def tau(phi):
    a, b = _vec(phi)
    d = 0.5 * (abs(a) ** 2 - abs(b) ** 2)
    return np.array([[d, a * np.conj(b)], [np.conj(a) * b, -d]])


def tau_via_frame(phi):
    """The same map written as half the frame sum of <phi, c(e_i) phi> c(e_i)."""
    p = _vec(phi)
    out = np.zeros((2, 2), dtype=complex)
    for g in GENERATORS:
        out += inner(p, g @ p) * g
    return 0.5 * out


def spin_element(q):
    """SU(2) matrix of the unit quaternion with real coefficients q (length 4).

    Built from the generators, so it acts through the same representation.
    """
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return q[0] * np.eye(2) + q[1] * C0 + q[2] * C1 + q[3] * C2


def quaternion_to_spinor(u, v):
    """q = u + j v  maps to (u, v)."""
    return Spinor(complex(u), complex(v))


# vectorized versions over lattice fields; alpha, beta are arrays of one shape

def tau_field(alpha, beta):
    """Entries (diag, offdiag) of tau at every site: [[d, o], [conj o, -d]]."""
    d = 0.5 * (np.abs(alpha) ** 2 - np.abs(beta) ** 2)
    o = alpha * np.conj(beta)
    return d, o


def tau_dot_field(alpha, beta, dalpha, dbeta):
    """Derivative of tau_field at (alpha, beta) in the direction (dalpha, dbeta)."""
    d = (alpha * np.conj(dalpha)).real - (beta * np.conj(dbeta)).real
    o = dalpha * np.conj(beta) + alpha * np.conj(dbeta)
    return d, o
