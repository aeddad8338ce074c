import numpy as np
import pytest
from hypothesis import given, strategies as st

from adiabatic_sw import spinors as spn

reals = st.floats(-5, 5)
spinor = st.tuples(reals, reals, reals, reals).map(lambda t: np.array([t[0] + 1j * t[1], t[2] + 1j * t[3]]))
quat = st.tuples(reals, reals, reals, reals).filter(lambda q: sum(x * x for x in q) > 1e-3)


def test_clifford_relations():
    E = [spn.clifford(spn.CoframeVector(*v)) for v in np.eye(3)]
    for i in range(3):
        for j in range(3):
            assert np.allclose(E[i] @ E[j] + E[j] @ E[i], -2 * (i == j) * np.eye(2), atol=1e-15)


def test_orientation():
    # e0 e1 e2 acts as a fixed scalar on C^2
    E = [spn.clifford(v) for v in np.eye(3)]
    prod = E[0] @ E[1] @ E[2]
    assert np.allclose(prod, prod[0, 0] * np.eye(2))


@given(st.tuples(reals, reals, reals))
def test_real_forms_give_skew_matrices(v):
    m = spn.clifford(np.array(v))
    assert np.allclose(m, -m.conj().T)
    assert np.allclose(m @ m, -np.dot(v, v) * np.eye(2), atol=1e-12)


@given(st.tuples(reals, reals, reals, reals, reals, reals))
def test_clifford_inverse_round_trip(c):
    v = spn.CoframeVector(c[0] + 1j * c[3], c[1] + 1j * c[4], c[2] + 1j * c[5])
    back = spn.clifford_inverse(spn.clifford(v))
    assert np.allclose(back.as_array(), v.as_array(), atol=1e-12)


@given(spinor)
def test_tau_traceless_hermitian(phi):
    t = spn.tau(phi)
    assert abs(np.trace(t)) < 1e-12
    assert np.allclose(t, t.conj().T, atol=1e-12)


@given(spinor)
def test_tau_frame_sum(phi):
    assert np.allclose(spn.tau(phi), spn.tau_via_frame(phi), atol=1e-11)


@given(spinor)
def test_tau_norm_and_phi_eigenvector(phi):
    t = spn.tau(phi)
    n2 = np.vdot(phi, phi).real
    assert np.allclose(t @ phi, 0.5 * n2 * phi, atol=1e-10)
    assert np.linalg.norm(t) == pytest.approx(n2 / np.sqrt(2), abs=1e-10)


@given(spinor, quat, st.floats(0, 2 * np.pi))
def test_tau_equivariance(phi, q, th):
    g = spn.spin_element(q)
    assert np.allclose(g.conj().T @ g, np.eye(2), atol=1e-12)
    assert np.allclose(spn.tau(g @ phi), g @ spn.tau(phi) @ g.conj().T, atol=1e-10)
    assert np.allclose(spn.tau(np.exp(1j * th) * phi), spn.tau(phi), atol=1e-11)


@given(spinor, spinor)
def test_tau_dot_matches_finite_difference(phi, dphi):
    h = 1e-6
    fd = (spn.tau(phi + h * dphi) - spn.tau(phi - h * dphi)) / (2 * h)
    d, o = spn.tau_dot_field(phi[0], phi[1], dphi[0], dphi[1])
    assert np.allclose(np.array([[d, o], [np.conj(o), -d]]), fd, atol=1e-6 * (1 + np.abs(fd).max()))


@given(st.floats(0.1, 3.0), spinor)
def test_tau_dot_at_distinguished_spinor(c0, dphi):
    # printed form: c0 [[-Re dphi_1, dphi_0], [conj dphi_0, Re dphi_1]]
    d, o = spn.tau_dot_field(np.array(0j), np.array(c0 + 0j), dphi[0], dphi[1])
    got = np.array([[d, o], [np.conj(o), -d]])
    want = c0 * np.array([[-dphi[1].real, dphi[0]], [np.conj(dphi[0]), dphi[1].real]])
    assert np.allclose(got, want, atol=1e-12)


def test_field_version_matches_pointwise(rng):
    a = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    b = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    d, o = spn.tau_field(a, b)
    for i in range(10):
        t = spn.tau([a[i], b[i]])
        assert t[0, 0] == pytest.approx(d[i]) and t[0, 1] == pytest.approx(o[i])


def test_spinor_types():
    s = spn.Spinor(1 + 1j, 2.0)
    assert s.norm2 == pytest.approx(6.0)
    assert spn.quaternion_to_spinor(1j, 2) == spn.Spinor(1j, 2)
    assert spn.CoframeVector(1j, 2j, 0).is_imaginary()
    assert not spn.CoframeVector(1.0).is_imaginary()
    assert spn.inner([1, 1j], [1, 1j]) == pytest.approx(2.0)
