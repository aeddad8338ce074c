import numpy as np
import pytest
from hypothesis import given, strategies as st

from adiabatic_sw import forms
from adiabatic_sw import lattice as lt

seeds = st.integers(0, 2 ** 31 - 1)


def setup(n=4, ell=1, delta=3.0):
    lat = lt.build_lattice(lt.square_spec(n, ell=ell, delta=delta))
    return lat, forms.form_gauge(lat)


@given(seeds)
def test_d0_adjoint(seed):
    lat, fg = setup(ell=2)
    r = np.random.default_rng(seed)
    f, a = r.standard_normal(lat.size), r.standard_normal((3, lat.size))
    lhs = forms.inner(lat, forms.d0(fg, f), a)
    rhs = np.vdot(forms.d0_adj(fg, a), f) * lat.dv
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(seeds)
def test_curl_symmetric_and_kills_exact_forms(seed):
    lat, fg = setup(ell=1)
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((2, 3, lat.size))
    assert forms.inner(lat, forms.curl(fg, a), b) == pytest.approx(forms.inner(lat, a, forms.curl(fg, b)),
                                                                   rel=1e-11, abs=1e-11)


def test_curl_matrix_is_symmetric():
    lat, fg = setup(4, ell=1)
    C = forms.operator_matrix(lambda a: forms.curl(fg, a), 3, lat.size, dtype=float)
    assert np.allclose(C, C.T, atol=1e-12)


@pytest.mark.parametrize("ell", [0, 1, 3])
def test_direct_poisson_matches_cg(rng, ell):
    n = 6 if ell == 3 else 4
    lat = lt.build_lattice(lt.square_spec(n, ell=ell, delta=2.0) if ell else lt.LatticeSpec(5, 4, 4, delta=2.0))
    fg = forms.form_gauge(lat)
    rhs = rng.standard_normal(lat.size)
    u1 = forms.solve_poisson(fg, rhs, direct=True)
    u2 = forms.solve_poisson(fg, rhs, direct=False, tol=1e-13)
    assert np.allclose(u1, u2, atol=1e-9 * np.abs(u1).max())
    assert np.allclose(forms.laplacian0(fg, u1), rhs - rhs.mean(), atol=1e-9)


@given(seeds)
def test_coulomb_projection(seed):
    lat, fg = setup(4, ell=1)
    a = np.random.default_rng(seed).standard_normal((3, lat.size))
    p = forms.coulomb_project(fg, a)
    assert forms.divergence_norm(fg, p) < 1e-9 * forms.norm(lat, a)
    assert np.allclose(forms.coulomb_project(fg, p), p, atol=1e-10)
    # what was removed is exact, hence orthogonal to the projection
    assert abs(forms.inner(lat, a - p, p)) < 1e-9 * forms.norm(lat, a) ** 2


@pytest.mark.parametrize("ell,count", [(0, 3), (1, 2), (2, 2)])
def test_harmonic_forms(ell, count):
    lat = lt.build_lattice(lt.square_spec(4, ell=ell, delta=2.0) if ell else lt.LatticeSpec(5, 4, 4))
    fg = forms.form_gauge(lat)
    H = forms.harmonic_forms(lat)
    assert len(H) == count
    for h in H:
        assert forms.norm(lat, h) == pytest.approx(1.0, rel=1e-13)
        assert np.max(np.abs(forms.curl(fg, h))) < 1e-12
        assert np.max(np.abs(forms.d0_adj(fg, h))) < 1e-12
        assert np.max(np.abs(forms.remove_harmonic(lat, h))) < 1e-13
    if ell:
        eta = np.zeros((3, lat.size))
        eta[0] = 1.0
        # the fiber form is not closed: curl eta = 2 lambda eta
        assert np.allclose(forms.curl(fg, eta), 2 * lat.lam * eta)


def test_operator_matrix_batch_matches_loop(rng):
    lat, fg = setup(4, ell=1)
    M = forms.operator_matrix(lambda f: forms.laplacian0(fg, f), 1, lat.size, dtype=float)
    x = rng.standard_normal(lat.size)
    assert np.allclose(M @ x, forms.laplacian0(fg, x), atol=1e-12)
