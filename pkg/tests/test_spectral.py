import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adiabatic_sw import geometry as geo
from adiabatic_sw import lattice as lt
from adiabatic_sw import solver as sw
from adiabatic_sw import spectral as sp

seeds = st.integers(0, 2 ** 31 - 1)


def test_diagonal_lowest_values():
    res = sp.low_spectrum(sp.SpectrumRequest(sp.diagonal_handle(np.arange(1, 101)), 5, tol=1e-10))
    assert np.allclose(np.sort(res.eigenvalues), [1, 2, 3, 4, 5], atol=1e-9)


@settings(max_examples=10)
@given(seeds)
def test_random_hermitian_against_dense(seed):
    r = np.random.default_rng(seed)
    X = r.standard_normal((120, 120)) + 1j * r.standard_normal((120, 120))
    A = X + X.conj().T
    res = sp.low_spectrum(sp.SpectrumRequest(sp.matrix_handle(A), 4, tol=1e-9, seed=seed))
    ref = np.linalg.eigvalsh(A)
    want = np.sort(ref[np.argsort(np.abs(ref))[:4]])
    assert np.allclose(np.sort(res.eigenvalues), want, atol=1e-7)
    # residual contract: ||A v - lambda v|| <= tol * max(1, |lambda|)
    for lam, v, rr in zip(res.eigenvalues, res.vectors.T, res.residuals):
        assert np.linalg.norm(A @ v - lam * v) <= 1e-9 * max(1.0, abs(lam)) * 1.01
        assert rr <= 1e-9 * max(1.0, abs(lam))


def test_smallest_algebraic(rng):
    A = np.diag(np.linspace(-3, 3, 61))
    res = sp.low_spectrum(sp.SpectrumRequest(sp.matrix_handle(A), 3, "smallest_algebraic", 1e-10))
    assert np.allclose(np.sort(res.eigenvalues), [-3, -2.9, -2.8], atol=1e-8)


@pytest.mark.parametrize("target", ["smallest_magnitude", "smallest_algebraic"])
def test_repeated_eigenvalues_are_all_found(target):
    # one Krylov sequence sees a single copy of an exact multiplicity
    A = np.diag([0.0, 0.0, 0.0, 1, 1, 2] + list(np.linspace(3, 20, 94)))
    res = sp.low_spectrum(sp.SpectrumRequest(sp.matrix_handle(A), 5, target, tol=1e-10))
    assert np.allclose(np.sort(res.eigenvalues), [0, 0, 0, 1, 1], atol=1e-9)


def test_projected_kernel():
    r = np.random.default_rng(7)
    Q, _ = np.linalg.qr(r.standard_normal((80, 80)))
    vals = np.concatenate([[0.0, 0.0], np.linspace(1, 5, 78)])
    A = Q @ np.diag(vals) @ Q.T
    assert sp.kernel_dimension(sp.matrix_handle(A), gap_tol=1e-6) == 2


def test_no_reliable_gap():
    A = np.diag(np.concatenate([[0.0, 2e-6], np.linspace(1, 2, 30)]))
    with pytest.raises(sp.NoReliableGap):
        sp.kernel_dimension(sp.matrix_handle(A), gap_tol=1e-6)


@pytest.mark.parametrize("kw", [dict(k=0), dict(tol=0.0), dict(target="largest")])
def test_request_validation(kw):
    with pytest.raises(ValueError):
        sp.SpectrumRequest(sp.diagonal_handle([1, 2, 3]), **kw)


def test_failure_reports_residuals():
    A = np.diag(np.linspace(1, 2, 200))
    with pytest.raises(sp.SpectrumFailure) as e:
        sp.low_spectrum(sp.SpectrumRequest(sp.matrix_handle(A), 4, tol=1e-14, max_iterations=5))
    assert len(e.value.residuals) > 0


@pytest.mark.parametrize("degree,hol", [(0, (0, 0)), (0, (0.5, 0.5)), (1, (0, 0)), (2, (0, 0)), (2, (0.2, 0.5)),
                                        (3, (0, 0)), (-1, (0, 0)), (-2, (0.1, 0.1))])
def test_dbar_kernel_counts(degree, hol):
    op = sp.dbar_kernel_handle(8, degree, hol)
    dense = np.linalg.eigvalsh(op.to_dense())
    tol = sp.default_gap_tol(op)
    assert int(np.sum(np.abs(dense) < tol)) == sp.riemann_roch_count(degree, hol)
    assert sp.kernel_dimension(op) == sp.riemann_roch_count(degree, hol)


def test_dbar_kernel_operator_is_hermitian():
    A = sp.dbar_kernel_handle(6, 2).to_dense()
    assert np.allclose(A, A.conj().T, atol=1e-12)


def test_small_holonomy_has_no_reliable_gap():
    # the lowest flat mode sits just above the tolerance at this resolution, which must not be counted
    with pytest.raises(sp.NoReliableGap):
        sp.kernel_dimension(sp.dbar_kernel_handle(8, 0, (0.3, 0.1)))


def test_riemann_roch():
    assert [sp.riemann_roch_count(d) for d in (-2, -1, 0, 1, 4)] == [0, 0, 1, 1, 4]
    assert sp.riemann_roch_count(0, (0.5, 0)) == 0
    assert sp.riemann_roch_count(0, (1.0, 2.0)) == 1


def test_fiber_modes_reproduce_full_linearization():
    lat = lt.build_lattice(lt.square_spec(4, ell=1, delta=3.0))
    A0 = sp.reducible_background(lat, 0, (0.25, 0.4))
    L = sw.linearization(sw.configuration(A0), exclude_harmonic=True)
    E = np.eye(L.size)
    M = np.column_stack([L.matvec(E[:, j]) for j in range(L.size)])
    full = np.sort(np.linalg.eigvalsh(0.5 * (M + M.T)))
    nt, N = lat.shape[0], lat.size
    parts = [np.zeros(N + 1)]           # range(d) plus the harmonic forms are projected away
    for m in range(nt):
        red = lt.fiber_mode(A0, m)[1]
        s = np.linalg.eigvalsh(sp.spinor_block(red))
        parts += [s, s]                 # real packing doubles each complex eigenvalue
        F, _ = sp.form_block(red.lattice)
        parts.append(np.linalg.eigvalsh(0.5 * (F + F.conj().T)))
    union = np.sort(np.concatenate(parts))
    assert union.shape == full.shape
    assert np.allclose(union, full, atol=1e-9)
    z, _, _, _ = sp.linearization_gap(A0)
    nonzero = np.abs(full)[np.abs(full) > 1e-9]
    assert z == pytest.approx(nonzero.min(), rel=1e-10)


def test_form_blocks_conjugate_in_pairs():
    lat = lt.build_lattice(lt.square_spec(4, ell=1, delta=2.0))
    fg = lt.trivial_connection(lat)
    for m in (1, 3, 5):
        a = np.linalg.eigvalsh(sp.form_block(lt.fiber_mode(fg, m)[1].lattice)[0])
        b = np.linalg.eigvalsh(sp.form_block(lt.fiber_mode(fg, lat.shape[0] - m)[1].lattice)[0])
        assert np.allclose(a, b, atol=1e-10)


def test_skipping_spinor_modes_does_not_change_gap():
    lat = lt.build_lattice(lt.square_spec(4, ell=1, delta=8.0))
    A0 = sp.reducible_background(lat)
    z, zs, zf, modes = sp.linearization_gap(A0)
    assert any(g.skipped_spinor for g in modes)
    every = min(np.min(np.abs(np.linalg.eigvalsh(sp.spinor_block(lt.fiber_mode(A0, m)[1]))))
                for m in range(lat.shape[0]))
    assert zs == pytest.approx(every, rel=1e-12)


def test_gap_scales_like_inverse_delta():
    res = sp.gap_sweep(geo.BundleSpec(ell=1), [4, 8, 16], n=4)
    zd = [r.z * r.delta for r in res]
    assert all(r.error is None for r in res)
    assert max(zd) - min(zd) < 1e-6 * max(zd)


def test_trivial_bundle_gap_does_not_decay():
    # control: on the flat torus the gap settles at the delta independent spinor value
    # odd n_t avoids the Nyquist fiber mode; the base holonomy lifts the constant spinors
    res = sp.gap_sweep(geo.BundleSpec(ell=0), [8, 16, 32], n=6, n_fiber=7, hol=(0.3, 0.6))
    zs = [r.z for r in res]
    assert max(zs) - min(zs) < 1e-9
    assert zs[0] == pytest.approx(res[0].spinor_gap) and zs[0] > 0.7


def test_gap_sweep_validation_and_errors():
    with pytest.raises(ValueError):
        sp.gap_sweep(geo.BundleSpec(ell=1), [4, 2])
    res = sp.gap_sweep(geo.BundleSpec(ell=2), [4.0], n=5)     # n_t not integral: recorded
    assert res[0].error is not None and math.isnan(res[0].z)


def test_spectrum_report(tmp_path):
    res = sp.low_spectrum(sp.SpectrumRequest(sp.diagonal_handle([3, 1, 2, 5]), 2, tol=1e-12))
    rep = sp.spectrum_report(2.0, res)
    assert set(rep) == {"delta", "eigenvalues", "residuals", "iterations"}
    path = tmp_path / "r.json"
    sp.write_report(str(path), rep)
    assert json.loads(path.read_text())["delta"] == 2.0
