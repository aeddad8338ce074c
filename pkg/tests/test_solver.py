import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from adiabatic_sw import forms
from adiabatic_sw import lattice as lt
from adiabatic_sw import solver as sv
from adiabatic_sw import spectral as sp

seeds = st.integers(0, 2 ** 31 - 1)


def background(n=4, ell=1, delta=2.0, k=0, hol=(0.2, 0.35)):
    return lt.flat_connection(lt.build_lattice(lt.square_spec(n, ell=ell, delta=delta)), k, hol)


@pytest.fixture(scope="module")
def system():
    return sv.SWSystem(background(ell=2, k=1, delta=3.0))


def pairing(lat, g, dpsi, da):
    return lat.inner(g[0], dpsi).real + forms.inner(lat, g[1], da).real


def test_functional_vanishes_at_reducible(system):
    c = sv.configuration(system)
    assert sv.sw_functional(c) == 0.0
    assert sv.sw_residual(c) < 1e-12


@given(seeds)
def test_gauge_invariance_and_equivariance(seed):
    sysm = sv.SWSystem(background())
    c = sv.random_start(sysm, seed, 0.3, 0.3)
    f = np.random.default_rng(seed).uniform(-2, 2, c.lattice.size)
    cg = sv.gauge_act(c, f)
    assert sv.sw_functional(cg) == pytest.approx(sv.sw_functional(c), rel=1e-10, abs=1e-12)
    g1, g2 = sv.sw_gradient(c), sv.sw_gradient(cg)
    assert np.allclose(g2[0], np.exp(1j * f) * g1[0], atol=1e-10)
    assert np.allclose(g2[1], g1[1], atol=1e-10)


def test_gradient_matches_finite_differences(system):
    rng = np.random.default_rng(3)
    c = sv.random_start(system, 4, 0.3, 0.3)
    lat = c.lattice
    g = sv.sw_gradient(c)
    t = 1e-5
    for _ in range(20):
        dpsi = rng.standard_normal((2, lat.size)) + 1j * rng.standard_normal((2, lat.size))
        da = rng.standard_normal((3, lat.size))
        fp = sv.sw_functional(sv.Configuration(c.phi + t * dpsi, c.a + t * da, system))
        fm = sv.sw_functional(sv.Configuration(c.phi - t * dpsi, c.a - t * da, system))
        fd = (fp - fm) / (2 * t)
        assert fd == pytest.approx(pairing(lat, g, dpsi, da), rel=1e-6, abs=1e-8)


def test_hessian_matches_gradient_differences(system):
    rng = np.random.default_rng(5)
    c = sv.random_start(system, 6, 0.3, 0.3)
    lat = c.lattice
    t = 1e-6
    for _ in range(5):
        dpsi = rng.standard_normal((2, lat.size)) + 1j * rng.standard_normal((2, lat.size))
        da = rng.standard_normal((3, lat.size))
        gp = sv.sw_gradient(sv.Configuration(c.phi + t * dpsi, c.a + t * da, system))
        gm = sv.sw_gradient(sv.Configuration(c.phi - t * dpsi, c.a - t * da, system))
        h = sv.hessian_apply(c, dpsi, da)
        scale = sv.tangent_norm(lat, h)
        diff = sv.tangent_norm(lat, ((gp[0] - gm[0]) / (2 * t) - h[0], (gp[1] - gm[1]) / (2 * t) - h[1]))
        assert diff < 1e-5 * scale


@given(seeds)
@settings(max_examples=10)
def test_linearization_is_symmetric(seed):
    sysm = sv.SWSystem(background())
    c = sv.random_start(sysm, seed, 0.3, 0.3)
    L = sv.linearization(c, exclude_harmonic=True)
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, L.size))
    a, b = L.inner(L.matvec(x), y), L.inner(x, L.matvec(y))
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)
    # the orbit direction i psi is projected out
    orbit = sv._pack(1j * c.phi, np.zeros((3, c.lattice.size)))
    assert abs(np.dot(L.matvec(x), orbit)) < 1e-9 * np.linalg.norm(orbit) * np.linalg.norm(L.matvec(x))


@pytest.mark.parametrize("ell,k", [(1, 0), (2, 1), (3, 2)])
@pytest.mark.parametrize("delta", [1.0, 4.0, 16.0])
def test_flat_reducibles_are_critical(ell, k, delta):
    n = 6 if ell == 3 else 4
    c = sv.configuration(background(n, ell, delta, k))
    assert sv.sw_residual(c) < 1e-10


def test_reducible_start_is_returned_unchanged():
    c = sv.configuration(background(ell=2, k=1))
    res = sv.find_critical_point(c)
    assert res.converged and res.reducible and res.iterations == 0
    assert np.array_equal(res.config.phi, c.phi)


@pytest.fixture(scope="module")
def solved():
    bg = background(4, ell=2, delta=8.0, k=1)
    return sv.find_critical_point(sv.random_start(bg, 17, 0.1, 0.1))


def test_solver_converges_to_reducible(solved):
    assert solved.converged, solved.message
    assert solved.reducible
    assert sv.sw_residual(solved.config) <= 1e-10
    assert forms.divergence_norm(solved.config.system.fg, solved.config.a) < 1e-9


def test_merit_never_increases(solved):
    res = [r["residual"] for r in solved.log_rows()]
    assert len(res) > 2
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res, res[1:]))


def test_chern_identity_at_solution(solved):
    lat = solved.config.lattice
    assert sv.chern_defect(solved.config) <= max(lat.h)


def test_failure_can_raise():
    bg = background(4, ell=1, delta=2.0)
    p = sv.SolverParams(max_iter=1)
    with pytest.raises(sv.SolverFailure):
        sv.find_critical_point(sv.random_start(bg, 1, 0.5, 0.5), p, raise_on_failure=True)


def test_decoupling_quantities_vanish_on_reducibles():
    c = sv.configuration(background(ell=2, k=1))
    assert sv.decoupling_quantities(c) == (0.0, 0.0)


# ---------------------------------------------------------------- classifier

@pytest.mark.parametrize("args,kind,norm", [
    ((2, 5, 2), sv.REDUCIBLE_ONLY, None),
    ((2, 5, 3), sv.REDUCIBLE_ONLY, None),
    ((1, 3, 1), sv.REDUCIBLE_ONLY, None),
    ((2, 4, 3), sv.REDUCIBLE_PLUS_UNIQUE, {"component": "beta", "norm_sq": 2}),
    ((2, 4, 1), sv.REDUCIBLE_PLUS_UNIQUE, {"component": "alpha", "norm_sq": 2}),
    ((3, 7, 5), sv.REDUCIBLE_PLUS_UNIQUE, {"component": "beta", "norm_sq": 4}),
    ((2, 0, 0), sv.REDUCIBLE_TORI, None),
    ((3, 0, 2), sv.IRREDUCIBLE_FAMILY, None),
    ((2, 0, 4), sv.EMPTY, None),
])
def test_classifier_examples(args, kind, norm):
    c = sv.classify_adiabatic(sv.ClassifierInput(*args))
    assert c.kind == kind
    if norm is not None:
        assert c.normalization == norm


def test_ranges():
    assert sv.stable_range(2, 5) == {2, 3}
    assert sv.stable_range(2, 3) == frozenset()
    assert sv.realization_range(2, 5) == {0, 1, 2, 3, 4}
    assert sv.realization_range(3, 4) == frozenset()


KINDS = {sv.REDUCIBLE_ONLY, sv.REDUCIBLE_PLUS_UNIQUE, sv.IRREDUCIBLE_FAMILY, sv.REDUCIBLE_TORI, sv.EMPTY}


@given(st.integers(1, 6), st.integers(-12, 12), st.integers(-30, 30), st.booleans(), st.booleans())
def test_classifier_is_total(g, ell, k, torsion, pullback):
    c = sv.classify_adiabatic(sv.ClassifierInput(g, ell, k, torsion, pullback))
    assert c.kind in KINDS
    if not pullback:
        assert c.kind == sv.EMPTY
    if ell != 0:
        # only the class of k mod ell matters
        c2 = sv.classify_adiabatic(sv.ClassifierInput(g, ell, k + 3 * ell, torsion, pullback))
        assert c2.to_dict() == c.to_dict()
        if pullback and torsion and (g == 1 or k % abs(ell) in sv.stable_range(g, ell)):
            assert c.kind == sv.REDUCIBLE_ONLY
        if c.kind == sv.REDUCIBLE_PLUS_UNIQUE:
            assert abs(ell) >= 2 * g - 1 and c.normalization["norm_sq"] == 2 * (g - 1)


def test_classifier_rejects_genus_zero():
    with pytest.raises(ValueError):
        sv.classify_adiabatic(sv.ClassifierInput(0, 3, 1))


def test_classifier_table_rows():
    assert [k for k, _ in sv.classifier_table(2, 5)] == [0, 1, 2, 3, 4]
    assert [k for k, _ in sv.classifier_table(2, 0)] == [-2, -1, 0, 1, 2]


# ---------------------------------------------------------------- contraction

def test_radius_examples():
    assert sv.taubes_radius(sv.TaubesProblem(1.0, 0.3, 0.0)) == (True, 0.0)
    ok, r = sv.taubes_radius(sv.TaubesProblem(1.0, 1.0, 0.125))
    assert ok and r == pytest.approx((1 - math.sqrt(0.5)) / 2, abs=1e-15)
    ok, r = sv.taubes_radius(sv.TaubesProblem(2.0, 0.0, 0.3))
    assert ok and r == 0.3
    assert not sv.taubes_radius(sv.TaubesProblem(1.0, 0.25, 0.5))[0]
    assert not sv.taubes_radius(sv.TaubesProblem(1.0, 0.0, 0.6))[0]


@given(st.floats(0.01, 5.0), st.floats(0.0, 0.49), st.floats(0.0, 0.49))
def test_radius_is_smallest_root_and_monotone(q, e1, e2):
    assume(4 * q * max(e1, e2) < 1 - 1e-6)
    lo, hi = sorted((e1, e2))
    _, r1 = sv.taubes_radius(sv.TaubesProblem(1.0, q, lo))
    _, r2 = sv.taubes_radius(sv.TaubesProblem(1.0, q, hi))
    assert r1 <= r2
    assert lo <= r1 <= 2 * lo + 1e-15
    assert abs(q * r1 * r1 - r1 + lo) <= 1e-14
    assert 2 * q * r1 < 1


@pytest.mark.parametrize("kw", [dict(mu=0.0, kappa=1, eps0=0.1), dict(mu=1, kappa=-1, eps0=0.1),
                                dict(mu=1, kappa=1, eps0=float("nan"))])
def test_problem_validation(kw):
    with pytest.raises(ValueError):
        sv.TaubesProblem(**kw)


def test_scalar_fixed_point():
    p = sv.TaubesProblem(1.0, 0.1, 0.01)
    res = sv.taubes_solve(lambda x: x, lambda y: -0.01 + 0.1 * y ** 2, lambda y: y - 0.01 + 0.1 * y ** 2, p)
    assert float(res.y) == pytest.approx((-1 + math.sqrt(1.004)) / 0.2, abs=1e-13)
    assert abs(res.y) <= res.radius and res.residual < 1e-14
    assert res.max_ratio <= 2 * p.q * res.radius


def test_inadmissible_problem_is_rejected():
    with pytest.raises(ValueError):
        sv.taubes_solve(lambda x: x, lambda y: 1.0 + y ** 2, lambda y: y + 1 + y ** 2,
                        sv.TaubesProblem(1.0, 1.0, 1.0))


def test_understated_constants_are_caught():
    # the nonlinearity is 5 y^2 but the problem claims kappa = 0.01
    with pytest.raises(sv.ContractionFailure):
        sv.taubes_solve(lambda x: x, lambda y: -0.1 + 5 * y ** 2, lambda y: y - 0.1 + 5 * y ** 2,
                        sv.TaubesProblem(1.0, 0.01, 0.1))
