import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spiralanchor.averaging import (
    AveragedField,
    DegenerateError,
    PreconditionError,
    ResonanceError,
    average_corotating,
    average_over_phi,
    compute_M,
    compute_M_quadrature,
    directional_derivative,
    find_equilibria,
    find_M_zeros,
    find_periodic_orbit,
    predict,
    quadrature_average,
    resonance_check,
    solve_cohomological,
)
from spiralanchor.center_bundle import SystemParams
from spiralanchor.perturbation import COS, ONE, SIN, PerturbationSpec, TrigPoly, TrigTerm, parse_poly, simdata_spec
from spiralanchor.se2 import apply_J

TWO_PI = 2 * np.pi

# G = R_{-phi} (-sin a, -sin b): averages to (-sin a, -sin b)
G1 = parse_poly("-cos(p)*sin(a) - sin(p)*sin(b)")
G2 = parse_poly("sin(p)*sin(a) - cos(p)*sin(b)")


def sine_field():
    return average_corotating(G1, G2)


def limit_cycle_field():
    def f(p):
        r2 = (p * p).sum(-1)
        return np.stack([p[..., 0] - r2 * p[..., 0] - p[..., 1], p[..., 1] - r2 * p[..., 1] + p[..., 0]], -1)

    return AveragedField.from_callable(f)


def _pts(k=100, seed=0):
    return np.random.default_rng(seed).uniform(0, TWO_PI, (k, 2))


def test_constant_G_averages_to_zero():
    fld = average_corotating(parse_poly("0.7"), parse_poly("-1.3"), W=(0.4, 0.9))
    np.testing.assert_allclose(fld(_pts()), 0.0, atol=1e-15)


def test_cos_phi_averages_to_half():
    fld = average_corotating(parse_poly("cos(p)"), TrigPoly())
    np.testing.assert_allclose(fld(_pts()), np.broadcast_to([0.5, 0.0], (100, 2)), atol=1e-15)


def test_rotated_field_averages_back():
    fld = sine_field()
    p = _pts()
    np.testing.assert_allclose(fld(p), -np.sin(p), atol=1e-15)


SYM_G = [
    (parse_poly("cos(p)*cos(a) + sin(2p)*sin(a+2b) + 0.3*cos(3p)*cos(2a-b)"),
     parse_poly("sin(p)*sin(b) + cos(2p)*cos(a-b) + 0.5")),
    (G1, G2),
]


@settings(max_examples=25, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.sampled_from(SYM_G))
def test_bessel_average_matches_quadrature(w1, w2, g):
    fa = average_corotating(*g, W=(w1, w2))
    fq = quadrature_average(*g, W=(w1, w2))
    p = _pts(50)
    np.testing.assert_allclose(fa(p), fq(p), atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.3, 3))
def test_equivariance_for_symmetric_spec(v1, v2, omega):
    spec = simdata_spec()
    fa = average_over_phi(spec, (v1, v2), omega)
    p = _pts()
    assert fa.equivariance_defect(p).max() < 1e-12
    W = np.array([v1, v2]) / omega
    from spiralanchor.averaging import rescaled_perturbation

    fq = quadrature_average(*rescaled_perturbation(spec, (v1, v2), omega), W=W)
    assert fq.equivariance_defect(p).max() <= 1e-10
    np.testing.assert_allclose(fa(p), fq(p), atol=1e-8)


def test_average_needs_rotation():
    with pytest.raises(ValueError):
        average_over_phi(simdata_spec(), (1, 0), 0.0)


def test_exact_jacobian_matches_differences():
    fld = average_over_phi(simdata_spec(), (0.3, 0.1), 1.0)
    p = _pts(20)
    num = AveragedField.from_callable(fld, periodic=True).jacobian(p)
    np.testing.assert_allclose(fld.jacobian(p), num, atol=1e-8)


def test_sine_field_equilibria():
    eqs = find_equilibria(sine_field())
    by_point = {tuple(np.round(e.psi_star, 9)): e for e in eqs}
    assert set(by_point) == {(0.0, 0.0), (0.0, round(np.pi, 9)), (round(np.pi, 9), 0.0), (round(np.pi, 9), round(np.pi, 9))}
    origin = by_point[(0.0, 0.0)]
    assert origin.stable and origin.at_origin
    np.testing.assert_allclose(origin.eigenvalues, [-1, -1], atol=1e-8)
    assert by_point[(round(np.pi, 9), round(np.pi, 9))].kind == "source"
    assert by_point[(0.0, round(np.pi, 9))].kind == "saddle"


def test_equilibria_are_J_closed_and_sorted():
    fld = average_over_phi(simdata_spec(), (0.3, 0.1), 1.0)
    eqs = find_equilibria(fld)
    pts = np.array([e.psi_star for e in eqs])
    for e in eqs:
        img = np.mod(apply_J(e.psi_star), TWO_PI)
        d = np.mod(pts - img + np.pi, TWO_PI) - np.pi
        assert np.min(np.linalg.norm(d, axis=1)) < 1e-6
        np.testing.assert_allclose(fld(e.psi_star), 0.0, atol=1e-10)
    keys = [tuple(np.round(p, 9)) for p in pts]
    assert keys == sorted(keys)


def test_degenerate_field_warns():
    fld = average_corotating(TrigPoly(), TrigPoly())
    with pytest.warns(RuntimeWarning, match="degenerate"):
        assert find_equilibria(fld) == []


def test_limit_cycle():
    orb = find_periodic_orbit(limit_cycle_field(), (0.5, 0.1))
    assert orb is not None
    assert orb.period == pytest.approx(TWO_PI, abs=1e-6)
    assert orb.beta == pytest.approx(-2.0, abs=1e-6)
    assert orb.stable and orb.st_symmetric == "+"
    np.testing.assert_allclose(np.linalg.norm(orb.samples, axis=1), 1.0, atol=1e-7)


def test_limit_cycle_from_conjugate_seed():
    fld = limit_cycle_field()
    a = find_periodic_orbit(fld, (0.5, 0.1))
    b = find_periodic_orbit(fld, apply_J(np.array([0.5, 0.1])))
    assert b.period == pytest.approx(a.period, abs=1e-6)


def test_gradient_field_has_no_cycles():
    assert find_periodic_orbit(sine_field(), (1.0, 2.0), transient=50.0, max_time=100.0) is None


def test_M_of_simdata():
    M = compute_M(simdata_spec())
    assert M.coefficients() == {(SIN, 4, ONE, (0, 0)): 2.0}
    phi = np.linspace(0, TWO_PI, 37)
    np.testing.assert_allclose(compute_M_quadrature(simdata_spec(), phi), M(0, 0, phi), atol=1e-8)


@pytest.mark.parametrize("text", ["cos(a)", "0"])
def test_M_vanishes(text):
    assert not compute_M(PerturbationSpec(f_phi=parse_poly(text)))


def test_M_zeros_of_sin4():
    zeros = find_M_zeros(parse_poly("2*sin(4p)"))
    assert len(zeros) == 8
    np.testing.assert_allclose([z.phi_star for z in zeros], np.arange(8) * np.pi / 4, atol=1e-12)
    np.testing.assert_allclose([z.mu for z in zeros], [8, -8] * 4, atol=1e-9)
    assert [z.stable for z in zeros] == [False, True] * 4


def test_tangent_zero_flagged():
    zeros = find_M_zeros(parse_poly("1 + sin(p)"))
    assert len(zeros) == 1
    assert zeros[0].phi_star == pytest.approx(3 * np.pi / 2, abs=1e-6)
    assert not zeros[0].transverse


def test_identically_zero_M():
    with pytest.raises(DegenerateError):
        find_M_zeros(TrigPoly())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([SIN, COS]), st.integers(1, 6), st.floats(-2, 2).filter(lambda c: abs(c) > 1e-3)), min_size=1, max_size=4),
       st.floats(-1, 1))
def test_M_zero_count_matches_sign_changes(terms, const):
    M = TrigPoly(tuple(TrigTerm(k, m, ONE, (0, 0), c) for k, m, c in terms) + (TrigTerm(ONE, 0, ONE, (0, 0), const),))
    if not M:
        return
    zeros = find_M_zeros(M)
    grid = TWO_PI * np.arange(1024) / 1024
    v = M(0, 0, grid)
    changes = int(np.sum(v * np.roll(v, -1) < 0)) + int(np.sum(v == 0))
    transverse = [z for z in zeros if z.transverse]
    assert len(transverse) == changes or any(abs(z.mu) < 1e-3 for z in zeros)
    for z in zeros:
        assert abs(M(0, 0, z.phi_star)) <= 1e-12


def test_resonance_margin_example():
    spec = PerturbationSpec(f_phi=parse_poly("cos(a-b) + cos(a+b)"))
    rc = resonance_check((np.pi, np.sqrt(2)), np.pi / 4, spec)
    assert rc["margin"] <= 2.0 + 1e-12
    ab = rc["alpha_beta"]
    assert abs(ab[0] - ab[1]) == pytest.approx(2.0, abs=1e-12)


def test_resonance_detected():
    spec = PerturbationSpec(f_phi=parse_poly("cos(a-b)"))
    with pytest.raises(ResonanceError) as err:
        resonance_check((1.0, 1.0), 0.0, spec)
    assert tuple(err.value.mode) in {(1, -1), (1, 1), (-1, 1)}


def test_cohomological_examples():
    y = solve_cohomological(parse_poly("cos(a)"), (2.0, 1.0))
    assert y == parse_poly("0.5*sin(a)")
    assert not solve_cohomological(TrigPoly(), (1.0, 2.0))
    with pytest.raises(ResonanceError):
        solve_cohomological(parse_poly("cos(a-b)"), (1.0, 1.0))
    with pytest.raises(PreconditionError):
        solve_cohomological(parse_poly("1 + cos(a)"), (1.0, 0.5))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_cohomological_residual(seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-2, 2, 2) + np.array([np.sqrt(2), np.pi / 3])
    terms = []
    for _ in range(6):
        n = tuple(int(x) for x in rng.integers(-5, 6, 2))
        if n == (0, 0) or abs(n[0] * w[0] + n[1] * w[1]) < 1e-3:
            continue
        terms.append(TrigTerm(ONE, 0, rng.choice([SIN, COS]), n, float(rng.normal())))
    poly = TrigPoly(tuple(terms))
    y = solve_cohomological(poly, w)
    a, b = rng.uniform(-10, 10, (2, 1000))
    res = directional_derivative(y, w)(a, b, 0.0) - poly(a, b, 0.0)
    assert np.max(np.abs(res)) <= 1e-9


def test_predict_travelling_simdata():
    pred = predict(SystemParams((np.pi, np.sqrt(2)), 0.0, 0.1, simdata_spec()))
    assert pred.mode == "travelling"
    stable = [t for t in pred.travelling if t["stable"]]
    assert any(abs(t["phi_star"] - np.pi / 4) < 1e-9 and t["mu"] == pytest.approx(-8.0) for t in stable)
    assert any(abs(t["phi_star"]) < 1e-9 and t["mu"] == pytest.approx(8.0) for t in pred.travelling)
    json.dumps(pred.to_dict())


def test_predict_anchor_synthetic():
    spec = PerturbationSpec(G1, G2, TrigPoly())
    pred = predict(SystemParams((0.0, 0.0), 1.0, 0.05, spec), search_orbits=False)
    assert pred.mode == "rotating"
    stable = [a for a in pred.anchors if a["stable"]]
    assert len(stable) == 1
    assert stable[0]["psi_star"] == [0.0, 0.0] and stable[0]["st_symmetric"]
    doc = json.loads(json.dumps(pred.to_dict()))
    assert set(doc) >= {"mode", "anchors", "meander_orbits", "travelling"}


def test_predict_euclidean_case():
    pred = predict(SystemParams((1.0, 0.0), 1.0, 0.0, simdata_spec()))
    assert pred.mode == "none" and "continuum" in pred.reason


def test_predict_region_R():
    with warnings.catch_warnings():
        pred = predict(SystemParams((1.0, 0.0), 0.15, 0.1, simdata_spec()))
    assert pred.mode == "none" and "region-R" in pred.reason


def test_predict_rejects_asymmetric():
    with pytest.raises(PreconditionError):
        predict(SystemParams((1.0, 0.0), 1.0, 0.1, PerturbationSpec(f_phi=parse_poly("sin(p)"))))
