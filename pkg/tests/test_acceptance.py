"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line (also collected
in the terminal summary).  Criteria 8 and 9 are long PDE reproductions and are
marked slow; run them with ``pytest -m slow tests/test_acceptance.py``."""

import json

import numpy as np
import pytest

from spiralanchor.averaging import (
    ResonanceError,
    average_over_phi,
    compute_M,
    compute_M_quadrature,
    directional_derivative,
    find_equilibria,
    find_M_zeros,
    solve_cohomological,
)
from spiralanchor.center_bundle import (
    SystemParams,
    TorusState,
    closed_form_unperturbed,
    conjugacy_residual,
    integrate,
)
from spiralanchor.cli import run_cli
from spiralanchor.perturbation import (
    COS,
    ONE,
    SIN,
    PerturbationSpec,
    TrigPoly,
    TrigTerm,
    check_z4_symmetry,
    evaluate,
    parse_poly,
    parse_spec,
    simdata_spec,
)
from spiralanchor.rd_fhn import (
    PRESET_COEFFS,
    FieldPair,
    GridSpec,
    InhomogeneityCoeffs,
    build_inhomogeneity,
    rotate_field,
    run,
    spawn_spiral,
    step,
)
from spiralanchor.se2 import SE2Element, act_on_point, apply_J, compose, inverse
from spiralanchor.tips import TipTrajectory, classify, find_tip, fit_circle

TWO_PI = 2 * np.pi


def _orbit_sum(text):
    poly = parse_poly(text)
    out, img = poly, poly
    for _ in range(3):
        img = img.z4_image()
        out = out + img
    return out


def test_criterion_01_M_function(report):
    spec = simdata_spec()
    M = compute_M(spec)
    want = parse_poly("2*sin(4p)").coefficients()
    got = M.coefficients()
    coeff_err = max(abs(got.get(k, 0.0) - want.get(k, 0.0)) for k in set(got) | set(want))
    phi = np.linspace(0, TWO_PI, 257)
    quad_err = float(np.max(np.abs(compute_M_quadrature(spec, phi) - 2 * np.sin(4 * phi))))
    zero = [z for z in find_M_zeros(M) if abs(z.phi_star - np.pi / 4) < 1e-9]
    mu_err = abs(zero[0].mu + 8) if zero else np.inf
    ok = coeff_err <= 1e-14 and quad_err <= 1e-8 and mu_err <= 1e-6 and zero[0].stable
    report(1, ok, f"coeff err {coeff_err:.1e}, quadrature err {quad_err:.1e}, mu(pi/4) err {mu_err:.1e}")


def test_criterion_02_invariant_torus(report, tmp_path):
    code = run_cli(["repro", "torus", "--out", str(tmp_path)])
    diag = json.loads((tmp_path / "diagnostic.json").read_text())
    err = abs(np.angle(np.exp(1j * (diag["phi_mean"] - np.pi / 4))))
    devs = {s["epsilon"]: s["phi_maxdev"] for s in diag["sweep"]}
    decreasing = devs[0.1] > devs[0.05] > devs[0.01]
    ok = code == 0 and (tmp_path / "trajectory.csv").is_file() and err <= 0.15 and decreasing
    report(2, ok, f"phi_mean {diag['phi_mean']:.5f} (|d| = {err:.1e}), maxdev "
                  + " > ".join(f"{devs[e]:.4f}" for e in (0.1, 0.05, 0.01)))


def test_criterion_03_integrator_oracle(report):
    p = SystemParams((1.0, 0.0), 1.0, 0.0)
    init = TorusState((0.3, -0.4), 0.0)
    tr = integrate(p, init, dt=1e-3, t_end=TWO_PI)
    ret = float(np.max(np.abs(tr.psi[-1] - init.psi)))

    def err(dt):
        t = integrate(p, init, dt=dt, t_end=TWO_PI)
        return float(np.max(np.abs(t.states - closed_form_unperturbed(p.V, 1.0, init, t.times))))

    # at dt = 1e-3 the error is at round-off, so the order is measured at coarse steps
    ratio = err(0.1) / err(0.05)
    report(3, ret <= 1e-8 and ratio >= 8, f"return error {ret:.1e}, halving ratio {ratio:.1f}")


def test_criterion_04_z4_conjugacy(report):
    specs = [
        simdata_spec(),
        PerturbationSpec(_orbit_sum("sin(p)*cos(a)"), _orbit_sum("cos(3p)*sin(a-2b)"), _orbit_sum("cos(4p) + 0.3*cos(a)")),
        parse_spec("fphi: 0.5*sin(8p)\nfpsi1: cos(2p)*cos(a+b) - cos(2p)*cos(a-b)\nfpsi2: 0\n"),
    ]
    init = TorusState((0.4, 1.3), 0.2)
    res = []
    for spec in specs:
        p = SystemParams((0.7, 0.3), 1.0, 0.2, spec)
        res.append(conjugacy_residual(p, integrate(p, init, dt=1e-3, t_end=100.0, sample_every=50)))
    broken = SystemParams((0.7, 0.3), 1.0, 0.2, parse_spec("fphi: sin(p)\nfpsi1: cos(a)\n"))
    neg = conjugacy_residual(broken, integrate(broken, init, dt=1e-3, t_end=100.0, sample_every=50),
                             require_symmetric=False)
    ok = max(res) <= 1e-6 and neg >= 1e-2
    report(4, ok, f"symmetric residuals {', '.join(f'{r:.1e}' for r in res)}; broken spec {neg:.2e}")


def test_criterion_05_rotating_wave_orbit(report):
    g1 = parse_poly("-cos(p)*sin(a) - sin(p)*sin(b) + cos(4p)")
    g2 = parse_poly("sin(p)*sin(a) - cos(p)*sin(b)")
    spec = PerturbationSpec(g1, g2, TrigPoly())
    assert check_z4_symmetry(spec)
    field = average_over_phi(spec, (0.0, 0.0), 1.0)
    sinks = [e for e in find_equilibria(field) if e.stable]
    eig_err = min(float(np.max(np.abs(np.sort(np.real(e.eigenvalues)) + 1))) for e in sinks)
    at0 = any(np.allclose(e.psi_star, 0, atol=1e-10) for e in sinks)

    dt = TWO_PI / 6000  # commensurate with the 2 pi period
    n = 6000
    diam, worst_ret, worst_sym, worst_center = [], 0.0, 0.0, 0.0
    for eps in (0.2, 0.1, 0.05):
        p = SystemParams((0.0, 0.0), 1.0, eps, spec)
        tr = integrate(p, TorusState((0.3, -0.2), 0.0), dt=dt, t_end=60 * TWO_PI, rescaled=True)
        orb = tr.psi[-n - 1:]
        worst_ret = max(worst_ret, float(np.max(np.abs(orb[-1] - orb[0]))))
        pts = orb[:-1]
        diam.append(float(np.max(np.linalg.norm(pts[:, None] - pts[None, ::10], axis=-1))))
        worst_center = max(worst_center, float(np.linalg.norm(pts.mean(axis=0))))
        # Psi(phi - pi/2) = J Psi(phi)
        worst_sym = max(worst_sym, float(np.max(np.abs(pts[np.arange(n) - n // 4] - apply_J(pts)))))
    mono = diam[0] > diam[1] > diam[2]
    ok = at0 and eig_err <= 1e-8 and worst_ret <= 1e-8 and mono and worst_sym <= 1e-5 and worst_center <= diam[0]
    report(5, ok, f"diameters {diam[0]:.4f} > {diam[1]:.4f} > {diam[2]:.4f}, return {worst_ret:.1e}, "
                  f"symmetry {worst_sym:.1e}, eigenvalue err {eig_err:.1e}")


def test_criterion_06_cohomological(report):
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(20):
        w = rng.uniform(-2, 2, 2) + np.array([np.sqrt(2), np.pi / 3])
        terms = []
        while len(terms) < 6:
            n = tuple(int(x) for x in rng.integers(-5, 6, 2))
            if n == (0, 0) or abs(n[0] * w[0] + n[1] * w[1]) < 1e-3:
                continue
            terms.append(TrigTerm(ONE, 0, rng.choice([SIN, COS]), n, float(rng.normal())))
        poly = TrigPoly(tuple(terms))
        y = solve_cohomological(poly, w)
        a, b = rng.uniform(-10, 10, (2, 1000))
        worst = max(worst, float(np.max(np.abs(directional_derivative(y, w)(a, b, 0.0) - poly(a, b, 0.0)))))
    try:
        solve_cohomological(parse_poly("cos(a-b)"), (1.0, 1.0))
        raised = False
    except ResonanceError:
        raised = True
    report(6, worst <= 1e-9 and raised, f"max residual {worst:.1e} over 20 inputs; resonant mode raised: {raised}")


def test_criterion_07_euclidean_baseline(report):
    grid = GridSpec(200)
    start = spawn_spiral(grid, settle_time=200.0)
    res = run(start, InhomogeneityCoeffs(), dt=0.01, t_end=200.0, sample_every=10, grid=grid)
    tail = res.tips.tail(0.5)
    c, _ = fit_circle(tail.points)
    r = np.linalg.norm(tail.points - c, axis=1)
    spread = float(r.std() / r.mean())
    report(7, spread < 0.1, f"std/mean radius {spread:.4f} about ({c[0]:.2f}, {c[1]:.2f}), mean radius {r.mean():.3f}")


def _exp1_check(report, tmp_path, extra, tol, label):
    code = run_cli(["repro", "exp1", "--out", str(tmp_path), *extra])
    summary = json.loads((tmp_path / "summary.json").read_text())
    c = summary["runs"][0]["classification"] or {}
    kind = c.get("kind")
    dist = c.get("lattice_distance")
    ok = code == 0 and kind in ("anchored_rotation", "meander") and dist is not None and dist <= tol
    anchor = c.get("anchor") or [np.nan, np.nan]
    report(8, ok, f"{label}: {kind} at ({anchor[0]:.3f}, {anchor[1]:.3f}), lattice distance {dist}, "
                  f"half-shifted lattice distance {c.get('dual_lattice_distance')}")


@pytest.mark.slow
def test_criterion_08_anchoring_reduced(report, tmp_path):
    _exp1_check(report, tmp_path, ["--n", "100", "--t-end", "800"], 2.5, "reduced n=100")


@pytest.mark.slow
def test_criterion_08_anchoring(report, tmp_path):
    _exp1_check(report, tmp_path, [], 1.5, "full n=200")


@pytest.mark.slow
def test_criterion_09_conjugate_multistability(report, tmp_path):
    code = run_cli(["repro", "exp2", "--out", str(tmp_path), "--runs", "0,1", "--jobs", "2"])
    summary = json.loads((tmp_path / "summary.json").read_text())
    kinds = [(r["classification"] or {}).get("kind") for r in summary["runs"]]
    pairs = summary["conjugate_pairs"]
    dist = pairs[0]["conjugacy_distance"] if pairs else np.inf
    ok = code == 0 and all(k in ("anchored_rotation", "meander") for k in kinds) and dist <= 1.5
    report(9, ok, f"kinds {kinds}, conjugacy distance {dist:.2e}")


def test_criterion_10_equivariance_and_determinism(report):
    rng = np.random.default_rng(7)
    checks = {}

    # SE(2): group laws and point action
    worst = 0.0
    for _ in range(50):
        g, h = (SE2Element(rng.uniform(-9, 9), rng.uniform(-9, 9, 2)) for _ in range(2))
        z = rng.uniform(-9, 9, 2)
        worst = max(worst, np.linalg.norm(act_on_point(compose(g, h), z) - act_on_point(g, act_on_point(h, z))),
                    np.linalg.norm(act_on_point(compose(g, inverse(g)), z) - z))
    checks["se2"] = worst <= 1e-10

    # perturbation: Z4 symmetry of the simdata field at random points
    psi = rng.uniform(0, TWO_PI, (500, 2))
    phi = rng.uniform(0, TWO_PI, 500)
    a0, b0 = evaluate(simdata_spec(), psi, phi)
    a1, b1 = evaluate(simdata_spec(), apply_J(psi) * -1, phi + np.pi / 2)
    checks["z4"] = max(np.max(np.abs(a1 - a0)), np.max(np.abs(b1 - b0))) <= 1e-12

    # center bundle: deterministic integration
    p = SystemParams((0.7, 0.3), 1.0, 0.2, simdata_spec())
    t1 = integrate(p, TorusState((0.1, 0.2), 0.3), dt=1e-3, t_end=10)
    t2 = integrate(p, TorusState((0.1, 0.2), 0.3), dt=1e-3, t_end=10)
    checks["ode determinism"] = np.array_equal(t1.states, t2.states)

    # rd_fhn: symmetric data stays symmetric over 100 steps; step commutes with a quarter turn
    grid = GridSpec(80)
    X, Y = grid.mesh()
    r2 = X**2 + Y**2
    f = FieldPair(1.5 * np.exp(-r2 / 20) - 0.9 + 0.1 * np.cos(X / 2) * np.cos(Y / 2), -0.6 + 0.2 * np.exp(-r2 / 50))
    g1, g2 = build_inhomogeneity(PRESET_COEFFS["exp3"], grid)
    f = step(f, g1, g2, 0.01, grid, nsteps=100)
    grid_sym = float(max(np.max(np.abs(rotate_field(f.u) - f.u)), np.max(np.abs(rotate_field(f.v) - f.v))))
    checks["grid symmetry"] = grid_sym <= 1e-10
    h = FieldPair(rng.uniform(-2, 2, (80, 80)), rng.uniform(-1, 1, (80, 80)))
    a = step(h, g1, g2, 0.01, grid, nsteps=20)
    b = step(FieldPair(rotate_field(h.u), rotate_field(h.v)), g1, g2, 0.01, grid, nsteps=20)
    checks["step equivariance"] = np.array_equal(rotate_field(a.u), b.u)

    # tips: tip location and classification rotate with the field
    u = np.cos(0.7) * (X - 2) + np.sin(0.7) * (Y + 1)
    v = -np.sin(0.7) * (X - 2) + np.cos(0.7) * (Y + 1)
    tip = find_tip(u, v, grid)
    checks["tip equivariance"] = np.allclose(find_tip(rotate_field(u), rotate_field(v), grid), (-tip[1], tip[0]),
                                             atol=1e-9)
    t = np.arange(0, 600, 0.05)
    pts = np.column_stack([1 + np.cos(t) + 0.3 * np.cos(0.05 * t), 2 + np.sin(t) + 0.3 * np.sin(0.05 * t)])
    c0 = classify(TipTrajectory(t, pts, 0.05))
    c1 = classify(TipTrajectory(t, pts + (4.0, -3.0), 0.05))
    c2 = classify(TipTrajectory(t, np.column_stack([-pts[:, 1], pts[:, 0]]), 0.05))
    checks["classify equivariance"] = (c0.kind == c1.kind == c2.kind
                                       and np.allclose(c1.anchor, c0.anchor + (4, -3), atol=1e-6)
                                       and np.allclose(c2.anchor, (-c0.anchor[1], c0.anchor[0]), atol=1e-6))
    failed = [k for k, v in checks.items() if not v]
    report(10, not failed, f"grid symmetry residual {grid_sym:.1e}; "
                           + (f"failed: {failed}" if failed else f"{len(checks)} property groups hold"))
