"""First-order averaging: the planar Z4-equivariant field, M(phi), and predictions.

In the co-rotating frame the rescaled system reads

    dPsi/dphi = eps R_phi G(Psi, phi),   G(Psi, phi) = H(Psi + J R_phi W, phi)

and the averaged planar field is the phi-mean of R_phi G.  The shift
J R_phi W puts a sinusoid A sin(phi + delta) inside every psi-factor, so the
phi-dependence of G is a Jacobi-Anger (Bessel) series; only the Bessel
orders that can cancel the phi-harmonics of R_phi survive the average,
which makes the analytic path exact with finitely many J_k(A).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from scipy.optimize import brentq
from scipy.special import jv

from .center_bundle import SystemParams, _poly
from .perturbation import COS, ONE, SIN, PerturbationSpec, TrigPoly, TrigTerm, check_z4_symmetry
from .se2 import TWO_PI, J, apply_J


class ResonanceError(ValueError):
    def __init__(self, message, mode=None):
        self.mode = mode
        super().__init__(message)


class DegenerateError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


def wrap_centered(d):
    """Map differences on the torus into [-pi, pi)."""
    return np.mod(np.asarray(d) + np.pi, TWO_PI) - np.pi


# ------------------------------------------------------------ averaged field

@dataclass
class AveragedField:
    """Planar field on T^2 (trig form) or on R^2 (callable form)."""

    g1: TrigPoly | None = None
    g2: TrigPoly | None = None
    func: Callable | None = None
    quadrature_order: int = 256
    periodic: bool = True

    def __post_init__(self):
        if self.func is None and (self.g1 is None or self.g2 is None):
            raise ValueError("AveragedField needs trig components or a callable")
        if self.func is None:
            self._enc = (*self.g1.encode(), *self.g2.encode())

    @classmethod
    def from_callable(cls, func, periodic: bool = False) -> AveragedField:
        return cls(func=func, periodic=periodic)

    @property
    def is_trig(self) -> bool:
        return self.func is None

    def is_degenerate(self) -> bool:
        return self.is_trig and not self.g1 and not self.g2

    def __call__(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        if not self.is_trig:
            return np.asarray(self.func(psi), dtype=float)
        a, b = psi[..., 0], psi[..., 1]
        return np.stack([self.g1(a, b, 0.0), self.g2(a, b, 0.0)], axis=-1)

    def jacobian(self, psi) -> np.ndarray:
        """D G at psi, shape (..., 2, 2); exact for the trig form, central differences (h=1e-6) otherwise."""
        psi = np.asarray(psi, dtype=float)
        if self.is_trig:
            a, b = psi[..., 0], psi[..., 1]
            d11, d12 = self.g1.gradient_psi()
            d21, d22 = self.g2.gradient_psi()
            rows = [[d11(a, b, 0.0), d12(a, b, 0.0)], [d21(a, b, 0.0), d22(a, b, 0.0)]]
            return np.moveaxis(np.array(rows), (0, 1), (-2, -1))
        h = 1e-6
        cols = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            cols.append((self(psi + e) - self(psi - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def divergence(self, psi) -> np.ndarray:
        jac = self.jacobian(psi)
        return jac[..., 0, 0] + jac[..., 1, 1]

    def equivariance_defect(self, psi) -> np.ndarray:
        """|G(J psi) - J G(psi)| per point."""
        psi = np.asarray(psi, dtype=float)
        return np.linalg.norm(self(apply_J(psi)) - apply_J(self(psi)), axis=-1)

    def to_dict(self) -> dict:
        if not self.is_trig:
            return {"form": "callable"}
        return {"form": "trig", "g1": self.g1.to_text(), "g2": self.g2.to_text()}


# Fourier coefficients of each factor kind, as {harmonic: complex coeff}
def _factor_coeffs(kind: str) -> dict:
    if kind == ONE:
        return {0: 1.0 + 0j}
    if kind == COS:
        return {1: 0.5 + 0j, -1: 0.5 + 0j}
    return {1: -0.5j, -1: 0.5j}


def _term_harmonic(term: TrigTerm, W: np.ndarray, rho: int) -> dict:
    """phi-mean of exp(i rho phi) * term(Psi + J R_phi W, phi) as {tau: coeff of exp(i tau n.Psi)}."""
    n = np.array(term.n, dtype=float)
    amp = float(np.hypot(*n) * np.hypot(*W))
    delta = math.atan2(W[1], W[0]) - math.atan2(n[1], n[0]) if amp > 0 else 0.0
    out: dict = {}
    for sigma, p in _factor_coeffs(term.phi_kind).items():
        for tau, q in _factor_coeffs(term.psi_kind).items():
            k = -rho - sigma * term.m
            if tau == 0 or amp == 0.0:
                bessel = 1.0 if k == 0 else 0.0
            else:
                # J_k(tau*A) with tau = +-1
                bessel = (tau ** k) * jv(k, amp)
            if bessel == 0.0:
                continue
            out[tau] = out.get(tau, 0.0) + term.coeff * p * q * bessel * np.exp(1j * k * delta)
    return out


def _mean_rotated(h1: TrigPoly, h2: TrigPoly, W) -> tuple[TrigPoly, TrigPoly]:
    """Analytic phi-mean of R_phi H(Psi + J R_phi W, phi)."""
    W = np.asarray(W, dtype=float)
    acc = ({}, {})  # per output component: {n: complex coeff of exp(i n.Psi)}

    def add(comp, n, tau, val):
        key = n if tau != 0 else (0, 0)
        if tau == -1:
            return  # conjugate of tau = +1, implied
        acc[comp][key] = acc[comp].get(key, 0.0) + val

    for src, poly in ((0, h1), (1, h2)):
        for term in poly.terms:
            hp = _term_harmonic(term, W, 1)
            hm = _term_harmonic(term, W, -1)
            for tau in set(hp) | set(hm):
                a, b = hp.get(tau, 0.0), hm.get(tau, 0.0)
                mcos = (a + b) / 2
                msin = (a - b) / 2j
                if src == 0:  # first column of R_phi: (cos, sin)
                    add(0, term.n, tau, mcos)
                    add(1, term.n, tau, msin)
                else:  # second column: (-sin, cos)
                    add(0, term.n, tau, -msin)
                    add(1, term.n, tau, mcos)

    polys = []
    for comp in acc:
        terms = []
        scale = max((abs(v) for v in comp.values()), default=0.0)
        for n, c in comp.items():
            if n == (0, 0):
                terms.append(TrigTerm(ONE, 0, ONE, (0, 0), float(c.real)))
            else:
                terms.append(TrigTerm(ONE, 0, COS, n, float(2 * c.real)))
                terms.append(TrigTerm(ONE, 0, SIN, n, float(-2 * c.imag)))
        # drop roundoff-level coefficients
        terms = [t for t in terms if abs(t.coeff) > 1e-15 * max(scale, 1e-300)]
        polys.append(TrigPoly(tuple(terms)))
    return polys[0], polys[1]


def rescaled_perturbation(spec: PerturbationSpec, V, omega: float) -> tuple[TrigPoly, TrigPoly]:
    """First-order H in dPsi/dphi = R_phi (W + eps H): H = (F^Psi - W F^phi) / omega."""
    if omega <= 0:
        raise ValueError("rotating-wave averaging needs omega > 0; use the travelling-wave path")
    W = np.asarray(V, dtype=float) / omega
    h1 = (spec.f_psi_1 - spec.f_phi.scaled(W[0])).scaled(1.0 / omega)
    h2 = (spec.f_psi_2 - spec.f_phi.scaled(W[1])).scaled(1.0 / omega)
    return h1, h2


def average_corotating(h1: TrigPoly, h2: TrigPoly, W=(0.0, 0.0)) -> AveragedField:
    """Averaged field of dPsi/dphi = eps R_phi H(Psi + J R_phi W, phi)."""
    g1, g2 = _mean_rotated(h1, h2, W)
    return AveragedField(g1, g2)


def average_over_phi(spec: PerturbationSpec, V, omega: float) -> AveragedField:
    h1, h2 = rescaled_perturbation(spec, V, omega)
    return average_corotating(h1, h2, np.asarray(V, dtype=float) / omega)


def quadrature_average(h1: TrigPoly, h2: TrigPoly, W=(0.0, 0.0), order: int = 256) -> AveragedField:
    """Same average by the trapezoid rule in phi (independent of the Bessel expansion)."""
    W = np.asarray(W, dtype=float)
    phis = TWO_PI * np.arange(order) / order
    JW = J @ W
    c, s = np.cos(phis), np.sin(phis)
    shift = np.stack([c * JW[0] - s * JW[1], s * JW[0] + c * JW[1]], axis=-1)  # R_phi J W

    def func(psi):
        psi = np.asarray(psi, dtype=float)
        shape = psi.shape[:-1]
        flat = psi.reshape(-1, 2)
        a = flat[:, None, 0] + shift[None, :, 0]
        b = flat[:, None, 1] + shift[None, :, 1]
        v1 = h1(a, b, phis[None, :])
        v2 = h2(a, b, phis[None, :])
        out1 = np.mean(c * v1 - s * v2, axis=1)
        out2 = np.mean(s * v1 + c * v2, axis=1)
        return np.stack([out1, out2], axis=-1).reshape(*shape, 2)

    fld = AveragedField(func=func, quadrature_order=order, periodic=True)
    return fld


# ------------------------------------------------------------------ equilibria

@dataclass
class EquilibriumReport:
    psi_star: np.ndarray
    eigenvalues: np.ndarray
    stable: bool
    at_origin: bool
    j_fixed: bool
    conjugates: np.ndarray  # (4, 2): J^k psi_star

    @property
    def kind(self) -> str:
        re = self.eigenvalues.real
        if np.all(re < 0):
            return "sink"
        if np.all(re > 0):
            return "source"
        if np.any(re < 0) and np.any(re > 0):
            return "saddle"
        return "non-hyperbolic"

    def to_dict(self) -> dict:
        return {
            "psi_star": [float(x) for x in self.psi_star],
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "stable": bool(self.stable),
            "kind": self.kind,
            "at_origin": bool(self.at_origin),
            "j_fixed": bool(self.j_fixed),
        }


def _newton(field: AveragedField, x0, tol=1e-12, max_iter=60):
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        f = field(x)
        jac = field.jacobian(x)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return None
        # damp wild steps
        norm = np.linalg.norm(step)
        if norm > 1.0:
            step *= 1.0 / norm
        x = x + step
        if norm < tol and np.linalg.norm(field(x)) < 1e-10:
            return x
    if np.linalg.norm(field(x)) < 1e-12:
        return x
    return None


def _dist(field: AveragedField, a, b) -> float:
    d = np.asarray(a) - np.asarray(b)
    if field.periodic:
        d = wrap_centered(d)
    return float(np.linalg.norm(d))


def _canon_point(field: AveragedField, x) -> np.ndarray:
    if not field.periodic:
        return np.asarray(x, dtype=float)
    y = np.mod(x, TWO_PI)
    y[np.abs(y - TWO_PI) < 1e-9] = 0.0
    return y


def find_equilibria(field: AveragedField, grid: int = 16, dedupe_tol: float = 1e-6, box=None) -> list[EquilibriumReport]:
    """Newton from a grid x grid seed lattice; J-closed, sorted, classified."""
    if field.is_degenerate():
        warnings.warn("averaged field vanishes identically (degenerate); no isolated equilibria", RuntimeWarning)
        return []
    lo, hi = box if box is not None else ((0.0, TWO_PI) if field.periodic else (-np.pi, np.pi))
    ticks = lo + (hi - lo) * (np.arange(grid) + 0.5 * (not field.periodic)) / grid
    roots: list[np.ndarray] = []

    def known(x):
        return any(_dist(field, x, r) < dedupe_tol for r in roots)

    for s1 in ticks:
        for s2 in ticks:
            x = _newton(field, (s1, s2))
            if x is None:
                continue
            x = _canon_point(field, x)
            if known(x):
                continue
            # close under J
            img = x
            for _ in range(4):
                if not known(img):
                    roots.append(img)
                img = _canon_point(field, apply_J(img))
    if not roots:
        warnings.warn("Newton did not converge from any seed", RuntimeWarning)
        return []
    roots.sort(key=lambda r: (round(r[0], 9), round(r[1], 9)))
    reports = []
    for r in roots:
        # polish after canonicalization
        ev = np.linalg.eigvals(field.jacobian(r))
        ev = ev[np.lexsort((ev.imag, ev.real))]
        conj = [r]
        for _ in range(3):
            conj.append(_canon_point(field, apply_J(conj[-1])))
        reports.append(
            EquilibriumReport(
                psi_star=r,
                eigenvalues=ev,
                stable=bool(np.all(ev.real < 0)),
                at_origin=_dist(field, r, (0.0, 0.0)) < 1e-8,
                j_fixed=_dist(field, apply_J(r), r) < 1e-8,
                conjugates=np.array(conj),
            )
        )
    return reports


# ------------------------------------------------------------ periodic orbits

@njit(cache=True)
def _planar_rhs(y, out, c1, i1, c2, i2, sign):
    out[0] = sign * _poly(c1, i1, y[0], y[1], 0.0)
    out[1] = sign * _poly(c2, i2, y[0], y[1], 0.0)


@njit(cache=True)
def _planar_rk4(y0, h, nsteps, c1, i1, c2, i2, sign, out):
    y = y0.copy()
    k1 = np.empty(2)
    k2 = np.empty(2)
    k3 = np.empty(2)
    k4 = np.empty(2)
    tmp = np.empty(2)
    out[0, :] = y
    for step in range(1, nsteps + 1):
        _planar_rhs(y, k1, c1, i1, c2, i2, sign)
        for j in range(2):
            tmp[j] = y[j] + 0.5 * h * k1[j]
        _planar_rhs(tmp, k2, c1, i1, c2, i2, sign)
        for j in range(2):
            tmp[j] = y[j] + 0.5 * h * k2[j]
        _planar_rhs(tmp, k3, c1, i1, c2, i2, sign)
        for j in range(2):
            tmp[j] = y[j] + h * k3[j]
        _planar_rhs(tmp, k4, c1, i1, c2, i2, sign)
        for j in range(2):
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        out[step, :] = y


def planar_flow(field: AveragedField, y0, h: float, nsteps: int, direction: int = 1) -> np.ndarray:
    """RK4 path of dPsi/dt = direction * G(Psi); returns (nsteps + 1, 2) unwrapped states."""
    out = np.empty((nsteps + 1, 2))
    y0 = np.asarray(y0, dtype=float)
    if field.is_trig:
        _planar_rk4(y0, h, nsteps, *field._enc, float(direction), out)
        return out
    y = y0.copy()
    out[0] = y
    f = lambda z: direction * field(z)  # noqa: E731
    for k in range(1, nsteps + 1):
        a = f(y)
        b = f(y + 0.5 * h * a)
        c = f(y + 0.5 * h * b)
        d = f(y + h * c)
        y = y + h / 6.0 * (a + 2 * b + 2 * c + d)
        out[k] = y
    return out


@dataclass
class PeriodicOrbitReport:
    samples: np.ndarray  # (M+1, 2), closed: last equals first up to integration error
    period: float
    beta: float
    stable: bool
    st_symmetric: str  # "+", "-" or "none"
    winding: tuple = (0, 0)
    return_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "period": float(self.period),
            "beta": float(self.beta),
            "stable": bool(self.stable),
            "st_symmetric": self.st_symmetric,
            "winding": list(self.winding),
            "center": [float(x) for x in self.samples[:-1].mean(axis=0)],
        }


def _refine_crossing(field, y_prev, t_prev, h, p0, normal, direction):
    """Secant on a single RK4 sub-step to land on the section exactly."""

    def g(s):
        if s == 0.0:
            y = y_prev
        else:
            y = planar_flow(field, y_prev, s, 1, direction)[-1]
        d = y - p0
        if field.periodic:
            d = wrap_centered(d)
        return float(d @ normal), y

    a, b = 0.0, h
    ga, _ = g(a)
    gb, _ = g(b)
    for _ in range(60):
        if gb == ga:
            break
        c = b - gb * (b - a) / (gb - ga)
        c = min(max(c, 0.0), h)
        a, ga = b, gb
        b = c
        gb, _ = g(b)
        if abs(gb) < 1e-14:
            break
    _, y = g(b)
    return t_prev + b, y


def find_periodic_orbit(
    field: AveragedField,
    seed,
    direction: int = 1,
    dt: float = 0.01,
    transient: float = 200.0,
    max_time: float = 2000.0,
    return_tol: float = 1e-8,
    n_samples: int = 2048,
    sym_tol: float = 1e-6,
) -> PeriodicOrbitReport | None:
    """Locate a limit cycle reached from ``seed`` (forward flow, or backward for direction=-1).

    Returns None when the flow settles on an equilibrium or no stable
    return is found within ``max_time``.
    """
    seed = np.asarray(seed, dtype=float)
    speed_floor = 1e-9
    # transient
    n_tr = int(math.ceil(transient / dt))
    path = planar_flow(field, seed, dt, n_tr, direction)
    y = path[-1]
    if np.linalg.norm(field(y)) < speed_floor:
        return None
    t = 0.0
    p0 = y.copy()
    returns = []  # (time, point)
    chunk = 2000
    leave_dist = 0.0
    t_budget = max_time
    while t < t_budget:
        v = field(p0) * direction
        vn = np.linalg.norm(v)
        if vn < speed_floor:
            return None
        normal = v / vn
        seg = planar_flow(field, y, dt, chunk, direction)
        d = seg - p0
        if field.periodic:
            d = wrap_centered(d)
        dist = np.linalg.norm(d, axis=1)
        proj = d @ normal
        found = None
        for k in range(1, len(seg)):
            leave_dist = max(leave_dist, dist[k])
            if proj[k - 1] < 0 <= proj[k] and dist[k] < 0.3 * leave_dist:
                found = k
                break
        if found is None:
            y = seg[-1]
            t += chunk * dt
            if np.linalg.norm(field(y)) < speed_floor:
                return None
            continue
        tc, q = _refine_crossing(field, seg[found - 1], t + (found - 1) * dt, dt, p0, normal, direction)
        returns.append((tc, q))
        if len(returns) >= 2:
            (t0, q0), (t1, q1) = returns[-2], returns[-1]
            if _dist(field, q0, q1) < return_tol:
                return _orbit_report(field, q1, t1 - t0, direction, n_samples, sym_tol)
        # restart the section at the new return point
        p0 = _canon_point(field, q) if field.periodic else q
        y = p0.copy()
        t = tc
        leave_dist = 0.0
        if len(returns) > 3 and len(returns) % 2 == 0:
            # rebase time bookkeeping for the next pair
            pass
    return None


def _orbit_report(field, q, period, direction, n_samples, sym_tol) -> PeriodicOrbitReport:
    h = period / n_samples
    samples = planar_flow(field, q, h, n_samples, direction)
    div = field.divergence(samples[:-1]) * direction
    beta = float(np.mean(div))  # trapezoid on a closed periodic loop
    lift = samples[-1] - samples[0]
    winding = tuple(int(round(x / TWO_PI)) for x in lift) if field.periodic else (0, 0)
    ret_err = _dist(field, samples[-1], samples[0])
    # spatio-temporal test: Psi(s + T/4) = -J Psi(s) ("+") or J Psi(s) ("-")
    quarter = n_samples // 4
    if n_samples % 4 == 0:
        idx = np.arange(0, n_samples, max(1, n_samples // 16))
        later = samples[(idx + quarter) % n_samples]
        now = samples[idx]
        res_plus = max(_dist(field, a, -apply_J(b)) for a, b in zip(later, now))
        res_minus = max(_dist(field, a, apply_J(b)) for a, b in zip(later, now))
        if res_plus < sym_tol:
            sym = "+"
        elif res_minus < sym_tol:
            sym = "-"
        else:
            sym = "none"
    else:
        sym = "none"
    period_fwd = period
    return PeriodicOrbitReport(samples, period_fwd, beta, beta < 0, sym, winding, ret_err)


def search_periodic_orbits(field: AveragedField, grid: int = 6, equilibria=None, **kw) -> list[PeriodicOrbitReport]:
    """Forward and backward searches from a seed grid; orbits deduplicated by period and centroid."""
    if equilibria is None:
        equilibria = find_equilibria(field)
    lo, hi = (0.0, TWO_PI) if field.periodic else (-np.pi, np.pi)
    ticks = lo + (hi - lo) * (np.arange(grid) + 0.5) / grid
    found: list[PeriodicOrbitReport] = []
    for direction in (1, -1):
        for s1 in ticks:
            for s2 in ticks:
                seed = np.array([s1, s2])
                if any(_dist(field, seed, e.psi_star) < 1e-3 for e in equilibria):
                    continue
                orb = find_periodic_orbit(field, seed, direction=direction, **kw)
                if orb is None:
                    continue
                if direction == -1:
                    # backward-found cycles are repelling in forward time
                    orb = PeriodicOrbitReport(orb.samples[::-1].copy(), orb.period, -orb.beta, False,
                                              orb.st_symmetric, orb.winding, orb.return_error)
                if not any(_same_orbit(field, orb, o) for o in found):
                    found.append(orb)
    found.sort(key=lambda o: (o.period, tuple(np.round(o.samples[:-1].mean(axis=0), 6))))
    return found


def _same_orbit(field, a: PeriodicOrbitReport, b: PeriodicOrbitReport) -> bool:
    if abs(a.period - b.period) > 1e-4 * max(a.period, 1.0):
        return False
    # every point of a lies near the loop b
    pts = a.samples[:: max(1, len(a.samples) // 32)]
    d = [min(_dist(field, p, q) for q in b.samples[:: max(1, len(b.samples) // 512)]) for p in pts]
    return max(d) < 1e-2


# ------------------------------------------------------------ travelling waves

def compute_M(spec: PerturbationSpec) -> TrigPoly:
    """Torus average of F^phi: only terms without a psi factor survive."""
    return TrigPoly(tuple(t for t in spec.f_phi.terms if t.psi_kind == ONE))


def compute_M_quadrature(spec: PerturbationSpec, phi, n: int = 64) -> np.ndarray:
    g = TWO_PI * np.arange(n) / n
    a, b = np.meshgrid(g, g, indexing="ij")
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    return np.array([spec.f_phi(a, b, p).mean() for p in phi])


@dataclass
class MZero:
    phi_star: float
    mu: float
    transverse: bool

    @property
    def stable(self) -> bool:
        return self.transverse and self.mu < 0


def _m_eval(M: TrigPoly, phi):
    return M(0.0, 0.0, phi)


def find_M_zeros(M: TrigPoly, n_samples: int = 1024, offset: float = 0.0) -> list[MZero]:
    """Zeros of M(phi) + offset on [0, 2 pi) with slopes; tangencies are flagged non-transverse."""
    if not M and offset == 0.0:
        raise DegenerateError("M vanishes identically; the travelling-wave analysis is degenerate")
    dM = M.derivative_phi()
    d2M = dM.derivative_phi()
    f = lambda p: float(_m_eval(M, p)) + offset  # noqa: E731
    fp = lambda p: float(_m_eval(dM, p))  # noqa: E731
    grid = TWO_PI * np.arange(n_samples + 1) / n_samples
    vals = _m_eval(M, grid) + offset
    scale = max(M.abs_bound(), abs(offset), 1e-300)
    zeros: list[MZero] = []

    def polish(x):
        for _ in range(8):
            d = fp(x)
            if d == 0:
                break
            x = x - f(x) / d
        return x

    for i in range(n_samples):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            x = a
        elif fa * fb < 0:
            x = polish(brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
        else:
            continue
        if any(abs(wrap_centered(x - z.phi_star)) < 1e-9 for z in zeros):
            continue  # same zero seen from both sides of the seam
        mu = fp(x)
        zeros.append(MZero(float(x % TWO_PI), float(mu), abs(mu) >= 1e-8))
    # f(0) and f(2 pi) differ only by roundoff; opposite signs put a zero on the seam
    if np.sign(vals[0]) != np.sign(vals[-1]) and not any(abs(wrap_centered(z.phi_star)) < 1e-9 for z in zeros):
        x = polish(0.0)
        mu = fp(x)
        zeros.append(MZero(float(x % TWO_PI), float(mu), abs(mu) >= 1e-8))
    # tangential zeros: local minima of |M| that touch zero without a sign change
    absv = np.abs(vals[:-1])
    for i in range(n_samples):
        l, r = absv[i - 1], absv[(i + 1) % n_samples]
        if not (absv[i] <= l and absv[i] <= r) or absv[i] > 1e-2 * scale:
            continue
        a, b = grid[i] - TWO_PI / n_samples, grid[i] + TWO_PI / n_samples
        if np.sign(fp(a)) * np.sign(fp(b)) >= 0:
            continue
        c = brentq(fp, a, b, xtol=1e-15)
        for _ in range(8):
            dd = float(_m_eval(d2M, c))
            if dd == 0:
                break
            c -= fp(c) / dd
        if abs(f(c)) < 1e-10 * scale and not any(abs(wrap_centered(c - z.phi_star)) < 1e-6 for z in zeros):
            zeros.append(MZero(float(c % TWO_PI), float(fp(c)), False))
    zeros.sort(key=lambda z: z.phi_star)
    return zeros


def z4_mode_closure(modes) -> set:
    out = set()
    for n in modes:
        cur = tuple(n)
        for _ in range(4):
            out.add(cur)
            out.add((-cur[0], -cur[1]))
            cur = (cur[1], -cur[0])
    out.discard((0, 0))
    return out


def resonance_check(V, phi_star: float, spec: PerturbationSpec, tol: float = 1e-9) -> dict:
    """Smallest |n1 alpha + n2 beta| over the spec's psi modes, (alpha, beta) = R_phi* V."""
    from .se2 import rotation

    alpha_beta = rotation(phi_star) @ np.asarray(V, dtype=float)
    modes = sorted(m for m in z4_mode_closure(spec.psi_modes()) if m > (0, 0) or (m[0] == 0 and m[1] > 0))
    margin, worst = math.inf, None
    for n in modes:
        val = abs(n[0] * alpha_beta[0] + n[1] * alpha_beta[1])
        if val < margin:
            margin, worst = val, n
    if margin < tol:
        raise ResonanceError(f"resonant mode {worst}: |n.(alpha, beta)| = {margin:.3e}", worst)
    return {"margin": float(margin), "worst_mode": worst, "alpha_beta": alpha_beta}


def solve_cohomological(poly: TrigPoly, w, tol: float = 1e-9) -> TrigPoly:
    """Zero-mean Y with DY . w = poly for a phi-free, zero-mean trig polynomial."""
    w = np.asarray(w, dtype=float)
    out = []
    for t in poly.terms:
        if t.phi_kind != ONE:
            raise PreconditionError("input must not depend on phi")
        if t.psi_kind == ONE:
            raise PreconditionError(f"input has nonzero mean {t.coeff}")
        nw = t.n[0] * w[0] + t.n[1] * w[1]
        if abs(nw) < tol:
            raise ResonanceError(f"resonant mode {t.n}: n.w = {nw:.3e}", t.n)
        if t.psi_kind == COS:
            out.append(TrigTerm(ONE, 0, SIN, t.n, t.coeff / nw))
        else:
            out.append(TrigTerm(ONE, 0, COS, t.n, -t.coeff / nw))
    return TrigPoly(tuple(out))


def directional_derivative(poly: TrigPoly, w) -> TrigPoly:
    g1, g2 = poly.gradient_psi()
    return g1.scaled(float(w[0])) + g2.scaled(float(w[1]))


# ------------------------------------------------------------------ predict

@dataclass
class Prediction:
    mode: str  # "rotating" | "travelling" | "none"
    reason: str = ""
    anchors: list = field(default_factory=list)
    meander_orbits: list = field(default_factory=list)
    travelling: list = field(default_factory=list)
    field: AveragedField | None = None
    guard_ratio: float | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "reason": self.reason,
            "guard_ratio": self.guard_ratio,
            "anchors": self.anchors,
            "meander_orbits": self.meander_orbits,
            "travelling": self.travelling,
        }


ROTATING_GUARD = 0.5


def predict(params: SystemParams, search_orbits: bool = True, orbit_grid: int = 4) -> Prediction:
    """Anchored/meander/travelling-wave prediction from first-order averaging."""
    if not check_z4_symmetry(params.spec).passes:
        raise PreconditionError("perturbation is not Z4-symmetric")
    eps, omega = params.epsilon, params.omega
    if eps == 0:
        return Prediction("none", "Euclidean case (eps = 0): continuum of centers, no selection")
    bound = params.spec.f_phi.abs_bound() * eps
    ratio = bound / omega if omega > 0 else math.inf

    if omega > 0 and ratio < ROTATING_GUARD:
        fld = average_over_phi(params.spec, params.V, omega)
        if fld.is_degenerate():
            return Prediction("none", "averaged field vanishes identically", field=fld, guard_ratio=ratio)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            eqs = find_equilibria(fld)
        anchors = []
        for e in eqs:
            d = e.to_dict()
            d["st_symmetric"] = bool(e.j_fixed)
            d["unit_lattice"] = [float(x / TWO_PI) for x in e.psi_star]
            anchors.append(d)
        orbits = []
        if search_orbits:
            for o in search_periodic_orbits(fld, grid=orbit_grid, equilibria=eqs, transient=100.0, max_time=500.0):
                orbits.append(o.to_dict())
        return Prediction("rotating", "rotating-wave averaging", anchors, orbits, [], fld, ratio)

    M = compute_M(params.spec)
    m_amp = M.abs_bound() * eps
    if omega == 0 or (m_amp > 0 and omega <= ROTATING_GUARD * m_amp):
        if not M:
            return Prediction("none", "M vanishes identically: degenerate travelling-wave case", guard_ratio=ratio)
        trav = []
        for z in find_M_zeros(M, offset=omega / eps):
            rec = {"phi_star": z.phi_star, "mu": z.mu, "stable": z.stable, "transverse": z.transverse}
            try:
                rc = resonance_check(params.V, z.phi_star, params.spec)
                rec["resonance_margin"] = rc["margin"]
                rec["alpha_beta"] = [float(x) for x in rc["alpha_beta"]]
                rec["worst_mode"] = list(rc["worst_mode"]) if rc["worst_mode"] else None
            except ResonanceError as err:
                rec["resonance_margin"] = 0.0
                rec["worst_mode"] = list(err.mode)
                rec["resonant"] = True
            trav.append(rec)
        return Prediction("travelling", "travelling-wave tori from zeros of M", travelling=trav, guard_ratio=ratio)

    return Prediction(
        "none",
        "region-R boundary: omega comparable to eps*max|F^phi|, no first-order prediction",
        guard_ratio=ratio,
    )
