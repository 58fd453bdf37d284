"""ODE system on the center bundle T^3 and its diagnostics.

    dPsi/dt = R_phi (V + eps F^Psi(Psi, phi))
    dphi/dt = omega + eps F^phi(Psi, phi)

Integration is classical fixed-step RK4, compiled with numba.  Trajectories
store unwrapped lifts; wrapped coordinates are derived on demand.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .perturbation import PerturbationSpec, check_z4_symmetry, evaluate
from .se2 import TWO_PI, J, apply_J, rotation


class IntegrationError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    V: np.ndarray = field(default_factory=lambda: np.zeros(2))
    omega: float = 0.0
    epsilon: float = 0.0
    spec: PerturbationSpec = field(default_factory=PerturbationSpec)

    def __post_init__(self):
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float).reshape(2).copy())
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")

    @property
    def W(self) -> np.ndarray:
        """Drift after rescaling time by omega."""
        if self.omega <= 0:
            raise ValueError("rescaled drift W = V/omega needs omega > 0")
        return self.V / self.omega

    def phi_rate_bound(self) -> float:
        return self.epsilon * self.spec.f_phi.abs_bound()

    def replace(self, **kw) -> SystemParams:
        d = dict(V=self.V, omega=self.omega, epsilon=self.epsilon, spec=self.spec)
        d.update(kw)
        return SystemParams(**d)


@dataclass
class TorusState:
    psi: np.ndarray
    phi: float

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float).reshape(2).copy()
        self.phi = float(self.phi)

    def wrapped(self) -> TorusState:
        return TorusState(np.mod(self.psi, TWO_PI), math.fmod(self.phi, TWO_PI) % TWO_PI)

    def as_array(self) -> np.ndarray:
        return np.array([self.psi[0], self.psi[1], self.phi])


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (N, 3) unwrapped (psi1, psi2, phi)
    dt: float
    sample_every: int = 1
    rescaled: bool = False

    def __len__(self):
        return len(self.times)

    @property
    def psi(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def phi(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def wrapped(self) -> np.ndarray:
        return np.mod(self.states, TWO_PI)

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)


CSV_HEADER = ["t", "psi1", "psi2", "phi", "psi1_wrapped", "psi2_wrapped", "phi_wrapped"]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    w = traj.wrapped
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, s, sw in zip(traj.times, traj.states, w):
            writer.writerow([f"{v:.17g}" for v in (t, *s, *sw)])


def read_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = data[:, 0]
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    return Trajectory(times, data[:, 1:4].copy(), dt)


# ----------------------------------------------------------------- kernels

@njit(cache=True)
def _poly(coeff, ints, a, b, p):
    s = 0.0
    for k in range(coeff.shape[0]):
        v = coeff[k]
        pk = ints[k, 0]
        if pk == 1:
            v *= math.sin(ints[k, 1] * p)
        elif pk == 2:
            v *= math.cos(ints[k, 1] * p)
        qk = ints[k, 2]
        if qk != 0:
            x = ints[k, 3] * a + ints[k, 4] * b
            if qk == 1:
                v *= math.sin(x)
            else:
                v *= math.cos(x)
        s += v
    return s


@njit(cache=True)
def _rhs(y, out, V0, V1, omega, eps, c1, i1, c2, i2, c3, i3, rescaled):
    a, b, p = y[0], y[1], y[2]
    g1 = V0 + eps * _poly(c1, i1, a, b, p)
    g2 = V1 + eps * _poly(c2, i2, a, b, p)
    cp, sp = math.cos(p), math.sin(p)
    dphi = omega + eps * _poly(c3, i3, a, b, p)
    scale = 1.0
    if rescaled:
        scale = 1.0 / dphi
        dphi = 1.0
    out[0] = (cp * g1 - sp * g2) * scale
    out[1] = (sp * g1 + cp * g2) * scale
    out[2] = dphi


@njit(cache=True)
def _rk4(y0, dt, nsteps, sample_every, V0, V1, omega, eps, c1, i1, c2, i2, c3, i3, rescaled, out):
    y = y0.copy()
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    tmp = np.empty(3)
    row = 0
    out[0, :] = y
    for step in range(1, nsteps + 1):
        _rhs(y, k1, V0, V1, omega, eps, c1, i1, c2, i2, c3, i3, rescaled)
        for j in range(3):
            tmp[j] = y[j] + 0.5 * dt * k1[j]
        _rhs(tmp, k2, V0, V1, omega, eps, c1, i1, c2, i2, c3, i3, rescaled)
        for j in range(3):
            tmp[j] = y[j] + 0.5 * dt * k2[j]
        _rhs(tmp, k3, V0, V1, omega, eps, c1, i1, c2, i2, c3, i3, rescaled)
        for j in range(3):
            tmp[j] = y[j] + dt * k3[j]
        _rhs(tmp, k4, V0, V1, omega, eps, c1, i1, c2, i2, c3, i3, rescaled)
        for j in range(3):
            y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        if not (math.isfinite(y[0]) and math.isfinite(y[1]) and math.isfinite(y[2])):
            return step
        if step % sample_every == 0:
            row += 1
            out[row, :] = y
    return -1


def _encoded(params: SystemParams):
    (c1, i1), (c2, i2), (c3, i3) = (comp.encode() for comp in params.spec.components)
    return c1, i1, c2, i2, c3, i3


def check_rescaling(params: SystemParams) -> None:
    if params.omega <= 0:
        raise ValueError("time rescaling needs omega > 0")
    if not params.phi_rate_bound() < params.omega / 2:
        raise ValueError(
            f"time rescaling needs eps*max|F^phi| < omega/2 "
            f"({params.phi_rate_bound():.4g} >= {params.omega / 2:.4g})"
        )


def vector_field(params: SystemParams, state: TorusState | np.ndarray, rescaled: bool = False):
    """Return (dpsi, dphi) at one state."""
    y = state.as_array() if isinstance(state, TorusState) else np.asarray(state, dtype=float)
    out = np.empty(3)
    _rhs(y, out, params.V[0], params.V[1], params.omega, params.epsilon, *_encoded(params), rescaled)
    return out[:2].copy(), float(out[2])


def integrate(
    params: SystemParams,
    initial: TorusState,
    dt: float = 1e-3,
    t_end: float = 1.0,
    sample_every: int = 1,
    rescaled: bool = False,
) -> Trajectory:
    """Fixed-step RK4 from ``initial`` to ``t_end``.

    The step is shrunk to ``t_end / ceil(t_end / dt)`` so the last sample
    lands exactly on ``t_end``.  With ``rescaled=True`` the independent
    variable is phi itself (dphi/ds = 1).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_end >= dt:
        raise ValueError("t_end must be at least dt")
    if rescaled:
        check_rescaling(params)
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    h = t_end / nsteps
    sample_every = max(1, int(sample_every))
    nrows = nsteps // sample_every + 1
    out = np.empty((nrows, 3))
    y0 = initial.as_array() if isinstance(initial, TorusState) else np.asarray(initial, dtype=float)
    bad = _rk4(
        y0, h, nsteps, sample_every,
        params.V[0], params.V[1], params.omega, params.epsilon,
        *_encoded(params), rescaled, out,
    )
    if bad >= 0:
        raise IntegrationError(f"non-finite state at step {bad} (t = {bad * h:.6g})")
    times = np.arange(nrows) * (h * sample_every)
    return Trajectory(times, out, h, sample_every, rescaled)


def closed_form_unperturbed(V, omega: float, initial: TorusState, t) -> np.ndarray:
    """Exact eps = 0 solution, unwrapped (N, 3)."""
    t = np.asarray(t, dtype=float)
    V = np.asarray(V, dtype=float)
    psi0, phi0 = initial.psi, initial.phi
    if omega == 0:
        psi = psi0 + np.outer(t, rotation(phi0) @ V)
        phi = np.full_like(t, phi0)
    else:
        phi = phi0 + omega * t
        JV = J @ V
        c, s = np.cos(phi), np.sin(phi)
        rot = np.stack([c * JV[0] - s * JV[1], s * JV[0] + c * JV[1]], axis=-1)
        psi = psi0 + (rot - rotation(phi0) @ JV) / omega
    return np.column_stack([psi, phi])


def to_corotating_frame(params: SystemParams, trajectory: Trajectory) -> Trajectory:
    """Psi~ = Psi - J R_phi W, the frame where eps = 0 solutions are fixed points."""
    W = params.W
    JW = J @ W
    phi = trajectory.phi
    c, s = np.cos(phi), np.sin(phi)
    shift = np.stack([c * JW[0] - s * JW[1], s * JW[0] + c * JW[1]], axis=-1)
    states = trajectory.states.copy()
    states[:, :2] -= shift
    return Trajectory(trajectory.times.copy(), states, trajectory.dt, trajectory.sample_every, trajectory.rescaled)


def torus_distance(a, b) -> np.ndarray:
    """Euclidean distance on the flat torus, over the last axis."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi
    return np.sqrt(np.sum(d * d, axis=-1))


def conjugate_states(states: np.ndarray) -> np.ndarray:
    """(Psi, phi) -> (J Psi, phi - pi/2)."""
    out = np.empty_like(states)
    out[:, :2] = apply_J(states[:, :2])
    out[:, 2] = states[:, 2] - np.pi / 2
    return out


def conjugacy_residual(params: SystemParams, trajectory: Trajectory, require_symmetric: bool = True) -> float:
    """Max torus distance between the integrated conjugate run and the conjugated trajectory."""
    if require_symmetric and not check_z4_symmetry(params.spec).passes:
        raise ValueError("spec is not Z4-symmetric; pass require_symmetric=False for a negative control")
    image = conjugate_states(trajectory.states)
    t_end = float(trajectory.times[-1])
    nsteps = int(round(t_end / trajectory.dt))
    other = integrate(
        params, TorusState(image[0, :2], image[0, 2]), dt=t_end / nsteps, t_end=t_end,
        sample_every=trajectory.sample_every, rescaled=trajectory.rescaled,
    )
    return float(np.max(torus_distance(other.states, image)))


@dataclass
class SurfaceDiagnostic:
    phi_mean: float
    phi_maxdev: float
    phi_std: float
    samples: np.ndarray  # (N, 3) wrapped (psi1, psi2, phi)

    def to_dict(self) -> dict:
        return {"phi_mean": self.phi_mean, "phi_maxdev": self.phi_maxdev, "phi_std": self.phi_std,
                "n_samples": int(len(self.samples))}


def invariant_surface_diagnostic(trajectory: Trajectory, transient_fraction: float = 0.5) -> SurfaceDiagnostic:
    """Circular statistics of phi after a transient; samples trace the graph phi = T(Psi)."""
    if not 0 <= transient_fraction < 1:
        raise ValueError("transient_fraction must lie in [0, 1)")
    start = int(len(trajectory) * transient_fraction)
    tail = trajectory.states[start:]
    if len(tail) < 10:
        raise InsufficientDataError(f"only {len(tail)} post-transient samples, need 10")
    phi = tail[:, 2]
    z = np.exp(1j * phi)
    mean = float(np.angle(z.mean())) % TWO_PI
    dev = np.angle(z * np.exp(-1j * mean))
    return SurfaceDiagnostic(mean, float(np.max(np.abs(dev))), float(np.std(dev)), np.mod(tail, TWO_PI))


def evaluate_field_numpy(params: SystemParams, states: np.ndarray) -> np.ndarray:
    """Vectorized right-hand side for many states; used as an independent check of the kernel."""
    states = np.atleast_2d(states)
    fpsi, fphi = evaluate(params.spec, states[:, :2], states[:, 2])
    g = params.V + params.epsilon * fpsi
    c, s = np.cos(states[:, 2]), np.sin(states[:, 2])
    out = np.empty_like(states)
    out[:, 0] = c * g[:, 0] - s * g[:, 1]
    out[:, 1] = s * g[:, 0] + c * g[:, 1]
    out[:, 2] = params.omega + params.epsilon * fphi
    return out
