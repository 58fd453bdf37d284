"""FitzHugh-Nagumo reaction-diffusion on [-10 pi, 10 pi]^2 with a lattice-periodic source.

    u_t = lap u + (10/3)(u - u^3/3 - v) + eps g1
    v_t = (3/10)(u + 0.6 - 0.5 v) + eps g2

Explicit Euler, 5-point Laplacian, Neumann boundaries.  Arrays are indexed
``f[i, j]`` with row i along y and column j along x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from . import tips as tipmod

HALF_WIDTH = 10.0 * np.pi
DIVERGENCE_BOUND = 5.0


class DivergenceError(RuntimeError):
    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)


class SpawnError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n: int = 200
    half_width: float = HALF_WIDTH

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 50:
            raise ValueError(f"grid needs n >= 50 points per side, got {self.n}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def x(self) -> np.ndarray:
        """Cell centers; symmetric about 0 so that x[n-1-i] == -x[i] exactly."""
        return (np.arange(self.n) + 0.5 - self.n / 2) * self.dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="xy")

    def max_dt(self) -> float:
        return 0.9 * self.dx**2 / 4


@dataclass
class FieldPair:
    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def copy(self) -> FieldPair:
        return FieldPair(self.u.copy(), self.v.copy(), self.time)

    @property
    def n(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class InhomogeneityCoeffs:
    A1: float = 0.0
    B1: float = 0.0
    C1: float = 0.0
    A2: float = 0.0
    B2: float = 0.0
    C2: float = 0.0

    def as_tuple(self):
        return (self.A1, self.B1, self.C1, self.A2, self.B2, self.C2)

    def is_zero(self) -> bool:
        return not any(self.as_tuple())


PRESET_COEFFS = {
    "exp1": InhomogeneityCoeffs(0.028, 0.05, 0.06, -0.0044, -0.02, 0.01),
    "exp2": InhomogeneityCoeffs(0.016, 0.05, 0.0001, 0.006, -0.0001, 0.03),
    "exp3": InhomogeneityCoeffs(-0.016, -0.05, -0.0001, -0.012, 0.0001, -0.06),
}


def build_inhomogeneity(coeffs: InhomogeneityCoeffs, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    X, Y = grid.mesh()
    first = np.cos(0.5 * X) + np.cos(0.5 * Y)
    second = np.cos(0.5 * (3 * X - Y)) + np.cos(0.5 * (X + 3 * Y))
    g1 = coeffs.A1 + coeffs.B1 * first + coeffs.C1 * second
    g2 = coeffs.A2 + coeffs.B2 * first + coeffs.C2 * second
    return g1, g2


def rest_state() -> tuple[float, float]:
    """Homogeneous equilibrium: u^3 + 3u + 3.6 = 0, v = 2(u + 0.6)."""
    u = brentq(lambda s: s**3 + 3 * s + 3.6, -2.0, 0.0, xtol=1e-15)
    return u, 2.0 * (u + 0.6)


def rotate_field(f: np.ndarray, quarter_turns: int = 1) -> np.ndarray:
    """Field rotated counterclockwise about the origin: f'(x, y) = f(R^-1 (x, y))."""
    return np.ascontiguousarray(np.rot90(f, -quarter_turns))


# ----------------------------------------------------------------- kernel

@njit(cache=True)
def _advance(u, v, g1, g2, dt, inv_dx2, nsteps, bound):
    """nsteps explicit Euler steps in place; returns the index of a step that left the bound, or -1."""
    n = u.shape[0]
    un = np.empty_like(u)
    vn = np.empty_like(v)
    for s in range(nsteps):
        worst = 0.0
        for i in range(n):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < n - 1 else n - 1
            for j in range(n):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < n - 1 else n - 1
                a = u[i, j]
                b = v[i, j]
                # pair the x and y neighbours so a quarter turn only swaps operands
                lap = ((u[im, j] + u[ip, j]) + (u[i, jm] + u[i, jp]) - 4.0 * a) * inv_dx2
                na = a + dt * (lap + (10.0 / 3.0) * (a - a * a * a / 3.0 - b) + g1[i, j])
                nb = b + dt * (0.3 * (a + 0.6 - 0.5 * b) + g2[i, j])
                un[i, j] = na
                vn[i, j] = nb
                m = max(abs(na), abs(nb))
                if not m <= worst:  # also catches nan
                    worst = m
        u[:, :] = un
        v[:, :] = vn
        if not worst <= bound:
            return s
    return -1


@njit(cache=True)
def _laplacian(u, inv_dx2):
    n = u.shape[0]
    out = np.empty_like(u)
    for i in range(n):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < n - 1 else n - 1
        for j in range(n):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < n - 1 else n - 1
            out[i, j] = ((u[im, j] + u[ip, j]) + (u[i, jm] + u[i, jp]) - 4.0 * u[i, j]) * inv_dx2
    return out


def laplacian(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    return _laplacian(np.ascontiguousarray(u, dtype=float), 1.0 / grid.dx**2)


def _check_dt(dt: float, grid: GridSpec) -> None:
    if not 0 < dt <= grid.max_dt():
        raise ValueError(f"dt = {dt} violates the diffusion bound 0.9*dx^2/4 = {grid.max_dt():.5g}")


def step(fields: FieldPair, g1, g2, dt: float, grid: GridSpec | None = None, nsteps: int = 1) -> FieldPair:
    """Advance ``nsteps`` Euler steps; returns a new FieldPair."""
    grid = grid or GridSpec(fields.n)
    _check_dt(dt, grid)
    out = fields.copy()
    bad = _advance(out.u, out.v, np.ascontiguousarray(g1, dtype=float), np.ascontiguousarray(g2, dtype=float),
                   dt, 1.0 / grid.dx**2, nsteps, DIVERGENCE_BOUND)
    if bad >= 0:
        t = fields.time + (bad + 1) * dt
        raise DivergenceError(f"|u| or |v| exceeded {DIVERGENCE_BOUND} at t = {t:.6g}", t)
    out.time = fields.time + nsteps * dt
    return out


def spawn_spiral(grid: GridSpec | None = None, settle_time: float = 200.0, dt: float = 0.01,
                 offset: float = 0.0) -> FieldPair:
    """Broken-wave initial data relaxed at eps = 0 into a rotating spiral.

    u is excited for y < offset, v raised for x < 0; the free end of the
    wave curls up into a spiral whose tip sits near (0, offset).
    """
    grid = grid or GridSpec()
    us, vs = rest_state()
    X, Y = grid.mesh()
    u = np.where(Y < offset, 1.8, us)
    v = np.where(X < 0, vs + 1.5, vs)
    fields = FieldPair(np.ascontiguousarray(u), np.ascontiguousarray(v), 0.0)
    if settle_time <= 0:
        return fields
    zero = np.zeros((grid.n, grid.n))
    nsteps = int(round(settle_time / dt))
    fields = step(fields, zero, zero, dt, grid, nsteps)
    try:
        tipmod.find_tip(fields.u, fields.v, grid)
    except tipmod.TipLostError as err:
        raise SpawnError("no spiral tip after settling") from err
    fields.time = 0.0
    return fields


@dataclass
class RunResult:
    fields: FieldPair
    tips: tipmod.TipTrajectory
    snapshots: list


def run(
    fields: FieldPair,
    coeffs: InhomogeneityCoeffs,
    dt: float = 0.01,
    t_end: float = 100.0,
    sample_every: int = 50,
    grid: GridSpec | None = None,
    snapshot_every: int = 0,
    max_gap: int = 5,
    progress=None,
) -> RunResult:
    """Integrate to ``t_end`` (relative to fields.time), sampling the tip every ``sample_every`` steps."""
    grid = grid or GridSpec(fields.n)
    _check_dt(dt, grid)
    g1, g2 = build_inhomogeneity(coeffs, grid)
    nsteps = int(round(t_end / dt))
    cur = fields.copy()
    t0 = cur.time
    times, pts = [], []
    snaps = []
    prev = None
    gap = 0
    pending = []  # times of lost samples awaiting interpolation
    done = 0
    while True:
        try:
            tip = tipmod.find_tip(cur.u, cur.v, grid, prev)
        except tipmod.TipLostError:
            tip = None
        if tip is None:
            gap += 1
            pending.append(cur.time)
            if gap > max_gap:
                raise tipmod.TipLostError(f"tip lost for more than {max_gap} consecutive samples at t = {cur.time:.6g}")
        else:
            if pending and pts:
                # linear gap fill between the last good sample and this one
                ta, pa = times[-1], pts[-1]
                for tl in pending:
                    w = (tl - ta) / (cur.time - ta)
                    times.append(tl)
                    pts.append(pa + w * (tip - pa))
            pending = []
            gap = 0
            times.append(cur.time)
            pts.append(tip)
            prev = tip
        if snapshot_every and (done // sample_every) % snapshot_every == 0:
            snaps.append(cur.copy())
        if progress is not None:
            progress(cur, tip)
        if done >= nsteps:
            break
        k = min(sample_every, nsteps - done)
        cur = step(cur, g1, g2, dt, grid, k)
        done += k
        cur.time = t0 + done * dt
    traj = tipmod.TipTrajectory(np.array(times), np.array(pts).reshape(-1, 2), sample_every * dt)
    return RunResult(cur, traj, snaps)


# ---------------------------------------------------------------- snapshots

HEADER_BYTES = 32


def save_snapshot(path, fields: FieldPair) -> None:
    header = f"{fields.n} {fields.time:.17g}".ljust(HEADER_BYTES - 1) + "\n"
    if len(header) != HEADER_BYTES:
        raise ValueError("snapshot header overflow")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(fields.u, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(fields.v, dtype="<f8").tobytes())


def load_snapshot(path) -> FieldPair:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_BYTES).decode("ascii").split()
        n, time = int(header[0]), float(header[1])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 2 * n * n:
        raise ValueError(f"snapshot holds {data.size} values, expected {2 * n * n}")
    u = data[: n * n].reshape(n, n).astype(float)
    v = data[n * n:].reshape(n, n).astype(float)
    return FieldPair(u, v, time)


def diffusion_only_step(u: np.ndarray, dt: float, grid: GridSpec) -> np.ndarray:
    """One Euler step of u_t = lap u; used to check the Neumann flux balance."""
    return u + dt * laplacian(u, grid)

