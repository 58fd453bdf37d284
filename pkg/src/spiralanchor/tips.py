"""Spiral tip extraction and classification of the tip motion.

The tip is the crossing of the u = 0 and v = 0 level sets.  Level sets come
from a marching-squares pass with linear interpolation along cell edges;
saddle cells are resolved by the sign of the cell-center average.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .se2 import LatticeSpec, nearest_lattice_point, rotation

LATTICE_SPACING = 4.0 * np.pi


class TipLostError(RuntimeError):
    pass


class InsufficientSamplesError(ValueError):
    pass


# ------------------------------------------------------------ contours

def _edge_points(f, x):
    """Crossing points on the four edges of every cell, plus crossing masks."""
    dx = x[1] - x[0]
    f00, f01 = f[:-1, :-1], f[:-1, 1:]
    f10, f11 = f[1:, :-1], f[1:, 1:]
    p00, p01, p10, p11 = f00 > 0, f01 > 0, f10 > 0, f11 > 0
    xj = np.broadcast_to(x[None, :-1], f00.shape)
    yi = np.broadcast_to(x[:-1, None], f00.shape)

    def frac(a, b, crossed):
        out = np.zeros_like(a)
        np.divide(a, a - b, out=out, where=crossed)
        return out

    c0, c1, c2, c3 = p00 != p01, p01 != p11, p10 != p11, p00 != p10
    t0, t1, t2, t3 = frac(f00, f01, c0), frac(f01, f11, c1), frac(f10, f11, c2), frac(f00, f10, c3)
    pts = [
        np.stack([xj + t0 * dx, yi], -1),  # bottom: 00 -> 01
        np.stack([xj + dx, yi + t1 * dx], -1),  # right: 01 -> 11
        np.stack([xj + t2 * dx, yi + dx], -1),  # top: 10 -> 11
        np.stack([xj, yi + t3 * dx], -1),  # left: 00 -> 10
    ]
    center = (f00 + f01 + f10 + f11) > 0
    return pts, (c0, c1, c2, c3), p00, center


def _contour_segments(f, x):
    pts, crossed, p00, center = _edge_points(np.asarray(f, dtype=float), x)
    count = sum(c.astype(np.int8) for c in crossed)
    simple = count == 2
    saddle = count == 4
    keep_00_11 = saddle & (center == p00)  # center joins 00 and 11: cut corners 01 and 10
    segs, cells = [], []

    def emit(mask, a, b):
        idx = np.flatnonzero(mask)
        if idx.size:
            segs.append(np.stack([pts[a].reshape(-1, 2)[idx], pts[b].reshape(-1, 2)[idx]], 1))
            cells.append(idx)

    for a in range(4):
        for b in range(a + 1, 4):
            emit(simple & crossed[a] & crossed[b], a, b)
    emit(keep_00_11, 0, 1)
    emit(keep_00_11, 2, 3)
    emit(saddle & ~keep_00_11, 3, 0)
    emit(saddle & ~keep_00_11, 1, 2)
    if not segs:
        return np.empty((0, 2, 2)), np.empty(0, dtype=np.int64)
    return np.concatenate(segs), np.concatenate(cells)


def extract_zero_contours(field, grid) -> np.ndarray:
    """Zero level set of ``field`` as an array of segments, shape (K, 2, 2) in plane coordinates."""
    return _contour_segments(field, grid.x)[0]


def segment_intersections(sa: np.ndarray, sb: np.ndarray) -> np.ndarray:
    """All crossings between two segment sets (bounding-box prefilter, 2x2 solve per pair)."""
    if len(sa) == 0 or len(sb) == 0:
        return np.empty((0, 2))
    lo_a, hi_a = sa.min(1), sa.max(1)
    lo_b, hi_b = sb.min(1), sb.max(1)
    overlap = np.all((lo_a[:, None] <= hi_b[None]) & (hi_a[:, None] >= lo_b[None]), axis=-1)
    ia, ib = np.nonzero(overlap)
    return _solve_pairs(sa[ia], sb[ib])


def _solve_pairs(a, b):
    p, d1 = a[:, 0], a[:, 1] - a[:, 0]
    q, d2 = b[:, 0], b[:, 1] - b[:, 0]
    det = d1[:, 0] * -d2[:, 1] + d2[:, 0] * d1[:, 1]
    scale = np.hypot(*d1.T) * np.hypot(*d2.T)
    ok = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)
    r = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (r[:, 0] * -d2[:, 1] + d2[:, 0] * r[:, 1]) / det
        t = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    eps = 1e-12
    hit = ok & (s >= -eps) & (s <= 1 + eps) & (t >= -eps) & (t <= 1 + eps)
    return p[hit] + s[hit, None] * d1[hit]


def tip_candidates(u, v, grid) -> np.ndarray:
    su, cu = _contour_segments(u, grid.x)
    sv, cv = _contour_segments(v, grid.x)
    common = np.intersect1d(cu, cv)
    if common.size == 0:
        return np.empty((0, 2))
    # segments live inside their cell, so only same-cell pairs can cross
    ma = np.isin(cu, common)
    mb = np.isin(cv, common)
    su, cu, sv, cv = su[ma], cu[ma], sv[mb], cv[mb]
    out = []
    for cell in common:
        a = su[cu == cell]
        b = sv[cv == cell]
        ia, ib = np.meshgrid(np.arange(len(a)), np.arange(len(b)), indexing="ij")
        out.append(_solve_pairs(a[ia.ravel()], b[ib.ravel()]))
    return np.concatenate(out) if out else np.empty((0, 2))


def find_tip(u, v, grid, previous=None) -> np.ndarray:
    """Crossing of the u = 0 and v = 0 contours nearest to ``previous`` (default: domain center)."""
    cand = tip_candidates(u, v, grid)
    if len(cand) == 0:
        raise TipLostError("u = 0 and v = 0 contours do not intersect")
    ref = np.zeros(2) if previous is None else np.asarray(previous, dtype=float)
    return cand[np.argmin(np.linalg.norm(cand - ref, axis=1))].copy()


# --------------------------------------------------------- trajectories

@dataclass
class TipTrajectory:
    times: np.ndarray
    points: np.ndarray  # (N, 2)
    sample_dt: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.times) != len(self.points):
            raise ValueError("times and points differ in length")
        if len(self.times) > 1:
            d = np.diff(self.times)
            if np.any(d <= 0):
                raise ValueError("tip sample times must be strictly increasing")
            if np.any(d > 5 * self.sample_dt * (1 + 1e-9)):
                raise ValueError("tip trajectory has a gap longer than 5 samples")

    def __len__(self):
        return len(self.times)

    def tail(self, transient_fraction: float) -> TipTrajectory:
        start = int(len(self) * transient_fraction)
        return TipTrajectory(self.times[start:], self.points[start:], self.sample_dt)

    def translated(self, shift) -> TipTrajectory:
        return TipTrajectory(self.times.copy(), self.points + np.asarray(shift, dtype=float), self.sample_dt)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y"])
            for t, (x, y) in zip(self.times, self.points):
                w.writerow([f"{t:.17g}", f"{x:.17g}", f"{y:.17g}"])

    @classmethod
    def from_csv(cls, path, sample_dt: float | None = None) -> TipTrajectory:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if sample_dt is None:
            sample_dt = float(np.median(np.diff(data[:, 0]))) if len(data) > 1 else 1.0
        return cls(data[:, 0], data[:, 1:3], sample_dt)


# -------------------------------------------------------- classification

def fit_circle(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Algebraic least-squares circle (center, radius)."""
    x, y = points[:, 0], points[:, 1]
    A = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(A, x * x + y * y, rcond=None)
    c = sol[:2]
    return c, float(np.sqrt(max(sol[2] + c @ c, 0.0)))


def estimate_period(times, values) -> float | None:
    """Mean spacing of upward zero crossings of ``values - mean``."""
    s = values - values.mean()
    up = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    if len(up) < 2:
        return None
    tc = times[up] + (times[up + 1] - times[up]) * (-s[up] / (s[up + 1] - s[up]))
    return float(np.mean(np.diff(tc)))


def planar_period(times, points) -> float | None:
    """Period from up and down crossings of both coordinates.

    The four estimates permute under a quarter turn of the path, so sorting
    before averaging makes the result exactly rotation invariant.
    """
    est = []
    for col in (points[:, 0], points[:, 1]):
        for sign in (1.0, -1.0):
            e = estimate_period(times, sign * col)
            if e is not None:
                est.append(e)
    if not est:
        return None
    return float(np.mean(sorted(est)))


@dataclass
class MotionClassification:
    kind: str  # anchored_rotation | meander | linear_drift | indeterminate
    anchor: np.ndarray | None = None
    primary_period: float | None = None
    secondary_period: float | None = None
    drift_velocity: np.ndarray | None = None
    st_symmetric: bool = False
    radius: float | None = None
    st_residual: float | None = None

    def to_dict(self, spacing: float = LATTICE_SPACING) -> dict:
        vec = lambda a: None if a is None else [float(x) for x in a]  # noqa: E731
        d = {
            "kind": self.kind,
            "anchor": vec(self.anchor),
            "primary_period": self.primary_period,
            "secondary_period": self.secondary_period,
            "drift_velocity": vec(self.drift_velocity),
            "st_symmetric": bool(self.st_symmetric),
            "radius": self.radius,
            "st_residual": self.st_residual,
        }
        if self.anchor is not None:
            lat = LatticeSpec(spacing)
            pt, dist = nearest_lattice_point(lat, self.anchor)
            dpt, ddist = nearest_lattice_point(lat.shifted(), self.anchor)
            d.update(lattice_point=vec(pt), lattice_distance=float(dist),
                     dual_lattice_point=vec(dpt), dual_lattice_distance=float(ddist))
        else:
            d.update(lattice_point=None, lattice_distance=None, dual_lattice_point=None, dual_lattice_distance=None)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


def _window_fits(traj: TipTrajectory, period: float):
    w = max(8, int(round(period / traj.sample_dt)))
    if w > len(traj):
        return None
    stride = max(1, w // 4)
    centers, radii, tmid = [], [], []
    for s in range(0, len(traj) - w + 1, stride):
        c, r = fit_circle(traj.points[s:s + w])
        centers.append(c)
        radii.append(r)
        tmid.append(traj.times[s + w // 2])
    return np.array(centers), np.array(radii), np.array(tmid)


def _drift_velocity(times, pts):
    A = np.column_stack([times, np.ones_like(times)])
    sol, *_ = np.linalg.lstsq(A, pts, rcond=None)
    return sol[0]


def _is_drift(pts) -> bool:
    path = np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))
    return path > 0 and np.linalg.norm(pts[-1] - pts[0]) >= 0.5 * path


def classify(
    traj: TipTrajectory,
    transient_fraction: float = 0.5,
    anchor_tol: float = 0.05,
    min_samples: int = 200,
    spacing: float = LATTICE_SPACING,
) -> MotionClassification:
    tail = traj.tail(transient_fraction)
    if len(tail) < min_samples:
        raise InsufficientSamplesError(f"{len(tail)} post-transient samples, need {min_samples}")
    t, p = tail.times, tail.points
    period = planar_period(t, p)
    fits = _window_fits(tail, period) if period else None
    if fits is None or len(fits[0]) < 2:
        if _is_drift(p):
            return MotionClassification("linear_drift", drift_velocity=_drift_velocity(t, p))
        return MotionClassification("indeterminate", primary_period=period)
    centers, radii, tmid = fits
    rmean = float(radii.mean())
    cmean = centers.mean(axis=0)
    spread = np.linalg.norm(centers - cmean, axis=1).max()
    if spread < anchor_tol * rmean:
        out = MotionClassification("anchored_rotation", cmean, period, radius=rmean)
        _attach_symmetry(out, tail, period / 4, spacing)
        return out
    ang = np.unwrap(np.arctan2(*(centers - cmean).T[::-1]))
    if abs(ang[-1] - ang[0]) >= 2 * np.pi:
        slope = np.polyfit(tmid, ang, 1)[0]
        secondary = float(2 * np.pi / abs(slope))
        out = MotionClassification("meander", cmean, period, secondary, radius=rmean)
        _attach_symmetry(out, tail, secondary / 4, spacing)
        return out
    if _is_drift(centers):
        return MotionClassification("linear_drift", primary_period=period, drift_velocity=_drift_velocity(tmid, centers),
                                    radius=rmean)
    return MotionClassification("indeterminate", cmean, period, radius=rmean)


def _attach_symmetry(out: MotionClassification, tail: TipTrajectory, quarter: float, spacing: float) -> None:
    """Residual Z4 test about the nearest 4-fold center (lattice or half-shifted lattice point)."""
    lat = LatticeSpec(spacing)
    pts = [nearest_lattice_point(lat, out.anchor), nearest_lattice_point(lat.shifted(), out.anchor)]
    center = min(pts, key=lambda pd: pd[1])[0]
    try:
        res = st_symmetry_test(tail, center, quarter)
    except InsufficientSamplesError:
        return
    out.st_residual = res
    out.st_symmetric = bool(res < 0.1 * (out.radius or 1.0))


def st_symmetry_test(traj: TipTrajectory, anchor, quarter_period: float) -> float:
    """Mean distance between the quarter-turned path about ``anchor`` and the path a quarter period later.

    Both turning senses are tried; the smaller residual is returned.
    """
    t, p = traj.times, traj.points
    if not quarter_period > 0 or t[-1] - t[0] < 4 * quarter_period:
        raise InsufficientSamplesError("trajectory shorter than one full period")
    a = np.asarray(anchor, dtype=float)
    m = t + quarter_period <= t[-1]
    later = np.column_stack([np.interp(t[m] + quarter_period, t, p[:, k]) for k in range(2)])
    best = np.inf
    for sense in (1, -1):
        turned = (p[m] - a) @ rotation(sense * np.pi / 2).T + a
        best = min(best, float(np.mean(np.linalg.norm(turned - later, axis=1))))
    return best
