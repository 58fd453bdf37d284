"""Planar Euclidean group SE(2), the square-lattice subgroup and the Z4 generator J."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# J = R_{-pi/2}; exact integer entries avoid cos(pi/2) roundoff.
J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def wrap_angle(theta):
    """Map angle(s) into [0, 2pi)."""
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out) if np.ndim(out) else (0.0 if out >= TWO_PI else float(out))


@dataclass(frozen=True)
class SE2Element:
    """Rigid motion z -> R_theta z + p."""

    theta: float = 0.0
    p: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(2).copy())

    @classmethod
    def identity(cls) -> SE2Element:
        return cls(0.0, np.zeros(2))

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix."""
        m = np.eye(3)
        m[:2, :2] = rotation(self.theta)
        m[:2, 2] = self.p
        return m

    def allclose(self, other: SE2Element, atol: float = 1e-12) -> bool:
        dtheta = np.angle(np.exp(1j * (self.theta - other.theta)))
        return abs(dtheta) <= atol and np.allclose(self.p, other.p, rtol=0.0, atol=atol)

    def __matmul__(self, other: SE2Element) -> SE2Element:
        return compose(self, other)


def compose(g2: SE2Element, g1: SE2Element) -> SE2Element:
    """g2 after g1: (theta1 + theta2, R_theta2 p1 + p2)."""
    return SE2Element(g1.theta + g2.theta, rotation(g2.theta) @ g1.p + g2.p)


def inverse(g: SE2Element) -> SE2Element:
    return SE2Element(-g.theta, -(rotation(-g.theta) @ g.p))


def act_on_point(g: SE2Element, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z @ rotation(g.theta).T + g.p


def apply_J(psi) -> np.ndarray:
    """(psi1, psi2) -> (psi2, -psi1). Works on (..., 2) arrays."""
    psi = np.asarray(psi, dtype=float)
    return np.stack([psi[..., 1], -psi[..., 0]], axis=-1)


def lattice_element(quarter_turns: int, shift=(0, 0)) -> SE2Element:
    """Element of the lattice subgroup: rotation by quarter_turns*pi/2, integer translation."""
    shift = np.asarray(shift)
    if not np.all(shift == np.round(shift)):
        raise ValueError("lattice translations must be integer")
    return SE2Element(quarter_turns * np.pi / 2, shift.astype(float))


@dataclass(frozen=True)
class LatticeSpec:
    spacing: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError(f"lattice spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    def shifted(self, fraction=(0.5, 0.5)) -> LatticeSpec:
        """Same lattice translated by a fraction of the spacing (the cell-center lattice by default)."""
        ox, oy = self.origin
        return LatticeSpec(self.spacing, (ox + fraction[0] * self.spacing, oy + fraction[1] * self.spacing))


def nearest_lattice_point(lattice: LatticeSpec, z) -> tuple[np.ndarray, float]:
    """Closest point of origin + spacing*(m, n); ties go to the lexicographically smallest (m, n)."""
    z = np.asarray(z, dtype=float)
    origin = np.asarray(lattice.origin)
    q = (z - origin) / lattice.spacing
    base = np.floor(q).astype(int)
    best = None
    # candidates in lexicographic order so that strict '<' keeps the smallest on ties
    for m in (base[0] - 1, base[0], base[0] + 1, base[0] + 2):
        for n in (base[1] - 1, base[1], base[1] + 1, base[1] + 2):
            pt = origin + lattice.spacing * np.array([m, n], dtype=float)
            d = float(np.hypot(*(z - pt)))
            if best is None or d < best[1] - 1e-12 * lattice.spacing:
                best = (pt, d)
    return best
