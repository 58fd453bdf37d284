"""Trigonometric-polynomial perturbations on the three-torus (psi1, psi2, phi).

Every term is ``coeff * P(m*phi) * Q(n1*psi1 + n2*psi2)`` with P, Q in
{one, sin, cos}.  The same container serves for functions of phi alone
(Q = one) and for functions on the two-torus (P = one).

Text grammar, one ``+``-separated term per item::

    fphi: 2*sin(4p) + cos(7a+6b) + cos(6a-7b)
    fpsi1: sin(5p)*sin(a+b) + cos(5p)*sin(a-b)
    fpsi2: cos(2p)*cos(2a+3b) - cos(2p)*cos(3a-2b)

``p`` is phi, ``a`` is psi1, ``b`` is psi2.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

ONE, SIN, COS = "one", "sin", "cos"
_KIND_CODE = {ONE: 0, SIN: 1, COS: 2}


class SpecParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class NonCanonicalError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TrigTerm:
    phi_kind: str = ONE
    m: int = 0
    psi_kind: str = ONE
    n: tuple = (0, 0)
    coeff: float = 1.0

    @property
    def key(self):
        return (self.phi_kind, self.m, self.psi_kind, self.n)

    def is_canonical(self) -> bool:
        return _canonical_term(self) == self

    def evaluate(self, psi1, psi2, phi):
        val = self.coeff
        if self.phi_kind != ONE:
            val = val * _trig(self.phi_kind, self.m * phi)
        if self.psi_kind != ONE:
            val = val * _trig(self.psi_kind, self.n[0] * psi1 + self.n[1] * psi2)
        return val * np.ones(np.broadcast(psi1, psi2, phi).shape) if np.ndim(val) == 0 else val

    def to_text(self) -> str:
        factors = []
        if self.phi_kind != ONE:
            factors.append(f"{self.phi_kind}({self.m}p)")
        if self.psi_kind != ONE:
            factors.append(f"{self.psi_kind}({_mode_text(self.n)})")
        coeff = repr(float(self.coeff))
        return "*".join([coeff] + factors)


def _trig(kind, x):
    return np.sin(x) if kind == SIN else np.cos(x)


def _mode_text(n) -> str:
    n1, n2 = n
    return f"{n1}a{'+' if n2 >= 0 else '-'}{abs(n2)}b"


def _lex_negative(n) -> bool:
    return n[0] < 0 or (n[0] == 0 and n[1] < 0)


def _canonical_term(t: TrigTerm) -> TrigTerm | None:
    """Canonical form of one term, or None if the term vanishes identically."""
    coeff = float(t.coeff)
    phi_kind, m = t.phi_kind, int(t.m)
    psi_kind, n = t.psi_kind, (int(t.n[0]), int(t.n[1]))
    if phi_kind == ONE:
        m = 0
    elif m == 0:
        if phi_kind == SIN:
            return None
        phi_kind = ONE
    elif m < 0:
        m = -m
        if phi_kind == SIN:
            coeff = -coeff
    if psi_kind == ONE:
        n = (0, 0)
    elif n == (0, 0):
        if psi_kind == SIN:
            return None
        psi_kind = ONE
    elif _lex_negative(n):
        n = (-n[0], -n[1])
        if psi_kind == SIN:
            coeff = -coeff
    if coeff == 0.0:
        return None
    return TrigTerm(phi_kind, m, psi_kind, n, coeff)


@dataclass(frozen=True)
class TrigPoly:
    """Canonical sum of TrigTerms: duplicates merged, zero terms dropped, sorted."""

    terms: tuple = ()

    def __post_init__(self):
        merged: dict = {}
        for t in self.terms:
            c = _canonical_term(t)
            if c is None:
                continue
            merged[c.key] = merged.get(c.key, 0.0) + c.coeff
        out = tuple(
            TrigTerm(k[0], k[1], k[2], k[3], v) for k, v in sorted(merged.items()) if v != 0.0
        )
        object.__setattr__(self, "terms", out)

    @classmethod
    def from_terms(cls, terms: Iterable[TrigTerm]) -> TrigPoly:
        return cls(tuple(terms))

    def __call__(self, psi1, psi2, phi):
        out = np.zeros(np.broadcast(psi1, psi2, phi).shape)
        for t in self.terms:
            out = out + t.evaluate(psi1, psi2, phi)
        return out

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: TrigPoly) -> TrigPoly:
        return TrigPoly(self.terms + other.terms)

    def __neg__(self) -> TrigPoly:
        return self.scaled(-1.0)

    def __sub__(self, other: TrigPoly) -> TrigPoly:
        return self + (-other)

    def scaled(self, factor: float) -> TrigPoly:
        return TrigPoly(tuple(TrigTerm(t.phi_kind, t.m, t.psi_kind, t.n, t.coeff * factor) for t in self.terms))

    def coefficients(self) -> dict:
        return {t.key: t.coeff for t in self.terms}

    def abs_bound(self) -> float:
        """Upper bound on max |f| (sum of |coeff|)."""
        return float(sum(abs(t.coeff) for t in self.terms))

    def psi_modes(self) -> set:
        return {t.n for t in self.terms if t.psi_kind != ONE}

    def max_phi_mode(self) -> int:
        return max((t.m for t in self.terms), default=0)

    def max_psi_mode(self) -> int:
        return max((abs(t.n[0]) + abs(t.n[1]) for t in self.terms), default=0)

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        return " + ".join(t.to_text() for t in self.terms)

    def derivative_phi(self) -> TrigPoly:
        """d/dphi, exact."""
        out = []
        for t in self.terms:
            if t.phi_kind == SIN:
                out.append(TrigTerm(COS, t.m, t.psi_kind, t.n, t.coeff * t.m))
            elif t.phi_kind == COS:
                out.append(TrigTerm(SIN, t.m, t.psi_kind, t.n, -t.coeff * t.m))
        return TrigPoly(tuple(out))

    def gradient_psi(self) -> tuple[TrigPoly, TrigPoly]:
        """(d/dpsi1, d/dpsi2), exact."""
        parts = ([], [])
        for t in self.terms:
            if t.psi_kind == ONE:
                continue
            kind, sign = (COS, 1.0) if t.psi_kind == SIN else (SIN, -1.0)
            for axis in (0, 1):
                if t.n[axis]:
                    parts[axis].append(TrigTerm(t.phi_kind, t.m, kind, t.n, sign * t.coeff * t.n[axis]))
        return TrigPoly(tuple(parts[0])), TrigPoly(tuple(parts[1]))

    def z4_image(self) -> TrigPoly:
        """Symbolic f(-J psi, phi + pi/2) as a canonical TrigPoly."""
        return TrigPoly(tuple(_z4_term(t) for t in self.terms))

    def encode(self):
        """Flat arrays (coeff, phi_kind, m, psi_kind, n1, n2) for compiled evaluation."""
        k = len(self.terms)
        coeff = np.array([t.coeff for t in self.terms], dtype=float).reshape(k)
        ints = np.array(
            [[_KIND_CODE[t.phi_kind], t.m, _KIND_CODE[t.psi_kind], t.n[0], t.n[1]] for t in self.terms],
            dtype=np.int64,
        ).reshape(k, 5)
        return coeff, ints


# cos(x + q*pi/2), sin(x + q*pi/2) for q = 0..3 as (sign, kind)
_QUARTER_COS = {0: (1.0, COS), 1: (-1.0, SIN), 2: (-1.0, COS), 3: (1.0, SIN)}
_QUARTER_SIN = {0: (1.0, SIN), 1: (1.0, COS), 2: (-1.0, SIN), 3: (-1.0, COS)}


def _z4_term(t: TrigTerm) -> TrigTerm:
    # (psi1, psi2) -> (-psi2, psi1) sends modes (n1, n2) to (n2, -n1)
    n = (t.n[1], -t.n[0])
    coeff, phi_kind = t.coeff, t.phi_kind
    if phi_kind != ONE:
        table = _QUARTER_COS if phi_kind == COS else _QUARTER_SIN
        sign, phi_kind = table[t.m % 4]
        coeff *= sign
    return TrigTerm(phi_kind, t.m, t.psi_kind, n, coeff)


@dataclass(frozen=True)
class PerturbationSpec:
    """F^Psi = (f_psi_1, f_psi_2) and F^phi as trig polynomials."""

    f_psi_1: TrigPoly = field(default_factory=TrigPoly)
    f_psi_2: TrigPoly = field(default_factory=TrigPoly)
    f_phi: TrigPoly = field(default_factory=TrigPoly)

    def __post_init__(self):
        for name in ("f_psi_1", "f_psi_2", "f_phi"):
            val = getattr(self, name)
            if not isinstance(val, TrigPoly):
                object.__setattr__(self, name, TrigPoly(tuple(val)))

    @property
    def components(self) -> tuple[TrigPoly, TrigPoly, TrigPoly]:
        return (self.f_psi_1, self.f_psi_2, self.f_phi)

    def psi_modes(self) -> set:
        modes = set()
        for comp in self.components:
            modes |= comp.psi_modes()
        return modes

    def to_text(self) -> str:
        return "\n".join(
            f"{key}: {comp.to_text()}" for key, comp in zip(("fpsi1", "fpsi2", "fphi"), self.components)
        )


def evaluate(spec: PerturbationSpec, psi, phi):
    """Return (f_psi, f_phi); psi has shape (..., 2), f_psi matches it."""
    psi = np.asarray(psi, dtype=float)
    a, b = psi[..., 0], psi[..., 1]
    f1 = spec.f_psi_1(a, b, phi)
    f2 = spec.f_psi_2(a, b, phi)
    return np.stack([f1, f2], axis=-1), spec.f_phi(a, b, phi)


@dataclass
class SymmetryReport:
    passes: bool
    violating_terms: list
    numeric_residual: float

    def __bool__(self):
        return self.passes


def check_z4_symmetry(spec: PerturbationSpec, n_random: int = 64, seed: int = 0, atol: float = 1e-12) -> SymmetryReport:
    """Check F(-J psi, phi + pi/2) = F(psi, phi) symbolically, then numerically as a guard."""
    violating = []
    for name, comp in zip(("fpsi1", "fpsi2", "fphi"), spec.components):
        for t in comp.terms:
            if not t.is_canonical():
                raise NonCanonicalError(f"{name}: non-canonical term {t}")
        img = comp.z4_image().coefficients()
        orig = comp.coefficients()
        for key in sorted(set(img) | set(orig)):
            diff = orig.get(key, 0.0) - img.get(key, 0.0)
            if abs(diff) > atol * max(1.0, abs(orig.get(key, 0.0))):
                violating.append((name, TrigTerm(*key, orig.get(key, 0.0))))

    rng = np.random.default_rng(seed)
    psi = rng.uniform(0, 2 * np.pi, size=(n_random, 2))
    phi = rng.uniform(0, 2 * np.pi, size=n_random)
    rotated = np.stack([-psi[:, 1], psi[:, 0]], axis=-1)
    fp0, fphi0 = evaluate(spec, psi, phi)
    fp1, fphi1 = evaluate(spec, rotated, phi + np.pi / 2)
    resid = float(max(np.max(np.abs(fp1 - fp0), initial=0.0), np.max(np.abs(fphi1 - fphi0), initial=0.0)))
    scale = max(1.0, max(c.abs_bound() for c in spec.components))
    if not violating and resid > 1e-12 * scale:
        raise AssertionError(f"symbolic check passed but numeric residual is {resid:.3e}")
    return SymmetryReport(not violating, violating, resid)


# ---------------------------------------------------------------- parsing

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_FACTOR = re.compile(r"^(sin|cos)\((.*)\)$")
_LINEAR = re.compile(r"([+-]?)(\d*)([pab])")
_COMPONENT_KEYS = {"fpsi1": "f_psi_1", "fpsi2": "f_psi_2", "fphi": "f_phi"}


def _split_top_level(expr: str) -> list[tuple[int, str]]:
    """Split on top-level + and - (not inside parentheses or exponents). Returns (sign, chunk)."""
    out, depth, start, sign = [], 0, 0, 1
    i = 0
    while i < len(expr):
        ch = expr[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch in "+-" and depth == 0 and i > start and expr[i - 1] not in "eE*":
            out.append((sign, expr[start:i]))
            sign = 1 if ch == "+" else -1
            start = i + 1
        elif ch in "+-" and depth == 0 and i == start:
            sign *= 1 if ch == "+" else -1
            start = i + 1
        i += 1
    out.append((sign, expr[start:]))
    return out


def _parse_linear(arg: str, line) -> dict:
    """Parse e.g. '7a+6b', '-a', '4p' into {'p': k, 'a': n1, 'b': n2}."""
    if re.search(r"\d*\.\d*[pab]", arg):
        raise SpecParseError(f"non-integer mode in {arg!r}", line)
    pos, coeffs = 0, {}
    for mt in _LINEAR.finditer(arg):
        if mt.start() != pos:
            raise SpecParseError(f"cannot parse argument {arg!r}", line)
        pos = mt.end()
        sign = -1 if mt.group(1) == "-" else 1
        k = int(mt.group(2)) if mt.group(2) else 1
        coeffs[mt.group(3)] = coeffs.get(mt.group(3), 0) + sign * k
    if pos != len(arg) or not coeffs:
        raise SpecParseError(f"cannot parse argument {arg!r}", line)
    return coeffs


def parse_term(text: str, line: int | None = None) -> TrigTerm:
    text = text.replace(" ", "").replace("\t", "")
    if not text:
        raise SpecParseError("empty term", line)
    coeff = 1.0
    phi_kind, m, psi_kind, n = ONE, 0, ONE, (0, 0)
    for factor in _split_factors(text, line):
        if re.fullmatch(_NUM, factor):
            coeff *= float(factor)
            continue
        mt = _FACTOR.match(factor)
        if not mt:
            raise SpecParseError(f"malformed factor {factor!r}", line)
        kind, modes = mt.group(1), _parse_linear(mt.group(2), line)
        if "p" in modes:
            if set(modes) != {"p"}:
                raise SpecParseError(f"mixed phi/psi argument {mt.group(2)!r}", line)
            if phi_kind != ONE:
                raise SpecParseError("more than one phi factor", line)
            phi_kind, m = kind, modes["p"]
        else:
            if psi_kind != ONE:
                raise SpecParseError("more than one psi factor", line)
            psi_kind, n = kind, (modes.get("a", 0), modes.get("b", 0))
    return TrigTerm(phi_kind, m, psi_kind, n, coeff)


def _split_factors(text: str, line) -> list[str]:
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise SpecParseError("unbalanced parentheses", line)
        elif ch == "*" and depth == 0:
            out.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise SpecParseError("unbalanced parentheses", line)
    out.append(text[start:])
    if any(not f for f in out):
        raise SpecParseError(f"empty factor in {text!r}", line)
    return out


def parse_poly(expr: str, line: int | None = None) -> TrigPoly:
    expr = expr.strip()
    if expr in ("", "0"):
        return TrigPoly()
    terms = []
    for sign, chunk in _split_top_level(expr.replace(" ", "")):
        t = parse_term(chunk, line)
        terms.append(TrigTerm(t.phi_kind, t.m, t.psi_kind, t.n, sign * t.coeff))
    return TrigPoly(tuple(terms))


def parse_spec(text: str, first_line: int = 1) -> PerturbationSpec:
    """Parse ``fpsi1:``/``fpsi2:``/``fphi:`` lines (``=`` also accepted; ``#`` comments)."""
    parts: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=first_line):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mt = re.match(r"^(\w+)\s*[:=]\s*(.*)$", line)
        if not mt:
            raise SpecParseError(f"expected 'key: terms', got {line!r}", lineno)
        key = mt.group(1).lower()
        if key not in _COMPONENT_KEYS:
            raise SpecParseError(f"unknown component {key!r}", lineno)
        poly = parse_poly(mt.group(2), lineno)
        attr = _COMPONENT_KEYS[key]
        parts[attr] = parts.get(attr, TrigPoly()) + poly
    return PerturbationSpec(**parts)


def serialize_spec(spec: PerturbationSpec) -> str:
    return spec.to_text() + "\n"


SIMDATA_TEXT = """\
fphi: 2*sin(4p) + cos(7a+6b) + cos(6a-7b)
fpsi1: sin(5p)*sin(a+b) + cos(5p)*sin(a-b)
fpsi2: cos(2p)*cos(2a+3b) - cos(2p)*cos(3a-2b)
"""


def simdata_spec() -> PerturbationSpec:
    """Perturbation used for the travelling-wave invariant-torus experiment."""
    return parse_spec(SIMDATA_TEXT)
