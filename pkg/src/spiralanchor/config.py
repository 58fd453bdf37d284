"""Strict ``key = value`` experiment configuration with ``[section]`` headers."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .center_bundle import SystemParams
from .perturbation import PerturbationSpec, SpecParseError, parse_poly
from .rd_fhn import PRESET_COEFFS, InhomogeneityCoeffs

MODES = ("ode", "average", "predict", "pde", "analyze")
PRESETS = ("torus", "exp1", "exp2", "exp3")

ALLOWED = {
    "": {"mode", "preset"},
    "system": {"V", "omega", "epsilon"},
    "spec": {"fphi", "fpsi1", "fpsi2"},
    "integration": {"dt", "t_end", "sample_every", "transient_fraction", "initial", "rescaled", "epsilon_sweep"},
    "pde": {"n", "dt", "t_end", "sample_every", "settle_time", "transient_fraction", "coeffs",
            "A1", "B1", "C1", "A2", "B2", "C2", "initial", "snapshot"},
    "analysis": {"tips", "transient_fraction"},
    "output": {"dir"},
}

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    """Syntax errors, unknown keys and missing keys (usage errors)."""

    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class ValidationError(ValueError):
    """Well-formed configuration with invalid values."""


@dataclass
class Entry:
    value: str
    line: int
    column: int


def parse_config_text(text: str) -> dict:
    """Return {section: {key: Entry}}; the unnamed leading section is ''."""
    out: dict = {"": {}}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        indent = len(body) - len(body.lstrip())
        stripped = body.strip()
        m = _SECTION.match(stripped)
        if m:
            section = m.group(1)
            if section not in ALLOWED:
                raise ConfigError(f"unknown section [{section}]", lineno, indent + 1)
            if section in out:
                raise ConfigError(f"duplicate section [{section}]", lineno, indent + 1)
            out[section] = {}
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, indent + 1)
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not _KEY.match(key):
            raise ConfigError(f"bad key {key!r}", lineno, indent + 1)
        if key not in ALLOWED[section]:
            where = f"[{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} in {where}", lineno, indent + 1)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno, indent + 1)
        value = value.strip()
        vcol = indent + stripped.index("=") + 2 + (len(stripped.split("=", 1)[1]) - len(stripped.split("=", 1)[1].lstrip()))
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno, vcol)
        out[section][key] = Entry(value, lineno, vcol)
    return out


# ---------------------------------------------------------------- typed access

def _float(e: Entry) -> float:
    try:
        x = float(e.value)
    except ValueError:
        raise ConfigError(f"expected a number, got {e.value!r}", e.line, e.column) from None
    if not math.isfinite(x):
        raise ValidationError(f"line {e.line}: value must be finite")
    return x


def _int(e: Entry) -> int:
    try:
        return int(e.value)
    except ValueError:
        raise ConfigError(f"expected an integer, got {e.value!r}", e.line, e.column) from None


def _floats(e: Entry, count: int | None = None) -> list[float]:
    parts = [p.strip() for p in e.value.split(",")]
    vals = [_float(Entry(p, e.line, e.column)) for p in parts]
    if count is not None and len(vals) != count:
        raise ConfigError(f"expected {count} comma-separated numbers", e.line, e.column)
    return vals


def _bool(e: Entry) -> bool:
    v = e.value.lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected true/false, got {e.value!r}", e.line, e.column)


def _require(sec: dict, key: str, section: str) -> Entry:
    if key not in sec:
        raise ConfigError(f"missing required key {key!r} in [{section}]")
    return sec[key]


@dataclass
class IntegrationSettings:
    dt: float = 1e-3
    t_end: float = 1.0
    sample_every: int = 1
    transient_fraction: float = 0.5
    initial: tuple = (0.0, 0.0, 0.0)
    rescaled: bool = False
    epsilon_sweep: tuple = ()


@dataclass
class InitialCondition:
    quarter_turns: int = 0
    offset: float = 0.0

    def label(self) -> str:
        return f"{self.quarter_turns}@{self.offset:g}"


@dataclass
class PDESettings:
    n: int = 200
    dt: float = 0.01
    t_end: float = 800.0
    sample_every: int = 10
    settle_time: float = 200.0
    transient_fraction: float = 0.5
    coeffs: InhomogeneityCoeffs = field(default_factory=InhomogeneityCoeffs)
    initial: list = field(default_factory=lambda: [InitialCondition()])
    snapshot: bool = True


@dataclass
class ExperimentConfig:
    mode: str
    preset: str | None = None
    params: SystemParams | None = None
    integration: IntegrationSettings = field(default_factory=IntegrationSettings)
    pde: PDESettings | None = None
    tips_path: str | None = None
    analysis_transient: float = 0.5
    output_dir: str | None = None
    source: str | None = None


def _parse_initial_conditions(e: Entry) -> list:
    ics = []
    for tok in e.value.split(","):
        tok = tok.strip()
        m = re.fullmatch(r"(-?\d+)@([-+0-9.eE]+)", tok)
        if not m:
            raise ConfigError(f"initial condition {tok!r} is not of the form quarter_turns@offset", e.line, e.column)
        ics.append(InitialCondition(int(m.group(1)) % 4, float(m.group(2))))
    return ics


def _spec_from(sec: dict) -> PerturbationSpec:
    comps = {}
    for key, name in (("fpsi1", "f_psi_1"), ("fpsi2", "f_psi_2"), ("fphi", "f_phi")):
        if key in sec:
            e = sec[key]
            try:
                comps[name] = parse_poly(e.value, e.line)
            except SpecParseError as err:
                raise ConfigError(f"{key}: {err}", e.line, e.column) from None
    return PerturbationSpec(**comps)


def build_config(tree: dict, source: str | None = None) -> ExperimentConfig:
    root = tree[""]
    mode = _require(root, "mode", "top level")
    if mode.value not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}", mode.line, mode.column)
    cfg = ExperimentConfig(mode.value, root["preset"].value if "preset" in root else None, source=source)

    if cfg.mode in ("ode", "average", "predict"):
        sysec = tree.get("system", {})
        V = _floats(_require(sysec, "V", "system"), 2)
        omega = _float(_require(sysec, "omega", "system"))
        eps = _float(_require(sysec, "epsilon", "system"))
        spec = _spec_from(tree.get("spec", {}))
        try:
            cfg.params = SystemParams(np.array(V), omega, eps, spec)
        except ValueError as err:
            raise ValidationError(str(err)) from None
    if cfg.mode == "ode":
        sec = tree.get("integration", {})
        it = IntegrationSettings(
            dt=_float(_require(sec, "dt", "integration")),
            t_end=_float(_require(sec, "t_end", "integration")),
        )
        if "sample_every" in sec:
            it.sample_every = _int(sec["sample_every"])
        if "transient_fraction" in sec:
            it.transient_fraction = _float(sec["transient_fraction"])
        if "initial" in sec:
            it.initial = tuple(_floats(sec["initial"], 3))
        if "rescaled" in sec:
            it.rescaled = _bool(sec["rescaled"])
        if "epsilon_sweep" in sec:
            it.epsilon_sweep = tuple(_floats(sec["epsilon_sweep"]))
        if not (it.dt > 0 and it.t_end > 0 and it.sample_every >= 1):
            raise ValidationError("dt and t_end must be positive, sample_every >= 1")
        if not 0 <= it.transient_fraction < 1:
            raise ValidationError("transient_fraction must lie in [0, 1)")
        if any(e < 0 for e in it.epsilon_sweep):
            raise ValidationError("epsilon_sweep values must be >= 0")
        cfg.integration = it
    if cfg.mode == "pde":
        sec = tree.get("pde", {})
        p = PDESettings()
        for key in ("n", "sample_every"):
            if key in sec:
                setattr(p, key, _int(sec[key]))
        for key in ("dt", "t_end", "settle_time", "transient_fraction"):
            if key in sec:
                setattr(p, key, _float(sec[key]))
        named = {k: _float(sec[k]) for k in ("A1", "B1", "C1", "A2", "B2", "C2") if k in sec}
        if "coeffs" in sec:
            e = sec["coeffs"]
            if e.value not in PRESET_COEFFS:
                raise ConfigError(f"unknown coefficient set {e.value!r}; known: {', '.join(sorted(PRESET_COEFFS))}",
                                  e.line, e.column)
            if named:
                raise ConfigError("give either 'coeffs' or individual A1..C2 values, not both", e.line, e.column)
            p.coeffs = PRESET_COEFFS[e.value]
        else:
            p.coeffs = InhomogeneityCoeffs(**named)
        if "initial" in sec:
            p.initial = _parse_initial_conditions(sec["initial"])
        if "snapshot" in sec:
            p.snapshot = _bool(sec["snapshot"])
        if p.n < 50:
            raise ValidationError("pde grid needs n >= 50")
        if not (p.dt > 0 and p.t_end > 0 and p.sample_every >= 1 and p.settle_time >= 0):
            raise ValidationError("dt and t_end must be positive, sample_every >= 1, settle_time >= 0")
        dx = 20 * np.pi / p.n
        if p.dt > 0.9 * dx * dx / 4:
            raise ValidationError(f"dt = {p.dt} violates the diffusion bound {0.9 * dx * dx / 4:.5g}")
        cfg.pde = p
    if cfg.mode == "analyze":
        sec = tree.get("analysis", {})
        cfg.tips_path = _require(sec, "tips", "analysis").value
        if "transient_fraction" in sec:
            cfg.analysis_transient = _float(sec["transient_fraction"])
    if "output" in tree and "dir" in tree["output"]:
        cfg.output_dir = tree["output"]["dir"].value
    return cfg


def load_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    return build_config(parse_config_text(text), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return load_config_text(text, str(path))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise KeyError(name)
    return resources.files("spiralanchor").joinpath("presets", f"{name}.cfg").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return load_config_text(preset_text(name), f"preset:{name}")
