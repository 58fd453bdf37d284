"""Command-line entry point: ``spiralanchor <command> ...``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import averaging, center_bundle, rd_fhn, tips
from .config import (
    PRESETS,
    ConfigError,
    ExperimentConfig,
    ValidationError,
    load_config,
    load_preset,
)
from .perturbation import NonCanonicalError, check_z4_symmetry
from .se2 import rotation

log = logging.getLogger("spiralanchor")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3

NUMERICAL_ERRORS = (
    center_bundle.IntegrationError,
    center_bundle.InsufficientDataError,
    rd_fhn.DivergenceError,
    rd_fhn.SpawnError,
    tips.TipLostError,
    tips.InsufficientSamplesError,
    averaging.DegenerateError,
    averaging.ResonanceError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _dump(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _out_dir(cfg: ExperimentConfig, override) -> Path:
    out = Path(override or cfg.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _expect_mode(cfg: ExperimentConfig, *modes):
    if cfg.mode not in modes:
        raise ValidationError(f"this command needs mode {' or '.join(modes)}, config has mode = {cfg.mode}")


# ----------------------------------------------------------------- commands

def cmd_validate(cfg: ExperimentConfig, args) -> int:
    report = {"source": cfg.source, "mode": cfg.mode}
    ok = True
    if cfg.params is not None:
        try:
            sym = check_z4_symmetry(cfg.params.spec)
        except NonCanonicalError as err:
            raise ValidationError(str(err)) from None
        ok = sym.passes
        report["z4_symmetric"] = sym.passes
        report["numeric_residual"] = sym.numeric_residual
        report["violating_terms"] = [f"{name}: {t}" for name, t in sym.violating_terms]
    if cfg.pde is not None:
        report["coefficients"] = dict(zip(("A1", "B1", "C1", "A2", "B2", "C2"), cfg.pde.coeffs.as_tuple()))
        report["initial_conditions"] = [ic.label() for ic in cfg.pde.initial]
    if cfg.mode == "analyze":
        ok = Path(cfg.tips_path).is_file()
        report["tips_found"] = ok
    report["valid"] = ok
    sys.stdout.write(_dump(report))
    return EXIT_OK if ok else EXIT_VALIDATION


def _ode_once(params, it):
    traj = center_bundle.integrate(params, center_bundle.TorusState(it.initial[:2], it.initial[2]),
                                   it.dt, it.t_end, it.sample_every, it.rescaled)
    return traj, center_bundle.invariant_surface_diagnostic(traj, it.transient_fraction)


def cmd_ode_run(cfg: ExperimentConfig, args) -> int:
    _expect_mode(cfg, "ode")
    out = _out_dir(cfg, args.out)
    it = cfg.integration
    traj, diag = _ode_once(cfg.params, it)
    traj.to_csv(out / "trajectory.csv")
    doc = {"epsilon": cfg.params.epsilon, "omega": cfg.params.omega, "V": cfg.params.V,
           "dt": traj.dt, "t_end": it.t_end, "transient_fraction": it.transient_fraction,
           "initial": list(it.initial), **diag.to_dict()}
    if cfg.params.omega == 0 and cfg.params.epsilon > 0:
        zeros = averaging.find_M_zeros(averaging.compute_M(cfg.params.spec))
        stable = [z.phi_star for z in zeros if z.stable]
        if stable:
            d = [abs(np.angle(np.exp(1j * (diag.phi_mean - p)))) for p in stable]
            doc["nearest_stable_phi_star"] = stable[int(np.argmin(d))]
            doc["phi_mean_error"] = float(min(d))
    if it.epsilon_sweep:
        sweep = []
        for eps in it.epsilon_sweep:
            if eps == cfg.params.epsilon:
                d = diag
            else:
                _, d = _ode_once(cfg.params.replace(epsilon=eps), it)
            sweep.append({"epsilon": eps, **d.to_dict()})
            log.info("eps = %g: phi_maxdev = %.6g", eps, d.phi_maxdev)
        order = np.argsort([-s["epsilon"] for s in sweep])
        devs = [sweep[i]["phi_maxdev"] for i in order]
        doc["sweep"] = sweep
        doc["maxdev_decreasing"] = bool(all(b < a for a, b in zip(devs, devs[1:])))
    _dump(doc, out / "diagnostic.json")
    sys.stdout.write(_dump(doc))
    return EXIT_OK


def cmd_average(cfg: ExperimentConfig, args) -> int:
    _expect_mode(cfg, "average", "predict", "ode")
    p = cfg.params
    doc = {"epsilon": p.epsilon, "omega": p.omega, "V": p.V}
    if p.omega > 0:
        field = averaging.average_over_phi(p.spec, p.V, p.omega)
        doc["field"] = field.to_dict()
        doc["degenerate"] = field.is_degenerate()
        doc["equilibria"] = [e.to_dict() for e in averaging.find_equilibria(field)] if not field.is_degenerate() else []
    M = averaging.compute_M(p.spec)
    doc["M"] = M.to_text()
    doc["M_zeros"] = [{"phi_star": z.phi_star, "mu": z.mu, "stable": z.stable, "transverse": z.transverse}
                      for z in averaging.find_M_zeros(M)] if M.terms else []
    out = _dump(doc, Path(args.out) / "average.json" if args.out else None)
    sys.stdout.write(out)
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig, args) -> int:
    _expect_mode(cfg, "predict", "average", "ode")
    pred = averaging.predict(cfg.params)
    out = _dump(pred.to_dict(), Path(args.out) / "prediction.json" if args.out else None)
    sys.stdout.write(out)
    return EXIT_OK


# --------------------------------------------------------------------- pde

@lru_cache(maxsize=8)
def _spawned(n: int, settle: float, dt: float, offset: float) -> rd_fhn.FieldPair:
    return rd_fhn.spawn_spiral(rd_fhn.GridSpec(n), settle, dt, offset)


def _pde_single(task):
    """Run one initial condition; returns (index, tips, classification dict or None, final fields, error)."""
    k, settings, ic = task
    grid = rd_fhn.GridSpec(settings.n)
    base = _spawned(settings.n, settings.settle_time, settings.dt, ic.offset)
    start = rd_fhn.FieldPair(rd_fhn.rotate_field(base.u, ic.quarter_turns),
                             rd_fhn.rotate_field(base.v, ic.quarter_turns), 0.0)
    log.info("run %d (%s): n = %d, t_end = %g", k, ic.label(), settings.n, settings.t_end)
    try:
        res = rd_fhn.run(start, settings.coeffs, settings.dt, settings.t_end, settings.sample_every, grid)
    except NUMERICAL_ERRORS as err:
        return k, None, None, None, f"{type(err).__name__}: {err}"
    try:
        c = tips.classify(res.tips, settings.transient_fraction)
    except NUMERICAL_ERRORS as err:
        return k, res.tips, None, res.fields, f"{type(err).__name__}: {err}"
    return k, res.tips, c.to_dict(), res.fields, None


def _conjugate_pairs(ics, results) -> list:
    """Distance between R^d anchor_i and anchor_j for runs started d quarter turns apart."""
    pairs = []
    for i, a in enumerate(ics):
        for j in range(i + 1, len(ics)):
            b = ics[j]
            ca, cb = results[i], results[j]
            if a.offset != b.offset or ca is None or cb is None or ca["anchor"] is None or cb["anchor"] is None:
                continue
            d = (b.quarter_turns - a.quarter_turns) % 4
            image = rotation(d * np.pi / 2) @ np.array(ca["anchor"])
            pairs.append({"runs": [i, j], "quarter_turns": d,
                          "conjugacy_distance": float(np.linalg.norm(image - np.array(cb["anchor"])))})
    return pairs


def cmd_pde_run(cfg: ExperimentConfig, args) -> int:
    _expect_mode(cfg, "pde")
    settings = cfg.pde
    over = {}
    if getattr(args, "n", None):
        over["n"] = args.n
    if getattr(args, "t_end", None):
        over["t_end"] = args.t_end
    if getattr(args, "settle", None) is not None:
        over["settle_time"] = args.settle
    if over:
        settings = replace(settings, **over)
        if settings.n < 50 or settings.t_end <= 0:
            raise ValidationError("override needs n >= 50 and t_end > 0")
    ics = settings.initial
    if getattr(args, "runs", None):
        try:
            ics = [ics[int(i)] for i in args.runs.split(",")]
        except (ValueError, IndexError):
            raise UsageError(f"--runs must list indices below {len(settings.initial)}") from None
    out = _out_dir(cfg, args.out)
    tasks = [(k, settings, ic) for k, ic in enumerate(ics)]
    jobs = max(1, getattr(args, "jobs", 1) or 1)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_pde_single, tasks))
    else:
        results = [_pde_single(t) for t in tasks]
    summary = {"coefficients": dict(zip(("A1", "B1", "C1", "A2", "B2", "C2"), settings.coeffs.as_tuple())),
               "n": settings.n, "dt": settings.dt, "t_end": settings.t_end, "settle_time": settings.settle_time,
               "runs": []}
    failed = False
    classes = []
    for (k, traj, cdict, fields, err), ic in zip(results, ics):
        entry = {"index": k, "initial": ic.label(), "classification": cdict, "error": err}
        if traj is not None:
            traj.to_csv(out / f"tips_{k}.csv")
            entry["tips"] = f"tips_{k}.csv"
        if cdict is not None:
            _dump(cdict, out / f"classification_{k}.json")
        if fields is not None and settings.snapshot:
            rd_fhn.save_snapshot(out / f"snapshot_{k}.bin", fields)
        failed |= err is not None
        classes.append(cdict)
        summary["runs"].append(entry)
    summary["conjugate_pairs"] = _conjugate_pairs(ics, classes)
    sys.stdout.write(_dump(summary, out / "summary.json"))
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_tip_analyze(args) -> int:
    path = Path(args.tips)
    if not path.is_file():
        raise UsageError(f"no such tip file: {path}")
    traj = tips.TipTrajectory.from_csv(path)
    c = tips.classify(traj, args.transient)
    out = _dump(c.to_dict(), Path(args.out) if args.out else None)
    sys.stdout.write(out)
    return EXIT_OK


def cmd_analyze_config(cfg: ExperimentConfig, args) -> int:
    ns = argparse.Namespace(tips=cfg.tips_path, transient=cfg.analysis_transient,
                            out=str(_out_dir(cfg, args.out) / "classification.json") if (args.out or cfg.output_dir) else None)
    return cmd_tip_analyze(ns)


def cmd_repro(args) -> int:
    if args.preset not in PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}; available presets: {', '.join(PRESETS)}")
    cfg = load_preset(args.preset)
    if args.out is None:
        args.out = cfg.output_dir
    if cfg.mode == "ode":
        return cmd_ode_run(cfg, args)
    return cmd_pde_run(cfg, args)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spiralanchor", description="Spiral anchoring on square-lattice inhomogeneities.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def config_cmd(name, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("config", help="configuration file")
        s.add_argument("--out", help="output directory (default from the config)")
        return s

    config_cmd("validate", "check a configuration and the Z4 symmetry of its perturbation")
    config_cmd("ode-run", "integrate the centre-bundle equations")
    config_cmd("average", "first-order averaged field, equilibria and M zeros")
    config_cmd("predict", "anchored / meander / travelling-wave prediction")
    s = config_cmd("pde-run", "FitzHugh-Nagumo runs with tip tracking")
    _pde_overrides(s)
    config_cmd("analyze", "classify a tip file named in an analyze config")

    s = sub.add_parser("tip-analyze", help="classify a tip trajectory CSV")
    s.add_argument("tips", help="CSV with columns t,x,y")
    s.add_argument("--transient", type=float, default=0.5, help="fraction of samples discarded (default 0.5)")
    s.add_argument("--out", help="write the JSON here as well")

    s = sub.add_parser("repro", help=f"run a bundled preset ({', '.join(PRESETS)})")
    s.add_argument("preset")
    s.add_argument("--out", help="output directory (default: preset name)")
    _pde_overrides(s)
    return p


def _pde_overrides(s):
    s.add_argument("--n", type=int, help="grid points per side")
    s.add_argument("--t-end", type=float, dest="t_end", help="run length after spawning")
    s.add_argument("--settle", type=float, help="spawn settling time")
    s.add_argument("--runs", help="comma-separated initial-condition indices")
    s.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")


CONFIG_COMMANDS = {
    "validate": cmd_validate,
    "ode-run": cmd_ode_run,
    "average": cmd_average,
    "predict": cmd_predict,
    "pde-run": cmd_pde_run,
    "analyze": cmd_analyze_config,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        if args.command == "tip-analyze":
            return cmd_tip_analyze(args)
        if args.command == "repro":
            return cmd_repro(args)
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise UsageError(f"no such config file: {cfg_path}")
        cfg = load_config(cfg_path)
        return CONFIG_COMMANDS[args.command](cfg, args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValidationError, averaging.PreconditionError) as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as err:
        print(f"numerical failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run_cli())
