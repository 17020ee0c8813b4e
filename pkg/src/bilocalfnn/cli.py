"""Command-line front end.

Exit codes: 0 success, 2 invalid input or configuration, 3 behavior fails
normalization, 4 optimizer failure, 5 classifier failure, 6 attack failure.
Results go to stdout (or ``--out``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .exceptions import BilocalError, InputError
from .qstate import DEFAULT_TOL, Povm, QuantumState, werner
from .simulation import (
    OPTIMAL_SEPARABLE,
    TABLE_ONE,
    AngleSet,
    Behavior,
    CentralConfig,
    Strategy,
    behavior,
    pi_fraction,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NORMALIZATION = 3
EXIT_OPTIMIZER = 4
EXIT_CLASSIFIER = 5
EXIT_ATTACK = 6

log = logging.getLogger("bilocalfnn")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration files

class _Config:
    """Parsed mapping plus the source line of every key, for error messages."""

    def __init__(self, data: dict, lines: dict, path: str):
        self.data, self.lines, self.path = data, lines, path

    def where(self, *keys: str) -> str:
        line = self.lines.get(tuple(keys))
        return f"{self.path}:{line}" if line else self.path

    def fail(self, message: str, *keys: str) -> CliError:
        return CliError(f"{self.where(*keys)}: {message}")

    def get(self, *keys: str, default=None):
        node: Any = self.data
        for k in keys:
            if not isinstance(node, dict) or k not in node:
                return default
            node = node[k]
        return node


def _key_lines(node, prefix=()) -> dict:
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (str(k.value),)
            out[key] = k.start_mark.line + 1
            out.update(_key_lines(v, key))
    return out


def load_config(path: str | None) -> _Config:
    if path is None:
        return _Config({}, {}, "<flags>")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise CliError(f"{path}{line}: malformed config: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise CliError(f"{path}:1: config must be a mapping")
    return _Config(data, _key_lines(node), path)


def _number(cfg: _Config, value, *keys: str, lo: float | None = 0.0, hi: float | None = 1.0) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise cfg.fail(f"'{'.'.join(keys)}' must be a number, got {value!r}", *keys) from None
    if (lo is not None and v < lo) or (hi is not None and v > hi) or not np.isfinite(v):
        raise cfg.fail(f"'{'.'.join(keys)}' must lie in [{lo}, {hi}], got {v!r}", *keys)
    return v


def _angles(cfg: _Config) -> AngleSet:
    spec = cfg.get("angles", default="optimal")
    if isinstance(spec, str):
        named = {"optimal": OPTIMAL_SEPARABLE, "table1": TABLE_ONE}
        if spec not in named:
            raise cfg.fail(f"unknown angle set {spec!r} (use {sorted(named)} or a mapping)", "angles")
        return named[spec]
    if not isinstance(spec, dict):
        raise cfg.fail("'angles' must be a name or a mapping of angle fields", "angles")
    names = AngleSet.names()
    unknown = set(spec) - set(names)
    if unknown:
        raise cfg.fail(f"unknown angle fields {sorted(unknown)}", "angles")
    missing = [n for n in names if n not in spec]
    if missing:
        raise cfg.fail(f"missing angle fields {missing}", "angles")
    values = {}
    for n in names:
        try:
            values[n] = pi_fraction(spec[n])
        except (InputError, ValueError, TypeError) as exc:
            raise cfg.fail(f"malformed angle {n}={spec[n]!r}: {exc}", "angles", n) from None
    return AngleSet(**values)


def _matrix(cfg: _Config, value, *keys: str) -> np.ndarray:
    try:
        m = np.array([[complex(str(v).replace(" ", "")) for v in row] for row in value])
    except (TypeError, ValueError):
        raise cfg.fail(f"'{'.'.join(keys)}' must be a 4x4 matrix of numbers", *keys) from None
    if m.shape != (4, 4):
        raise cfg.fail(f"'{'.'.join(keys)}' must be 4x4, got shape {m.shape}", *keys)
    return m


def _source(cfg: _Config, name: str, nu_default: float) -> QuantumState:
    raw = cfg.get(name)
    if raw is None:
        nu = _number(cfg, cfg.get(f"nu{name[-1]}", default=nu_default), f"nu{name[-1]}")
        return werner(nu)
    try:
        return QuantumState(_matrix(cfg, raw, name))
    except InputError as exc:
        raise cfg.fail(f"invalid source state: {exc}", name) from None


def strategy_from_config(cfg: _Config, args: argparse.Namespace | None = None) -> Strategy:
    nu = cfg.get("nu", default=getattr(args, "nu", None) or 0.0)
    nu = _number(cfg, nu, "nu")
    rho1, rho2 = _source(cfg, "rho1", nu), _source(cfg, "rho2", nu)
    central = cfg.get("central", default={}) or {}
    if not isinstance(central, dict):
        raise cfg.fail("'central' must be a mapping", "central")
    mode = central.get("mode", "feedback")
    if mode == "feedback":
        vals = {}
        for k, d in (("p", 0.5), ("alpha0", 1.0), ("alpha1", 1.0)):
            default = getattr(args, k, None)
            vals[k] = _number(cfg, central.get(k, d if default is None else default), "central", k)
        conf = CentralConfig("feedback", **vals)
    elif mode == "explicit":
        if "pi0" not in central:
            raise cfg.fail("explicit central mode needs 'pi0'", "central")
        p0 = _matrix(cfg, central["pi0"], "central", "pi0")
        conf = CentralConfig.explicit(Povm((p0, np.eye(4) - p0), (0, 1)))
    else:
        raise cfg.fail(f"central mode must be 'feedback' or 'explicit', got {mode!r}", "central", "mode")
    return Strategy(rho1, rho2, _angles(cfg), conf)


# ---------------------------------------------------------------------------
# output helpers

def _header(args, extra: dict | None = None) -> str:
    fields = {"artifact": __version__, "command": args.command, "seed": args.seed,
              "tol": args.tol, "workers": args.workers}
    fields.update(extra or {})
    return "# " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n"


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _grid(text: str) -> list[float]:
    """``start:stop:count`` or a comma-separated list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return [float(v) for v in np.linspace(float(a), float(b), int(n))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"malformed grid {text!r}; use start:stop:count or a comma list") from None


def _read_behavior(path: str, tol: float) -> Behavior:
    try:
        text = Path(path).read_text() if path != "-" else sys.stdin.read()
    except OSError as exc:
        raise CliError(f"{path}: cannot read behavior: {exc.strerror}") from None
    try:
        beh = Behavior.from_json(text)
    except InputError as exc:
        raise CliError(f"{path}: {exc}") from None
    try:
        beh.check(tol)
    except InputError as exc:
        raise CliError(f"{path}: {exc}", EXIT_NORMALIZATION) from None
    return beh


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    strategy = strategy_from_config(cfg, args)
    beh = behavior(strategy)
    try:
        beh.check(args.tol)
    except InputError as exc:
        raise CliError(str(exc), EXIT_NORMALIZATION) from None
    _emit(args, beh.to_json(indent=1) + "\n")
    return EXIT_OK


def cmd_witness(args) -> int:
    from .witness import fnn_values

    beh = _read_behavior(args.behavior, args.tol)
    _emit(args, json.dumps(fnn_values(beh).to_dict(), indent=1) + "\n")
    return EXIT_OK


def _opt_config(args):
    from .optimize import OptimizationConfig

    try:
        return OptimizationConfig(restarts=args.restarts, seed=args.seed, workers=args.workers,
                                  convergence_tol=args.tol)
    except InputError as exc:
        raise CliError(str(exc)) from None


def cmd_optimize(args) -> int:
    from . import optimize as opt

    cfg = _opt_config(args)
    try:
        if args.mode == "separable":
            r = opt.optimize_separable(args.nu, cfg)
            out = {"mode": "separable", "nu": args.nu, "best_value": r.best_value,
                   "fnn1": r.fnn[0], "fnn2": r.fnn[1],
                   "angles": dict(zip(AngleSet.names(), r.best_angles.as_array().tolist())),
                   "evaluations": r.evaluations, "seed": args.seed}
        elif args.mode == "entangled":
            r = opt.optimize_entangled(args.nu, cfg)
            p0 = r.best_povm
            out = {"mode": "entangled", "nu": args.nu, "best_value": r.best_value,
                   "fnn1": r.fnn[0], "fnn2": r.fnn[1], "outer": r.best_outer.tolist(),
                   "pi0_real": p0.real.tolist(), "pi0_imag": p0.imag.tolist(),
                   "evaluations": r.evaluations, "seed": args.seed}
        else:
            lo, hi = opt.noise_threshold(cfg)
            out = {"mode": "threshold", "nu_lower": lo, "nu_upper": hi, "seed": args.seed}
    except InputError as exc:
        raise CliError(str(exc)) from None
    except BilocalError as exc:
        raise CliError(f"optimizer failed: {exc}", EXIT_OPTIMIZER) from None
    _emit(args, json.dumps(out, indent=1) + "\n")
    return EXIT_OK


_SWEEP_MODES = {"fixed": "separable_fixed_angles", "reopt": "separable_reopt",
                "entangled": "entangled"}


def cmd_sweep(args) -> int:
    from . import optimize as opt

    cfg = _opt_config(args)
    grid = _grid(args.nu_grid)
    try:
        rows = opt.sweep_fnn(grid, _SWEEP_MODES[args.mode], cfg)
    except InputError as exc:
        raise CliError(str(exc)) from None
    except BilocalError as exc:
        raise CliError(f"optimizer failed: {exc}", EXIT_OPTIMIZER) from None
    text = _header(args, {"mode": args.mode, "restarts": args.restarts})
    text += opt.sweep_csv(rows)
    crossing = _crossing([r.nu for r in rows], [min(r.fnn1, r.fnn2) for r in rows])
    if crossing is not None:
        text += f"# crossing_nu={crossing!r}\n"
    _emit(args, text)
    return EXIT_OK


def _crossing(xs, ys, level: float = 1.0):
    """Linear interpolation of the first downward crossing of ``level``."""
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        if y0 > level >= y1:
            return x0 + (y0 - level) * (x1 - x0) / (y0 - y1)
    return None


def cmd_classify(args) -> int:
    from .classifier import classify

    beh = _read_behavior(args.behavior, args.tol)
    try:
        r = classify(beh, delta=args.delta, method=args.method)
    except InputError as exc:
        raise CliError(str(exc)) from None
    except BilocalError as exc:
        raise CliError(f"classifier failed: {exc}", EXIT_CLASSIFIER) from None
    _emit(args, json.dumps(r.to_dict(), indent=1) + "\n")
    return EXIT_OK


def cmd_region_map(args) -> int:
    from .classifier import region_map

    p_grid, a_grid = _grid(args.p_grid), _grid(args.alpha_grid)
    try:
        pts = region_map(p_grid, a_grid, alpha0=args.alpha0, nu=args.nu,
                         workers=args.workers, delta=args.delta)
    except InputError as exc:
        raise CliError(str(exc)) from None
    except BilocalError as exc:
        raise CliError(f"classifier failed: {exc}", EXIT_CLASSIFIER) from None
    text = _header(args, {"alpha0": args.alpha0, "nu": args.nu, "delta": args.delta})
    text += _csv([pt.row() for pt in pts], ["p", "alpha", "t_full", "t_left", "t_right", "label"])
    _emit(args, text)
    return EXIT_OK


def cmd_attack(args) -> int:
    from . import optimize as opt
    from . import randomness as rnd

    grid = _grid(args.nu_grid) if args.nu_grid else [args.nu]
    cfg = opt.OptimizationConfig(restarts=args.restarts, seed=args.seed, max_iterations=2)
    try:
        if args.central == "entangled":
            ent = opt.optimize_entangled(0.0, opt.OptimizationConfig(restarts=2, seed=args.seed))
            family = lambda nu: opt.entangled_strategy(ent, nu)  # noqa: E731
        else:
            cfgfile = load_config(args.config)
            base = strategy_from_config(cfgfile, args)
            family = lambda nu: Strategy(werner(nu), werner(nu), base.angles, base.central)  # noqa: E731
        rows = rnd.entropy_sweep(family, grid, args.scenario, args.target, cfg)
    except CliError:
        raise
    except InputError as exc:
        raise CliError(str(exc)) from None
    except BilocalError as exc:
        raise CliError(f"attack failed: {exc}", EXIT_ATTACK) from None
    text = _header(args, {"scenario": args.scenario, "target": args.target,
                          "central": args.central, "restarts": args.restarts})
    text += rnd.entropy_csv(rows)
    _emit(args, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON strategy/run config")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out", metavar="PATH", help="write results here instead of stdout")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL,
                        help=f"numerical tolerance (default {DEFAULT_TOL})")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="bilocalfnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="behavior JSON of a strategy")
    p.add_argument("--nu", type=float, help="Werner noise of both sources")
    p.add_argument("--p", type=float, help="feedback direction weight")
    p.add_argument("--alpha0", type=float)
    p.add_argument("--alpha1", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("witness", parents=[common], help="witness report of a behavior file")
    p.add_argument("behavior", help="behavior JSON file ('-' for stdin)")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("optimize", parents=[common], help="maximize the simultaneous violation")
    p.add_argument("--mode", choices=("separable", "entangled", "threshold"), default="separable")
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--restarts", type=int, default=64)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common], help="witness values along a noise grid")
    p.add_argument("--mode", choices=tuple(_SWEEP_MODES), default="reopt")
    p.add_argument("--nu-grid", default="0:0.1:11")
    p.add_argument("--restarts", type=int, default=4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("classify", parents=[common], help="locality robustness and label")
    p.add_argument("behavior", help="behavior JSON file ('-' for stdin)")
    p.add_argument("--delta", type=float, default=5e-3)
    p.add_argument("--method", choices=("pinned", "seesaw"), default="pinned")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("region-map", parents=[common], help="labels over a (p, alpha1) grid")
    p.add_argument("--p-grid", default="0:1:21")
    p.add_argument("--alpha-grid", default="0:1:21")
    p.add_argument("--alpha0", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=5e-3)
    p.set_defaults(func=cmd_region_map)

    p = sub.add_parser("attack", parents=[common], help="eavesdropper attack bounds")
    p.add_argument("--scenario", choices=("SE", "DE"), default="SE")
    p.add_argument("--target", choices=("AC", "ABC"), default="AC")
    p.add_argument("--central", choices=("separable", "entangled"), default="separable")
    p.add_argument("--nu", type=float, default=0.0)
    p.add_argument("--nu-grid", help="start:stop:count or comma list (overrides --nu)")
    p.add_argument("--restarts", type=int, default=2)
    p.set_defaults(func=cmd_attack)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    if not args.tol > 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
