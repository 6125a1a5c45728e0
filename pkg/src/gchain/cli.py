"""Command line entry point.

Exit codes: 0 success, 2 unreadable input, 3 invariant violation,
4 failed property assertion. JSON is the canonical output; CSV flattens the
``rows`` table. Precedence: defaults < ``--config`` file < explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    LayerSummary,
    RiskBoundInput,
    TwoLayerSpec,
    deep_iterated_bound,
    multitask_bound,
    risk_report,
    two_layer_bound,
)
from .chaining import (
    SubgaussianSpec,
    build_partition_tree,
    chaining_functional,
    empirical_threshold_check,
    explicit_esup_bound,
    validate_tree,
)
from .chainrule import SuiteConfig, fit_constants, run_suite, verify_constants, write_suite
from .classes import KernelBallClass, TabulatedClass, estimate_R, lipschitz_constant, load_class
from .geometry import PointSet, diameter, estimate_G
from .montecarlo import GaussianStream, binomial_sigma

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_ASSERT = 0, 2, 3, 4


class InputError(Exception):
    pass


class AssertionFailure(Exception):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


@dataclass
class RunConfig:
    seed: int = 0
    mc_budget: int = 100_000
    trials: int = 10_000
    sigma_slack: float = 4.0
    ratio_r: float = 2.0
    output_format: str = "json"

    def validate(self):
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")
        if self.mc_budget < 2 or self.trials < 1:
            raise InputError("budget must be >= 2 and trials >= 1")
        if self.sigma_slack <= 0 or self.ratio_r < 2:
            raise InputError("slack must be positive and ratio at least 2")
        if self.output_format not in ("csv", "json"):
            raise InputError("format must be csv or json")


_FLAG_TO_FIELD = {
    "seed": "seed",
    "budget": "mc_budget",
    "trials": "trials",
    "slack": "sigma_slack",
    "ratio": "ratio_r",
    "format": "output_format",
}


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        for key, value in overrides.items():
            if key not in known:
                raise InputError(f"unknown config key {key!r}")
            setattr(cfg, key, type(getattr(cfg, key))(value))
    for flag, name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def _hash_inputs(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        data = Path(p).read_bytes()
        h.update(f"blob {len(data)}\0".encode())
        h.update(data)
    return h.hexdigest()


def _read(path, loader):
    try:
        return loader(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"invalid input in {path}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def _emit(doc: dict, cfg: RunConfig, out) -> str:
    if cfg.output_format == "json":
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    else:
        rows = _jsonable(doc.get("rows", []))
        buf = io.StringIO()
        if rows:
            cols = list(rows[0].keys())
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (json.dumps(v) if isinstance(v, (dict, list)) else v) for k, v in r.items()})
        text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return text


# ------------------------------------------------------------------ commands


def cmd_estimate(args, cfg: RunConfig) -> dict:
    rows = []
    stream = GaussianStream(cfg.seed)
    for path in args.inputs:
        if args.kind in ("G", "D"):
            Y = _read(path, PointSet.load)
            if args.kind == "D":
                rows.append({"input": path, "kind": "D", "value": diameter(Y), "std_error": None, "seed": None})
            else:
                est = estimate_G(Y, cfg.mc_budget, stream)
                rows.append({"input": path, "kind": "G", "value": est.value, "std_error": est.std_error, "seed": est.seed})
            continue
        F = _read(path, load_class)
        if isinstance(F, KernelBallClass):
            Y = _read(args.points, PointSet.load) if args.points else None
            if args.kind == "R" and Y is None:
                raise InputError("R for a kernel-ball class needs --points")
        else:
            Y = _read(args.points, PointSet.load) if args.points else F.bound_points
        if args.kind == "L":
            rows.append({"input": path, "kind": "L", "value": lipschitz_constant(F, Y), "std_error": None, "seed": None})
        else:
            est = estimate_R(F, Y, cfg.mc_budget, stream)
            rows.append({"input": path, "kind": "R", "value": est.value, "std_error": est.std_error, "seed": est.seed})
    return {"command": "estimate", "rows": rows}


def cmd_verify_chain(args, cfg: RunConfig) -> dict:
    raw = _read(args.suite_config, lambda p: json.loads(Path(p).read_text())) if args.suite_config else {}
    raw.setdefault("budget", cfg.mc_budget if args.budget is not None else SuiteConfig.budget)
    if args.kind:
        raw["kind"] = args.kind
    if args.instances:
        raw["n_instances"] = args.instances
    try:
        suite_cfg = SuiteConfig.from_dict(raw)
    except TypeError as exc:
        raise InputError(f"bad suite config: {exc}") from exc
    suite = run_suite(suite_cfg, cfg.seed)
    if args.suite_out:
        write_suite(args.suite_out, suite)
    fit = fit_constants(suite)
    failures = [{"instance": name, "reason": "fitted constants violate instance"} for name in verify_constants(suite, fit.c1, fit.c2)]
    if suite_cfg.kind == "singleton" and (fit.c1 != 0 or fit.c2 != 0):
        failures.append({"instance": fit.binding_instance, "reason": "singleton suite needs zero constants"})
    if suite_cfg.kind == "contraction":
        for t in suite:
            sigma = math.hypot(t.lhs.std_error, t.l_f * t.g_y.std_error)
            if t.lhs.value > t.l_f * t.g_y.value + cfg.sigma_slack * sigma + max(t.base.value, 0.0):
                failures.append({"instance": t.instance, "reason": "contraction inequality violated"})
    rows = [
        {"instance": t.instance, "lhs": t.lhs.value, "LG": t.lg, "DR": t.dr, "base": t.base.value, "excess": t.excess}
        for t in suite
    ]
    doc = {"command": "verify-chain", "suite_config": asdict(suite_cfg), "fit": fit.to_dict(), "failures": failures, "rows": rows}
    if failures:
        binding = next((t.to_dict() for t in suite if t.instance == failures[0]["instance"]), None)
        raise AssertionFailure("chain-rule property assertions failed", {**doc, "binding_dump": binding})
    return doc


def cmd_chaining(args, cfg: RunConfig) -> dict:
    Y = _read(args.points, PointSet.load)
    if not 0 < args.delta < 1 or args.K < 1:
        raise InputError("need 0 < delta < 1 and K >= 1")
    tree = build_partition_tree(Y, cfg.ratio_r)
    problems = validate_tree(tree, Y)
    if problems:
        raise AssertionFailure("partition tree invalid", {"problems": problems})
    stream = GaussianStream(cfg.seed)
    g = estimate_G(Y, cfg.mc_budget, stream) if len(Y) > 1 else None
    bound = explicit_esup_bound(tree, args.K)
    freq = empirical_threshold_check(Y, SubgaussianSpec(args.K), tree, args.delta, cfg.trials, stream.child(1))
    limit = args.delta + 3 * binomial_sigma(args.delta, cfg.trials)
    row = {
        "points": len(Y),
        "dim": Y.dim,
        "diameter": diameter(Y),
        "k0": tree.k0,
        "levels": tree.depth,
        "cells_finest": len(tree.levels[-1]),
        "functional": chaining_functional(tree),
        "explicit_bound": bound,
        "G_hat": 0.0 if g is None else g.value,
        "G_std_error": 0.0 if g is None else g.std_error,
        "bound_over_G": (bound / g.value) if g is not None and g.value > 0 else None,
        "delta": args.delta,
        "K": args.K,
        "exceedance": freq,
        "exceedance_limit": limit,
    }
    doc = {"command": "chaining", "rows": [row]}
    if args.tree_out:
        tree.save(args.tree_out)
    if freq >= limit:
        raise AssertionFailure("threshold exceedance above delta + 3 sigma", doc)
    return doc


def cmd_bounds(args, cfg: RunConfig) -> dict:
    spec = _read(args.spec, lambda p: json.loads(Path(p).read_text()))
    try:
        if args.which == "risk":
            reports = [risk_report(RiskBoundInput(**spec))]
        elif args.which == "two-layer":
            reports = [two_layer_bound(TwoLayerSpec.from_dict(spec), args.delta)]
        elif args.which == "multitask":
            tlist = args.T or spec.get("T") or [1]
            tlist = tlist if isinstance(tlist, list) else [tlist]
            base = TwoLayerSpec.from_dict(spec)
            reports = [multitask_bound(base, int(T), args.delta) for T in tlist]
        else:
            layers = [LayerSummary.from_dict(d) for d in spec["layers"]]
            reports = [deep_iterated_bound(layers, spec.get("c1", 1.0), spec.get("c2", 1.0))]
    except (KeyError, TypeError) as exc:
        raise InputError(f"bad spec file: {exc}") from exc
    rows = []
    for rep in reports:
        for t in rep.terms:
            rows.append({"report": rep.name, "T": rep.inputs.get("T"), "term": t.name, "value": t.value, "paper_ref": t.paper_ref})
        rows.append({"report": rep.name, "T": rep.inputs.get("T"), "term": "total", "value": rep.total, "paper_ref": ""})
    return {"command": f"bounds {args.which}", "reports": [r.to_dict() for r in reports], "rows": rows}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--budget", type=int, default=None, help="Monte Carlo samples per estimate")
    common.add_argument("--trials", type=int, default=None, help="simulated paths for tail checks")
    common.add_argument("--slack", type=float, default=None, help="sigma multiplier for statistical checks")
    common.add_argument("--ratio", type=float, default=None, help="partition ratio r >= 2")
    common.add_argument("--format", choices=["csv", "json"], default=None)
    common.add_argument("--out", default=None, help="write output here instead of stdout")
    common.add_argument("--config", default=None, help="JSON file with RunConfig fields")

    p = argparse.ArgumentParser(prog="gchain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common], help="D, G, L or R of input files")
    e.add_argument("kind", choices=["G", "R", "D", "L"])
    e.add_argument("inputs", nargs="+")
    e.add_argument("--points", default=None, help="point set for L/R (defaults to the class's bound points)")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("verify-chain", parents=[common], help="fit chain-rule constants on a generated suite")
    v.add_argument("--suite-config", default=None)
    v.add_argument("--kind", choices=["random", "singleton", "contraction"], default=None)
    v.add_argument("--instances", type=int, default=None)
    v.add_argument("--suite-out", default=None, help="JSON-lines dump of every instance")
    v.set_defaults(func=cmd_verify_chain)

    c = sub.add_parser("chaining", parents=[common], help="partition tree, chaining bounds and tail check")
    c.add_argument("points")
    c.add_argument("--K", type=float, default=1.0)
    c.add_argument("--delta", type=float, default=0.1)
    c.add_argument("--tree-out", default=None)
    c.set_defaults(func=cmd_chaining)

    b = sub.add_parser("bounds", parents=[common], help="closed-form bound calculators")
    b.add_argument("which", choices=["risk", "two-layer", "multitask", "deep"])
    b.add_argument("spec")
    b.add_argument("--delta", type=float, default=0.05)
    b.add_argument("--T", type=int, nargs="+", default=None, help="task counts for multitask")
    b.set_defaults(func=cmd_bounds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    inputs = []
    for attr in ("inputs", "points", "spec", "suite_config", "config"):
        v = getattr(args, attr, None)
        if v:
            inputs.extend(v if isinstance(v, list) else [v])
    try:
        cfg = _resolve_config(args)
        try:
            input_hash = _hash_inputs(inputs)
        except OSError as exc:
            raise InputError(str(exc)) from exc
        doc = args.func(args, cfg)
        code = EXIT_OK
    except InputError as exc:
        print(f"gchain: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except AssertionFailure as exc:
        print(f"gchain: {exc}", file=sys.stderr)
        doc, code = exc.payload, EXIT_ASSERT
    except (ValueError, ArithmeticError, IndexError) as exc:
        print(f"gchain: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    doc = {**doc, "run_config": asdict(cfg), "input_hash": input_hash, "version": __version__}
    _emit(doc, cfg, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
