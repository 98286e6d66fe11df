"""Command-line interface.

Exit codes: 0 success, 2 invalid input or configuration, 3 failed verification.

Input CSVs carry feature columns ``x0, x1, ...``, a ``score`` column and
optional 0/1 group columns ``g_<name>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import BOUND_KINDS, BoundQuery, compute_bound
from .conformal import (
    CORRECTIONS,
    calibrate_adaptive,
    calibrate_static,
    calibrate_two_sided,
    rule_from_json,
    rule_to_json,
)
from .coverage import evaluate_coverage
from .errors import ConformalError
from .features import feature_map_from_spec
from .fullconf import calibrate_full_grid
from .harness.experiments import EXPERIMENTS, METHODS, ExperimentConfig, run_experiment
from .harness.records import atomic_write, emit_summary, summary_to_csv
from .harness.verify import VERIFY_KINDS, verify_bound
from .qr import CalibrationSample
from .scores import JitterSpec

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 2, 3

log = logging.getLogger("condcover")


class UsageError(Exception):
    pass


def read_points_csv(path) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """(X, scores, groups) from a CSV with x*, score and optional g_* columns."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError(f"{path}: no data rows")
    cols = list(rows[0].keys())
    if "score" not in cols:
        raise UsageError(f"{path}: missing 'score' column")
    xcols = sorted((c for c in cols if c.startswith("x") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    gcols = [c for c in cols if c.startswith("g_")]
    try:
        X = np.array([[float(r[c]) for c in xcols] for r in rows]).reshape(len(rows), len(xcols))
        s = np.array([float(r["score"]) for r in rows])
        groups = {c[2:]: np.array([float(r[c]) for r in rows]) != 0 for c in gcols}
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return X, s, groups


def _features(X: np.ndarray, fmap) -> np.ndarray:
    if fmap is not None:
        return fmap.transform(X)
    if X.shape[1] == 0:
        return np.ones((X.shape[0], 1))
    return X


def _cmd_calibrate(args) -> int:
    X, s, _ = read_points_csv(args.scores)
    fmap = None
    if args.feature_map:
        params = json.loads(args.feature_params) if args.feature_params else {}
        fmap = feature_map_from_spec(args.feature_map, params)
    if args.method == "static":
        rule = calibrate_static(s, args.alpha, score_kind=args.score_kind)
    else:
        sample = CalibrationSample(_features(X, fmap), s)
        if args.method == "adaptive":
            jitter = JitterSpec.for_scores(s, args.seed) if args.jitter else None
            rule = calibrate_adaptive(sample, args.alpha, args.correction, jitter,
                                      feature_map=fmap, score_kind=args.score_kind)
        elif args.method == "two-sided":
            rule = calibrate_two_sided(sample, args.alpha, args.correction, feature_map=fmap)
        else:
            rule = calibrate_full_grid(sample, args.alpha, args.grid_points, feature_map=fmap,
                                       score_kind=args.score_kind)
    text = rule_to_json(rule)
    if args.out:
        atomic_write(args.out, text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    rule = rule_from_json(Path(args.rule).read_text())
    X, s, groups = read_points_csv(args.test)
    F = np.zeros((s.size, 1)) if rule.kind == "static" else _features(X, rule.feature_map)
    rng = np.random.default_rng(args.seed) if rule.jitter is not None else None
    report = evaluate_coverage(rule, F, s, groups, rng=rng)
    text = report.to_json() if args.format == "json" else report.to_csv()
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    for name in report.empty_groups:
        log.warning("group %s has no test points", name)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
    doc.setdefault("experiment", args.experiment)
    if doc["experiment"] != args.experiment:
        raise UsageError(f"config is for {doc['experiment']!r}, not {args.experiment!r}")
    overrides = {
        "trials": args.trials, "alpha_des": args.alpha, "corrections": args.correction,
        "methods": args.methods, "seed": args.seed, "output_path": args.out,
        "settings": args.settings, "workers": args.workers, "grid_points": args.grid_points,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig.from_dict(doc)
    records = run_experiment(cfg)
    if not records:
        log.warning("no records produced (every cell was skipped)")
        return EXIT_OK
    summary = summary_to_csv(emit_summary(records))
    if args.summary:
        atomic_write(args.summary, summary)
    elif not cfg.output_path:
        sys.stdout.write(summary)
    log.info("%d records", len(records))
    return EXIT_OK


def _cmd_bounds(args) -> int:
    q = BoundQuery(
        n=args.n, d=args.d, alpha=args.alpha, delta=args.delta, gamma=args.gamma, t=args.t,
        b_phi=args.b_phi, b_phi_u=args.b_phi_u, group_mass=args.group_mass, mean_w=args.mean_w, c=args.c,
    )
    print(json.dumps({"kind": args.kind, **compute_bound(args.kind, q)}, indent=2))
    return EXIT_OK


def _parse_param(text: str):
    key, sep, raw = text.partition("=")
    if not sep:
        raise UsageError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def _cmd_verify(args) -> int:
    params = dict(_parse_param(p) for p in args.param or [])
    if args.alpha is not None:
        params.setdefault("alpha", args.alpha)
    verdict = verify_bound(args.kind, params, args.trials, args.seed)
    text = json.dumps(verdict.as_dict(), indent=2)
    if args.out:
        atomic_write(args.out, text + "\n")
    print(text)
    return EXIT_OK if verdict.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condcover", description="Split conformal calibration and coverage diagnostics.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="fit a rule from a scores CSV and write rule JSON")
    c.add_argument("scores", help="CSV with x*, score columns")
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--method", choices=METHODS, default="adaptive")
    c.add_argument("--correction", choices=CORRECTIONS, default="none")
    c.add_argument("--feature-map", help="feature map name applied to the x* columns (default: use them as is)")
    c.add_argument("--feature-params", help="JSON object of feature map parameters")
    c.add_argument("--score-kind", choices=("absolute", "signed"))
    c.add_argument("--jitter", action="store_true", help="jitter scores before fitting (adaptive only)")
    c.add_argument("--grid-points", type=int, default=512)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=_cmd_calibrate)

    e = sub.add_parser("evaluate", help="rule JSON + test CSV -> coverage report")
    e.add_argument("rule")
    e.add_argument("test")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    s.add_argument("experiment", choices=EXPERIMENTS)
    s.add_argument("--config", help="JSON file with ExperimentConfig fields")
    s.add_argument("--trials", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--correction", nargs="+", choices=CORRECTIONS)
    s.add_argument("--methods", nargs="+", choices=METHODS)
    s.add_argument("--settings", nargs="+", type=_setting)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--grid-points", type=int)
    s.add_argument("--out", help="results CSV path")
    s.add_argument("--summary", help="summary CSV path")
    s.set_defaults(func=_cmd_simulate)

    b = sub.add_parser("bounds", help="evaluate a closed-form bound")
    b.add_argument("kind", choices=BOUND_KINDS)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--d", type=int, default=1)
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--delta", type=float)
    b.add_argument("--gamma", type=float)
    b.add_argument("--t", type=float, default=0.0)
    b.add_argument("--b-phi", type=float)
    b.add_argument("--b-phi-u", type=float)
    b.add_argument("--group-mass", type=float)
    b.add_argument("--mean-w", type=float)
    b.add_argument("--c", type=float)
    b.set_defaults(func=_cmd_bounds)

    v = sub.add_parser("verify", help="Monte Carlo check of a coverage guarantee")
    v.add_argument("kind", choices=VERIFY_KINDS)
    v.add_argument("--trials", type=int, default=2000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--alpha", type=float)
    v.add_argument("--param", action="append", help="key=value override, value parsed as JSON")
    v.add_argument("--out")
    v.set_defaults(func=_cmd_verify)
    return p


def _setting(text: str):
    try:
        v = float(text)
    except ValueError:
        return text
    return int(v) if v.is_integer() else v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConformalError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
