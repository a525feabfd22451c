"""Command-line interface.

Exit codes: 0 success, 1 bad flags or unparseable input, 2 output could not
be written, 3 likelihood incompatible with the model, 4 fit did not converge
(result still written), 5 proposition check did not reach its expected verdict.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import DatasetError, HierarchicalModel, Xi
from .estimation import FitOptions, FitResult, fit
from .io import (
    ConfigError,
    csv_text,
    fmt,
    load_json,
    model_causes_json,
    parse_likelihood,
    parse_model_config,
    read_dataset,
    read_model_config,
    read_theta,
    write_atomic,
    write_dataset,
    write_json,
    write_latent,
)
from .likelihood import LikelihoodKind, ModelStructureError
from .mechanisms import cause_prob, depends_on_y2
from .oracle import PROPOSITIONS, OracleConfigError, check_proposition
from .simulation import TABLE_COLUMNS, ScenarioResult, run_scenario, scenario_spec, simulate

EXIT_OK, EXIT_USAGE, EXIT_WRITE, EXIT_INCOMPATIBLE, EXIT_NOT_CONVERGED, EXIT_POLARITY = range(6)

TABLE_LABELS = {"p1": "p"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _write(fn, *args) -> None:
    try:
        fn(*args)
    except OSError as exc:
        raise _WriteFailure(str(exc)) from None


class _WriteFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = read_model_config(args.model_file)
    if args.theta_file:
        theta = read_theta(args.theta_file)
    elif cfg.theta is not None:
        theta = cfg.theta
    else:
        raise ConfigError(f"{args.model_file}: theta: missing (give --theta-file or a theta block)")
    if not isinstance(cfg.model, HierarchicalModel):
        raise ConfigError(f"{args.model_file}: structure: simulation needs a hierarchical model")
    if args.n < 1:
        raise ConfigError("--n must be positive")
    sample = simulate(theta, cfg.model, args.n, np.random.default_rng(args.seed))
    _write(write_dataset, args.out, sample.dataset)
    if args.latent_out:
        _write(write_latent, args.latent_out, sample.dataset, sample.latent_y2)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def fit_result_json(res: FitResult) -> dict:
    return {
        "likelihood": res.kind.value.replace("_", "-"),
        "structure": "hierarchical" if isinstance(res.model, HierarchicalModel) else "flat",
        "causes_known": res.causes_known,
        "converged": res.converged,
        "message": res.message,
        "loglik": res.loglik,
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "estimates": dict(res.estimates),
        "theta": res.theta.to_dict(),
        "causes": model_causes_json(res.model),
        "hessian": None if res.hessian is None else res.hessian.to_dict(),
    }


def cmd_fit(args) -> int:
    cfg = read_model_config(args.model_file)
    data = read_dataset(args.data, cfg.model.cause_count).dataset
    if args.likelihood is not None:
        kind = parse_likelihood(args.likelihood, "--likelihood")
    else:
        kind = cfg.likelihood or LikelihoodKind.FULL
    start = Xi(cfg.theta, cfg.model) if cfg.theta is not None else None
    try:
        res = fit(cfg.model, kind, data, FitOptions(probe=args.probe, start=start),
                  causes_known=not args.unknown_causes)
    except ModelStructureError as exc:
        return _fail(EXIT_INCOMPATIBLE, str(exc))
    except DatasetError as exc:
        raise ConfigError(f"{args.data}: {exc}") from None
    _write(write_json, args.out, fit_result_json(res))
    if not res.converged:
        return _fail(EXIT_NOT_CONVERGED, f"fit did not converge: {res.message}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# scenario


def scenario_files(result: ScenarioResult) -> dict:
    """File name -> text for a finished scenario run."""
    est = csv_text(("rep", "arm", "parameter", "estimate", "converged"),
                   ((r.rep, r.arm, r.parameter, fmt(r.estimate), str(r.converged).lower())
                    for r in result.records))
    header = ("arm",) + tuple(TABLE_LABELS.get(c, c) for c in TABLE_COLUMNS)
    rows = []
    for arm in result.arms:
        table = result.rmse.get(arm, {})
        rows.append((arm,) + tuple(fmt(table[c]) if c in table else "x" for c in TABLE_COLUMNS))
    rmse = csv_text(header, rows)
    box = csv_text(("arm", "parameter", "rep", "estimate"),
                   ((r.arm, r.parameter, r.rep, fmt(r.estimate)) for r in result.records if r.converged))
    spec = result.spec
    summary = {
        "scenario": spec.id, "n": spec.n, "reps": spec.reps, "seed": spec.seed,
        "truth": spec.truth(),
        "rmse": result.rmse, "bias": result.bias,
        "excluded_nonconverged": result.excluded, "failed": result.failed,
        "mean_pattern_proportions": [float(v) for v in result.pattern_props],
    }
    return {"estimates.csv": est, "rmse.csv": rmse, "boxplot.csv": box,
            "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n"}


def cmd_scenario(args) -> int:
    if args.reps < 1 or args.n < 10 or args.workers < 1:
        raise UsageError("--reps and --workers must be positive and --n at least 10")
    arms = tuple(a for a in args.arms.split(",") if a)
    try:
        spec = scenario_spec(args.id, n=args.n, reps=args.reps, seed=args.seed, arms=arms)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_scenario(spec, workers=args.workers)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _WriteFailure(str(exc)) from None
    for name, text in scenario_files(result).items():
        _write(write_atomic, out / name, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    try:
        verdict = check_proposition(args.prop)
    except OracleConfigError as exc:
        raise ConfigError(str(exc)) from None
    doc = verdict.to_dict()
    if args.out:
        _write(write_json, args.out, doc)
    else:
        print(json.dumps(doc, indent=2))
    if not verdict.matches_expectation:
        return _fail(EXIT_POLARITY, f"proposition {args.prop}: expected holds={verdict.expected_polarity}, "
                                    f"got holds={verdict.holds}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# curves


def parse_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--grid must be lo:hi:steps, got {text!r}")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"--grid must be lo:hi:steps, got {text!r}") from None
    if steps < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise UsageError("--grid needs finite bounds and steps >= 1")
    return np.linspace(lo, hi, steps)


def cmd_curves(args) -> int:
    grid = parse_grid(args.grid)
    doc = load_json(args.fit)
    try:
        model = parse_model_config({"structure": doc.get("structure", "hierarchical"),
                                    "causes": doc["causes"]}).model
        estimates = doc["estimates"]
    except (KeyError, TypeError, AttributeError):
        raise ConfigError(f"{args.fit}: not a fit result (needs causes and estimates)") from None
    except ConfigError as exc:
        raise ConfigError(f"{args.fit}: {exc}") from None
    mech = model.causes[0]
    if depends_on_y2(mech):
        raise ConfigError(f"{args.fit}: causes[0]: cause 1 depends on y2, no curve in y1 alone")
    if not any(name.startswith(("p1", "tau1")) for name in estimates):
        raise ConfigError(f"{args.fit}: estimates: cause 1 was not estimated by this fit")
    prob = np.broadcast_to(cause_prob(mech, grid), grid.shape)
    header = ("y1", "p_cause1")
    rows = [(fmt(y), fmt(p)) for y, p in zip(grid, prob)]
    if args.reference_p is not None:
        if not 0.0 < args.reference_p < 1.0:
            raise UsageError("--reference-p must lie in (0, 1)")
        header += ("reference_p",)
        rows = [r + (fmt(args.reference_p),) for r in rows]
    _write(write_atomic, args.out, csv_text(header, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multicause", description="ML inference for bivariate data with cause-coded missingness.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a dataset from a model config")
    s.add_argument("--theta-file", help="JSON theta (defaults to the model file's theta block)")
    s.add_argument("--model-file", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--latent-out", help="also write every record's true y2")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="maximum-likelihood fit of a dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--model-file", required=True)
    f.add_argument("--likelihood", choices=("full", "semi-direct", "direct"))
    f.add_argument("--unknown-causes", action="store_true",
                   help="treat every missing record as one pattern with unrecorded cause")
    f.add_argument("--probe", action="store_true", help="add the Hessian spectrum at the optimum")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("scenario", help="Monte Carlo study for scenario i, ii or iii")
    c.add_argument("--id", required=True, choices=("i", "ii", "iii"))
    c.add_argument("--reps", type=int, default=500)
    c.add_argument("--n", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--arms", default="known,unknown", help="comma list of known,unknown")
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out-dir", required=True)
    c.set_defaults(func=cmd_scenario)

    v = sub.add_parser("verify", help="check an ignorability proposition by exact enumeration")
    v.add_argument("--prop", required=True, choices=PROPOSITIONS)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    k = sub.add_parser("curves", help="fitted cause-1 mechanism over a y1 grid")
    k.add_argument("--fit", required=True)
    k.add_argument("--grid", required=True, help="lo:hi:steps")
    k.add_argument("--reference-p", type=float)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_curves)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except _WriteFailure as exc:
        return _fail(EXIT_WRITE, f"cannot write output: {exc}")


if __name__ == "__main__":
    sys.exit(main())
