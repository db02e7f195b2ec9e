"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 model/data validation failure,
3 audit threshold or scenario fact failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, report
from .counterfactual import EdgeSet, counterfactual_sample
from .dsl import ParseError, format_model, parse_model
from .expr import EvaluationError
from .metrics import (DEFAULT_BINS, DEFAULT_MIN_COUNT, IndividualFairnessConfig, calibration_gap,
                      counterfactual_fairness_gap, demographic_parity_gap, equalised_odds_gap, evidence_grid,
                      individual_fairness_report, interventional_gap, path_specific_cf_gap)
from .model import (DataError, Dataset, InterventionError, ModelError, ScmModel, sample, support,
                    intervene, validate)
from .predictors import (Predictor, predict_batch, train_counterfactually_fair,
                         train_interventional_linear, train_path_specific, train_unconstrained)
from .scenarios import REGISTRY, scenario

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_THRESHOLD = 0, 1, 2, 3
CRITERIA = ("dp", "eo", "cal", "if", "cf", "psf", "int")
REGIME_FLAGS = {"unconstrained": "unconstrained", "cf": "counterfactually-fair",
                "interventional": "interventional-constrained", "path-specific": "path-specific-fair"}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ input helpers


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _load_model(path: str) -> ScmModel:
    return parse_model(_read_text(path))


def _load_data(path: str, model: ScmModel) -> Dataset:
    if not Path(path).is_file():
        raise CliError(f"no such file: {path}")
    return Dataset.from_csv(path, model)


def _value(model: ScmModel, var: str, text: str) -> float:
    if var not in model:
        raise CliError(f"unknown variable {var!r} in {model.name}")
    try:
        return float(text)
    except ValueError:
        try:
            return float(model.decl(var).code(text))
        except KeyError:
            raise CliError(f"{text!r} is neither a number nor a label of {var}") from None


def _assignments(model: ScmModel, items: Sequence[str] | None) -> dict[str, float]:
    out: dict[str, float] = {}
    for item in items or []:
        for part in filter(None, (p.strip() for p in item.split(","))):
            if "=" not in part:
                raise CliError(f"expected VAR=VALUE, got {part!r}")
            var, val = (s.strip() for s in part.split("=", 1))
            out[var] = _value(model, var, val)
    return out


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.4f}"


# ---------------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    model = _load_model(args.model)
    rep = validate(model)
    print(f"ok: model {model.name}: {len(model.observed)} observed, {len(model.background)} background, "
          f"{len(model.edges)} edges, fingerprint {model.fingerprint()}")
    for f in rep.findings:
        print(f"  {f.code}: {f.message}")
    return EXIT_OK


def cmd_sample(args) -> int:
    model = _load_model(args.model)
    _write(sample(model, args.n, args.seed).to_csv(), args.output)
    return EXIT_OK


def cmd_intervene(args) -> int:
    model = _load_model(args.model)
    assign = _assignments(model, args.set)
    if not assign:
        raise CliError("intervene needs at least one --set VAR=VALUE")
    data = sample(intervene(model, assign), args.n, args.seed)
    _write(data.to_csv(), args.output)
    if args.output not in (None, "-"):
        means = ", ".join(f"{c}={data.column(c).mean():.4f}" for c in model.observed)
        print(f"do({', '.join(f'{k}={v:g}' for k, v in assign.items())}): means {means}")
    return EXIT_OK


def cmd_counterfactual(args) -> int:
    model = _load_model(args.model)
    evidence = _assignments(model, args.evidence)
    action = _assignments(model, args.do)
    if not action:
        raise CliError("counterfactual needs --do VAR=VALUE")
    data = counterfactual_sample(model, evidence, action, args.n, args.seed)
    _write(data.to_csv(), args.output)
    return EXIT_OK


def _thresholds(items: Sequence[str] | None) -> dict[str, float]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise CliError(f"expected CRITERION=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        if k not in CRITERIA:
            raise CliError(f"unknown criterion {k!r}; choose from {', '.join(CRITERIA)}")
        try:
            out[k] = float(v)
        except ValueError:
            raise CliError(f"threshold for {k} is not a number: {v!r}") from None
    return out


def _levels(model: ScmModel, text: str | None, attr: str) -> list[float] | None:
    if text:
        return [_value(model, attr, t.strip()) for t in text.split(",")]
    return None


def cmd_audit(args) -> int:
    model = _load_model(args.model)
    data = _load_data(args.data, model)
    criteria = [c.strip() for c in args.criteria.split(",") if c.strip()]
    bad = [c for c in criteria if c not in CRITERIA]
    if bad:
        raise CliError(f"unknown criteria {bad}; choose from {', '.join(CRITERIA)}")
    thresholds = _thresholds(args.threshold)
    attr = args.protected or model.protected
    if attr is None:
        raise CliError("model tags no protected variable; pass --protected")
    outcome = args.outcome or model.outcome
    if (args.pred is None) == (args.predictor is None):
        raise CliError("give exactly one of --pred COLUMN or --predictor FILE")
    warnings: list[str] = []
    predictor: Predictor | None = None
    if args.predictor:
        predictor = Predictor.from_json(_read_text(args.predictor))
        yhat = predict_batch(predictor, model, data, args.n_mc, args.seed)
        pred_name = "prediction"
        model_pred: str | Predictor = predictor
    else:
        pred_name = args.pred
        if pred_name not in data and pred_name not in model:
            raise CliError(f"{pred_name!r} is neither a data column nor a model variable")
        yhat = data.column(pred_name) if pred_name in data else None
        model_pred = pred_name
    if args.binarize is not None and yhat is not None:
        yhat = (yhat >= args.binarize).astype(float)
    table = dict(data.as_dict())
    if yhat is not None:
        table["__pred__"] = yhat
    tab = Dataset.from_columns(list(table), table)
    levels = _levels(model, args.levels, attr)
    results = []
    for crit in criteria:
        thr = thresholds.get(crit)
        try:
            if crit in ("dp", "eo", "cal"):
                if yhat is None:
                    raise ValueError(f"data has no column {pred_name!r}")
                if crit == "dp":
                    g = demographic_parity_gap(tab, "__pred__", attr, strata=args.strata or (), alpha=args.alpha)
                elif outcome is None or outcome not in data:
                    raise ValueError("equalised odds and calibration need the outcome column")
                elif crit == "eo":
                    g = equalised_odds_gap(tab, "__pred__", attr, outcome, min_count=args.min_count, alpha=args.alpha)
                else:
                    g = calibration_gap(tab, "__pred__", attr, outcome, min_count=args.min_count, alpha=args.alpha)
                for s in g.skipped:
                    warnings.append(f"{crit}: stratum {s} skipped (fewer than {args.min_count} rows)")
                detail = g.to_dict()
                results.append(report.criterion_result(crit, g.gap, threshold=thr, detail=detail))
            elif crit == "if":
                if yhat is None:
                    raise ValueError(f"data has no column {pred_name!r}")
                cols = tuple(args.if_columns.split(",")) if args.if_columns else tuple(
                    c for c in data.columns if c in model.observed and c not in (attr, outcome, pred_name))
                cfg = IndividualFairnessConfig(cols, args.if_delta, args.if_epsilon, max_rows=args.if_max_rows)
                viol = individual_fairness_report(tab, "__pred__", cfg)
                worst = viol[0].divergence if viol else 0.0
                results.append(report.criterion_result(crit, worst, threshold=thr, detail={
                    "metric": cfg.metric, "columns": list(cols), "delta": cfg.delta, "epsilon": cfg.epsilon,
                    "violations": len(viol), "top": [v.to_dict() for v in viol[:20]]}))
            elif crit in ("cf", "psf"):
                ecols = args.evidence_cols.split(",") if args.evidence_cols else [
                    c for c in model.observed if c in data]
                grid = evidence_grid(data, ecols, args.grid_cap, args.seed)
                if crit == "cf":
                    r = counterfactual_fairness_gap(model, model_pred, grid, args.n, args.seed, levels=levels,
                                                    attr=attr, bins=args.bins)
                else:
                    if not args.unfair_edge:
                        raise ValueError("psf needs at least one --unfair-edge")
                    r = path_specific_cf_gap(model, model_pred, EdgeSet(args.unfair_edge), grid, args.n,
                                             args.seed, levels=levels, attr=attr, bins=args.bins)
                if r.failed:
                    warnings.append(f"{crit}: {r.failed} evidence point(s) failed")
                detail = r.to_dict()
                results.append(report.criterion_result(crit, r.max_gap if r.ok_points else None,
                                                       threshold=thr, detail=detail))
            elif crit == "int":
                lv = levels or list(support(model, attr) or [])
                if len(lv) < 2:
                    raise ValueError(f"{attr} is continuous; pass --levels a,a'")
                gaps = [interventional_gap(model, model_pred, a, b, args.n_int, args.seed, attr=attr, bins=args.bins)
                        for i, a in enumerate(lv) for b in lv[i + 1:]]
                worst = max(gaps, key=lambda g: g.gap)
                results.append(report.criterion_result(crit, worst.gap, threshold=thr,
                                                       detail={"pairs": [g.to_dict() for g in gaps]}))
        except (ValueError, ArithmeticError, KeyError) as exc:
            msg = str(exc).strip("'\"")
            warnings.append(f"{crit}: {msg}")
            results.append(report.criterion_result(crit, None, threshold=thr, error=msg))
    rep = report.build("audit", model, seed=args.seed, results=results, warnings=warnings,
                       timestamp=not args.no_timestamp,
                       extra={"data": {"rows": len(data), "columns": list(data.columns)},
                              "prediction": pred_name if predictor is None else predictor.to_dict()})
    if args.report:
        Path(args.report).write_text(report.dumps(rep))
    for r in results:
        thr = "" if r["threshold"] is None else f" (threshold {r['threshold']:g})"
        print(f"{r['criterion']:>4}: gap {_fmt(r['gap'])} {r['status']}{thr}")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_THRESHOLD if any(r["status"] == "fail" for r in results) else EXIT_OK


def cmd_train(args) -> int:
    model = _load_model(args.model)
    data = _load_data(args.data, model)
    regime = REGIME_FLAGS[args.regime]
    target = args.target
    if regime == "unconstrained":
        pred = train_unconstrained(model, data, target, ridge=args.ridge)
    elif regime == "counterfactually-fair":
        pred = train_counterfactually_fair(model, data, target, args.n_mc, args.seed)
    elif regime == "interventional-constrained":
        pred = train_interventional_linear(model, data, target)
    else:
        pred = train_path_specific(model, data, target, EdgeSet(args.unfair_edge or []), args.n_mc, args.seed)
    _write(pred.to_json(), args.output)
    if args.output not in (None, "-"):
        terms = ", ".join(f"{f.label}={w:.4g}" for f, w in zip(pred.features, pred.weights))
        print(f"{pred.regime}: intercept={pred.intercept:.4g}; {terms}; loss={pred.diagnostics['loss']:.4g}")
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.list or not args.name:
        for name, sc in REGISTRY.items():
            print(f"{name}: {sc.summary}")
        return EXIT_OK
    try:
        sc = scenario(args.name)
    except KeyError as exc:
        raise CliError(str(exc).strip("'\"")) from None
    if args.emit_dsl:
        sys.stdout.write("".join(format_model(m) + ("\n" if i < len(sc.models) - 1 else "")
                                 for i, m in enumerate(sc.models)))
    if not args.verify:
        if not args.emit_dsl:
            print(f"{sc.name}: {sc.summary}")
            for f in sc.facts:
                print(f"  {f.key}: {f.description}")
        return EXIT_OK
    facts = sc.verify(args.seed)
    results = [dict(f.to_dict(), status="pass" if f.passed else "fail") for f in facts]
    rep = report.build("scenario", sc.model, seed=args.seed, results=results,
                       warnings=[f"{f.key}: {f.error}" for f in facts if f.error],
                       timestamp=not args.no_timestamp, extra={"scenario": sc.name})
    text = report.dumps(rep)
    if args.report:
        Path(args.report).write_text(text)
    for f in facts:
        print(f"{'PASS' if f.passed else 'FAIL'} {f.key}: observed {f.observed:.6g}, "
              f"expected {_expectation(f)} [{f.provenance}]")
    return EXIT_OK if all(f.passed for f in facts) else EXIT_THRESHOLD


def _expectation(f) -> str:
    if f.relation == "at_most":
        return f"<= {f.expected + f.tolerance:.6g}"
    if f.relation == "at_least":
        return f">= {f.expected - f.tolerance:.6g}"
    return f"{f.expected:.6g} +/- {f.tolerance:g}"


# ------------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fairscm", description="Structural causal models, counterfactuals and fairness audits.")
    p.add_argument("--version", action="version", version=f"fairscm {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("validate", help="parse and validate a model file")
    s.add_argument("model")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("sample", help="draw rows from a model")
    s.add_argument("model")
    s.add_argument("-n", type=int, default=1000, help="number of rows (default 1000)")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.add_argument("-o", "--output", help="CSV path (default standard output)")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("intervene", help="sample under do(VAR=VALUE)")
    s.add_argument("model")
    s.add_argument("--set", action="extend", nargs="+", metavar="VAR=VALUE", help="one or more assignments")
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", help="output path (default standard output)")
    s.set_defaults(func=cmd_intervene)

    s = sub.add_parser("counterfactual", help="sample counterfactuals given evidence")
    s.add_argument("model")
    s.add_argument("--evidence", action="extend", nargs="+", metavar="VAR=VALUE,...", help="observed values")
    s.add_argument("--do", action="extend", nargs="+", metavar="VAR=VALUE", help="counterfactual intervention")
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", help="output path (default standard output)")
    s.set_defaults(func=cmd_counterfactual)

    s = sub.add_parser("audit", help="compute fairness gaps for a prediction")
    s.add_argument("model")
    s.add_argument("--data", required=True, help="CSV with a header row")
    s.add_argument("--pred", help="prediction column or model variable")
    s.add_argument("--predictor", help="predictor record written by 'train'")
    s.add_argument("--criteria", default="dp", help=f"comma-separated subset of {','.join(CRITERIA)}")
    s.add_argument("--unfair-edge", action="extend", nargs="+", metavar="P->C", help="unfair edges for psf")
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--threshold", action="append", metavar="CRIT=VALUE", help="fail (exit 3) above this gap")
    s.add_argument("--protected", help="override the protected variable")
    s.add_argument("--outcome", help="override the outcome variable")
    s.add_argument("--strata", action="append", help="dp within strata of this column (repeatable)")
    s.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT, help="smallest group per stratum")
    s.add_argument("--alpha", type=float, default=0.0, help="Laplace pseudo-count")
    s.add_argument("--binarize", type=float, help="threshold continuous predictions at this value")
    s.add_argument("--levels", help="protected levels for cf/psf/int, comma-separated")
    s.add_argument("--evidence-cols", help="columns forming the evidence grid (default: observed)")
    s.add_argument("--grid-cap", type=int, default=256)
    s.add_argument("-n", type=int, default=1000, help="posterior draws per evidence point")
    s.add_argument("--n-int", type=int, default=100_000, help="rows per world for the interventional gap")
    s.add_argument("--n-mc", type=int, default=None, help="posterior draws per row for predictors")
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.add_argument("--if-columns", help="comma-separated columns for the individual-fairness metric")
    s.add_argument("--if-delta", type=float, default=0.1, help="distance under which rows count as similar")
    s.add_argument("--if-epsilon", type=float, default=0.0, help="allowed prediction divergence")
    s.add_argument("--if-max-rows", type=int, default=10_000, help="row limit for the pairwise scan")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-timestamp", action="store_true", help="omit generated_at for reproducible bytes")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("train", help="fit a predictor under a fairness regime")
    s.add_argument("model")
    s.add_argument("--data", required=True)
    s.add_argument("--target", help="default: the model's outcome")
    s.add_argument("--regime", choices=list(REGIME_FLAGS), default="unconstrained")
    s.add_argument("--unfair-edge", action="extend", nargs="+", metavar="P->C", help="unfair edges for path-specific")
    s.add_argument("--n-mc", type=int, default=50)
    s.add_argument("--ridge", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", help="output path (default standard output)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("scenario", help="show, emit or verify a built-in scenario")
    s.add_argument("name", nargs="?", help="scenario name (see --list)")
    s.add_argument("--list", action="store_true", help="list registered scenarios")
    s.add_argument("--emit-dsl", action="store_true", help="print the model source")
    s.add_argument("--verify", action="store_true", help="check every expected fact")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--no-timestamp", action="store_true", help="omit generated_at for reproducible bytes")
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"fairscm: error: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, ModelError, DataError) as exc:
        print(f"fairscm: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InterventionError, EvaluationError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"fairscm: error: {str(exc).strip(chr(39))}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"fairscm: error: {exc.strerror or exc}: {getattr(exc, 'filename', '')}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
