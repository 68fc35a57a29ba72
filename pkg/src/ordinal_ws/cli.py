"""Command line entry point: ``ordinal-ws {fit,select,simulate}``.

Exit codes: 0 success, 1 input or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .cl1 import STRUCTURES, structure_name
from .data import OrdinalDataset, ingest_csv
from .errors import ConvergenceError, DomainError, EvaluationError, IdentifiabilityError, MatrixError
from .selection import cl1_criteria, model_search
from .simulate import SimDesign, run_replications
from .wscore import solve_weighted_scores

log = logging.getLogger("ordinal_ws")

INPUT_ERRORS = (DomainError, IdentifiabilityError, MatrixError, FileNotFoundError, KeyError)
NUMERIC_ERRORS = (ConvergenceError, EvaluationError, ArithmeticError, np.linalg.LinAlgError)


@dataclass
class RunConfig:
    link: str = "probit"
    structure: str = "exchangeable"
    covariates: list = field(default_factory=list)
    criteria: bool = False
    jmat: str = "empirical"
    tol_score: float = 1e-6
    tol_step: float = 1e-8
    max_iter: int = 100
    seed: int = 2024
    threads: int = 1

    def __post_init__(self):
        if self.link not in ("probit", "logit"):
            raise DomainError(f"unknown link {self.link!r}")
        self.structure = structure_name(self.structure)
        if self.jmat not in ("empirical", "model"):
            raise DomainError(f"unknown J mode {self.jmat!r}")
        if not (self.tol_score > 0 and self.tol_step > 0 and self.max_iter > 0):
            raise DomainError("tolerances and iteration limits must be positive")
        if self.threads < 1:
            raise DomainError("--threads must be >= 1")


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def coded_columns(data: OrdinalDataset, raw: list[str]) -> list[str]:
    """Dataset column names produced by the given raw CSV columns."""
    out = []
    for c in raw:
        hits = [nm for nm in data.names if nm == c or nm.startswith(c + "[") or nm.startswith(c + "=")]
        if not hits:
            raise DomainError(f"covariate {c!r} is not in the dataset")
        out.extend(hits)
    return out


def _load(args) -> OrdinalDataset:
    covs = _split(args.covariates)
    extra = []
    if getattr(args, "subsets", None):
        for sub in args.subsets.split(";"):
            extra += [c for c in _split(sub) if c not in covs and c not in extra]
    data = ingest_csv(args.data, args.id_col, args.y_col, covs + extra, time_col=args.time_col,
                      cumulative=tuple(_split(args.cumulative)), reference=tuple(_split(args.reference)))
    if data.category_map and any(k != v for k, v in data.category_map.items()):
        print(f"response categories relabelled: {data.category_map}", file=sys.stderr)
    return data


def _write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, default=float)
    if path == "-":
        print(text)
    elif path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def cmd_fit(args) -> int:
    cfg = RunConfig(args.link, args.corr, _split(args.covariates), args.criteria, args.jmat, args.tol_score,
                    args.tol_step, args.max_iter, args.seed, args.threads)
    data = _load(args)
    fit = solve_weighted_scores(data, cfg.link, None, cfg.structure, tol_score=cfg.tol_score,
                                tol_step=cfg.tol_step, max_iter=cfg.max_iter)
    print(f"weighted scores fit: link={cfg.link}, structure={fit.correlation.structure}, "
          f"n={data.n} clusters, N={data.N} rows, K={data.K}")
    print(fit.table())
    R = fit.correlation.matrix()
    print("latent correlation matrix:")
    print(np.array2string(R, precision=3, suppress_small=True))
    doc = fit.to_dict()
    if cfg.criteria:
        rep = cl1_criteria(data, cfg.link, cfg.structure, jmat=cfg.jmat)
        doc["criteria"] = {"cl1aic": rep.cl1aic, "cl1bic": rep.cl1bic, "L2": rep.L2, "trace": rep.penalty_trace}
        print(f"CL1AIC = {rep.cl1aic:.2f}   CL1BIC = {rep.cl1bic:.2f}   L2 = {rep.L2:.2f}   "
              f"tr(JH^-1) = {rep.penalty_trace:.3f}")
    doc["config"] = {**asdict(cfg), "data": args.data, "id_col": args.id_col, "y_col": args.y_col,
                     "time_col": args.time_col, "names": data.names}
    _write_json(args.out, doc)
    return 0


def select_table(reports, failed) -> str:
    rows = [r for r in reports]
    best = {c: min((getattr(r, c) for r in rows), default=math.nan) for c in ("cl1aic", "cl1bic")}
    w = max([len(r.descriptor) for r in rows + failed] + [9])
    lines = [f"{'candidate':<{w}}  {'CL1AIC':>10}  {'CL1BIC':>10}  {'trace':>8}"]
    for r in rows:
        a = f"{r.cl1aic:.2f}" + ("*" if r.cl1aic == best["cl1aic"] else " ")
        b = f"{r.cl1bic:.2f}" + ("*" if r.cl1bic == best["cl1bic"] else " ")
        lines.append(f"{r.descriptor:<{w}}  {a:>11} {b:>11}  {r.penalty_trace:8.3f}")
    for r in failed:
        lines.append(f"{r.descriptor:<{w}}  FAILED: {r.error}")
    lines.append("* smallest value of the criterion")
    return "\n".join(lines)


def cmd_select(args) -> int:
    data = _load(args)
    links = _split(args.links) or [args.link]
    structures = [structure_name(s) for s in (_split(args.structures) or [args.corr])]
    if args.subsets:
        subsets = [tuple(coded_columns(data, _split(s))) for s in args.subsets.split(";")]
    else:
        subsets = [tuple(coded_columns(data, _split(args.covariates)))]
    ranked, failed = model_search(data, links, structures, subsets, criterion=args.criterion,
                                  jmat=args.jmat, threads=args.threads)
    print(select_table(ranked, failed))
    _write_json(args.out, {"config": {"links": links, "structures": structures, "subsets": [list(s) for s in subsets],
                                      "criterion": args.criterion, "jmat": args.jmat, "data": args.data},
                           "candidates": [r.to_dict() for r in ranked + failed]})
    if not ranked:
        return 2
    return 0


def cmd_simulate(args) -> int:
    spec = {}
    if args.design:
        with open(args.design, encoding="utf-8") as fh:
            spec = json.load(fh)
    for key in ("n", "B", "seed", "task"):
        val = getattr(args, key if key != "B" else "reps")
        if val is not None:
            spec[key] = val
    if args.theta is not None:
        spec["copula_param"] = args.theta
    if "task" in spec and spec["task"] in ("structure", "variables") and "design" not in spec:
        from .simulate import structure_design, variables_design
        maker = structure_design if spec["task"] == "structure" else variables_design
        kw = {k: v for k, v in spec.items() if k not in ("n", "B", "seed", "task", "design")}
        design = maker(spec.get("n", 300), spec.get("B", 10), spec.get("seed", 2024), **kw)
    else:
        spec.setdefault("n", 100)
        spec.setdefault("B", 10)
        design = SimDesign(**spec)
    print(f"seed = {design.seed}", file=sys.stderr)
    summ = run_replications(design, threads=args.threads)
    print(summ.table())
    if args.out:
        text = summ.to_json()
        if args.out == "-":
            print(text)
        else:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ordinal-ws", description="Weighted scores for clustered ordinal data")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def data_flags(p):
        p.add_argument("data", help="long-format CSV file")
        p.add_argument("--id-col", required=True)
        p.add_argument("--y-col", required=True)
        p.add_argument("--time-col")
        p.add_argument("--covariates", default="", help="comma-separated CSV columns")
        p.add_argument("--cumulative", default="", help="columns to expand into cumulative indicators")
        p.add_argument("--reference", default="", help="columns to expand into reference dummies")
        p.add_argument("--link", default="probit", choices=("probit", "logit"))
        p.add_argument("--corr", default="exchangeable", choices=STRUCTURES + ("exch", "ar1", "unstr"))
        p.add_argument("--jmat", default="empirical", choices=("empirical", "model"))
        p.add_argument("--seed", type=int, default=2024)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", help="JSON output path ('-' for stdout)")

    f = sub.add_parser("fit", help="weighted scores fit with sandwich standard errors")
    data_flags(f)
    f.add_argument("--criteria", action="store_true", help="also report CL1AIC / CL1BIC")
    f.add_argument("--tol-score", type=float, default=1e-6)
    f.add_argument("--tol-step", type=float, default=1e-8)
    f.add_argument("--max-iter", type=int, default=100)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("select", help="rank candidate models by CL1AIC / CL1BIC")
    data_flags(s)
    s.add_argument("--links", default="", help="comma-separated links to compare")
    s.add_argument("--structures", default="", help="comma-separated correlation structures")
    s.add_argument("--subsets", default="", help="covariate subsets, ';' between subsets, ',' within")
    s.add_argument("--criterion", default="cl1bic", choices=("cl1aic", "cl1bic"))
    s.set_defaults(func=cmd_select)

    m = sub.add_parser("simulate", help="run a simulation design")
    m.add_argument("--design", help="JSON file with SimDesign fields")
    m.add_argument("--task", choices=("estimate", "structure", "variables"))
    m.add_argument("--n", type=int)
    m.add_argument("--reps", type=int, help="number of replications B")
    m.add_argument("--theta", type=float, help="Gumbel copula parameter")
    m.add_argument("--seed", type=int)
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--out")
    m.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"input error ({type(exc).__module__.rsplit('.', 1)[-1]}.{type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except (TypeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
