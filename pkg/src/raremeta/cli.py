"""Command-line front end.

Subcommands: ``fit`` (one no-selection model), ``sens`` (sensitivity sweep
over publish probabilities), ``simulate`` (Monte-Carlo scenario), and
``example-data`` (write a bundled dataset).  Exit codes: 0 success, 2 numeric
non-convergence (results still written), 64 usage error, 65 data format
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import io as rio
from .datasets import EXAMPLE_NAMES, load_example
from .effects import CorrectionPolicy, UndefinedEstimateError
from .estimation import (DEFAULT_PMAX, DEFAULT_PMIN_GRID, GRID_METHODS,
                         FitOptions, QuadSpec, fit_model, sensitivity_grid)
from .models import ModelKind
from .simulation import ScenarioError, run_scenario

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65

_POLICIES = {"none": CorrectionPolicy.NONE,
             "only-zero": CorrectionPolicy.ONLY_ZERO,
             "all": CorrectionPolicy.ALL}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="raremeta",
                     description="Rare-event meta-analysis with "
                                 "publication-bias sensitivity analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit one model without selection")
    fit.add_argument("data", help="dataset CSV")
    fit.add_argument("--model", required=True,
                     choices=[k.value for k in ModelKind])
    fit.add_argument("--policy", choices=sorted(_POLICIES),
                     help="continuity correction for NN (default only-zero)")
    fit.add_argument("--nodes", type=int, default=41,
                     help="Gauss-Hermite nodes (default 41)")
    fit.add_argument("--out", help="write the result row CSV here")
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--json", action="store_true", dest="as_json")
    fit.add_argument("--quiet", action="store_true")

    sens = sub.add_parser("sens", help="sensitivity sweep over (Pmin, Pmax)")
    sens.add_argument("data")
    sens.add_argument("--method", required=True, choices=GRID_METHODS)
    sens.add_argument("--pmax", type=float, default=DEFAULT_PMAX)
    sens.add_argument("--pmin", default=",".join(str(p) for p in
                                                 DEFAULT_PMIN_GRID),
                      help="comma-separated Pmin values, largest first")
    sens.add_argument("--policy", choices=sorted(_POLICIES))
    sens.add_argument("--nodes", type=int, default=41)
    sens.add_argument("--out", help="write the sweep CSV here")
    sens.add_argument("--plot-data", dest="plot_data",
                      help="write the plot-ready series here")
    sens.add_argument("--seed", type=int, default=None)
    sens.add_argument("--json", action="store_true", dest="as_json")
    sens.add_argument("--quiet", action="store_true")

    sim = sub.add_parser("simulate", help="run a Monte-Carlo scenario")
    sim.add_argument("scenario", help="scenario config file")
    sim.add_argument("--reps", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--jobs", type=int,
                     default=int(os.environ.get("RAREMETA_JOBS", "1")))
    sim.add_argument("--out", help="write the metrics CSV here")
    sim.add_argument("--quiet", action="store_true")

    ex = sub.add_parser("example-data", help="write a bundled dataset")
    ex.add_argument("name", choices=EXAMPLE_NAMES)
    ex.add_argument("out")
    return parser


def _fit_opts(seed) -> FitOptions:
    return FitOptions() if seed is None else FitOptions(seed=seed)


def _resolve_policy(args, parser, glmm: bool) -> CorrectionPolicy:
    if args.policy is None:
        return CorrectionPolicy.ONLY_ZERO
    if glmm:
        print("warning: --policy has no effect on exact-likelihood models",
              file=sys.stderr)
    return _POLICIES[args.policy]


def _summary_line(res) -> str:
    if not res.params:
        return f"{res.method}: fit failed ({res.error})"
    theta = res.params["theta"]
    ci = res.ci.get("theta")
    ci_txt = f" (95% CI {ci[0]:.3f}, {ci[1]:.3f})" if ci else ""
    extra = f", tau = {res.params['tau']:.3f}"
    if "rho" in res.params:
        extra += f", rho = {res.params['rho']:.3f}"
    if res.m_raw is not None:
        extra += f", M = {res.m_rounded}"
    flag = "" if res.converged else "  [NOT CONVERGED]"
    bflag = f"  [boundary: {', '.join(res.on_boundary)}]" if res.on_boundary else ""
    return f"{res.method}: theta = {theta:.3f}{ci_txt}{extra}{flag}{bflag}"


def _result_json(res) -> dict:
    return {"method": res.method, "p_min": res.p_min, "p_max": res.p_max,
            "params": res.params, "se": res.se,
            "ci": {k: list(v) if v else None for k, v in res.ci.items()},
            "loglik": None if math.isnan(res.loglik) else res.loglik,
            "converged": res.converged,
            "on_boundary": list(res.on_boundary),
            "m_raw": res.m_raw, "m_rounded": res.m_rounded}


def _cmd_fit(args, parser) -> int:
    studies = rio.read_dataset(args.data)
    kind = ModelKind(args.model)
    policy = _resolve_policy(args, parser, glmm=kind is not ModelKind.NN)
    res = fit_model(kind, studies, policy, QuadSpec(node_count=args.nodes),
                    _fit_opts(args.seed))
    if args.out:
        rio.write_results(args.out, [res])
    if args.as_json:
        print(json.dumps(_result_json(res), indent=2))
    elif not args.quiet:
        print(_summary_line(res))
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _cmd_sens(args, parser) -> int:
    studies = rio.read_dataset(args.data)
    glmm = args.method.startswith("proposed-")
    policy = _resolve_policy(args, parser, glmm=glmm)
    try:
        pmins = [float(p) for p in args.pmin.split(",") if p.strip()]
    except ValueError:
        parser.error(f"--pmin: not a number list: {args.pmin!r}")
    if not pmins:
        parser.error("--pmin: empty grid")
    grid = [(p, args.pmax) for p in pmins]
    rows = sensitivity_grid(args.method, studies, grid, policy,
                            QuadSpec(node_count=args.nodes),
                            _fit_opts(args.seed))
    if args.out:
        rio.write_results(args.out, rows)
    if args.plot_data:
        rio.write_plot_data(args.plot_data, rows)
    if args.as_json:
        print(json.dumps([_result_json(r) for r in rows], indent=2))
    elif not args.quiet:
        for res in rows:
            print(_summary_line(res))
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NONCONVERGED


def _cmd_simulate(args, parser) -> int:
    sc = rio.read_scenario(args.scenario)
    row = run_scenario(sc, args.reps, args.seed, max(args.jobs, 1))
    text = rio.format_metrics(row)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_example_data(args, parser) -> int:
    rio.write_dataset(args.out, load_example(args.name))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"fit": _cmd_fit, "sens": _cmd_sens, "simulate": _cmd_simulate,
                "example-data": _cmd_example_data}
    try:
        return handlers[args.command](args, parser)
    except (rio.DataFormatError, UndefinedEstimateError, ScenarioError) as exc:
        print(f"raremeta: {exc}", file=sys.stderr)
        if isinstance(exc, UndefinedEstimateError):
            print("hint: rerun with --policy only-zero or --policy all to "
                  "correct zero cells", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"raremeta: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
