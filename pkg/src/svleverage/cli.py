"""Command-line front end.

Exit codes: 0 success, 1 validation or domain error (including unknown
flags), 2 runtime failure of the filter or the iterated-filtering update.
Every run writes ``manifest.json`` next to its outputs; ``svlev replay
manifest.json`` re-runs it.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import data_io
from .errors import DomainError, FilterFailure, UpdateDegeneracyError
from .model import ALL_PARAM_NAMES, check_variant, default_params, make_params, simulate

log = logging.getLogger("svleverage")

# defaults: fitting 8,000 particles, final likelihood 70,000, filtering summaries 5,000
DEFAULTS = {
    "filter_particles": 5000,
    "fit_particles": 8000,
    "eval_particles": 70000,
    "iterations": 150,
    "alpha": 0.978,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(p, data=True):
    p.add_argument("--model", choices=("fixed", "rw"), default="fixed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory (or .csv file for simulate)")
    p.add_argument("--svg", action="store_true", help="also write minimal SVG charts")
    p.add_argument("-v", "--verbose", action="store_true")
    if data:
        p.add_argument("--data", required=True)
        p.add_argument("--value-column", default=None, help="default: 'return' or 'price' per --kind")
        p.add_argument("--date-column", default="date")
        p.add_argument("--kind", choices=("return", "price"), default="return")
        p.add_argument("--scale", type=float, default=100.0, help="price -> log-return multiplier")
        p.add_argument("--demean", action="store_true")
        p.add_argument("--expect-n", type=int, default=None)


def _add_params(p):
    for name in ALL_PARAM_NAMES:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=None)
    p.add_argument("--params-from", default=None,
                   help="take parameters from the last row of a fit trace or an SE report CSV")


def build_parser():
    parser = _Parser(prog="svlev", description="Stochastic volatility with fixed or random-walk leverage.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate returns and latent paths")
    _add_common(p, data=False)
    _add_params(p)
    p.add_argument("--T", type=int, required=True)

    p = sub.add_parser("filter", help="particle filter: log-likelihood and filtering summaries")
    _add_common(p)
    _add_params(p)
    p.add_argument("--particles", type=int, default=DEFAULTS["filter_particles"])
    p.add_argument("--resample", choices=("every", "ess"), default="every")

    p = sub.add_parser("fit", help="maximum likelihood by iterated filtering")
    _add_common(p)
    _add_params(p)
    p.add_argument("--particles", type=int, default=DEFAULTS["fit_particles"])
    p.add_argument("--iterations", type=int, default=DEFAULTS["iterations"])
    p.add_argument("--alpha", type=float, default=DEFAULTS["alpha"])
    p.add_argument("--init-sd", action="append", default=[], metavar="NAME=SD")
    p.add_argument("--var-factor", type=float, default=10.0)
    p.add_argument("--ivp-lag", type=int, default=20)
    p.add_argument("--freeze", action="append", default=[], metavar="NAME")

    p = sub.add_parser("eval", help="replicated log-likelihood with Monte Carlo SE")
    _add_common(p)
    _add_params(p)
    p.add_argument("--particles", type=int, default=DEFAULTS["eval_particles"])
    p.add_argument("--replicates", type=int, default=2)

    p = sub.add_parser("slice", help="sliced likelihood along one parameter")
    _add_common(p)
    _add_params(p)
    p.add_argument("--param", required=True, choices=ALL_PARAM_NAMES)
    p.add_argument("--grid", required=True, help="LO:HI:N or comma-separated values")
    p.add_argument("--particles", type=int, default=DEFAULTS["eval_particles"])
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--bandwidth", type=float, default=None)

    p = sub.add_parser("hessian", help="numerical-Hessian standard errors")
    _add_common(p)
    _add_params(p)
    p.add_argument("--particles", type=int, default=DEFAULTS["fit_particles"])
    p.add_argument("--replicates", type=int, default=3)
    p.add_argument("--step", type=float, default=0.05)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


# ---------------------------------------------------------------------------
# validation helpers


def _validate(args):
    checks = [
        ("particles", lambda v: v >= 2, "must be >= 2"),
        ("iterations", lambda v: v >= 0, "must be >= 0"),
        ("alpha", lambda v: 0 < v <= 1, "must lie in (0, 1]"),
        ("replicates", lambda v: v >= 1, "must be >= 1"),
        ("workers", lambda v: v >= 1, "must be >= 1"),
        ("T", lambda v: v >= 1, "must be >= 1"),
        ("step", lambda v: v > 0, "must be positive"),
        ("var_factor", lambda v: v > 0, "must be positive"),
        ("ivp_lag", lambda v: v >= 1, "must be >= 1"),
        ("bandwidth", lambda v: v > 0, "must be positive"),
        ("expect_n", lambda v: v >= 1, "must be >= 1"),
    ]
    for name, ok, msg in checks:
        v = getattr(args, name, None)
        if v is not None and not ok(v):
            raise DomainError(f"--{name.replace('_', '-')} {msg} (got {v})")
    check_variant(args.model)


def _resolve_params(args):
    variant = args.model
    base = default_params(variant).to_dict()
    if args.params_from:
        base.update(_params_from_file(args.params_from, variant))
    for name in ALL_PARAM_NAMES:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    names = make_params(variant, base).names
    extra = [n for n in ALL_PARAM_NAMES if getattr(args, n, None) is not None and n not in names]
    if extra:
        raise DomainError(f"parameters {extra} do not belong to the {variant} model")
    return make_params(variant, {n: base[n] for n in names})


def _params_from_file(path, variant):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) == data_io.MIF_COLUMNS:
        return dict(data_io.load_mif_trace(path).records[-1].theta)
    if tuple(header) == data_io.SE_COLUMNS:
        return dict(data_io.load_se_report(path).estimate)
    raise DomainError(f"{path}: not a fit trace or SE report")


def _parse_grid(text):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise DomainError("--grid LO:HI:N expects three fields")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise DomainError("--grid needs N >= 1")
        return np.linspace(lo, hi, n)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _parse_sd(items):
    out = {}
    for item in items:
        name, _, val = item.partition("=")
        if name not in ALL_PARAM_NAMES or not val:
            raise DomainError(f"--init-sd expects NAME=SD with NAME in {ALL_PARAM_NAMES}, got {item!r}")
        out[name] = float(val)
        if not out[name] > 0:
            raise DomainError(f"--init-sd {name} must be positive")
    return out


def _load_data(args):
    col = args.value_column or ("price" if args.kind == "price" else "return")
    return data_io.load_returns(args.data, value_column=col, date_column=args.date_column, kind=args.kind,
                                scale=args.scale, demean_values=args.demean, expect_n=args.expect_n)


def _out_dir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_manifest(path, argv, args, params=None, results=None):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ALL_PARAM_NAMES and k != "verbose"}
    doc = {
        "program": "svlev",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "seed": args.seed,
        "config": config,
        "params": None if params is None else params.to_dict(),
        "results": results or {},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    log.info("resolved config written to %s", path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, argv):
    params = _resolve_params(args)
    series, paths = simulate(args.model, params, args.T, seed=args.seed)
    if args.out.endswith(".csv"):
        out_csv = args.out
        parent = os.path.dirname(out_csv) or "."
        os.makedirs(parent, exist_ok=True)
        manifest = os.path.join(parent, os.path.splitext(os.path.basename(out_csv))[0] + ".manifest.json")
    else:
        d = _out_dir(args)
        out_csv = os.path.join(d, "simulated.csv")
        manifest = os.path.join(d, "manifest.json")
    data_io.write_returns(series, out_csv, extra={"h": paths["h"], "f": paths["f"], "rho": paths["rho"],
                                                   "eps": paths["eps"]})
    if args.svg:
        from .svg import line_chart
        stem = os.path.splitext(out_csv)[0]
        t = np.arange(1, args.T + 1)
        line_chart(stem + "_returns.svg", t, {"return": series.values}, title="simulated returns", xlabel="t")
        line_chart(stem + "_rho.svg", t, {"rho": paths["rho"]}, title="leverage rho_t", xlabel="t")
    _write_manifest(manifest, argv, args, params)
    return 0


def cmd_filter(args, argv):
    from .particle_filter import run_filter

    params = _resolve_params(args)
    data = _load_data(args)
    d = _out_dir(args)
    res = run_filter(args.model, params, data, args.particles, seed=args.seed, resample=args.resample,
                     workers=args.workers)
    data_io.write_filter_result(res, os.path.join(d, "filter.csv"))
    if args.svg:
        from .svg import line_chart
        pt = res.per_time
        line_chart(os.path.join(d, "filter_rho.svg"), pt["t"],
                   {"mean": pt["rho_mean"], "q1": pt["rho_q1"], "q3": pt["rho_q3"]},
                   dashed=("q1", "q3"), title="filtered leverage rho_t", xlabel="t")
        line_chart(os.path.join(d, "filter_h.svg"), pt["t"], {"h mean": pt["h_mean"]},
                   title="filtered volatility factor h_t", xlabel="t")
        line_chart(os.path.join(d, "filter_eps.svg"), pt["t"], {"eps mean": pt["eps_mean"]},
                   title="filtered return shock", xlabel="t")
        line_chart(os.path.join(d, "filter_returns.svg"), pt["t"], {"return": data.values},
                   title="returns", xlabel="t")
    log.info("loglik %.4f", res.loglik)
    _write_manifest(os.path.join(d, "manifest.json"), argv, args, params, {"loglik": res.loglik})
    return 0


def cmd_fit(args, argv):
    from .iterated_filtering import MifConfig, run_mif

    params = _resolve_params(args)
    data = _load_data(args)
    d = _out_dir(args)
    frozen = tuple(args.freeze)
    bad = [n for n in frozen if n not in params.names]
    if bad:
        raise DomainError(f"--freeze names {bad} are not {args.model} parameters")
    cfg = MifConfig(iterations=args.iterations, particles=args.particles, alpha=args.alpha,
                    init_sd=_parse_sd(args.init_sd), frozen=frozen, ivp_lag=args.ivp_lag,
                    var_factor=args.var_factor, seed=args.seed, workers=args.workers)
    trace = run_mif(args.model, data, cfg, params,
                    progress=lambda m, ll: log.info("iteration %d loglik %.3f", m, ll))
    data_io.write_mif_trace(trace, os.path.join(d, "mif_trace.csv"))
    if args.svg:
        from .model import transform_for
        from .svg import line_chart
        it = np.arange(len(trace))
        line_chart(os.path.join(d, "mif_loglik.svg"), it, {"loglik": trace.column("loglik")},
                   title="filter log-likelihood by iteration", xlabel="iteration")
        for n in params.names:
            line_chart(os.path.join(d, f"mif_{n}.svg"), it,
                       {f"{transform_for(n).name}({n})": transform_for(n).forward(trace.column(n))},
                       title=f"{n} (estimation scale)", xlabel="iteration")
    _write_manifest(os.path.join(d, "manifest.json"), argv, args, params,
                    {"final": trace.final.to_dict(), "final_loglik": trace.records[-1].loglik})
    return 0


def cmd_eval(args, argv):
    from .inference import aic, evaluate_loglik

    params = _resolve_params(args)
    data = _load_data(args)
    d = _out_dir(args)
    est = evaluate_loglik(args.model, params, data, args.particles, args.replicates, seed=args.seed,
                          workers=args.workers)
    # f0 only fixes the starting leverage; both models count four parameters
    k = 4
    rows = [["model", "mean", "mc_se", "replicates", "particles", "k", "aic"],
            [args.model, est.mean, est.mc_se, est.replicates, est.particles, k, aic(est.mean, k)]]
    data_io.write_rows(os.path.join(d, "eval.csv"), rows[0], rows[1:])
    data_io.write_rows(os.path.join(d, "eval_replicates.csv"), ["replicate", "loglik"],
                        [[r, v] for r, v in enumerate(est.values)])
    _write_manifest(os.path.join(d, "manifest.json"), argv, args, params,
                    {"loglik": est.mean, "mc_se": est.mc_se})
    return 0


def cmd_slice(args, argv):
    from .inference import slice_likelihood

    params = _resolve_params(args)
    data = _load_data(args)
    d = _out_dir(args)
    grid = _parse_grid(args.grid)
    res = slice_likelihood(args.model, params, args.param, grid, data, args.particles, args.replicates,
                           seed=args.seed, bandwidth=args.bandwidth, workers=args.workers)
    data_io.write_slice_result(res, os.path.join(d, "slice.csv"))
    if args.svg:
        from .svg import line_chart
        line_chart(os.path.join(d, f"slice_{args.param}.svg"), res.grid, {"smoothed": res.smoothed},
                   markers={"loglik": res.loglik}, title=f"sliced likelihood: {args.param}", xlabel=args.param)
    _write_manifest(os.path.join(d, "manifest.json"), argv, args, params, {"smoothing_widened": res.widened})
    return 0


def cmd_hessian(args, argv):
    from .inference import numerical_se

    params = _resolve_params(args)
    data = _load_data(args)
    d = _out_dir(args)
    rep = numerical_se(args.model, params, data, args.particles, steps=args.step, seed=args.seed,
                       replicates=args.replicates)
    data_io.write_se_report(rep, os.path.join(d, "se.csv"))
    _write_manifest(os.path.join(d, "manifest.json"), argv, args, params, {"projected": rep.projected})
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "slice": cmd_slice,
    "hessian": cmd_hessian,
}


def run_command(argv):
    """Parse ``argv`` and dispatch; returns the process exit code."""
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(exc, file=sys.stderr)
        return 1
    if args.command == "replay":
        try:
            with open(args.manifest, encoding="utf-8") as fh:
                recorded = json.load(fh)["argv"]
        except (OSError, KeyError, ValueError) as exc:
            print(f"svlev: cannot read manifest: {exc}", file=sys.stderr)
            return 1
        return run_command(recorded)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        return COMMANDS[args.command](args, argv)
    except (DomainError, ValueError) as exc:
        print(f"svlev {args.command}: {exc}", file=sys.stderr)
        return 1
    except (FilterFailure, UpdateDegeneracyError) as exc:
        print(f"svlev {args.command}: runtime failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
