"""Command-line entry point: ``latentid {simulate,moments,ident,fit,mc}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import IoFailure, LatentModelError
from .estimators import FitOptions, fit_series
from .identifiability import Verdict, identifiability_report
from .models import Domain, parse_model_text
from .moments import acvf, sdf, spatial_cov, wv_theoretical
from .simulate import SeedSpec, simulate_spatial_field, simulate_time_series


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _floats(text: str) -> np.ndarray:
    vals = [v for v in text.replace(",", " ").split() if v]
    return np.array([float(v) for v in vals])


def _load_model(path: str):
    return parse_model_text(_read(path))


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    model = _load_model(args.model_file)
    seed = SeedSpec(args.seed, args.stream)
    if model.domain is Domain.SPATIAL:
        if not args.coords:
            raise SystemExit("spatial models need --coords (one 'x,y' per line)")
        xy = np.array([[float(v) for v in line.split(",")] for line in _read(args.coords).splitlines()
                       if line.strip() and not line.lstrip().startswith("#")])
        z = simulate_spatial_field(model, None, xy, seed)
        text = "".join(f"{_fmt(x)},{_fmt(y)},{_fmt(v)}\n" for (x, y), v in zip(xy, z))
    else:
        if args.n is None:
            raise SystemExit("time-series models need --n")
        x = simulate_time_series(model, None, args.n, seed)
        text = "".join(_fmt(v) + "\n" for v in x)
    _write(text, args.out)
    return 0


def cmd_moments(args) -> int:
    model = _load_model(args.model_file)
    theta = model.theta
    if args.kind == "acvf":
        mv = acvf(model, theta, args.max_lag)
    elif args.kind == "wv":
        mv = wv_theoretical(model, theta, args.scales)
    elif args.kind == "sdf":
        freqs = _floats(args.freqs) if args.freqs else np.linspace(0.0, 0.5, args.n_freqs)
        mv = sdf(model, theta, freqs)
    else:
        if not args.distances:
            raise SystemExit("--kind spatial needs --distances")
        mv = spatial_cov(model, theta, _floats(args.distances))
    _write(mv.to_csv(), args.out)
    return 0


def cmd_ident(args) -> int:
    model = _load_model(args.model_file)
    absc = _floats(args.abscissae) if args.abscissae else None
    kind = args.kind or ("spatial" if model.domain is Domain.SPATIAL else "acvf")
    rep = identifiability_report(model, None, kind, absc)
    _write(rep.to_text(), args.out)
    if args.csv:
        _write(rep.to_csv(), args.csv)
    return 0 if rep.verdict is Verdict.FULL_COLUMN_RANK else 2


def cmd_fit(args) -> int:
    model = _load_model(args.model_file)
    data = _floats(_read(args.data))
    opts = FitOptions(seed=args.seed)
    res = fit_series(model, data, args.estimator, J=args.scales, lags=args.lags,
                     weights=args.weights, options=opts)
    width = max(len(s) for s in res.labels)
    lines = [f"{'parameter':<{width}}  estimate"]
    lines += [f"{name:<{width}}  {val:.10g}" for name, val in zip(res.labels, res.theta_hat)]
    lines.append(f"objective {res.objective_value:.6g}  iterations {res.iterations}  "
                 f"converged {'yes' if res.converged else 'no'}  starts {res.start_points_used}")
    _write("\n".join(lines) + "\n", args.out)
    if args.csv:
        _write("parameter,estimate\n" + "".join(f"{n},{_fmt(v)}\n" for n, v in zip(res.labels, res.theta_hat)),
               args.csv)
    return 0


def cmd_mc(args) -> int:
    overrides = dict(master_seed=args.seed if args.seed_given else None,
                     replications=args.replications,
                     sample_sizes=tuple(int(v) for v in _floats(args.sizes)) if args.sizes else None,
                     estimators=tuple(args.estimators.split(",")) if args.estimators else None)
    if args.config:
        config = harness.load_config(args.config, **overrides)
    else:
        text = f"preset = {args.preset}\n"
        config = harness.parse_config_text(text, **overrides)
    out = args.out or config.output_dir or "."
    result = harness.run_monte_carlo(config, threads=args.threads)
    paths = harness.emit_report(result, out, formats=args.format.split(","))
    sys.stdout.write(result.summary_text())
    for p in paths:
        sys.stdout.write(f"wrote {p}\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (mc)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (directory for mc)")

    p = argparse.ArgumentParser(prog="latentid", parents=[common],
                                description="Latent time-series and spatial models: moments, "
                                            "identifiability checks, estimation and Monte-Carlo studies.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a series or spatial field")
    s.add_argument("--model-file", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--coords", help="file of 'x,y' lines (spatial models)")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("moments", parents=[common], help="theoretical moments as CSV")
    m.add_argument("--model-file", required=True)
    m.add_argument("--kind", choices=["acvf", "wv", "sdf", "spatial"], default="acvf")
    m.add_argument("--max-lag", type=int, default=10)
    m.add_argument("--scales", type=int, default=8)
    m.add_argument("--freqs", help="comma-separated frequencies in [0, 0.5]")
    m.add_argument("--n-freqs", type=int, default=51)
    m.add_argument("--distances", help="comma-separated distances")
    m.set_defaults(func=cmd_moments)

    i = sub.add_parser("ident", parents=[common], help="Jacobian rank report")
    i.add_argument("--model-file", required=True)
    i.add_argument("--kind", choices=["acvf", "wv", "sdf", "spatial"])
    i.add_argument("--abscissae", help="comma-separated lags / scales / frequencies / distances")
    i.add_argument("--csv", help="also write singular values as CSV")
    i.set_defaults(func=cmd_ident)

    f = sub.add_parser("fit", parents=[common], help="estimate a model from data")
    f.add_argument("--estimator", choices=["gmwm", "gmm"], default="gmwm")
    f.add_argument("--model-file", required=True, help="model structure; its values are ignored")
    f.add_argument("--data", required=True, help="one value per line")
    f.add_argument("--scales", type=int)
    f.add_argument("--lags", type=int)
    f.add_argument("--weights", choices=["default", "identity"], default="default")
    f.add_argument("--csv", help="also write estimates as CSV")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("mc", parents=[common], help="Monte-Carlo MSE study with report")
    c.add_argument("--config", help="key = value config file")
    c.add_argument("--preset", choices=sorted(harness.PRESETS), default="lm1")
    c.add_argument("--sizes", help="comma-separated sample sizes")
    c.add_argument("--replications", type=int)
    c.add_argument("--estimators", help="comma-separated subset of gmwm,gmm")
    c.add_argument("--format", default="csv,svg", help="comma-separated: csv, svg, png")
    c.set_defaults(func=cmd_mc)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    args.seed = getattr(args, "seed", harness.DEFAULT_SEED if args.command == "mc" else 0)
    args.threads = getattr(args, "threads", 1)
    args.out = getattr(args, "out", None)
    try:
        return args.func(args)
    except (LatentModelError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
