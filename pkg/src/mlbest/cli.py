"""Command-line entry point ``mlbest``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 more than
5% failed trials at some experiment point (or a failed estimate).
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, crb, dcmodel, estimators, graph, harness
from .errors import ConfigError, MlbestError, NoConvergence, ParseError, SingularW

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

log = logging.getLogger("mlbest")


def _load_graph(spec):
    if spec == "ieee14":
        return graph.ieee14()
    return graph.load_case(spec)


def write_measurements(ms, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"bus_{i + 1}" for i in range(ms.M)])
        for row in ms.P.T:
            w.writerow([repr(float(v)) for v in row])


def read_measurements(path):
    """Measurements CSV (header ``bus_1..bus_M``, one row per sample) to M x N."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("measurements file is empty", 1) from None
        expected = [f"bus_{i + 1}" for i in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise ParseError("header must be bus_1,...,bus_M", 1)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} values, got {len(rec)}", lineno)
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                raise ParseError("non-numeric value", lineno) from None
    if not rows:
        raise ParseError("no samples", 2)
    return dcmodel.MeasurementSet(np.array(rows).T)


def _prior(args, M):
    return dcmodel.StatePrior.isotropic(M, args.prior_c)


def _noise_var(args, lp, prior):
    if (args.snr_db is None) == (args.sigma2 is None):
        raise ConfigError("give exactly one of --snr-db and --sigma2")
    if args.sigma2 is not None:
        return args.sigma2
    return dcmodel.snr_to_noise_var(lp, prior, args.snr_db)


def _solver(args):
    kw = {}
    for name in ("eta", "gamma", "max_iters", "epsilon"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    try:
        return estimators.SolverSettings(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _dump(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_simulate(args):
    g = _load_graph(args.case)
    lp = graph.laplacian_from_graph(g)
    prior = _prior(args, lp.M)
    sigma2 = _noise_var(args, lp, prior)
    ms, theta = dcmodel.simulate(lp, prior, sigma2, args.N, args.seed)
    write_measurements(ms, args.output)
    if args.states:
        np.savetxt(args.states, theta.T, delimiter=",", header=",".join(f"bus_{i + 1}" for i in range(lp.M)), comments="")
    log.info("wrote %d samples for %d buses (sigma2=%r)", ms.N, ms.M, sigma2)
    return EXIT_OK


def cmd_estimate(args):
    ms = read_measurements(args.measurements)
    prior = _prior(args, ms.M)
    res = estimators.ml_best(ms, prior.sigma_theta, args.method, _solver(args), args.alpha)
    diag = {k: (v if not isinstance(v, float) or np.isfinite(v) else None) for k, v in res.diagnostics.items()}
    out = {
        "method": res.method,
        "M": ms.M,
        "N": ms.N,
        "sigma2_hat": res.sigma2_hat,
        "L_hat": res.L_hat.tolist(),
        "edges": [[a + 1, b + 1] for a, b in sorted(graph.edge_set(res.L_hat))],
        "diagnostics": diag,
    }
    if args.states:
        np.savetxt(args.states, res.states_hat.T, delimiter=",", header=",".join(f"bus_{i + 1}" for i in range(ms.M)), comments="")
    _dump(out, args.output)
    return EXIT_OK


def cmd_crb(args):
    g = _load_graph(args.case)
    lp = graph.laplacian_from_graph(g)
    prior = _prior(args, lp.M)
    sigma2 = _noise_var(args, lp, prior)
    report = crb.crb_report(lp.L_reduced, prior.sigma_theta_reduced, sigma2, args.N, lp)
    out = report.as_dict()
    out.update({"M": lp.M, "N": args.N, "sigma2": sigma2})
    if not args.full:
        del out["J"], out["B_CRB"]
        out["topology_bound_diagonal"] = np.diag(report.topology_bound).tolist()
    _dump(out, args.output)
    return EXIT_OK


def _experiment_cfg(args):
    overrides = {"seed": args.seed, "workers": args.workers, "mc_trials": args.trials}
    if args.config:
        return harness.load_config(args.config, **overrides)
    raise ConfigError("experiment needs --config")


def cmd_experiment(args):
    cfg = _experiment_cfg(args)
    out_dir = Path(args.output_dir or cfg.output_dir or ".")
    rows, records = harness.run_experiment(cfg, return_trials=True)
    path = out_dir / args.name
    harness.write_results(rows, path, cfg, records)
    log.info("wrote %s", path)
    if any(r.flagged for r in rows):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_bench(args):
    cfg = _experiment_cfg(args)
    rows = harness.runtime_benchmark(cfg)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "M", "method", "N", "median_runtime_s", "mean_runtime_s", "trials", "failures"])
        for r in rows:
            w.writerow([r.scenario, r.M, r.method, r.N, repr(r.median_runtime_s), repr(r.mean_runtime_s), r.trials, r.failures])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_validate(args):
    g = _load_graph(args.case)
    lp = graph.laplacian_from_graph(g)
    report = graph.validate_laplacian(lp.L)
    out = report.as_dict()
    out.update({"M": lp.M, "edges": len(g.branches)})
    _dump(out, args.output)
    return EXIT_OK if report.is_laplacian else EXIT_DATA


def _noise_args(p):
    p.add_argument("--snr-db", type=float, help="SNR in dB (Tr{L~ S~ L~} / sigma2)")
    p.add_argument("--sigma2", type=float, help="noise variance (instead of --snr-db)")


def build_parser():
    parser = argparse.ArgumentParser(prog="mlbest", description="Blind estimation of grid states and topology.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit DC-model measurements for a case")
    p.add_argument("--case", default="ieee14", help="case file path or 'ieee14'")
    p.add_argument("-N", type=int, required=True)
    _noise_args(p)
    p.add_argument("--prior-c", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--states", help="also write the true states here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="run ML-BEST on a measurements CSV")
    p.add_argument("measurements")
    p.add_argument("--method", choices=estimators.METHODS, default=estimators.TWO_PHASE)
    p.add_argument("--prior-c", type=float, default=1.0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("-o", "--output")
    p.add_argument("--states", help="write the estimated states here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crb", help="Cramer-Rao bound for a case")
    p.add_argument("--case", default="ieee14")
    p.add_argument("-N", type=int, required=True)
    _noise_args(p)
    p.add_argument("--prior-c", type=float, default=1.0)
    p.add_argument("--full", action="store_true", help="include J and B_CRB")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_crb)

    for name, func, hlp in (
        ("experiment", cmd_experiment, "Monte-Carlo study from a config file"),
        ("bench", cmd_bench, "runtime study from a config file"),
    ):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--trials", type=int)
        if name == "experiment":
            p.add_argument("--output-dir")
            p.add_argument("--name", default="results.csv")
        else:
            p.add_argument("-o", "--output")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="Laplacian property report for a case")
    p.add_argument("--case", default="ieee14")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, SingularW) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MlbestError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
