"""Monte-Carlo experiments, runtime study and result files.

A run expands its config into scenario points (graph, noise level, N).
Every trial of a point draws one data set from a counter-based generator
keyed by ``(seed, point, trial)``, runs each requested method on it, and
compares against the truth and the oracle MMSE estimator. Trials may run
in worker processes; results are always reduced in (point, trial) order so
the output does not depend on the worker count.
"""

import csv
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__, crb, dcmodel, estimators, graph
from .errors import ConfigError, MlbestError

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "scenario",
    "method",
    "M",
    "N",
    "snr_db",
    "sigma2",
    "topology_mse",
    "crb_trace",
    "fscore",
    "state_mse",
    "oracle_state_mse",
    "sigma2_hat",
    "runtime_s",
    "failures",
)
FAILURE_FLAG_RATE = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte-Carlo study description.

    ``scenario`` is either ``{"case": "ieee14" | path}`` or
    ``{"watts_strogatz": {"M": int | [int], "degree": 4, "rewire_prob": 0.1,
    "frobenius_norm": 5.0}}``. Exactly one of ``snr_db`` and ``sigma2``
    (each a list) must be given.
    """

    scenario: dict
    N_list: tuple
    snr_db: tuple | None = None
    sigma2: tuple | None = None
    mc_trials: int = 50
    methods: tuple = estimators.METHODS
    alpha: float | None = None
    prior_c: float = 1.0
    solver: estimators.SolverSettings = field(default_factory=estimators.SolverSettings)
    seed: int = 0
    workers: int = 1
    timing: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if (self.snr_db is None) == (self.sigma2 is None):
            raise ConfigError("give exactly one of snr_db and sigma2")
        if self.mc_trials < 1:
            raise ConfigError("mc_trials must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.N_list:
            raise ConfigError("N_list is empty")
        levels = self.snr_db if self.snr_db is not None else self.sigma2
        if not levels:
            raise ConfigError("noise level list is empty")
        if self.sigma2 is not None and any(s <= 0 for s in self.sigma2):
            raise ConfigError("sigma2 values must be positive")
        if self.prior_c <= 0:
            raise ConfigError("prior_c must be positive")
        for m in self.methods:
            if m not in estimators.METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if set(self.scenario) == {"case"}:
            pass
        elif set(self.scenario) == {"watts_strogatz"}:
            ws = self.scenario["watts_strogatz"]
            if not isinstance(ws, dict) or "M" not in ws:
                raise ConfigError("watts_strogatz scenario needs at least M")
            unknown = set(ws) - {"M", "degree", "rewire_prob", "frobenius_norm"}
            if unknown:
                raise ConfigError(f"unknown watts_strogatz keys {sorted(unknown)}")
        else:
            raise ConfigError("scenario must have exactly one of 'case' or 'watts_strogatz'")

    def as_dict(self):
        d = asdict(self)
        d["solver"] = asdict(self.solver)
        for k in ("N_list", "snr_db", "sigma2", "methods"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def _as_tuple(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


def config_from_dict(d, **overrides):
    """Build an :class:`ExperimentConfig` from plain data (e.g. parsed YAML).

    Keyword overrides replace top-level keys; ``None`` overrides are ignored.
    """
    d = dict(d or {})
    d.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "scenario" not in d or "N_list" not in d:
        raise ConfigError("config needs 'scenario' and 'N_list'")
    try:
        solver = d.get("solver") or {}
        if not isinstance(solver, estimators.SolverSettings):
            solver = estimators.SolverSettings(**solver)
        for k in ("N_list", "snr_db", "sigma2", "methods"):
            if k in d:
                d[k] = _as_tuple(d[k])
        if "N_list" in d:
            d["N_list"] = tuple(int(n) for n in d["N_list"])
        for k in ("snr_db", "sigma2"):
            if d.get(k) is not None:
                d[k] = tuple(float(x) for x in d[k])
        d["solver"] = solver
        return ExperimentConfig(**d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return config_from_dict(data, **overrides)


# -- scenario points ---------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One ground-truth system: graph, Laplacian and state prior."""

    name: str
    lp: graph.LaplacianPair
    prior: dcmodel.StatePrior
    grid: graph.WeightedGraph


@dataclass(frozen=True)
class ScenarioPoint:
    index: int
    scenario: Scenario
    N: int
    sigma2: float
    snr_db: float


def _sub_seed(seed, *key):
    return int(np.random.SeedSequence(int(seed), spawn_key=key).generate_state(1)[0])


def build_scenarios(cfg):
    """Ground-truth systems named by the config, in a fixed order."""
    scen = cfg.scenario
    if "case" in scen:
        spec = scen["case"]
        try:
            g = graph.ieee14() if spec == "ieee14" else graph.load_case(spec)
        except OSError as exc:
            raise ConfigError(f"cannot read case {spec}: {exc}") from exc
        name = spec if spec == "ieee14" else Path(spec).stem
        lp = graph.laplacian_from_graph(g)
        prior = dcmodel.StatePrior.isotropic(lp.M, cfg.prior_c)
        return [Scenario(name, lp, prior, g)]
    ws = scen["watts_strogatz"]
    Ms = ws["M"] if isinstance(ws["M"], (list, tuple)) else [ws["M"]]
    out = []
    for i, M in enumerate(Ms):
        g = graph.watts_strogatz(
            int(M),
            mean_degree=int(ws.get("degree", 4)),
            rewire_prob=float(ws.get("rewire_prob", 0.1)),
            target_frobenius=ws.get("frobenius_norm"),
            seed=_sub_seed(cfg.seed, 1_000_000 + i),
        )
        lp = graph.laplacian_from_graph(g)
        prior = dcmodel.StatePrior.isotropic(lp.M, cfg.prior_c)
        out.append(Scenario(f"ws_M{int(M)}", lp, prior, g))
    return out


def scenario_points(cfg, scenarios=None):
    scenarios = scenarios if scenarios is not None else build_scenarios(cfg)
    points = []
    for sc in scenarios:
        for N in cfg.N_list:
            if N < sc.lp.M - 1:
                raise ConfigError(f"N={N} is below M-1={sc.lp.M - 1} for {sc.name}")
            if cfg.snr_db is not None:
                levels = [(dcmodel.snr_to_noise_var(sc.lp, sc.prior, s), s) for s in cfg.snr_db]
            else:
                levels = [(s, dcmodel.noise_var_to_snr(sc.lp, sc.prior, s)) for s in cfg.sigma2]
            for sigma2, snr in levels:
                points.append(ScenarioPoint(len(points), sc, int(N), float(sigma2), float(snr)))
    return points


# -- trials ------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    point: int
    trial: int
    method: str
    failed: bool
    topology_mse: float = float("nan")
    fscore: float = float("nan")
    state_mse: float = float("nan")
    oracle_state_mse: float = float("nan")
    sigma2_hat: float = float("nan")
    runtime_s: float | None = None
    converged: bool = True
    error: str = ""


def topology_error(L_hat, L_true):
    """Squared error of ``vech`` of the reduced matrices, summed."""
    d = crb.vech(graph.reduce_laplacian(L_hat)) - crb.vech(graph.reduce_laplacian(L_true))
    return float(d @ d)


def _run_trial(task):
    L, sigma_theta, sigma2, N, methods, alpha, settings, seed, key, timing = task
    lp = graph.LaplacianPair.from_laplacian(L)
    prior = dcmodel.StatePrior(sigma_theta)
    ms, theta = dcmodel.simulate(lp, prior, sigma2, N, seed, *key)
    M = lp.M
    oracle = estimators.mmse_states(ms.P, L, sigma_theta, sigma2)
    oracle_mse = float(np.sum((oracle - theta) ** 2) / (M * N))
    out = []
    for method in methods:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = estimators.ml_best(ms, sigma_theta, method, settings, alpha)
        except (MlbestError, np.linalg.LinAlgError) as exc:
            out.append(TrialRecord(key[0], key[1], method, True, error=f"{type(exc).__name__}: {exc}"))
            continue
        elapsed = time.perf_counter() - t0
        out.append(
            TrialRecord(
                point=key[0],
                trial=key[1],
                method=method,
                failed=False,
                topology_mse=topology_error(res.L_hat, L),
                fscore=graph.fscore(res.L_hat, L),
                state_mse=float(np.sum((res.states_hat - theta) ** 2) / (M * N)),
                oracle_state_mse=oracle_mse,
                sigma2_hat=res.sigma2_hat,
                runtime_s=elapsed if timing else None,
                converged=bool(res.diagnostics.get("converged", True)),
            )
        )
    return out


def _tasks(cfg, points):
    for p in points:
        for t in range(cfg.mc_trials):
            yield (
                p.scenario.lp.L,
                p.scenario.prior.sigma_theta,
                p.sigma2,
                p.N,
                tuple(cfg.methods),
                cfg.alpha,
                cfg.solver,
                cfg.seed,
                (p.index, t),
                cfg.timing,
            )


def run_trials(cfg, points=None):
    """All trial records in (point, trial, method) order."""
    points = points if points is not None else scenario_points(cfg)
    tasks = _tasks(cfg, points)
    if cfg.workers == 1:
        batches = map(_run_trial, tasks)
        return [r for batch in batches for r in batch]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        batches = pool.map(_run_trial, tasks, chunksize=max(1, cfg.mc_trials // cfg.workers))
        return [r for batch in batches for r in batch]


# -- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    """Trial-averaged metrics of one (point, method) pair.

    Means exclude failed trials. The medians and the flag are extra
    information that is not written to the CSV.
    """

    scenario: str
    method: str
    M: int
    N: int
    snr_db: float
    sigma2: float
    topology_mse: float
    crb_trace: float
    fscore: float
    state_mse: float
    oracle_state_mse: float
    sigma2_hat: float
    runtime_s: float | None
    failures: int
    trials: int = 0
    nonconverged: int = 0
    topology_mse_median: float = float("nan")
    state_mse_median: float = float("nan")
    state_gap_median: float = float("nan")
    flagged: bool = False

    def csv_values(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else float("nan")


def _median(xs):
    return float(np.median(xs)) if len(xs) else float("nan")


def aggregate(cfg, points, records):
    by_key = {}
    for r in records:
        by_key.setdefault((r.point, r.method), []).append(r)
    rows = []
    for p in points:
        sc = p.scenario
        bound = crb.crb_report(sc.lp.L_reduced, sc.prior.sigma_theta_reduced, p.sigma2, p.N, sc.lp)
        for method in cfg.methods:
            recs = by_key.get((p.index, method), [])
            ok = [r for r in recs if not r.failed]
            failures = len(recs) - len(ok)
            topo = [r.topology_mse for r in ok]
            state = [r.state_mse for r in ok]
            gap = [(r.state_mse - r.oracle_state_mse) / r.oracle_state_mse for r in ok]
            runtime = _mean([r.runtime_s for r in ok]) if cfg.timing and ok else None
            rows.append(
                MetricsRow(
                    scenario=sc.name,
                    method=method,
                    M=sc.lp.M,
                    N=p.N,
                    snr_db=p.snr_db,
                    sigma2=p.sigma2,
                    topology_mse=_mean(topo),
                    crb_trace=bound.topology_bound_trace,
                    fscore=_mean([r.fscore for r in ok]),
                    state_mse=_mean(state),
                    oracle_state_mse=_mean([r.oracle_state_mse for r in ok]),
                    sigma2_hat=_mean([r.sigma2_hat for r in ok]),
                    runtime_s=runtime,
                    failures=failures,
                    trials=len(recs),
                    nonconverged=sum(not r.converged for r in ok),
                    topology_mse_median=_median(topo),
                    state_mse_median=_median(state),
                    state_gap_median=_median(gap),
                    flagged=failures > FAILURE_FLAG_RATE * max(len(recs), 1),
                )
            )
    return rows


def run_experiment(cfg, return_trials=False):
    """Run the Monte-Carlo study described by ``cfg``.

    Returns the list of :class:`MetricsRow` (and the trial records when
    ``return_trials`` is set). Per-trial failures are counted, not raised.

    Raises
    ------
    ConfigError
    """
    points = scenario_points(cfg)
    records = run_trials(cfg, points)
    rows = aggregate(cfg, points, records)
    for row in rows:
        if row.flagged:
            log.warning("%s/%s N=%d: %d of %d trials failed", row.scenario, row.method, row.N, row.failures, row.trials)
    if return_trials:
        return rows, records
    return rows


# -- runtime study -----------------------------------------------------------


@dataclass(frozen=True)
class RuntimeRow:
    scenario: str
    M: int
    method: str
    N: int
    median_runtime_s: float
    mean_runtime_s: float
    trials: int
    failures: int


def runtime_benchmark(cfg):
    """Median wall-clock time of one topology-recovery call.

    Simulation and covariance formation are excluded: the clock covers
    noise-variance estimation, the mixing estimate, the constrained
    recovery and thresholding. Uses the first noise level of the config.
    """
    rows = []
    for sc in build_scenarios(cfg):
        if cfg.snr_db is not None:
            sigma2 = dcmodel.snr_to_noise_var(sc.lp, sc.prior, cfg.snr_db[0])
        else:
            sigma2 = cfg.sigma2[0]
        for N in cfg.N_list:
            covs = []
            for t in range(cfg.mc_trials):
                ms, _ = dcmodel.simulate(sc.lp, sc.prior, sigma2, N, cfg.seed, 2_000_000 + sc.lp.M, N, t)
                ms = dcmodel.center(ms)
                covs.append(dcmodel.sample_covariance(ms, sc.lp)[0])
            for method in cfg.methods:
                times = []
                failures = 0
                for cov in covs:
                    t0 = time.perf_counter()
                    try:
                        estimators.recover_topology(cov, sc.prior.sigma_theta, method, cfg.solver, cfg.alpha)
                    except (MlbestError, np.linalg.LinAlgError):
                        failures += 1
                        continue
                    times.append(time.perf_counter() - t0)
                rows.append(
                    RuntimeRow(sc.name, sc.lp.M, method, int(N), _median(times), _mean(times), len(covs), failures)
                )
    return rows


def loglog_slope(Ms, times):
    """Least-squares slope of ``log(time)`` against ``log(M)``."""
    return float(np.polyfit(np.log(Ms), np.log(times), 1)[0])


# -- files -------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_results(rows, path, cfg=None, records=None):
    """Write the results CSV and, next to it, a JSON run manifest.

    Empty ``runtime_s`` cells mean timing was switched off, which keeps the
    file byte-identical between runs. Returns the manifest path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in row.csv_values()])
    manifest = {
        "library": "mlbest",
        "version": __version__,
        "results": path.name,
        "config": cfg.as_dict() if cfg is not None else None,
        "seed": cfg.seed if cfg is not None else None,
        "points": [
            {
                "scenario": r.scenario,
                "method": r.method,
                "N": r.N,
                "snr_db": r.snr_db,
                "trials": r.trials,
                "failures": r.failures,
                "nonconverged": r.nonconverged,
                "flagged": r.flagged,
            }
            for r in rows
        ],
    }
    if records is not None:
        manifest["failed_trials"] = [
            {"point": r.point, "trial": r.trial, "method": r.method, "error": r.error} for r in records if r.failed
        ]
    mpath = path.with_suffix(".manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return mpath


_INT_COLS = {"M", "N", "failures"}
_STR_COLS = {"scenario", "method"}


def read_results(path):
    """Parse a results CSV back into :class:`MetricsRow` objects (CSV fields only)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for rec in reader:
            kw = {}
            for c in CSV_COLUMNS:
                v = rec[c]
                if c in _STR_COLS:
                    kw[c] = v
                elif c in _INT_COLS:
                    kw[c] = int(v)
                else:
                    kw[c] = None if v == "" else float(v)
            rows.append(MetricsRow(**kw))
    return rows
