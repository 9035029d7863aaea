"""
Experiment driver. Every subcommand writes a CSV table (to --out, or stdout)
and, when --out is given, a JSON sidecar next to it holding everything needed
to rerun the experiment.

Trial t draws from the integer seed derived from (--seed, t); trials may run
on several threads but rows are always written in trial order, so output is
identical for any --threads value.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import click
import numpy as np

from . import __version__
from .bp import BPParams, ks_threshold_eq, ks_threshold_sbm, stability_experiment
from .certify import (
    compare_row,
    default_noise,
    detect_via_certifier,
    gamma_k_exact,
    hoffman_certificate,
)
from .errors import ConfigError, NumericalError
from .graphs import apply_swap_noise, block_degree_matrix, sample_esbm, sample_uniform_regular
from .lowdeg import ldlr_wigner, ldlr_wishart, sbm_ldlr_bound, spike_prior_pi_k
from .nbwalks import path_stats_decide, pseudoexpectation_build, pseudoexpectation_verify

SCHEMA = 1
EXACT_GAMMA_MAX_N = 14


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict
    trials: int
    seed: int
    out: str | None = None
    threads: int = 1


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, dtype=np.uint64)[0])


def map_trials(fn: Callable[[int, int], list], cfg: ExperimentConfig) -> list:
    """Run fn(trial, seed) for each trial; results concatenated in trial order."""
    jobs = [(t, trial_seed(cfg.seed, t)) for t in range(cfg.trials)]
    if cfg.threads <= 1:
        out = [fn(t, s) for t, s in jobs]
    else:
        with ThreadPoolExecutor(cfg.threads) as ex:
            out = list(ex.map(lambda job: fn(*job), jobs))
    return [row for rows in out for row in rows]


def _git_revision() -> str:
    try:
        r = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"--{name}: {msg}")


def _need(params: dict, *names: str) -> None:
    for nm in names:
        _require(params.get(nm) is not None, nm, "is required for this subcommand")


# ---------------------------------------------------------------------------
# experiments


def _sample_graph(model: str, n: int, d: int, k: int, eta, seed: int):
    if model == "uniform":
        return sample_uniform_regular(n, d, seed=seed)
    lg = sample_esbm(n, k, d, eta, seed=seed)
    return lg.graph


def _eta(params: dict):
    e = params.get("eta")
    return None if e is None else Fraction(e).limit_denominator(10**6)


def run_certify(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    _need(p, "n", "d", "k")
    n, d, k, model = p["n"], p["d"], p["k"], p["model"]
    eta = _eta(p)
    if model == "esbm":
        _need(p, "eta")
        block_degree_matrix(k, d, eta)
    eps = p["eps"]
    noise = p["noise"] if p["noise"] is not None else default_noise(d, k, eps)
    cols = ["trial", "seed", "model", "n", "d", "k", "hoffman_gamma", "hoffman_mc", "exact_gamma", "exact_mc", "sound", "verdict"]

    def one(t, s):
        g = _sample_graph(model, n, d, k, eta, s)
        if model == "esbm" and noise > 0:
            g = apply_swap_noise(g, noise, seed=(s + 1) % 2**64)
        h = hoffman_certificate(g, k, seed=0)
        eg = em = None
        sound = None
        if n <= EXACT_GAMMA_MAX_N:
            ex = gamma_k_exact(g, k)
            eg, em = ex.value, ex.mc_bound
            sound = h.value >= ex.value - 1e-6
        verdict = detect_via_certifier(g, k, float(eta) if eta is not None else 0.0, eps) if eta is not None else None
        return [[t, s, model, n, d, k, h.value, float(h.mc_bound), eg, em, sound, verdict]]

    return ResultTable(cols, map_trials(one, cfg))


def run_compare(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    _need(p, "n", "d", "k")
    n, d, k = p["n"], p["d"], p["k"]
    cols = ["trial", "seed", "n", "d", "k", "hoffman_mc", "exact_mc", "grid_etas", "grid_lines", "spectral_line", "reference_k2"]

    def one(t, s):
        r = compare_row(sample_uniform_regular(n, d, seed=s), k)
        return [[t, s, n, d, k, r.hoffman_mc, r.exact_mc, ";".join(r.grid_etas),
                 ";".join(repr(x) for x in r.grid_lines), r.spectral_line, r.reference_k2]]

    return ResultTable(cols, map_trials(one, cfg))


def run_localstats(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    _need(p, "n", "d", "k", "eta", "delta", "degree")
    n, d, k, D, delta, model = p["n"], p["d"], p["k"], p["degree"], p["delta"], p["model"]
    eta = _eta(p)
    block_degree_matrix(k, d, eta)
    cols = ["trial", "seed", "verdict", "method", "constraint_id", "target", "observed", "slack_units"]

    def one(t, s):
        g = _sample_graph(model, n, d, k, eta, s)
        res = path_stats_decide(g, k, float(eta), D, delta, seed=0)
        if res.verdict != "P":
            return [[t, s, res.verdict, res.method, None, None, None, None]]
        rep = pseudoexpectation_verify(pseudoexpectation_build(res.primal.matrix, k), g, k, float(eta), D, delta)
        rows = [[t, s, res.verdict, res.method, "positivity_min", 0.0, rep.positivity_min, rep.positivity_min],
                [t, s, res.verdict, res.method, "hard_constraints", 0.0, rep.hard_error, rep.hard_error]]
        rows += [[t, s, res.verdict, res.method, r.constraint_id, r.target, r.observed, r.slack_units] for r in rep.rows]
        return rows

    return ResultTable(cols, map_trials(one, cfg))


def run_bp(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    _need(p, "n", "d", "k", "eta")
    n, d, k, sweeps = p["n"], p["d"], p["k"], p["sweeps"]
    eta = _eta(p)
    bm = block_degree_matrix(k, d, eta)
    params = BPParams(k, bm.diag, bm.off)
    cols = ["trial", "seed", "sweep", "perturbation_norm", "log_growth", "rate", "unstable"]

    def one(t, s):
        g = sample_esbm(n, k, d, eta, seed=s).graph
        r = stability_experiment(params, g, T=sweeps, seed=(s + 1) % 2**64)
        out = []
        for i, nrm in enumerate(r.norms):
            lg = float(r.log_growth[i - 1]) if i else None
            out.append([t, s, i, float(nrm), lg, r.rate, r.unstable])
        return out

    return ResultTable(cols, map_trials(one, cfg))


def run_ldlr(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    _need(p, "n", "k", "degree")
    model, n, k, D = p["model"], p["n"], p["k"], p["degree"]
    prior = spike_prior_pi_k(k)
    cols = ["model", "n", "D", "lambda_or_beta", "estimate", "stderr", "method"]
    if model == "wigner":
        _need(p, "lam")
        est = ldlr_wigner(p["lam"], prior, n, D, trials=cfg.trials, seed=cfg.seed, method=p["method"], threads=cfg.threads)
        snr = p["lam"]
    elif model == "wishart":
        est = ldlr_wishart(p["beta"], p["gamma"], prior, n, D, trials=cfg.trials, seed=cfg.seed, threads=cfg.threads)
        snr = p["beta"]
    else:
        _need(p, "d", "eta")
        est = sbm_ldlr_bound(k, p["d"], p["eta"], n, D, trials=cfg.trials, seed=cfg.seed, threads=cfg.threads)
        snr = p["eta"]
    t = ResultTable(cols, [[model, n, D, snr, est.value, est.stderr, est.method]])
    t.summary = {"log_value": est.log_value, "overflow": est.overflow, "zero_branch_rate": est.zero_branch_rate}
    return t


def _k_range(spec: str) -> list[int]:
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            ks = list(range(int(lo), int(hi) + 1))
        else:
            ks = [int(x) for x in spec.split(",")]
    except ValueError as e:
        raise ConfigError(f"--k: cannot parse '{spec}'") from e
    _require(len(ks) > 0 and min(ks) >= 2, "k", "values must be at least 2")
    return ks


def run_sweep_thresholds(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    ks = _k_range(p["k_range"])
    m = p["eta_grid"]
    _require(m >= 1, "eta-grid", "must be positive")
    cols = ["k", "eta", "d_ks_eq", "d_ks_sbm", "ratio"]
    rows = []
    for k in ks:
        for j in range(1, m + 1):
            eta = -j / (m * (k - 1))
            a, b = ks_threshold_eq(eta), ks_threshold_sbm(eta)
            rows.append([k, eta, a, b, a / b])
    return ResultTable(cols, rows)


def run_roc(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    _need(p, "n", "d", "k", "eta", "delta", "degree")
    n, d, k, D, delta, model, eps = p["n"], p["d"], p["k"], p["degree"], p["delta"], p["model"], p["eps"]
    eta = _eta(p)
    block_degree_matrix(k, d, eta)
    cols = ["trial", "seed", "model", "hoffman_mc", "hoffman_verdict", "path_verdict", "path_method"]

    def one(t, s):
        g = _sample_graph(model, n, d, k, eta, s)
        h = hoffman_certificate(g, k, seed=0)
        hv = detect_via_certifier(g, k, float(eta), eps, certifier=lambda _g, _k: h)
        ps = path_stats_decide(g, k, float(eta), D, delta, seed=0)
        return [[t, s, model, float(h.mc_bound), hv, ps.verdict, ps.method]]

    tab = ResultTable(cols, map_trials(one, cfg))
    counts = {}
    for name, idx in (("hoffman", 4), ("path_stats", 5)):
        c = {}
        for r in tab.rows:
            c[r[idx]] = c.get(r[idx], 0) + 1
        counts[name] = dict(sorted(c.items()))
    tab.summary = {"verdict_counts": counts}
    return tab


RUNNERS = {
    "certify": run_certify,
    "compare": run_compare,
    "localstats": run_localstats,
    "bp": run_bp,
    "ldlr": run_ldlr,
    "sweep-thresholds": run_sweep_thresholds,
    "roc": run_roc,
}


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    _require(cfg.trials >= 1, "trials", "must be positive")
    _require(cfg.threads >= 1, "threads", "must be positive")
    _require(cfg.seed >= 0, "seed", "must be nonnegative")
    for nm in ("n", "d", "degree"):
        v = cfg.params.get(nm)
        _require(v is None or v >= 1, nm, "must be positive")
    v = cfg.params.get("delta")
    _require(v is None or v > 0, "delta", "must be positive")
    if cfg.subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {cfg.subcommand}")
    return RUNNERS[cfg.subcommand](cfg)


def emit(cfg: ExperimentConfig, table: ResultTable, wall: float) -> None:
    text = table.to_csv()
    if cfg.out is None:
        sys.stdout.write(text)
        return
    out = Path(cfg.out)
    out.write_text(text, newline="")
    meta = {
        "schema": SCHEMA,
        "version": __version__,
        "config": asdict(cfg),
        "git_revision": _git_revision(),
        "wall_time_s": wall,
        "rows": len(table.rows),
        "summary": table.summary,
    }
    out.with_name(out.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


def config_from_sidecar(path: str | Path) -> ExperimentConfig:
    meta = json.loads(Path(path).read_text())
    if meta.get("schema") != SCHEMA:
        raise ConfigError(f"unsupported sidecar schema {meta.get('schema')}")
    return ExperimentConfig(**meta["config"])


# ---------------------------------------------------------------------------
# command line


def _common(f=None, *, trials: int = 1):
    if f is None:
        return lambda g: _common(g, trials=trials)
    opts = [
        click.option("--n", "n", type=int, default=None, help="number of vertices / dimension"),
        click.option("--d", "d", type=int, default=None, help="degree"),
        click.option("--k", "k", type=int, default=None, help="number of colors"),
        click.option("--eta", type=float, default=None, help="signal strength"),
        click.option("--delta", type=float, default=None, help="path-statistics tolerance"),
        click.option("--beta", type=float, default=-0.9, show_default=True),
        click.option("--gamma", type=float, default=1.1, show_default=True, help="n / N"),
        click.option("--degree", "degree", type=int, default=None, help="polynomial degree D"),
        click.option("--trials", type=int, default=trials, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), default=None),
        click.option("--threads", type=int, default=1, show_default=True),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


CTX = {"help_option_names": ["-h", "--help"]}


def _go(sub: str, kw: dict, **extra) -> None:
    trials, seed, out, threads = kw.pop("trials"), kw.pop("seed"), kw.pop("out"), kw.pop("threads")
    cfg = ExperimentConfig(sub, {**kw, **extra}, trials, seed, out, threads)
    t0 = time.perf_counter()
    table = run_experiment(cfg)
    emit(cfg, table, time.perf_counter() - t0)


@click.group(context_settings=CTX)
@click.version_option(__version__)
def cli():
    """Planted k-cut experiments."""


@cli.command(context_settings=CTX)
@_common
@click.option("--model", type=click.Choice(["uniform", "esbm"]), default="uniform", show_default=True)
@click.option("--eps", type=float, default=0.05, show_default=True)
@click.option("--noise", type=float, default=None, help="swap-noise fraction (default d eps (k-1)/(5k))")
def certify(**kw):
    """Hoffman bound (and exact value for small n) per sampled graph."""
    _go("certify", kw)


@cli.command(context_settings=CTX)
@_common
def compare(**kw):
    """Certificate comparison table against planted-threshold lines."""
    _go("compare", kw)


@cli.command(context_settings=CTX)
@_common
@click.option("--model", type=click.Choice(["uniform", "esbm"]), default="uniform", show_default=True)
def localstats(**kw):
    """Path-statistics test and per-constraint slack of its pseudoexpectation."""
    _go("localstats", kw)


@cli.command(context_settings=CTX)
@_common
@click.option("--sweeps", type=int, default=20, show_default=True)
def bp(**kw):
    """Growth of a small perturbation of the BP fixed point."""
    _go("bp", kw)


@cli.command(context_settings=CTX)
@_common(trials=10_000)
@click.option("--model", type=click.Choice(["wigner", "wishart", "sbm"]), default="wigner", show_default=True)
@click.option("--lam", type=float, default=None, help="Wigner signal-to-noise ratio")
@click.option("--method", type=click.Choice(["mc", "exact"]), default="mc", show_default=True)
def ldlr(**kw):
    """Norm of the low-degree likelihood ratio."""
    _go("ldlr", kw)


@cli.command("sweep-thresholds", context_settings=CTX)
@click.option("--k", "k_range", default="2..6", show_default=True, help="range a..b or list a,b,c")
@click.option("--eta-grid", type=int, default=32, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
def sweep_thresholds(**kw):
    """Threshold degrees of the equitable and ordinary block models."""
    kw["trials"] = 1
    _go("sweep-thresholds", kw)


@cli.command(context_settings=CTX)
@_common
@click.option("--model", type=click.Choice(["uniform", "esbm"]), default="esbm", show_default=True)
@click.option("--eps", type=float, default=0.05, show_default=True)
def roc(**kw):
    """Verdicts of the Hoffman and path-statistics distinguishers."""
    _go("roc", kw)


@cli.command(context_settings=CTX)
@click.argument("sidecar", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def rerun(sidecar, out):
    """Repeat the experiment recorded in a JSON sidecar."""
    cfg = config_from_sidecar(sidecar)
    cfg.out = out
    t0 = time.perf_counter()
    table = run_experiment(cfg)
    emit(cfg, table, time.perf_counter() - t0)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="plantedcut", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 2
    except click.Abort:
        return 1
    except ConfigError as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except NumericalError as e:
        click.echo(f"numerical failure: {e}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
