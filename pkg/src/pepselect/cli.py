"""Command-line front end: ``pep-select <command> [options]``.

Every run writes its outputs plus a ``manifest.json`` into ``--out``. Files
are first written to a private staging directory inside ``--out`` and only
moved into place when the command succeeds, so a failed run leaves nothing
behind. Exit status is 0 on success, 1 on a computational failure and 2 on
a usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .bma import BmaError, CvConfig, bma_lps, bma_predict_closed, bma_predict_mcmc, bma_r2, bma_rmse
from .data import (DataError, Dataset, ModelId, RankDeficientError, Reference, centre,
                   format_float, load_csv, ols_stats, write_csv)
from .evidence import EvidenceError
from .modelspace import EnumerationError, ModelPrior, PosteriorTable, enumerate_models, map_model
from .posterior import (MomentError, posterior_expectation, posterior_g_summary,
                        posterior_g_tail_slope)
from .priors import PriorError, PriorSpec, log_prior_excess_fn, mixing_params, prior_w_moments
from .samplers import (SamplerConfig, SamplerError, merge_traces, run_chains, trace_summaries,
                       write_trace_binary, write_trace_csv)
from .simgen import ScenarioConfig, generate, run_study
from .specfun import DomainError, QuadratureError, integrate_log

SCHEMA = "pep-select/1"
COMMANDS = ("enumerate", "mc3", "mc3g", "gibbs", "predict", "lps", "simulate", "shrinkage",
            "replay")
PRIORS = {
    "pep": "PEP",
    "epp": "EPP",
    "intrinsic": "Intrinsic",
    "hyper-g": "HyperG",
    "hyper-gn": "HyperGN",
    "robust": "Robust",
    "benchmark": "Benchmark",
    "g-prior": "FixedG",
}
MODEL_PRIORS = {"uniform": "Uniform", "uniform-dim": "UniformOnDimension"}
ALGORITHM = {"mc3": "MC3", "mc3g": "MC3_given_g", "gibbs": "GibbsVS"}
NEEDS_DATA = ("enumerate", "mc3", "mc3g", "gibbs", "predict", "lps", "shrinkage")
PATH_FLAGS = ("--data", "--new", "--out", "--manifest")

COMPUTE_ERRORS = (DataError, RankDeficientError, EnumerationError, EvidenceError, PriorError,
                  SamplerError, BmaError, MomentError, QuadratureError, DomainError,
                  np.linalg.LinAlgError, FileNotFoundError, ValueError, OSError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# JSON with 17 significant digits


def _json_value(o, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if o is None or isinstance(o, (bool, np.bool_)):
        return "null" if o is None else ("true" if o else "false")
    if isinstance(o, (int, np.integer)):
        return str(int(o))
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return format_float(v) if math.isfinite(v) else "null"
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, np.ndarray):
        o = o.tolist()
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}"
                 for k, v in o.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(o, (list, tuple)):
        if not o:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, str)) or v is None for v in o):
            return "[" + ", ".join(_json_value(v, indent, level + 1) for v in o) + "]"
        items = [pad + _json_value(v, indent, level + 1) for v in o]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits; nan and inf become null."""
    return _json_value(obj, indent, 0) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj), encoding="utf-8")


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# argument parsing


@dataclass
class RunConfig:
    command: str
    argv: list[str]
    data: str | None
    response: str
    spec: PriorSpec
    model_prior: ModelPrior
    sampler: SamplerConfig | None
    out: str
    format: str
    threads: int
    reference: tuple[str, ...] = ()
    options: dict = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)

    def echo(self) -> dict:
        return {
            "command": self.command,
            "data": self.data,
            "response": self.response,
            "prior": asdict(self.spec),
            "model_prior": self.model_prior.kind,
            "sampler": None if self.sampler is None else {
                k: v for k, v in asdict(self.sampler).items() if k != "start"},
            "format": self.format,
            "threads": self.threads,
            "reference": list(self.reference),
            "options": self.options,
        }


def _positive_int(s):
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a nonnegative integer")
    return v


def _nstar(s):
    if s == "minimal":
        return s
    return _positive_int(s)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data and prior")
    g.add_argument("--data", help="CSV file with a header row")
    g.add_argument("--response", default="y", help="response column (default y)")
    g.add_argument("--reference", default="",
                   help="comma-separated covariates always kept in the reference model")
    g.add_argument("--prior", choices=sorted(PRIORS), default="pep")
    g.add_argument("--delta", type=float, help="power parameter (default n*)")
    g.add_argument("--nstar", type=_nstar, help="imaginary sample size or 'minimal' (default n)")
    g.add_argument("--d0", type=float, default=0.0)
    g.add_argument("--d1", type=float, default=0.0)
    g.add_argument("--g", type=float, dest="g_fixed", help="g for --prior g-prior (default n)")
    g.add_argument("--a-h", type=float, default=3.0, help="hyper-g shape (default 3)")
    g.add_argument("--model-prior", choices=sorted(MODEL_PRIORS), default="uniform")
    s = common.add_argument_group("sampler")
    s.add_argument("--iters", type=_positive_int, default=100_000)
    s.add_argument("--burnin", type=_nonneg_int, default=10_000)
    s.add_argument("--thin", type=_positive_int, default=1)
    s.add_argument("--seed", type=_nonneg_int, default=0)
    s.add_argument("--chains", type=_positive_int, default=1)
    s.add_argument("--scan", choices=("systematic", "random"), default="systematic")
    o = common.add_argument_group("output")
    o.add_argument("--out", default="pep-select-out", help="output directory")
    o.add_argument("--format", choices=("json", "csv"), default="json")
    o.add_argument("--threads", type=_positive_int, default=1, help="worker cap")

    p = argparse.ArgumentParser(prog="pep-select",
                                description="Bayesian variable selection with PEP and related priors.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    sub.add_parser("enumerate", parents=[common], help="exact posterior over all models")
    for name, what in (("mc3", "MC3 on marginal likelihoods"),
                       ("mc3g", "MC3 with a Gibbs step for g"),
                       ("gibbs", "Gibbs variable selection")):
        c = sub.add_parser(name, parents=[common], help=what)
        c.add_argument("--trace", choices=("csv", "binary", "none"), default="csv")
    c = sub.add_parser("predict", parents=[common], help="BMA point predictions")
    c.add_argument("--new", required=True, help="CSV of new covariate rows")
    c.add_argument("--source", choices=("enumeration", "gibbs"), default="enumeration")
    c = sub.add_parser("lps", parents=[common], help="cross-validated log predictive score")
    c.add_argument("--folds", type=_positive_int, default=8)
    c.add_argument("--engine", choices=("enumeration", "gibbs"), default="enumeration")
    c.add_argument("--predictive", choices=("ratio", "exact"), default="ratio")
    c = sub.add_parser("simulate", parents=[common], help="simulated datasets or a replicate study")
    c.add_argument("--scenario", type=int, choices=(1, 2), default=1)
    c.add_argument("--n", type=_positive_int, default=50)
    c.add_argument("--p", type=_positive_int, default=15)
    c.add_argument("--replicates", type=_positive_int, default=1)
    c.add_argument("--study", action="store_true",
                   help="enumerate each replicate under PEP and intrinsic priors")
    c = sub.add_parser("shrinkage", parents=[common], help="prior and posterior moments of w and g")
    c.add_argument("--model", default="", help="comma-separated covariates of the model")
    c = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True)
    return p


def _absolute_argv(argv: list[str]) -> list[str]:
    out = list(argv)
    for i, a in enumerate(out):
        if a in PATH_FLAGS and i + 1 < len(out):
            out[i + 1] = str(Path(out[i + 1]).resolve())
        else:
            for f in PATH_FLAGS:
                if a.startswith(f + "="):
                    out[i] = f + "=" + str(Path(a[len(f) + 1:]).resolve())
    return out


def parse_args(argv: list[str]) -> RunConfig:
    """Parse and cross-check a command line; usage problems exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "replay":
        return RunConfig("replay", list(argv), None, "y", PriorSpec(), ModelPrior(), None,
                         ns.out, "json", 1, options={"manifest": ns.manifest})
    if ns.command in NEEDS_DATA and not ns.data:
        parser.error(f"{ns.command} needs --data")
    notices = []
    family = PRIORS[ns.prior]
    try:
        spec = PriorSpec(family, delta=ns.delta, n_star=ns.nstar, d0=ns.d0, d1=ns.d1,
                         a_h=ns.a_h, g_fixed=ns.g_fixed)
    except PriorError as exc:
        parser.error(str(exc))
    if ns.g_fixed is not None and family != "FixedG":
        parser.error("--g only applies to --prior g-prior")
    sampler = None
    if ns.command in ALGORITHM or (ns.command == "predict" and ns.source == "gibbs") or \
            (ns.command == "lps" and ns.engine == "gibbs"):
        algo = ALGORITHM.get(ns.command, "GibbsVS")
        try:
            sampler = SamplerConfig(ns.iters, ns.burnin, ns.seed, algo, ns.thin, ns.scan)
        except ValueError as exc:
            parser.error(str(exc))
        if family == "FixedG" and algo != "MC3":
            notices.append("g-prior has no hyper-prior on g: g is held fixed and the g step "
                           "is skipped")
    opts = {}
    if ns.command in ALGORITHM:
        opts = {"chains": ns.chains, "trace": ns.trace}
    elif ns.command == "predict":
        opts = {"new": ns.new, "source": ns.source}
    elif ns.command == "lps":
        opts = {"folds": ns.folds, "engine": ns.engine, "predictive": ns.predictive,
                "seed": ns.seed}
    elif ns.command == "simulate":
        opts = {"scenario": ns.scenario, "n": ns.n, "p": ns.p, "replicates": ns.replicates,
                "study": ns.study, "seed": ns.seed}
        try:
            ScenarioConfig(ns.scenario, ns.n, ns.p, ns.replicates, ns.seed)
        except ValueError as exc:
            parser.error(str(exc))
    elif ns.command == "shrinkage":
        opts = {"model": [s for s in ns.model.split(",") if s]}
    reference = tuple(s for s in ns.reference.split(",") if s)
    return RunConfig(ns.command, list(argv), ns.data, ns.response, spec,
                     ModelPrior(MODEL_PRIORS[ns.model_prior]), sampler, ns.out, ns.format,
                     ns.threads, reference, opts, notices)


# ---------------------------------------------------------------------------
# commands


def _load(cfg: RunConfig) -> tuple[Dataset, Reference]:
    ds = load_csv(cfg.data, cfg.response)
    cols = []
    for name in cfg.reference:
        if name not in ds.names:
            raise UsageError(f"--reference: no covariate named {name!r}")
        cols.append(ds.names.index(name))
    return ds, Reference(tuple(sorted(cols)))


def _table_outputs(table: PosteriorTable, cfg: RunConfig, tmp: Path, stem: str = "") -> None:
    names = list(table.names)
    if cfg.format == "json":
        obj = {"schema": SCHEMA, "command": cfg.command, "prior": cfg.spec.family,
               "model_prior": cfg.model_prior.kind, "map_model": map_model(table).bits}
        obj.update(table.to_json_obj())
        write_json(tmp / f"{stem}posterior.json", obj)
        return
    table.to_csv(tmp / f"{stem}models.csv")
    _write_rows(tmp / f"{stem}inclusion.csv", ["covariate", "inclusion_prob"],
                zip(names, map(float, table.inclusion_probs)))
    _write_rows(tmp / f"{stem}dimension.csv", ["size", "prob"],
                enumerate(map(float, table.dim_posterior)))


def cmd_enumerate(cfg: RunConfig, tmp: Path, info: dict) -> None:
    ds, ref = _load(cfg)
    table = enumerate_models(ds, cfg.spec, cfg.model_prior, ref, threads=cfg.threads)
    info["evidence_methods"] = table.method_counts()
    _table_outputs(table, cfg, tmp)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed + (stream << 64)))


def cmd_chain(cfg: RunConfig, tmp: Path, info: dict) -> None:
    ds, ref = _load(cfg)
    n_chains = cfg.options["chains"]
    traces = run_chains(ds, cfg.spec, cfg.model_prior, cfg.sampler, n_chains, cfg.threads, ref)
    trace = merge_traces(traces)
    summ = trace_summaries(trace, ref)
    obj = {"schema": SCHEMA, "command": cfg.command, "algorithm": trace.algorithm,
           "prior": cfg.spec.family, "model_prior": cfg.model_prior.kind,
           "chains": n_chains, "kept": len(trace), "names": list(ds.names),
           "inclusion_probs": summ.inclusion_probs, "dim_posterior": summ.dim_posterior,
           "visits": dict(sorted(summ.visit_counts.items(), key=lambda kv: (-kv[1], kv[0]))),
           "counters": {k: v for k, v in sorted(trace.counters.items())}}
    if np.all(np.isfinite(trace.g)):
        obj["posterior_mean_g"] = float(trace.g.mean())
        obj["posterior_mean_w"] = float(np.mean(trace.g / (1.0 + trace.g)))
    if trace.beta is not None:
        obj["bma_r2"] = bma_r2(trace, ds).mean
        obj["bma_rmse"] = bma_rmse(trace, ds, _rng(cfg.sampler.seed, n_chains), ref).mean
    if cfg.format == "json":
        write_json(tmp / "summary.json", obj)
    else:
        _write_rows(tmp / "inclusion.csv", ["covariate", "inclusion_prob"],
                    zip(ds.names, map(float, summ.inclusion_probs)))
        _write_rows(tmp / "dimension.csv", ["size", "prob"],
                    enumerate(map(float, summ.dim_posterior)))
        _write_rows(tmp / "visits.csv", ["gamma", "count"], obj["visits"].items())
        scalars = [(k, obj[k]) for k in ("posterior_mean_g", "posterior_mean_w", "bma_r2",
                                         "bma_rmse") if k in obj]
        _write_rows(tmp / "summary.csv", ["quantity", "value"], scalars)
    if cfg.options["trace"] == "csv":
        write_trace_csv(trace, tmp / "trace.csv")
    elif cfg.options["trace"] == "binary":
        write_trace_binary(trace, tmp / "trace.bin")


def _load_new(path: str, ds: Dataset) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [nm for nm in ds.names if nm not in header]
    if missing:
        raise DataError(f"{path}: missing covariates {', '.join(missing)}")
    idx = [header.index(nm) for nm in ds.names]
    try:
        X = np.array([[float(r[j]) for j in idx] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError):
        raise DataError(f"{path}: unreadable covariate value") from None
    if X.size == 0 or not np.all(np.isfinite(X)):
        raise DataError(f"{path}: no usable rows")
    return X


def cmd_predict(cfg: RunConfig, tmp: Path, info: dict) -> None:
    ds, ref = _load(cfg)
    X_new = _load_new(cfg.options["new"], ds) - ds.X.mean(axis=0)
    dc = centre(ds)
    if cfg.options["source"] == "enumeration":
        if ref.columns:
            raise UsageError("closed-form prediction needs the intercept-only reference model")
        table = enumerate_models(dc, cfg.spec, cfg.model_prior, ref, threads=cfg.threads)
        info["evidence_methods"] = table.method_counts()
        pred = bma_predict_closed(table, dc, cfg.spec, X_new)
    else:
        traces = run_chains(dc, cfg.spec, cfg.model_prior, cfg.sampler, cfg.options.get(
            "chains", 1), cfg.threads, ref)
        pred = bma_predict_mcmc(merge_traces(traces), dc, X_new, ref)
    if cfg.format == "json":
        write_json(tmp / "predictions.json", {"schema": SCHEMA, "command": "predict",
                                              "source": cfg.options["source"],
                                              "predictions": pred})
    else:
        _write_rows(tmp / "predictions.csv", ["row", "prediction"], enumerate(map(float, pred)))


def cmd_lps(cfg: RunConfig, tmp: Path, info: dict) -> None:
    ds, ref = _load(cfg)
    cv = CvConfig(cfg.options["folds"], cfg.options["seed"])
    res = bma_lps(ds, cfg.spec, cfg.model_prior, cv, cfg.options["engine"], cfg.sampler,
                  cfg.options["predictive"], ref, cfg.threads)
    if res.failed and len(res.failed) == len(res.scores):
        raise EnumerationError("every fold failed")
    fold_of = np.empty(ds.n, dtype=int)
    for k, idx in enumerate(res.folds):
        fold_of[idx] = k
    _write_rows(tmp / "folds.csv", ["observation", "fold"], enumerate(fold_of.tolist()))
    if cfg.format == "json":
        write_json(tmp / "lps.json", {"schema": SCHEMA, "command": "lps",
                                      "engine": cfg.options["engine"],
                                      "predictive": cfg.options["predictive"],
                                      "scores": res.scores, "mc_se": res.mc_se,
                                      "mean": res.mean, "sd": res.sd,
                                      "failed_folds": list(res.failed)})
    else:
        _write_rows(tmp / "lps.csv", ["fold", "n_test", "score", "mc_se"],
                    [(k, len(res.folds[k]), float(res.scores[k]), float(res.mc_se[k]))
                     for k in range(len(res.scores))])


def cmd_simulate(cfg: RunConfig, tmp: Path, info: dict) -> None:
    o = cfg.options
    sc = ScenarioConfig(o["scenario"], o["n"], o["p"], o["replicates"], o["seed"])
    if not o["study"]:
        for r in range(sc.replicates):
            write_csv(generate(sc, r), tmp / f"dataset_{r:03d}.csv")
        return
    res = run_study(sc, threads=cfg.threads)
    res.write_csv(tmp / "study.csv")
    res.write_dims_csv(tmp / "dimensions.csv")
    if res.failed:
        info["failed_replicates"] = [list(f) for f in res.failed]
    if cfg.format == "json":
        med = {m: {nm: float(np.nanmedian(res.inclusion[:, i, j]))
                   for j, nm in enumerate(res.names)} for i, m in enumerate(res.methods)}
        write_json(tmp / "study_summary.json", {
            "schema": SCHEMA, "command": "simulate", "scenario": sc.scenario,
            "replicates": sc.replicates, "median_inclusion": med,
            "mean_dimension": {m: float(np.nanmean(res.mean_dim[:, i]))
                               for i, m in enumerate(res.methods)}})


def _prior_w_by_quadrature(spec, k0, k1, n, p):
    s, lp = log_prior_excess_fn(spec, k0, k1, n, p)
    out = []
    for kappa in (1, 2):
        lv = integrate_log(lambda v: lp(v) + kappa * (math.log(s + v) - math.log1p(s + v)),
                           0.0, math.inf)
        out.append(math.exp(lv.log_magnitude))
    return out[0], max(out[1] - out[0] ** 2, 0.0)


def cmd_shrinkage(cfg: RunConfig, tmp: Path, info: dict) -> None:
    ds, ref = _load(cfg)
    names = cfg.options["model"]
    bad = [nm for nm in names if nm not in ds.names]
    if bad:
        raise UsageError(f"--model: unknown covariates {', '.join(bad)}")
    m = ModelId.from_indices([ds.names.index(nm) for nm in names], ds.p)
    st = ols_stats(ds, m, ref)
    q = len(ref.free(ds.p))
    spec = cfg.spec
    res = {"schema": SCHEMA, "command": "shrinkage", "prior": spec.family,
           "model": m.bits, "n": ds.n, "k0": st.k0, "k1": st.k1, "r10": st.r10}
    if spec.family == "FixedG":
        g = spec.g_fixed if spec.g_fixed is not None else float(ds.n)
        w = g / (1.0 + g)
        res.update(prior_mean_w=w, prior_var_w=0.0, posterior_mean_w=w, posterior_var_w=0.0,
                   posterior_mean_g=g, posterior_var_g=0.0)
    elif spec.pep_shaped:
        pw = prior_w_moments(mixing_params(spec, st.k0, st.k1, ds.n, q))
        gs = posterior_g_summary(st, spec)
        res.update(prior_mean_w=pw.mean_w, prior_var_w=pw.var_w,
                   prior_mean_w_taylor=pw.mean_w_approx, prior_sd_w_taylor=pw.sd_w_approx,
                   posterior_mean_w=gs.mean_w, posterior_var_w=gs.var_w,
                   posterior_mean_g=gs.mean_g, posterior_var_g=gs.var_g,
                   posterior_g_moments_up_to=gs.moment_exists_up_to)
    else:
        pm, pv = _prior_w_by_quadrature(spec, st.k0, st.k1, ds.n, q)
        ew = posterior_expectation(st, spec, lambda g: math.log(g) - math.log1p(g), q)
        ew2 = posterior_expectation(st, spec, lambda g: 2 * (math.log(g) - math.log1p(g)), q)
        res.update(prior_mean_w=pm, prior_var_w=pv, posterior_mean_w=ew,
                   posterior_var_w=max(ew2 - ew * ew, 0.0))
        # moments of g whose integrand decays slower than g^-1.1 are infinite or
        # too heavy-tailed for quadrature; they are reported as null
        slope = posterior_g_tail_slope(st, spec, q)
        eg = eg2 = None
        if slope + 1 < -1.1:
            eg = posterior_expectation(st, spec, math.log, q)
        if eg is not None and slope + 2 < -1.1:
            eg2 = posterior_expectation(st, spec, lambda g: 2 * math.log(g), q)
        res.update(posterior_mean_g=eg,
                   posterior_var_g=None if eg2 is None else max(eg2 - eg * eg, 0.0),
                   posterior_g_tail_slope=slope)
    if cfg.format == "json":
        write_json(tmp / "shrinkage.json", res)
    else:
        _write_rows(tmp / "shrinkage.csv", ["quantity", "value"],
                    [(k, v) for k, v in res.items() if k not in ("schema", "command")])


HANDLERS = {"enumerate": cmd_enumerate, "mc3": cmd_chain, "mc3g": cmd_chain,
            "gibbs": cmd_chain, "predict": cmd_predict, "lps": cmd_lps,
            "simulate": cmd_simulate, "shrinkage": cmd_shrinkage}


# ---------------------------------------------------------------------------
# driver


def _replay_argv(cfg: RunConfig) -> list[str]:
    man = json.loads(Path(cfg.options["manifest"]).read_text(encoding="utf-8"))
    if man.get("schema") != SCHEMA:
        raise UsageError("not a pep-select manifest")
    argv = list(man["argv"])
    out = str(Path(cfg.out).resolve())
    for i, a in enumerate(argv):
        if a == "--out":
            argv[i + 1] = out
            return argv
        if a.startswith("--out="):
            argv[i] = "--out=" + out
            return argv
    return argv + ["--out", out]


def run(cfg: RunConfig) -> int:
    """Execute a parsed command; returns the exit status."""
    if cfg.command == "replay":
        try:
            argv = _replay_argv(cfg)
        except (OSError, ValueError, KeyError, UsageError) as exc:
            print(f"pep-select: {exc}", file=sys.stderr)
            return 2
        return main(argv)
    for msg in cfg.notices:
        print(f"pep-select: notice: {msg}", file=sys.stderr)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    info: dict = {}
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            HANDLERS[cfg.command](cfg, tmp, info)
        files = sorted(f.name for f in tmp.iterdir())
        manifest = {
            "schema": SCHEMA,
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
            "argv": _absolute_argv(cfg.argv),
            "config": cfg.echo(),
            "evidence_methods": dict(sorted(info.pop("evidence_methods", {}).items())),
            "notices": cfg.notices,
            "warnings": sorted({str(w.message) for w in caught}),
            "outputs": files,
            **info,
            "wall_time_s": time.perf_counter() - t0,
        }
        write_json(tmp / "manifest.json", manifest)
        for f in tmp.iterdir():
            os.replace(f, out / f.name)
        tmp.rmdir()
    except UsageError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        print(f"pep-select: error: {exc}", file=sys.stderr)
        return 2
    except COMPUTE_ERRORS as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        print(f"pep-select: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    for w in caught:
        print(f"pep-select: warning: {w.message}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    cfg = parse_args(argv)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
