"""Model-space priors, exact enumeration and posterior tables."""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from . import kernels
from .data import (INTERCEPT_ONLY, Dataset, ModelId, OlsStats, RankDeficientError, Reference,
                   format_float, ols_stats, projected_system)
from .evidence import EvidenceError, log_evidence, log_evidence_batch
from .priors import PriorError, PriorSpec
from .specfun import DEFAULT_QUAD, QuadratureSpec

MAX_ENUM_P = 25
MODEL_PRIORS = ("Uniform", "UniformOnDimension")


class EnumerationError(RuntimeError):
    """Enumeration refused or produced no usable model."""


@dataclass(frozen=True)
class ModelPrior:
    kind: str = "Uniform"

    def __post_init__(self):
        if self.kind not in MODEL_PRIORS:
            raise ValueError(f"unknown model prior {self.kind!r}; choose from {MODEL_PRIORS}")


def log_model_prior(prior: ModelPrior, m: ModelId | int, p: int) -> float:
    """log pi(M) over ``p`` free covariates; ``m`` may be a ModelId or a model size."""
    size = m.size if isinstance(m, ModelId) else int(m)
    if prior.kind == "Uniform":
        return -p * math.log(2.0)
    return -math.log(p + 1.0) - _log_comb(p, size)


def _log_comb(p, k):
    return special.gammaln(p + 1.0) - special.gammaln(k + 1.0) - special.gammaln(p - k + 1.0)


def log_model_prior_sizes(prior: ModelPrior, sizes, p: int) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    if prior.kind == "Uniform":
        return np.full(sizes.shape, -p * math.log(2.0))
    return -math.log(p + 1.0) - _log_comb(p, sizes)


# ---------------------------------------------------------------------------
# table


@dataclass(eq=False)
class PosteriorTable:
    """Exact posterior over an enumerated model space.

    Arrays are aligned by row; rows are models that could be evaluated, in
    increasing mask order. ``failed`` lists masks that were excluded.
    """

    p: int
    masks: np.ndarray
    log_evidence: np.ndarray
    log_prior: np.ndarray
    log_post_unnorm: np.ndarray
    prob: np.ndarray
    inclusion_probs: np.ndarray
    dim_posterior: np.ndarray
    k1: np.ndarray
    r10: np.ndarray
    methods: tuple[str, ...] = ()
    failed: tuple[int, ...] = ()
    names: tuple[str, ...] = ()
    reference_columns: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.masks.size)

    @property
    def entries(self) -> list[tuple[ModelId, float, float]]:
        return [(ModelId(int(m), self.p), float(l), float(q))
                for m, l, q in zip(self.masks, self.log_post_unnorm, self.prob)]

    def model(self, i: int) -> ModelId:
        return ModelId(int(self.masks[i]), self.p)

    def method_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for m in self.methods:
            out[m] = out.get(m, 0) + 1
        return out

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write("gamma,log_evidence,log_prior,log_posterior_unnorm,posterior_prob\n")
            for i in range(len(self)):
                fh.write(",".join([self.model(i).bits, format_float(self.log_evidence[i]),
                                   format_float(self.log_prior[i]),
                                   format_float(self.log_post_unnorm[i]),
                                   format_float(self.prob[i])]) + "\n")

    def to_json_obj(self) -> dict:
        return {
            "p": self.p,
            "names": list(self.names),
            "models": [{"gamma": self.model(i).bits,
                        "log_evidence": float(self.log_evidence[i]),
                        "log_prior": float(self.log_prior[i]),
                        "log_posterior_unnorm": float(self.log_post_unnorm[i]),
                        "posterior_prob": float(self.prob[i])} for i in range(len(self))],
            "inclusion_probs": [float(v) for v in self.inclusion_probs],
            "dim_posterior": [float(v) for v in self.dim_posterior],
            "failed": [ModelId(m, self.p).bits for m in self.failed],
        }


def build_table(masks, log_ev, p: int, prior: ModelPrior, k1=None, r10=None,
                reference: Reference = INTERCEPT_ONLY, methods=(), failed=(),
                names=()) -> PosteriorTable:
    """Normalise log evidence plus log model prior into a PosteriorTable."""
    masks = np.asarray(masks, dtype=np.int64)
    order = np.argsort(masks, kind="stable")
    masks = masks[order]
    log_ev = np.asarray(log_ev, dtype=float)[order]
    if masks.size == 0:
        raise EnumerationError("no model could be evaluated")
    free = reference.free(p)
    q = len(free)
    sizes = np.array([bin(int(m)).count("1") for m in masks])
    lp = log_model_prior_sizes(prior, sizes, q)
    lu = log_ev + lp
    mx = lu.max()
    w = np.exp(lu - mx)
    prob = w / w.sum()
    incl = np.zeros(p)
    for j in range(p):
        if j in reference.columns:
            incl[j] = 1.0
        else:
            incl[j] = prob[(masks >> j) & 1 == 1].sum()
    dim = np.bincount(sizes, weights=prob, minlength=q + 1)[: q + 1]
    k1 = np.asarray(k1, dtype=int)[order] if k1 is not None else sizes + reference.k0
    r10 = np.asarray(r10, dtype=float)[order] if r10 is not None else np.full(masks.size, np.nan)
    methods = tuple(np.asarray(methods, dtype=object)[order]) if len(methods) else ()
    return PosteriorTable(p, masks, log_ev, lp, lu, prob, np.clip(incl, 0.0, 1.0), dim, k1, r10,
                          methods, tuple(int(m) for m in failed), tuple(names),
                          tuple(reference.columns))


# ---------------------------------------------------------------------------
# enumeration


def _index_to_masks(free: tuple[int, ...]) -> np.ndarray:
    q = len(free)
    idx = np.arange(1 << q, dtype=np.int64)
    masks = np.zeros_like(idx)
    for b, j in enumerate(free):
        masks |= ((idx >> b) & 1) << j
    return masks


def _batch_evidence(n, k0, k1, r10, spec, q, quad, threads):
    """Evidence for many models, chunked over threads and reassembled in order."""
    m = k1.size
    out = np.empty(m)
    meth = np.empty(m, dtype=object)
    ok = np.ones(m, dtype=bool)

    def work(lo, hi):
        try:
            ev, me = log_evidence_batch(n, k0, k1[lo:hi], r10[lo:hi], spec, q, quad)
            return lo, hi, ev, me, None
        except (EvidenceError, PriorError) as exc:
            return lo, hi, None, None, exc

    step = max(1, -(-m // max(threads, 1)))
    bounds = [(lo, min(lo + step, m)) for lo in range(0, m, step)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda b: work(*b), bounds))
    else:
        results = [work(*b) for b in bounds]
    for lo, hi, ev, me, exc in results:
        if exc is None:
            out[lo:hi] = ev
            meth[lo:hi] = me
            continue
        # retry model by model so one failure does not sink the chunk
        for i in range(lo, hi):
            try:
                ev1, me1 = log_evidence_batch(n, k0, k1[i:i + 1], r10[i:i + 1], spec, q, quad)
                out[i], meth[i] = ev1[0], me1[0]
            except (EvidenceError, PriorError):
                ok[i] = False
    return out, meth, ok


def enumerate_models(ds: Dataset, spec: PriorSpec, prior: ModelPrior = ModelPrior(),
                     reference: Reference = INTERCEPT_ONLY, max_p: int = MAX_ENUM_P,
                     threads: int = 1, quad: QuadratureSpec = DEFAULT_QUAD) -> PosteriorTable:
    """Evaluate every model over the free covariates and normalise.

    Residual sums of squares come from the compiled subset kernel; models
    whose design is rank deficient, has k1 >= n, or whose evidence fails are
    excluded with a warning and listed in ``table.failed``.

    Raises
    ------
    EnumerationError
        More than ``max_p`` free covariates, or nothing could be evaluated.
    """
    free, G, c, rss0, _ = projected_system(ds, reference)
    q = len(free)
    if q > max_p:
        raise EnumerationError(f"{q} free covariates exceed the enumeration guard ({max_p})")
    if rss0 <= 0:
        raise EnumerationError("response is fitted exactly by the reference model")
    rss, status = kernels.enumerate_rss(G, c, rss0)
    masks = _index_to_masks(free)
    sizes = np.array([bin(i).count("1") for i in range(1 << q)])
    k0 = reference.k0
    k1 = sizes + k0
    good = (status == 0) & np.isfinite(rss) & (k1 < ds.n)
    r10 = np.where(good, np.maximum(rss, 0.0) / rss0, np.nan)
    r10[0] = 1.0
    ev = np.full(masks.size, np.nan)
    meth = np.empty(masks.size, dtype=object)
    idx = np.nonzero(good)[0]
    e, me, ok = _batch_evidence(ds.n, k0, k1[idx].astype(float), r10[idx], spec, q, quad, threads)
    ev[idx], meth[idx] = e, me
    good[idx[~ok]] = False
    failed = masks[~good]
    if failed.size:
        warnings.warn(f"{failed.size} models excluded (rank deficient, k1 >= n, or evidence "
                      "failure)", stacklevel=2)
    return build_table(masks[good], ev[good], ds.p, prior, k1[good], r10[good], reference,
                       meth[good], failed, ds.names)


def enumerate_reference(ds: Dataset, spec: PriorSpec, prior: ModelPrior = ModelPrior(),
                        reference: Reference = INTERCEPT_ONLY,
                        evidence_fn: Callable[[OlsStats], float] | None = None,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> PosteriorTable:
    """Model-by-model enumeration with a fresh least-squares fit per model.

    This is the slow, non-incremental path; ``evidence_fn`` replaces the
    evidence computation (e.g. with a stub) when given.
    """
    free = reference.free(ds.p)
    q = len(free)
    masks, evs, k1s, r10s, meth, failed = [], [], [], [], [], []
    for i in range(1 << q):
        m = ModelId.from_indices([free[b] for b in range(q) if (i >> b) & 1], ds.p)
        try:
            st = ols_stats(ds, m, reference)
            if evidence_fn is not None:
                e, me = float(evidence_fn(st)), "stub"
            else:
                r = log_evidence(st, spec, quad, q)
                e, me = r.log_bf_vs_ref, r.method
        except (RankDeficientError, EvidenceError, PriorError):
            failed.append(m.mask)
            continue
        masks.append(m.mask)
        evs.append(e)
        k1s.append(st.k1)
        r10s.append(st.r10)
        meth.append(me)
    return build_table(masks, evs, ds.p, prior, k1s, r10s, reference, meth, failed, ds.names)


def map_model(table: PosteriorTable) -> ModelId:
    """Highest-probability model; ties go to the smaller model, then the smaller gamma."""
    if len(table) == 0:
        raise EnumerationError("empty table")
    best = None
    for i in range(len(table)):
        m = table.model(i)
        key = (-float(table.prob[i]), m.size, m.gamma)
        if best is None or key < best[0]:
            best = (key, m)
    return best[1]
