"""Seeded generators for the two simulation scenarios and a replicate study.

Random numbers come from the Philox-4x64 counter-based generator. Each
standard normal is made from one raw 64-bit word ``x`` as
``ndtri(((x >> 11) + 0.5) * 2**-53)``, so a dataset is a pure function of the
seed and can be rebuilt bit for bit by any implementation of Philox.
"""
from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .data import Dataset, format_float
from .evidence import EvidenceError
from .modelspace import EnumerationError, ModelPrior, enumerate_models
from .priors import PriorError, PriorSpec

# true effects shared by both scenarios (1-based covariate index -> coefficient)
INTERCEPT = 4.0
EFFECTS = {1: 2.0, 5: -1.0, 7: 1.5, 11: 1.0, 13: 0.5}
NOISE_SD = 2.5
# scenario 2: X11..X15 regress on X1..X5 with these weights
DEPENDENT_WEIGHTS = (0.3, 0.5, 0.7, 0.9, 1.1)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int = 1
    n: int = 50
    p: int = 15
    replicates: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in (1, 2):
            raise ValueError("scenario must be 1 or 2")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.p < 13:
            raise ValueError("the response uses X13, so p must be at least 13")
        if self.scenario == 2 and self.p < 15:
            raise ValueError("scenario 2 needs p >= 15 (10 base + 5 dependent covariates)")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def standard(self) -> bool:
        return self.p == 15

    def replicate_seed(self, rep: int) -> int:
        return self.seed ^ rep


class NormalStream:
    """Standard normals from Philox raw words via the inverse normal CDF."""

    def __init__(self, seed: int):
        self.bitgen = np.random.Philox(key=int(seed))

    def uniform(self, size: int) -> np.ndarray:
        x = self.bitgen.random_raw(size).astype(np.uint64)
        return ((x >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53

    def normal(self, shape) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        return special.ndtri(self.uniform(int(np.prod(shape)))).reshape(shape)


def _response(X: np.ndarray, eps: np.ndarray) -> np.ndarray:
    mu = np.full(X.shape[0], INTERCEPT)
    for j, b in EFFECTS.items():
        mu = mu + b * X[:, j - 1]
    return mu + NOISE_SD * eps


def _names(p):
    return tuple(f"X{j + 1}" for j in range(p))


def gen_scenario1(cfg: ScenarioConfig, rng: NormalStream) -> Dataset:
    """Independent standard normal covariates; the response uses X1, X5, X7, X11, X13.

    Draw order: X row by row, then the n noise terms.
    """
    X = rng.normal((cfg.n, cfg.p))
    y = _response(X, rng.normal(cfg.n))
    return Dataset(y, X, _names(cfg.p))


def gen_scenario2(cfg: ScenarioConfig, rng: NormalStream) -> Dataset:
    """X1..X10 independent; X11..X15 each equal a weighted sum of X1..X5 plus unit noise.

    With p > 15 the extra columns are independent standard normals (a
    nonstandard layout, flagged with a warning). Draw order: the independent
    block row by row, then the n x 5 dependent noise, then the response noise.
    """
    if not cfg.standard:
        warnings.warn("scenario 2 with p != 15 is nonstandard: extra columns are independent",
                      stacklevel=2)
    base = rng.normal((cfg.n, cfg.p - 5))
    noise = rng.normal((cfg.n, 5))
    lin = base[:, :5] @ np.asarray(DEPENDENT_WEIGHTS)
    dep = lin[:, None] + noise
    X = np.concatenate([base[:, :10], dep, base[:, 10:]], axis=1)
    y = _response(X, rng.normal(cfg.n))
    return Dataset(y, X, _names(cfg.p))


def generate(cfg: ScenarioConfig, rep: int = 0) -> Dataset:
    """Dataset for replicate ``rep``, seeded with ``cfg.seed ^ rep``."""
    rng = NormalStream(cfg.replicate_seed(rep))
    return gen_scenario1(cfg, rng) if cfg.scenario == 1 else gen_scenario2(cfg, rng)


# ---------------------------------------------------------------------------
# study


@dataclass(frozen=True)
class Method:
    label: str
    spec: PriorSpec
    model_prior: ModelPrior = ModelPrior()


DEFAULT_METHODS = (
    Method("PEP-Uni", PriorSpec("PEP"), ModelPrior("Uniform")),
    Method("PEP-BB", PriorSpec("PEP"), ModelPrior("UniformOnDimension")),
    Method("I-Uni", PriorSpec("Intrinsic"), ModelPrior("Uniform")),
    Method("I-BB", PriorSpec("Intrinsic"), ModelPrior("UniformOnDimension")),
)


@dataclass
class StudyResult:
    """Inclusion probabilities indexed [replicate, method, covariate].

    Failed (replicate, method) cells are NaN and listed in ``failed``.
    """

    config: ScenarioConfig
    methods: tuple[str, ...]
    names: tuple[str, ...]
    inclusion: np.ndarray
    mean_dim: np.ndarray
    failed: list[tuple[int, str, str]] = field(default_factory=list)

    def median_inclusion(self, method: str, covariate: int) -> float:
        return float(np.nanmedian(self.inclusion[:, self.methods.index(method), covariate]))

    def write_csv(self, path: str | Path) -> None:
        """Long format: replicate, method, covariate, inclusion_prob."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", "method", "covariate", "inclusion_prob"])
            for r in range(self.inclusion.shape[0]):
                for m, lab in enumerate(self.methods):
                    for j, nm in enumerate(self.names):
                        w.writerow([r, lab, nm, format_float(self.inclusion[r, m, j])])

    def write_dims_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", "method", "mean_dimension"])
            for r in range(self.mean_dim.shape[0]):
                for m, lab in enumerate(self.methods):
                    w.writerow([r, lab, format_float(self.mean_dim[r, m])])


def _one_replicate(cfg, rep, methods, max_p):
    ds = generate(cfg, rep)
    incl = np.full((len(methods), cfg.p), np.nan)
    dims = np.full(len(methods), np.nan)
    failed = []
    for i, meth in enumerate(methods):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                tab = enumerate_models(ds, meth.spec, meth.model_prior, max_p=max_p)
        except (EnumerationError, EvidenceError, PriorError) as exc:
            failed.append((rep, meth.label, str(exc)))
            continue
        incl[i] = tab.inclusion_probs
        dims[i] = float(np.dot(np.arange(tab.dim_posterior.size), tab.dim_posterior))
    return incl, dims, failed


def run_study(cfg: ScenarioConfig, methods=DEFAULT_METHODS, threads: int = 1,
              max_p: int = 20) -> StudyResult:
    """Enumerate every replicate under every method and collect inclusion probabilities.

    Replicates run on up to ``threads`` workers; results are placed by
    replicate index so the output does not depend on scheduling.
    """
    methods = tuple(methods)
    reps = range(cfg.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(lambda r: _one_replicate(cfg, r, methods, max_p), reps))
    else:
        out = [_one_replicate(cfg, r, methods, max_p) for r in reps]
    inclusion = np.stack([o[0] for o in out])
    dims = np.stack([o[1] for o in out])
    failed = [f for o in out for f in o[2]]
    return StudyResult(cfg, tuple(m.label for m in methods), _names(cfg.p), inclusion, dims, failed)
