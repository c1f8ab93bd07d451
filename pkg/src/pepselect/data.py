"""Datasets, model identifiers and per-model least-squares statistics."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RANK_TOL = 1e-10


class DataError(ValueError):
    """Malformed input data."""


class RankDeficientError(ValueError):
    """A design matrix is not of full column rank."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector and candidate covariates.

    Parameters
    ----------
    y : (n,) array
    X : (n, p) array
    names : tuple of str
        Covariate names, one per column of ``X``; empty gives X1..Xp.
    centred : bool
        True when every column of ``X`` has mean zero.
    constant_columns : tuple of str
        Names of covariates that are constant in the data. They are kept
        but any model including one is rank deficient.
    """

    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] = ()
    centred: bool = False
    constant_columns: tuple[str, ...] = ()
    response_name: str = "y"

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != y.shape[0]:
            raise DataError("X and y have different numbers of rows")
        if y.shape[0] < 2:
            raise DataError("need at least two observations")
        if X.shape[1] < 1:
            raise DataError("need at least one covariate")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("non-finite entries in data")
        names = tuple(self.names) if self.names else tuple(f"X{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("names do not match the number of columns")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, order=True)
class ModelId:
    """A model as a bitmask of included covariates.

    Bit ``j`` of ``mask`` is set when covariate ``j`` (zero based) is in the
    model. Reference-model columns are never part of the mask.
    """

    mask: int
    p: int

    def __post_init__(self):
        if self.p < 0 or self.mask < 0 or self.mask >> self.p:
            raise ValueError("mask does not fit in p bits")

    @classmethod
    def from_gamma(cls, gamma: Sequence[int | bool]) -> "ModelId":
        mask = 0
        for j, g in enumerate(gamma):
            if g:
                mask |= 1 << j
        return cls(mask, len(gamma))

    @classmethod
    def from_bits(cls, bits: str) -> "ModelId":
        if set(bits) - {"0", "1"}:
            raise ValueError(f"not a bit string: {bits!r}")
        return cls.from_gamma([c == "1" for c in bits])

    @classmethod
    def from_indices(cls, idx: Iterable[int], p: int) -> "ModelId":
        mask = 0
        for j in idx:
            mask |= 1 << int(j)
        return cls(mask, p)

    @classmethod
    def full(cls, p: int) -> "ModelId":
        return cls((1 << p) - 1, p)

    @classmethod
    def null(cls, p: int) -> "ModelId":
        return cls(0, p)

    @property
    def gamma(self) -> tuple[int, ...]:
        return tuple((self.mask >> j) & 1 for j in range(self.p))

    @property
    def included(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.p) if (self.mask >> j) & 1)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def bits(self) -> str:
        return "".join("1" if (self.mask >> j) & 1 else "0" for j in range(self.p))

    def flip(self, j: int) -> "ModelId":
        return ModelId(self.mask ^ (1 << j), self.p)

    def __str__(self) -> str:
        return self.bits


@dataclass(frozen=True)
class Reference:
    """Columns of the reference model M0: an intercept plus optional covariates.

    Covariates listed here are always in X0 and must not be toggled by a
    ModelId; their mask bits are ignored.
    """

    columns: tuple[int, ...] = ()

    def free(self, p: int) -> tuple[int, ...]:
        return tuple(j for j in range(p) if j not in self.columns)

    @property
    def k0(self) -> int:
        return 1 + len(self.columns)


INTERCEPT_ONLY = Reference()


@dataclass(frozen=True, eq=False)
class ModelMatrices:
    X0: np.ndarray
    Xe: np.ndarray
    ve_inv: np.ndarray

    @property
    def k0(self) -> int:
        return self.X0.shape[1]

    @property
    def ke(self) -> int:
        return self.Xe.shape[1]


@dataclass(frozen=True)
class OlsStats:
    """Least-squares summaries of a model relative to the reference model.

    ``rss0`` and ``tss`` are carried along so that downstream code can
    rebuild scale-dependent quantities.
    """

    beta_hat: np.ndarray | None
    rss: float
    r2: float
    r10: float
    n: int
    k0: int
    k1: int
    rss0: float = math.nan
    tss: float = math.nan

    @property
    def ke(self) -> int:
        return self.k1 - self.k0


# ---------------------------------------------------------------------------
# CSV


def load_csv(path: str | Path, response: str) -> Dataset:
    """Read a header-first, comma-separated file into a Dataset.

    Raises
    ------
    FileNotFoundError
        The file does not exist.
    DataError
        Missing response column, empty file, or a cell that is not a finite
        decimal number (the message names the 1-based data row and column).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if response not in header:
            raise DataError(f"{path}: response column {response!r} not found")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {i}, column {name!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {i}, column {name!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows, dtype=float)
    iy = header.index(response)
    cols = [j for j in range(len(header)) if j != iy]
    X = arr[:, cols]
    names = tuple(header[j] for j in cols)
    const = tuple(names[j] for j in range(X.shape[1]) if np.all(X[:, j] == X[0, j]))
    if const:
        warnings.warn(f"constant covariate columns retained: {', '.join(const)}", stacklevel=2)
    return Dataset(arr[:, iy], X, names, False, const, response)


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a Dataset with 17 significant digits so a reload is bit exact."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([ds.response_name, *ds.names])
        for i in range(ds.n):
            w.writerow([format_float(ds.y[i])] + [format_float(v) for v in ds.X[i]])


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def centre(ds: Dataset) -> Dataset:
    """Subtract column means from the covariates; the response is untouched."""
    X = ds.X - ds.X.mean(axis=0)
    return Dataset(ds.y, X, ds.names, True, ds.constant_columns, ds.response_name)


# ---------------------------------------------------------------------------
# per-model statistics


def _check_reference(ref: Reference, m: ModelId, p: int) -> None:
    if m.p != p:
        raise ValueError(f"model has {m.p} bits but data has {p} covariates")
    for j in ref.columns:
        if not 0 <= j < p:
            raise ValueError(f"reference column {j} out of range")
        if (m.mask >> j) & 1:
            raise ValueError(f"covariate {j} is in the reference model and cannot be toggled")


def design(ds: Dataset, m: ModelId, reference: Reference = INTERCEPT_ONLY):
    """Return (X0, Xe) for model ``m``."""
    _check_reference(reference, m, ds.p)
    X0 = np.column_stack([np.ones(ds.n)] + [ds.X[:, j] for j in reference.columns])
    Xe = ds.X[:, list(m.included)] if m.mask else np.empty((ds.n, 0))
    return X0, Xe


def _lstsq(X: np.ndarray, y: np.ndarray):
    """Least squares via SVD of the column-equilibrated design.

    The rank test compares singular values of the equilibrated matrix so it
    does not depend on the units of each covariate.
    """
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        raise RankDeficientError("design has a zero column")
    Xs = X / norms
    U, s, Vt = np.linalg.svd(Xs, full_matrices=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise RankDeficientError(
            f"design is rank deficient (condition ratio {s[-1] / s[0]:.3g})")
    coef = Vt.T @ ((U.T @ y) / s)
    fitted = U @ (U.T @ y)
    return coef / norms, fitted


def _rss(y, fitted):
    r = y - fitted
    return float(r @ r)


def ols_stats(ds: Dataset, m: ModelId, reference: Reference = INTERCEPT_ONLY) -> OlsStats:
    """Least-squares fit of model ``m`` and its R10 against the reference.

    Raises
    ------
    RankDeficientError
        [X0 | Xe] is rank deficient or k1 >= n.
    """
    X0, Xe = design(ds, m, reference)
    X1 = np.column_stack([X0, Xe])
    n, k1 = X1.shape
    if k1 >= n:
        raise RankDeficientError(f"k1={k1} must be below n={n}")
    beta, fitted = _lstsq(X1, ds.y)
    rss = _rss(ds.y, fitted)
    yc = ds.y - ds.y.mean()
    tss = float(yc @ yc)
    if reference.columns:
        _, fitted0 = _lstsq(X0, ds.y)
        rss0 = _rss(ds.y, fitted0)
    else:
        rss0 = tss
    if tss <= 0:
        raise DataError("response is constant")
    if m.mask == 0:
        rss = rss0
    r2 = 1.0 - rss / tss
    r10 = rss / rss0
    return OlsStats(beta, rss, r2, r10, n, X0.shape[1], k1, rss0, tss)


def ve_inverse(ds: Dataset, m: ModelId, reference: Reference = INTERCEPT_ONLY) -> np.ndarray:
    """Xe^T (I - P0) Xe for model ``m``."""
    X0, Xe = design(ds, m, reference)
    if Xe.shape[1] == 0:
        return np.empty((0, 0))
    Q0, _ = np.linalg.qr(X0)
    R = Xe - Q0 @ (Q0.T @ Xe)
    V = R.T @ R
    V = 0.5 * (V + V.T)
    if np.linalg.norm(R, axis=0).min() == 0:
        raise RankDeficientError("covariate lies in the span of the reference design")
    s = np.linalg.svd(R / np.linalg.norm(R, axis=0), compute_uv=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise RankDeficientError("Xe is rank deficient after projecting out X0")
    return V


def model_matrices(ds: Dataset, m: ModelId, reference: Reference = INTERCEPT_ONLY) -> ModelMatrices:
    X0, Xe = design(ds, m, reference)
    return ModelMatrices(X0, Xe, ve_inverse(ds, m, reference))


def projected_system(ds: Dataset, reference: Reference = INTERCEPT_ONLY):
    """Gram system of the free covariates after projecting out X0.

    Returns
    -------
    free : tuple of int
        Indices of covariates that can be toggled.
    G : (q, q) array
        Gram matrix of the projected free covariates.
    c : (q,) array
        Cross products with the projected response.
    rss0, tss : float
    """
    free = reference.free(ds.p)
    X0 = np.column_stack([np.ones(ds.n)] + [ds.X[:, j] for j in reference.columns])
    Q0, _ = np.linalg.qr(X0)
    Xf = ds.X[:, list(free)]
    Xr = Xf - Q0 @ (Q0.T @ Xf)
    yr = ds.y - Q0 @ (Q0.T @ ds.y)
    yc = ds.y - ds.y.mean()
    G = Xr.T @ Xr
    G = 0.5 * (G + G.T)
    return free, np.ascontiguousarray(G), np.ascontiguousarray(Xr.T @ yr), float(yr @ yr), float(yc @ yc)
