"""Linear discriminant analysis and the projection type shared with SVDA."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .corpus import Corpus, labels_to_codes
from .errors import DataError, NumericalError, ParseError

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True, eq=False)
class ScatterPair:
    between: np.ndarray
    within: np.ndarray
    n_classes: int


@dataclass(frozen=True, eq=False)
class Projection:
    """Linear map ``x -> A (x - mean)``; ``A`` has shape (k, d)."""

    matrix: np.ndarray
    objective_values: np.ndarray | None = None
    mean: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.matrix, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] > A.shape[1]:
            raise DataError(f"projection matrix must be k x d with k <= d, got {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        if self.objective_values is not None:
            object.__setattr__(self, "objective_values", np.asarray(self.objective_values, float))
        if self.mean is not None:
            object.__setattr__(self, "mean", np.asarray(self.mean, float))

    @property
    def input_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def output_dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.input_dim:
            raise DataError(f"projection expects dimension {self.input_dim}, got {X.shape[-1]}")
        if self.mean is not None:
            X = X - self.mean
        return X @ self.matrix.T

    def then(self, outer: Projection) -> Projection:
        """Composition: apply ``self`` first, then ``outer``."""
        if outer.input_dim != self.output_dim:
            raise DataError(f"cannot compose {self.output_dim}-dim output with {outer.input_dim}-dim input")
        A = outer.matrix @ self.matrix
        mean = None
        if self.mean is not None or outer.mean is not None:
            # needs A @ mean == shift; solvable because A has full row rank
            offset = np.zeros(self.input_dim) if self.mean is None else self.mean
            shift = outer.matrix @ (self.matrix @ offset + (0 if outer.mean is None else outer.mean))
            mean = np.linalg.lstsq(A, shift, rcond=None)[0]
        return Projection(A, outer.objective_values, mean)


def scatter_matrices(X: np.ndarray, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class-size weighted between-class and within-class scatter."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    d = X.shape[1]
    Sb = np.zeros((d, d))
    Sw = np.zeros((d, d))
    for c in np.unique(codes):
        Xc = X[codes == c]
        mc = Xc.mean(axis=0)
        diff = mc - mu
        Sb += Xc.shape[0] * np.outer(diff, diff)
        R = Xc - mc
        Sw += R.T @ R
    return (Sb + Sb.T) / 2, (Sw + Sw.T) / 2


def compute_scatter(corpus: Corpus) -> ScatterPair:
    codes, names = labels_to_codes(corpus.speaker_ids)
    if len(names) < 2:
        raise DataError(f"scatter needs at least 2 classes, got {len(names)}")
    Sb, Sw = scatter_matrices(corpus.matrix, codes)
    return ScatterPair(Sb, Sw, len(names))


def sign_normalize(rows: np.ndarray) -> np.ndarray:
    """Unit-norm rows whose first non-negligible entry is positive."""
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    for r in rows:
        nz = np.flatnonzero(np.abs(r) > 1e-12)
        if nz.size and r[nz[0]] < 0:
            r *= -1
    return rows


def solve_discriminant(
    between: np.ndarray, within: np.ndarray, out_dim: int, ridge: float = DEFAULT_RIDGE
) -> tuple[np.ndarray, np.ndarray]:
    """Top ``out_dim`` generalized eigenpairs of ``(S_w + r I)^-1 S_b``.

    ``r = ridge * trace(S_w) / d``. Returns (rows, eigenvalues descending).
    """
    Sb = (np.asarray(between) + np.asarray(between).T) / 2
    Sw = (np.asarray(within) + np.asarray(within).T) / 2
    d = Sb.shape[0]
    if not 1 <= out_dim <= d:
        raise DataError(f"output dimension {out_dim} outside [1, {d}]")
    Sw_r = Sw + ridge * np.trace(Sw) / d * np.eye(d)
    try:
        scipy.linalg.cholesky(Sw_r)
    except np.linalg.LinAlgError:
        raise NumericalError(
            "within-class scatter is singular; use a positive ridge" if ridge == 0
            else "regularized within-class scatter is not positive definite"
        ) from None
    vals, vecs = scipy.linalg.eigh(Sb, Sw_r, subset_by_index=[d - out_dim, d - 1])
    order = np.argsort(vals)[::-1]
    return sign_normalize(vecs[:, order].T.copy()), vals[order]


def fit_lda(corpus: Corpus, out_dim: int, ridge: float = DEFAULT_RIDGE) -> Projection:
    if out_dim > corpus.dimension:
        raise DataError(f"out_dim {out_dim} exceeds input dimension {corpus.dimension}")
    sc = compute_scatter(corpus)
    rows, vals = solve_discriminant(sc.between, sc.within, out_dim, ridge)
    return Projection(rows, vals)


def project(projection: Projection, corpus: Corpus) -> Corpus:
    if corpus.dimension != projection.input_dim:
        raise DataError(f"projection expects dimension {projection.input_dim}, corpus has {corpus.dimension}")
    return corpus.with_matrix(projection.apply(corpus.matrix))


def write_projection(projection: Projection, path) -> None:
    k, d = projection.matrix.shape
    lines = [f"#rows {k} #cols {d}"]
    if projection.objective_values is not None:
        lines.append("#objective " + " ".join(repr(float(v)) for v in projection.objective_values))
    if projection.mean is not None:
        lines.append("#mean " + " ".join(repr(float(v)) for v in projection.mean))
    lines += [" ".join(repr(float(v)) for v in row) for row in projection.matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def read_projection(path) -> Projection:
    path = Path(path)
    lines = path.read_text().splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 4 or head[0] != "#rows" or head[2] != "#cols":
        raise ParseError("expected '#rows k #cols d' header", path, 1)
    k, d = int(head[1]), int(head[3])
    objective = mean = None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#objective"):
            objective = [float(x) for x in line.split()[1:]]
        elif line.startswith("#mean"):
            mean = [float(x) for x in line.split()[1:]]
        elif line.strip():
            row = [float(x) for x in line.split()]
            if len(row) != d:
                raise ParseError(f"row has {len(row)} values, expected {d}", path, lineno)
            rows.append(row)
    if len(rows) != k:
        raise ParseError(f"found {len(rows)} rows, header declares {k}", path)
    return Projection(np.array(rows).reshape(k, d), objective, mean)
