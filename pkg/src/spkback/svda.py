"""Discriminant analysis via support vectors.

A deterministic linear SVM (pairwise coordinate descent on the dual with
second-order working-set selection, no randomisation) is trained one class
against the rest, with unlabeled vectors always in the rest class. Between-
class scatter is the sum of outer products of the per-class SVM normals;
within-class scatter uses only labeled support vectors around their class
support mean. The eigen step is shared with :mod:`spkback.lda`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .corpus import Corpus, labels_to_codes
from .errors import DataError, NumericalError
from .lda import DEFAULT_RIDGE, Projection, fit_lda, solve_discriminant

log = logging.getLogger(__name__)

TAU = 1e-12


@dataclass(frozen=True, eq=False)
class LinearSvm:
    w: np.ndarray
    b: float
    C_reg: float
    support_indices: np.ndarray
    dual_alphas: np.ndarray
    kkt_residual: float = 0.0
    duality_gap: float = 0.0
    objective_history: list[float] = field(default_factory=list)
    n_iters: int = 0

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.w + self.b


def optimal_bias(f: np.ndarray, y: np.ndarray) -> float:
    """Bias minimizing the summed hinge loss for fixed scores ``f``.

    The loss is piecewise linear in b with breakpoints ``y_i - f_i`` and slope
    ``-n_pos + (#breakpoints passed)``; any point between the n_pos-th and
    next breakpoint is optimal, the midpoint is returned.
    """
    bp = np.sort(y - f)
    n_pos = int(np.sum(y > 0))
    if n_pos == 0:
        return float(bp[0])
    if n_pos == len(bp):
        return float(bp[-1])
    return float(0.5 * (bp[n_pos - 1] + bp[n_pos]))


def _primal(f, y, b, w_sq, C):
    return 0.5 * w_sq + C * float(np.sum(np.maximum(0.0, 1.0 - y * (f + b))))


def smo_dual(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float = 1e-6,
    max_iters: int | None = None,
):
    """Solve the C-SVM dual for Gram matrix ``K`` and labels ``y`` in {-1, +1}.

    Stops when the maximal KKT violation is <= an internal threshold and the
    primal-dual gap is <= ``tol``; the threshold starts at ``tol`` and is
    tightened tenfold whenever the gap check fails.
    Returns (alpha, b, kkt_residual, gap, objective_history, n_iters).
    """
    n = K.shape[0]
    y = np.asarray(y, dtype=np.float64)
    if max_iters is None:
        max_iters = 100 * n
    diagK = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    pos = y > 0
    eps = tol
    history = [0.0]
    it = 0
    while True:
        yG = -y * G
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        up_vals = np.where(up, yG, -np.inf)
        low_vals = np.where(low, yG, np.inf)
        i = int(np.argmax(up_vals))
        m_val = up_vals[i]
        M_val = low_vals.min()
        kkt = float(m_val - M_val) if np.isfinite(m_val) and np.isfinite(M_val) else 0.0
        if kkt <= eps or it >= max_iters:
            ay = alpha * y
            f = K @ ay
            w_sq = float(ay @ f)
            b = optimal_bias(f, y)
            gap = _primal(f, y, b, w_sq, C) - (float(alpha.sum()) - 0.5 * w_sq)
            if gap <= tol and kkt <= tol:
                history.append(0.5 * w_sq - float(alpha.sum()))
                return alpha, b, max(kkt, 0.0), max(gap, 0.0), history, it
            if it >= max_iters:
                raise NumericalError(
                    f"SVM solver did not converge in {max_iters} iterations "
                    f"(KKT residual {kkt:.3e}, duality gap {gap:.3e})"
                )
            if eps < 1e-15:
                raise NumericalError(f"SVM solver stalled (KKT residual {kkt:.3e}, duality gap {gap:.3e})")
            eps /= 10
            continue
        # second-order choice of j among violators in the low set
        Ki = K[i]
        b_it = m_val - yG
        cand = low & (b_it > 0)
        a_it = diagK[i] + diagK - 2 * Ki
        a_it = np.where(a_it > 0, a_it, TAU)
        score = np.where(cand, -(b_it * b_it) / a_it, np.inf)
        j = int(np.argmin(score))
        Kj = K[j]
        quad = max(diagK[i] + diagK[j] - 2 * Ki[j], TAU)
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    aj, ai = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                if ai < 0:
                    ai, aj = 0.0, total
        d_i, d_j = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        G += y * (y[i] * d_i * Ki + y[j] * d_j * Kj)
        it += 1
        if it % n == 0:
            polished = _polish(K, y, C, alpha)
            if polished is not None:
                alpha, G = polished
            history.append(0.5 * float(alpha @ (G + 1.0)) - float(alpha.sum()))


def _polish(K, y, C, alpha):
    """Active-set steps on the free multipliers; None if no progress.

    With a rank-deficient linear Gram matrix the free set can contain a
    direction of zero curvature along which the dual is linear. Pairwise
    steps crawl along it, so it is followed here directly until a multiplier
    reaches a bound. Once no such descent direction is left the face problem
    is solved by a Newton step. Steps that would leave the box are cut at the
    first bound and that multiplier is pinned.
    """
    Q = (y[:, None] * y[None, :]) * K
    obj = lambda a: 0.5 * float(a @ Q @ a) - float(a.sum())  # noqa: E731
    start = obj(alpha)
    a = alpha.copy()
    for _ in range(2 * a.size):
        free = np.flatnonzero((a > 0) & (a < C))
        if free.size < 2:
            break
        G = Q @ a - 1.0
        yf = y[free]
        Qff = Q[np.ix_(free, free)]
        N = scipy.linalg.null_space(np.vstack([Qff, yf]))
        g = N.T @ G[free] if N.size else np.zeros(0)
        flat = g.size and np.linalg.norm(g) > 1e-12 * max(1.0, np.linalg.norm(G[free]))
        if flat:
            step = -(N @ g)
        else:
            m = free.size
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = Qff
            A[:m, m] = yf
            A[m, :m] = yf
            step = np.linalg.lstsq(A, np.r_[-G[free], 0.0], rcond=None)[0][:m]
        cur = a[free]
        with np.errstate(divide="ignore", invalid="ignore"):
            limit = np.where(step < 0, -cur / step, np.where(step > 0, (C - cur) / step, np.inf))
        k = int(np.argmin(limit))
        t = float(limit[k]) if flat else float(min(1.0, limit[k]))
        if not np.isfinite(t):
            break
        a[free] = cur + t * step
        if not flat and t >= 1.0:
            break
        a[free[k]] = 0.0 if step[k] < 0 else C
    np.clip(a, 0.0, C, out=a)
    if obj(a) >= start:
        return None
    return a, Q @ a - 1.0


def train_linear_svm(
    positives: np.ndarray,
    negatives: np.ndarray,
    C_reg: float = 1.0,
    tol: float = 1e-6,
    max_iters: int | None = None,
) -> LinearSvm:
    """Soft-margin linear SVM, ``min 1/2|w|^2 + C sum hinge(y (w.x + b))``.

    Support indices refer to the stacked array ``[positives; negatives]``.
    """
    P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if P.shape[0] == 0 or N.shape[0] == 0:
        raise DataError("SVM training needs both positive and negative examples")
    if C_reg <= 0:
        raise DataError(f"C_reg must be positive, got {C_reg}")
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    return _fit(X, X @ X.T, y, C_reg, tol, max_iters)


def _fit(X, K, y, C, tol, max_iters) -> LinearSvm:
    if max_iters is None:
        # 10 n d coordinate updates; each pair step touches two coordinates
        max_iters = max(5 * X.shape[0] * X.shape[1], 10_000)
    alpha, b, kkt, gap, hist, it = smo_dual(K, y, C, tol, max_iters)
    w = X.T @ (alpha * y)
    sv = np.flatnonzero(alpha > 1e-8 * C)
    return LinearSvm(w, b, C, sv, alpha[sv], kkt, gap, hist, it)


@dataclass(frozen=True, eq=False)
class SvdaScatter:
    between: np.ndarray
    within: np.ndarray
    support_pool: np.ndarray  # indices into [labeled; unlabeled]
    class_support: dict  # class name -> indices (into the stacked data)
    class_means: dict  # class name -> support mean
    directions: dict  # class name -> w_c
    svms: dict = field(default_factory=dict)

    @property
    def n_support(self) -> int:
        return int(self.support_pool.size)


def svda_scatter(
    labeled: Corpus,
    unlabeled: Corpus | None = None,
    C_reg: float = 1.0,
    tol: float = 1e-6,
    max_iters: int | None = None,
) -> SvdaScatter:
    codes, names = labels_to_codes(labeled.speaker_ids)
    if len(names) < 2:
        raise DataError(f"SVDA needs at least 2 labeled classes, got {len(names)}")
    X = labeled.matrix
    if unlabeled is not None and len(unlabeled):
        if unlabeled.dimension != labeled.dimension:
            raise DataError("labeled and unlabeled corpora differ in dimension")
        X = np.vstack([X, unlabeled.matrix])
    n_lab = len(labeled)
    K = X @ X.T
    d = X.shape[1]
    Sb = np.zeros((d, d))
    directions, svms = {}, {}
    pool_mask = np.zeros(X.shape[0], dtype=bool)
    for c, name in enumerate(names):
        y = -np.ones(X.shape[0])
        y[:n_lab][codes == c] = 1.0
        svm = _fit(X, K, y, C_reg, tol, max_iters)
        directions[name] = svm.w
        svms[name] = svm
        Sb += np.outer(svm.w, svm.w)
        pool_mask[svm.support_indices] = True
    Sw = np.zeros((d, d))
    class_support, class_means = {}, {}
    pool_lab = pool_mask[:n_lab]
    for c, name in enumerate(names):
        idx = np.flatnonzero(pool_lab & (codes == c))
        if idx.size == 0:
            raise DataError(f"class {name!r} has no support vectors")
        mu = X[idx].mean(axis=0)
        R = X[idx] - mu
        Sw += R.T @ R
        class_support[name] = idx
        class_means[name] = mu
    return SvdaScatter(
        (Sb + Sb.T) / 2, (Sw + Sw.T) / 2, np.flatnonzero(pool_mask), class_support, class_means, directions, svms
    )


def fit_svda(
    labeled: Corpus,
    unlabeled: Corpus | None,
    out_dim: int,
    C_reg: float = 1.0,
    ridge: float = DEFAULT_RIDGE,
    tol: float = 1e-6,
) -> Projection:
    if out_dim > labeled.dimension:
        raise DataError(f"out_dim {out_dim} exceeds input dimension {labeled.dimension}")
    sc = svda_scatter(labeled, unlabeled, C_reg, tol)
    log.info("SVDA: %d classes, %d support vectors", len(sc.directions), sc.n_support)
    rows, vals = solve_discriminant(sc.between, sc.within, out_dim, ridge)
    return Projection(rows, vals)


def fit_svda_lda_cascade(
    labeled: Corpus,
    unlabeled: Corpus | None,
    mid_dim: int,
    out_dim: int,
    C_reg: float = 1.0,
    ridge: float = DEFAULT_RIDGE,
    tol: float = 1e-6,
) -> Projection:
    """SVDA down to ``mid_dim``, then LDA (fit on the projected labeled data)
    down to ``out_dim``, returned as one composed projection."""
    if not out_dim <= mid_dim <= labeled.dimension:
        raise DataError(f"cascade needs out_dim <= mid_dim <= d, got {out_dim}, {mid_dim}, {labeled.dimension}")
    first = fit_svda(labeled, unlabeled, mid_dim, C_reg, ridge, tol)
    second = fit_lda(labeled.with_matrix(first.apply(labeled.matrix)), out_dim, ridge)
    return first.then(second)


def support_report(sc: SvdaScatter) -> str:
    lines = [f"support vectors: {sc.n_support}", "class\tclass_support\tclassifier_support\t|w|"]
    for name, idx in sc.class_support.items():
        svm = sc.svms.get(name)
        n_cls = svm.support_indices.size if svm is not None else 0
        lines.append(f"{name}\t{idx.size}\t{n_cls}\t{np.linalg.norm(sc.directions[name]):.6g}")
    return "\n".join(lines) + "\n"
