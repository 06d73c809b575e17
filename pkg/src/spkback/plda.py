"""Two-covariance PLDA: EM training and closed-form verification scoring.

Generative model: ``x = mu + y + e`` with ``y ~ N(0, B)`` shared by all
segments of a speaker and ``e ~ N(0, W)`` per segment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, ScoreSet, TrialSet, labels_to_codes
from .errors import DataError, NumericalError, ParseError
from .preprocess import trial_mean_subtract

log = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True, eq=False)
class PldaModel:
    mu: np.ndarray
    B: np.ndarray
    W: np.ndarray
    em_log_likelihoods: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def scoring_terms(self):
        """(Q, P, const) with LLR = -1/2 (e'Qe + t'Qt + 2 e'Pt) - const on
        mean-removed vectors."""
        T = self.B + self.W
        inv_sum = np.linalg.inv(2 * self.B + self.W)
        inv_w = np.linalg.inv(self.W)
        inv_t = np.linalg.inv(T)
        Q = 0.5 * (inv_sum + inv_w) - inv_t
        P = 0.5 * (inv_sum - inv_w)
        const = 0.5 * (_logdet(2 * self.B + self.W) + _logdet(self.W) - 2 * _logdet(T))
        return (Q + Q.T) / 2, (P + P.T) / 2, const


def _logdet(A: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(A)
    if sign <= 0:
        raise NumericalError("covariance is not positive definite")
    return float(val)


def _sym(A):
    return (A + A.T) / 2


def floor_eigenvalues(A: np.ndarray, floor: float) -> np.ndarray:
    """Raise eigenvalues of symmetric ``A`` to at least ``floor * trace(A) / k``."""
    vals, vecs = np.linalg.eigh(_sym(A))
    lo = floor * max(float(np.trace(A)), 0.0) / A.shape[0]
    if vals.min() >= lo and vals.min() > 0:
        return _sym(A)
    vals = np.maximum(vals, max(lo, np.finfo(float).tiny))
    return _sym((vecs * vals) @ vecs.T)


class _SpeakerStats:
    """Per-speaker counts and sums, grouped by segment count."""

    def __init__(self, X: np.ndarray, codes: np.ndarray):
        n_spk = int(codes.max()) + 1
        self.counts = np.bincount(codes, minlength=n_spk).astype(float)
        self.sums = np.zeros((n_spk, X.shape[1]))
        np.add.at(self.sums, codes, X)
        self.X = X
        self.codes = codes
        self.N = X.shape[0]
        self.S = n_spk
        self.scatter = X.T @ X

    def groups(self):
        for n in np.unique(self.counts):
            yield n, np.flatnonzero(self.counts == n)


def _log_likelihood(stats: _SpeakerStats, mu, B, W) -> float:
    d = mu.shape[0]
    W_inv = np.linalg.inv(W)
    logdet_w = _logdet(W)
    Xc = stats.X - mu
    total = -0.5 * float(np.einsum("ij,jk,ik->", Xc, W_inv, Xc))
    total -= 0.5 * stats.N * (d * LOG_2PI + logdet_w)
    for n, idx in stats.groups():
        # log|B| + log|B^-1 + n W^-1| = log|W + nB| - log|W|
        M = W + n * B
        total -= 0.5 * len(idx) * (_logdet(M) - logdet_w)
        f = (stats.sums[idx] - n * mu) @ W_inv  # rows: W^-1 sum(x - mu)
        # f' P^-1 f with P^-1 = W (W + nB)^-1 B
        Pinv = W @ np.linalg.solve(M, B)
        total += 0.5 * float(np.einsum("ij,jk,ik->", f, _sym(Pinv), f))
    return total


def fit_plda(
    corpus: Corpus,
    n_iters: int = 20,
    floor: float = 1e-6,
    init: PldaModel | None = None,
) -> PldaModel:
    """EM estimate of (mu, B, W) from speaker-labeled embeddings.

    Starts from ``B = W = total covariance / 2`` unless ``init`` is given.
    ``em_log_likelihoods[t]`` is the data log-likelihood after ``t`` updates
    (index 0 is the starting point).
    """
    codes, names = labels_to_codes(corpus.speaker_ids)
    if len(names) < 2:
        raise DataError(f"PLDA needs at least 2 speakers, got {len(names)}")
    X = corpus.matrix
    stats = _SpeakerStats(X, codes)
    if stats.counts.max() < 2:
        raise DataError("every speaker has a single segment; within-speaker covariance is unidentifiable")
    d = X.shape[1]
    if init is None:
        mu = X.mean(axis=0)
        C = np.cov(X, rowvar=False, bias=True).reshape(d, d)
        B = W = C / 2
    else:
        mu, B, W = init.mu.copy(), init.B.copy(), init.W.copy()
    W = floor_eigenvalues(W, floor)
    lls = [_log_likelihood(stats, mu, B, W)]
    for _ in range(n_iters):
        mu, B, W = _em_step(stats, mu, B, W)
        W = floor_eigenvalues(W, floor)
        lls.append(_log_likelihood(stats, mu, B, W))
    log.info("PLDA EM: log-likelihood %.6g -> %.6g over %d iterations", lls[0], lls[-1], n_iters)
    return PldaModel(mu, B, W, lls)


def _em_step(stats: _SpeakerStats, mu, B, W):
    d = mu.shape[0]
    S, N = stats.S, stats.N
    means = np.empty((S, d))
    cov_sum = np.zeros((d, d))  # sum_i P_i^-1
    within_cov = np.zeros((d, d))  # sum_i n_i P_i^-1
    for n, idx in stats.groups():
        M = W + n * B
        gain = np.linalg.solve(M, B).T  # B (W + nB)^-1
        Pinv = _sym(W @ np.linalg.solve(M, B))
        means[idx] = mu + (stats.sums[idx] - n * mu) @ gain.T
        cov_sum += len(idx) * Pinv
        within_cov += len(idx) * n * Pinv
    new_mu = means.mean(axis=0)
    D = means - new_mu
    new_B = _sym((cov_sum + D.T @ D) / S)
    # sum_ij (x_ij - m_i)(x_ij - m_i)' = X'X - sum_i (s_i m_i' + m_i s_i') + sum_i n_i m_i m_i'
    sm = stats.sums.T @ means
    within = stats.scatter - sm - sm.T + (means * stats.counts[:, None]).T @ means
    new_W = _sym((within + within_cov) / N)
    return new_mu, new_B, new_W


def score_trial(model: PldaModel, enroll: np.ndarray, test: np.ndarray) -> float:
    """Same-speaker vs different-speaker log-likelihood ratio."""
    return float(score_pairs(model, np.atleast_2d(enroll), np.atleast_2d(test))[0])


def score_pairs(model: PldaModel, E: np.ndarray, T: np.ndarray, terms=None) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if E.shape != T.shape or E.shape[-1] != model.dim:
        raise DataError(f"enroll/test shapes {E.shape}, {T.shape} do not match model dimension {model.dim}")
    Q, P, const = terms if terms is not None else model.scoring_terms()
    e = E - model.mu
    t = T - model.mu
    quad = np.einsum("ij,jk,ik->i", e, Q, e) + np.einsum("ij,jk,ik->i", t, Q, t)
    # both orders, so swapping enroll and test gives the same float
    cross = 0.5 * (np.einsum("ij,jk,ik->i", e, P, t) + np.einsum("ij,jk,ik->i", t, P, e))
    return -0.5 * (quad + 2 * cross) - const


def trial_vectors(corpus: Corpus, trials: TrialSet) -> tuple[np.ndarray, np.ndarray]:
    """Averaged enrollment vectors and test vectors for each trial."""
    E = np.empty((len(trials), corpus.dimension))
    T = np.empty_like(E)
    index = corpus.index
    X = corpus.matrix
    for n, tr in enumerate(trials):
        try:
            E[n] = X[[index[e] for e in tr.enroll_ids]].mean(axis=0)
            T[n] = X[index[tr.test_id]]
        except KeyError as exc:
            raise DataError(f"trial {n}: unknown segment id {exc.args[0]!r}") from None
    return E, T


def score_trialset(
    model: PldaModel,
    corpus: Corpus,
    trials: TrialSet,
    trial_mean: bool = False,
) -> ScoreSet:
    """Score every trial; multi-segment enrollments are averaged first.

    With ``trial_mean`` the pair average is subtracted from both vectors
    before scoring.
    """
    E, T = trial_vectors(corpus, trials)
    if trial_mean:
        E, T = trial_mean_subtract(E, T)
    return ScoreSet(trials, score_pairs(model, E, T))


def write_plda(model: PldaModel, path) -> None:
    k = model.dim
    fmt = lambda v: " ".join(repr(float(x)) for x in v)  # noqa: E731
    lines = [f"#dim={k}", fmt(model.mu)]
    lines += [fmt(r) for r in model.B]
    lines += [fmt(r) for r in model.W]
    if model.em_log_likelihoods:
        lines.append("#em_log_likelihoods " + fmt(model.em_log_likelihoods))
    Path(path).write_text("\n".join(lines) + "\n")


def read_plda(path) -> PldaModel:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#dim="):
        raise ParseError("missing '#dim=<k>' header", path, 1)
    k = int(lines[0][5:])
    lls: list[float] = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#em_log_likelihoods"):
            lls = [float(x) for x in line.split()[1:]]
        elif line.strip():
            row = [float(x) for x in line.split()]
            if len(row) != k:
                raise ParseError(f"expected {k} values, got {len(row)}", path, lineno)
            rows.append(row)
    if len(rows) != 1 + 2 * k:
        raise ParseError(f"expected {1 + 2 * k} rows, got {len(rows)}", path)
    A = np.array(rows)
    return PldaModel(A[0], A[1 : 1 + k], A[1 + k :], lls)
