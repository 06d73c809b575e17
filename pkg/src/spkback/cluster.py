"""Estimated speaker labels for unlabeled data: a linear gender classifier
followed by gender-dependent k-means."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .corpus import Corpus, Gender
from .errors import DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GenderModel:
    direction: np.ndarray
    threshold: float

    def score(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.direction - self.threshold

    def predict(self, X: np.ndarray) -> list[Gender]:
        return [Gender.M if s > 0 else Gender.F for s in self.score(X)]


def fit_gender(corpus: Corpus, min_separation: float = 1e-12) -> GenderModel:
    """Unit vector from the female to the male mean; threshold at the
    midpoint of the projected means."""
    X = corpus.matrix
    f_mask = np.array([s.gender is Gender.F for s in corpus.segments])
    m_mask = np.array([s.gender is Gender.M for s in corpus.segments])
    if not f_mask.any() or not m_mask.any():
        raise DataError("gender classifier needs both genders in the training data")
    mf, mm = X[f_mask].mean(axis=0), X[m_mask].mean(axis=0)
    diff = mm - mf
    norm = np.linalg.norm(diff)
    if norm <= min_separation:
        raise DataError("gender means coincide; gender classifier has zero margin")
    u = diff / norm
    return GenderModel(u, float(0.5 * (mf + mm) @ u))


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    n_iters: int = 0


def _sq_dists(X, C):
    return np.maximum((X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :], 0.0)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point coincides with a chosen centre: take the first unused index
            used = set(centers)
            nxt = next(i for i in range(n) if i not in used)
        else:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        centers.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(1))
    return X[centers].copy()


def _lloyd(X, C, max_iters):
    n, k = X.shape[0], C.shape[0]
    labels = None
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        D = _sq_dists(X, C)
        new = D.argmin(axis=1)
        history.append(float(D[np.arange(n), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = np.empty_like(C)
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                C[c] = X[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            # re-seed an empty cluster at the point farthest from its centroid
            own = np.where(counts[labels] > 0, ((X - C[labels]) ** 2).sum(1), -1.0)
            far = int(np.argmax(own))
            C[c] = X[far]
            counts[labels[far]] -= 1
            labels[far] = c
            counts[c] = 1
    D = _sq_dists(X, C)
    labels = D.argmin(axis=1)
    inertia = float(((X - C[labels]) ** 2).sum())  # direct form, exact zero at k = n
    return labels, C, inertia, history, it


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 300,
    n_restarts: int = 10,
) -> KMeansResult:
    """k-means++ seeded Lloyd iterations, best of ``n_restarts`` by inertia.

    Restart ``r`` draws from ``SeedSequence(seed, spawn_key=(r,))``; ties in
    inertia go to the lower restart index. Empty clusters are re-seeded at
    the point farthest from its current centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"k-means needs 1 <= k <= n, got k={k}, n={n}")
    best = None
    for r in range(n_restarts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(r,))))
        labels, C, inertia, hist, it = _lloyd(X, _kmeanspp(X, k, rng), max_iters)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, C, inertia, hist, it)
    return best


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: dict[str, str]
    centroids: dict[str, np.ndarray]
    inertia: dict[str, float]
    warnings: list[str] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels.values()))

    def apply(self, corpus: Corpus) -> Corpus:
        """Corpus with estimated speaker ids filled in for assigned segments."""
        return corpus.with_speakers(self.labels)


def split_k(total: int, sizes: Mapping[str, int]) -> dict[str, int]:
    """Split ``total`` clusters across subsets in proportion to their sizes.

    The rounding remainder goes to the larger subset; every nonempty subset
    gets at least one cluster and never more clusters than points.
    """
    names = [g for g, n in sizes.items() if n > 0]
    if not names:
        return {g: 0 for g in sizes}
    n_all = sum(sizes[g] for g in names)
    out = {g: 0 for g in sizes}
    for g in names:
        out[g] = max(1, math.floor(total * sizes[g] / n_all))
    largest = max(names, key=lambda g: (sizes[g], g))
    out[largest] += total - sum(out.values())
    for g in names:
        out[g] = min(max(out[g], 1), sizes[g])
    return out


def cluster_unlabeled(
    corpus: Corpus,
    gender_model: GenderModel,
    k_per_gender: Mapping[Gender | str, int],
    seed: int = 0,
    n_restarts: int = 10,
    prefix: str = "",
) -> ClusterAssignment:
    """Split by predicted gender, run k-means per subset, pool the labels as
    ``<prefix><gender>_<cluster>``."""
    genders = gender_model.predict(corpus.matrix)
    labels: dict[str, str] = {}
    centroids, inertia = {}, {}
    notes: list[str] = []
    ids = corpus.ids
    for g in (Gender.F, Gender.M):
        k = int(k_per_gender.get(g, k_per_gender.get(g.value, 0)))
        idx = [i for i, gg in enumerate(genders) if gg is g]
        if not idx:
            if k > 0:
                msg = f"no segments classified as {g.value}; subset skipped"
                warnings.warn(msg)
                notes.append(msg)
            continue
        if k < 1:
            raise DataError(f"{len(idx)} segments classified as {g.value} but k=0 requested")
        if k > len(idx):
            msg = f"k={k} exceeds {len(idx)} {g.value} segments; using k={len(idx)}"
            warnings.warn(msg)
            notes.append(msg)
            k = len(idx)
        res = kmeans(corpus.matrix[idx], k, seed=seed + (0 if g is Gender.F else 1), n_restarts=n_restarts)
        used = np.unique(res.labels)
        if used.size < k:
            notes.append(f"{g.value}: {k - used.size} clusters collapsed")
        for i, lab in zip(idx, res.labels):
            labels[ids[i]] = f"{prefix}{g.value}_{int(lab)}"
        centroids[g.value] = res.centroids
        inertia[g.value] = res.inertia
    return ClusterAssignment(labels, centroids, inertia, notes)


def cluster_total(
    corpus: Corpus, gender_model: GenderModel, k_total: int, seed: int = 0, n_restarts: int = 10, prefix: str = ""
) -> ClusterAssignment:
    """``cluster_unlabeled`` with ``k_total`` split proportionally by gender."""
    genders = gender_model.predict(corpus.matrix)
    sizes = {g.value: sum(1 for x in genders if x is g) for g in (Gender.F, Gender.M)}
    return cluster_unlabeled(corpus, gender_model, split_k(k_total, sizes), seed, n_restarts, prefix)


def purity(assignment: ClusterAssignment, truth: Mapping[str, str]) -> float:
    """Fraction of segments whose cluster's majority true label matches theirs."""
    by_cluster: dict[str, dict[str, int]] = {}
    for seg, lab in assignment.labels.items():
        counts = by_cluster.setdefault(lab, {})
        counts[truth[seg]] = counts.get(truth[seg], 0) + 1
    n = sum(sum(c.values()) for c in by_cluster.values())
    return sum(max(c.values()) for c in by_cluster.values()) / n if n else 1.0
