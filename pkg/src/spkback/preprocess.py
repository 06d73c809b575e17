"""Embedding conditioning: centering, length normalization, trial-based
mean subtraction."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .corpus import Corpus, Domain
from .errors import DataError


class CenteringSource(str, enum.Enum):
    MINOR_ONLY = "minor_only"
    MAJOR_ONLY = "major_only"
    MINOR_PLUS_MAJOR = "minor_plus_major"
    CUSTOM = "custom"


SOURCE_DOMAINS = {
    CenteringSource.MINOR_ONLY: (Domain.IN_DOMAIN_MINOR,),
    CenteringSource.MAJOR_ONLY: (Domain.IN_DOMAIN_MAJOR,),
    CenteringSource.MINOR_PLUS_MAJOR: (Domain.IN_DOMAIN_MINOR, Domain.IN_DOMAIN_MAJOR),
}


@dataclass(frozen=True, eq=False)
class CenteringStats:
    mean: np.ndarray
    source: CenteringSource = CenteringSource.CUSTOM


def compute_mean(
    corpus: Corpus,
    source: CenteringSource | str = CenteringSource.CUSTOM,
    domains: Iterable[Domain | str] | None = None,
) -> CenteringStats:
    """Mean embedding of the segments selected by ``source``.

    ``custom`` uses ``domains`` when given, otherwise every segment.
    """
    source = CenteringSource(source)
    if source is CenteringSource.CUSTOM:
        sub = corpus if domains is None else corpus.in_domains(domains)
    else:
        sub = corpus.in_domains(SOURCE_DOMAINS[source])
    if len(sub) == 0:
        raise DataError(f"no segments selected for centering source {source.value}")
    return CenteringStats(sub.matrix.mean(axis=0), source)


def center(corpus: Corpus, stats: CenteringStats) -> Corpus:
    if stats.mean.shape != (corpus.dimension,):
        raise DataError(f"mean of shape {stats.mean.shape} cannot center a {corpus.dimension}-dim corpus")
    return corpus.with_matrix(corpus.matrix - stats.mean)


def center_domains(corpus: Corpus, stats: CenteringStats, own_mean: Iterable[Domain | str]) -> Corpus:
    """Center with ``stats`` except for segments of ``own_mean`` domains,
    which are centered by the mean of those domains instead."""
    own = {Domain(d) for d in own_mean}
    mask = np.array([s.domain in own for s in corpus.segments])
    if not mask.any():
        return center(corpus, stats)
    X = corpus.matrix - stats.mean
    X[mask] = corpus.matrix[mask] - corpus.matrix[mask].mean(axis=0)
    return corpus.with_matrix(X)


def length_normalize(corpus: Corpus) -> Corpus:
    X = corpus.matrix
    # rescale by the largest entry first so tiny or huge vectors do not under/overflow
    scale = np.abs(X).max(axis=1) if X.size else np.zeros(len(corpus))
    zero = np.flatnonzero(scale == 0)
    if zero.size:
        raise DataError(f"cannot length-normalize zero vector of segment {corpus.segments[zero[0]].segment_id!r}")
    Y = X / scale[:, None]
    return corpus.with_matrix(Y / np.linalg.norm(Y, axis=1, keepdims=True))


def trial_mean_subtract(enroll: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the pair average from both vectors; rows are paired when 2-D."""
    enroll = np.asarray(enroll, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if enroll.shape != test.shape:
        raise DataError(f"enroll/test shapes differ: {enroll.shape} vs {test.shape}")
    half = (enroll - test) / 2
    return half, -half
