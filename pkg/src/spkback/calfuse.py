"""PAV score calibration and logistic-regression fusion."""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import ClusterAssignment
from .corpus import Key, ScoreSet, Trial, TrialSet
from .errors import DataError, NumericalError, ParseError

log = logging.getLogger(__name__)

LLR_CAP = 7.0


def logit(p):
    return np.log(p) - np.log1p(-p)


def pav(values, weights=None) -> np.ndarray:
    """Weighted isotonic (non-decreasing) least-squares fit, pool-adjacent-violators."""
    y = np.asarray(values, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    means, wts, sizes = [], [], []
    for v, wt in zip(y, w):
        means.append(v)
        wts.append(wt)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wts.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), wts.pop(), sizes.pop()
            wt_sum = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt_sum)
            wts.append(wt_sum)
            sizes.append(s1 + s2)
    return np.repeat(means, sizes)


@dataclass(frozen=True, eq=False)
class CalibrationMap:
    """Step function from raw score to LLR, clamped outside the knot range."""

    breakpoints: np.ndarray
    calibrated_values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, float)
        v = np.asarray(self.calibrated_values, float)
        if b.shape != v.shape or b.ndim != 1 or b.size == 0:
            raise DataError("calibration knots and values must be equal-length 1-D arrays")
        if np.any(np.diff(b) <= 0):
            raise DataError("calibration knots must be strictly ascending")
        if np.any(np.diff(v) < 0):
            raise DataError("calibrated values must be non-decreasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "calibrated_values", v)


def pav_fit(scores, keys, llr_cap: float = LLR_CAP) -> CalibrationMap:
    """PAV calibration from keyed scores.

    Key indicators ordered by score (equal scores pooled first) are fitted
    isotonically; each pooled posterior ``p`` becomes
    ``logit(p) - logit(pi)`` with ``pi`` the target proportion, clamped to
    ``[-llr_cap, llr_cap]``.
    """
    s = np.asarray(scores, dtype=np.float64)
    k = np.asarray(keys, dtype=bool)
    if s.shape != k.shape:
        raise DataError("scores and keys differ in length")
    n_tar = int(k.sum())
    if n_tar == 0 or n_tar == k.size:
        raise DataError("PAV calibration needs both target and nontarget trials")
    knots, inverse = np.unique(s, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    tar = np.bincount(inverse, weights=k.astype(float))
    post = pav(tar / counts, counts)
    prior = n_tar / k.size
    with np.errstate(divide="ignore"):
        llr = logit(post) - logit(prior)
    return CalibrationMap(knots, np.clip(llr, -llr_cap, llr_cap))


def pav_apply(cmap: CalibrationMap, scores) -> np.ndarray:
    """Value at the greatest knot <= score; scores below the first knot get
    the first value."""
    s = np.asarray(scores, dtype=np.float64)
    pos = np.searchsorted(cmap.breakpoints, s, side="right") - 1
    return cmap.calibrated_values[np.clip(pos, 0, cmap.breakpoints.size - 1)]


def calibrate(cmap: CalibrationMap, scoreset: ScoreSet) -> ScoreSet:
    return scoreset.with_scores(pav_apply(cmap, scoreset.scores), calibrated=True)


# ----------------------------------------------------------------- fusion


@dataclass(frozen=True, eq=False)
class FusionModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, float))
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise NumericalError("fusion parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))


def _objective(theta, S, k, prior, l2):
    """Prior-weighted logistic loss, its gradient and Hessian; theta = [w, b]."""
    off = logit(prior)
    z = S @ theta[:-1] + theta[-1] + off
    sign = np.where(k, 1.0, -1.0)
    n_t, n_n = k.sum(), (~k).sum()
    c = np.where(k, prior / n_t, (1 - prior) / n_n)
    m = sign * z
    loss = float(np.sum(c * np.logaddexp(0.0, -m)))
    sig = 0.5 * (1 + np.tanh(-m / 2))  # sigmoid(-m), overflow-safe
    g_z = -c * sign * sig
    h_z = c * sig * (1 - sig)
    A = np.hstack([S, np.ones((S.shape[0], 1))])
    grad = A.T @ g_z
    hess = (A * h_z[:, None]).T @ A
    reg = np.r_[np.full(S.shape[1], l2), 0.0]
    loss += 0.5 * float(np.sum(reg * theta * theta))
    grad += reg * theta
    hess += np.diag(reg)
    return loss, grad, hess


def fusion_loss(model: FusionModel, score_matrix, keys, prior: float = 0.5, l2: float = 0.0) -> float:
    S = np.atleast_2d(np.asarray(score_matrix, float).T).T
    theta = np.r_[model.weights, model.bias]
    return _objective(theta, S, np.asarray(keys, bool), prior, l2)[0]


def fuse_fit(
    score_matrix,
    keys,
    l2_penalty: float = 1e-6,
    prior: float = 0.5,
    grad_tol: float = 1e-8,
    max_iters: int = 100,
) -> FusionModel:
    """Logistic-regression fusion by damped Newton iterations.

    Classes are weighted to the effective ``prior`` and the prior log-odds
    is added inside the logistic, so the fused output ``S w + b`` is an LLR.
    The L2 penalty applies to the weights only.
    """
    S = np.asarray(score_matrix, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    k = np.asarray(keys, dtype=bool)
    if S.shape[0] != k.size:
        raise DataError(f"{S.shape[0]} score rows for {k.size} keys")
    if k.all() or not k.any():
        raise DataError("fusion needs both target and nontarget trials")
    theta = np.zeros(S.shape[1] + 1)
    loss, grad, hess = _objective(theta, S, k, prior, l2_penalty)
    for _ in range(max_iters):
        if np.linalg.norm(grad) <= grad_tol:
            break
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            c_loss, c_grad, c_hess = _objective(cand, S, k, prior, l2_penalty)
            if c_loss <= loss + 1e-4 * t * float(grad @ -step) or t < 1e-10:
                break
            t /= 2
        theta, loss, grad, hess = cand, c_loss, c_grad, c_hess
    gnorm = float(np.linalg.norm(grad))
    if gnorm > grad_tol:
        raise NumericalError(f"fusion did not converge (gradient norm {gnorm:.3e})")
    return FusionModel(theta[:-1], theta[-1])


def fuse_apply(model: FusionModel, score_matrix) -> np.ndarray:
    S = np.asarray(score_matrix, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[1] != model.weights.size:
        raise DataError(f"{S.shape[1]} score columns for {model.weights.size} fusion weights")
    return S @ model.weights + model.bias


# ------------------------------------------------------ calibration data


class CalibrationStrategy(str, enum.Enum):
    DEV_ONLY = "dev_only"
    UNLABELED_ONLY = "unlabeled_only"
    DEV_PLUS_UNLABELED = "dev_plus_unlabeled"


def calibration_set(
    strategy: CalibrationStrategy | str,
    dev: ScoreSet | None,
    unlabeled: ScoreSet | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and keys to fit calibration on; the combined strategy concatenates
    both sets with equal per-trial weight."""
    strategy = CalibrationStrategy(strategy)
    parts = []
    if strategy in (CalibrationStrategy.DEV_ONLY, CalibrationStrategy.DEV_PLUS_UNLABELED):
        if dev is None:
            raise DataError(f"strategy {strategy.value} needs dev scores")
        parts.append(dev)
    if strategy in (CalibrationStrategy.UNLABELED_ONLY, CalibrationStrategy.DEV_PLUS_UNLABELED):
        if unlabeled is None:
            raise DataError(f"strategy {strategy.value} needs unlabeled-trial scores")
        parts.append(unlabeled)
    scores = np.concatenate([p.scores for p in parts])
    keys = np.concatenate([p.trials.keys() for p in parts])
    return scores, keys


def make_unlabeled_trials(
    assignment: ClusterAssignment,
    n_target: int,
    n_nontarget: int,
    seed: int = 0,
    partitions: dict[str, str] | None = None,
) -> TrialSet:
    """Sample same-cluster (target) and cross-cluster (nontarget) segment
    pairs without replacement. Fewer trials than requested are returned, with
    a warning, when not enough pairs exist."""
    ids = sorted(assignment.labels)
    labels = np.array([assignment.labels[i] for i in ids])
    if len(set(labels)) < 2:
        raise DataError("unlabeled trials need at least 2 clusters")
    iu, ju = np.triu_indices(len(ids), k=1)
    same = labels[iu] == labels[ju]
    tar_pairs = np.flatnonzero(same)
    non_pairs = np.flatnonzero(~same)
    if tar_pairs.size == 0:
        raise DataError("no cluster holds two segments; no target pairs exist")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    picked = []
    for pool, want, key in ((tar_pairs, n_target, Key.TARGET), (non_pairs, n_nontarget, Key.NONTARGET)):
        if want > pool.size:
            warnings.warn(f"requested {want} {key.value} pairs, only {pool.size} available")
            want = pool.size
        chosen = np.sort(rng.choice(pool.size, size=want, replace=False)) if want else np.array([], int)
        picked += [(pool[c], key) for c in chosen]
    parts = partitions or {}
    trials = [
        Trial((ids[iu[p]],), ids[ju[p]], key, parts.get(ids[ju[p]]))
        for p, key in picked
    ]
    return TrialSet(trials)


# ----------------------------------------------------------------- files


def write_calibration(cmap: CalibrationMap, path) -> None:
    lines = ["#calibration pav", f"n_knots\t{cmap.breakpoints.size}", "knot\tllr"]
    lines += [f"{b!r}\t{v!r}" for b, v in zip(cmap.breakpoints.tolist(), cmap.calibrated_values.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_calibration(path) -> CalibrationMap:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "#calibration pav":
        raise ParseError("not a calibration file", path, 1)
    knots, vals = [], []
    for lineno, line in enumerate(lines[3:], start=4):
        try:
            b, v = line.split("\t")
            knots.append(float(b))
            vals.append(float(v))
        except ValueError:
            raise ParseError(f"bad knot line {line!r}", path, lineno) from None
    return CalibrationMap(np.array(knots), np.array(vals))


def write_fusion(model: FusionModel, path, names: list[str] | None = None) -> None:
    names = names or [f"system{i}" for i in range(model.weights.size)]
    lines = ["#fusion logistic", f"bias\t{model.bias!r}", "system\tweight"]
    lines += [f"{n}\t{w!r}" for n, w in zip(names, model.weights.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_fusion(path) -> tuple[FusionModel, list[str]]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != "#fusion logistic" or not lines[1].startswith("bias\t"):
        raise ParseError("not a fusion file", path, 1)
    bias = float(lines[1].split("\t")[1])
    names, weights = [], []
    for line in lines[3:]:
        n, w = line.split("\t")
        names.append(n)
        weights.append(float(w))
    return FusionModel(np.array(weights), bias), names
