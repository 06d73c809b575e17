"""Detection metrics: error profiles, EER, min/act Cprimary with equalized
and unequalized averaging, and the Table-style report."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import ScoreSet
from .errors import DataError

# (P_target, C_miss, C_fa)
DEFAULT_OPERATING_POINTS = ((0.01, 1.0, 1.0), (0.005, 1.0, 1.0))


@dataclass(frozen=True)
class CostParams:
    operating_points: tuple[tuple[float, float, float], ...] = DEFAULT_OPERATING_POINTS

    def __post_init__(self):
        pts = tuple(tuple(float(x) for x in p) for p in self.operating_points)
        for p_tgt, c_miss, c_fa in pts:
            if not 0 < p_tgt < 1 or c_miss <= 0 or c_fa <= 0:
                raise DataError(f"invalid operating point {(p_tgt, c_miss, c_fa)}")
        if not pts:
            raise DataError("at least one operating point is required")
        object.__setattr__(self, "operating_points", pts)

    def bayes_thresholds(self) -> list[float]:
        return [float(np.log(c_fa * (1 - p) / (c_miss * p))) for p, c_miss, c_fa in self.operating_points]


@dataclass(frozen=True, eq=False)
class ErrorProfile:
    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray


def _split(scores, keys):
    s = np.asarray(scores, dtype=np.float64)
    k = np.asarray(keys, dtype=bool)
    if s.shape != k.shape:
        raise DataError("scores and keys differ in length")
    if k.all() or not k.any():
        raise DataError("metrics need both target and nontarget trials")
    return s, k


def error_profile(scores, keys) -> ErrorProfile:
    """Miss and false-alarm rates at -inf, every midpoint between distinct
    scores, and +inf. A trial is accepted when its score exceeds the
    threshold."""
    s, k = _split(scores, keys)
    uniq, inverse = np.unique(s, return_inverse=True)
    n_tar = np.bincount(inverse, weights=k.astype(float), minlength=uniq.size)
    n_non = np.bincount(inverse, weights=(~k).astype(float), minlength=uniq.size)
    T, N = n_tar.sum(), n_non.sum()
    p_miss = np.concatenate([[0.0], np.cumsum(n_tar) / T])
    p_fa = np.concatenate([[1.0], 1.0 - np.cumsum(n_non) / N])
    p_fa[-1] = 0.0
    p_miss[-1] = 1.0
    mids = (uniq[:-1] + uniq[1:]) / 2
    thresholds = np.concatenate([[-np.inf], mids, [np.inf]])
    return ErrorProfile(thresholds, p_miss, p_fa)


def eer(profile: ErrorProfile) -> float:
    """Equal error rate by linear interpolation between adjacent profile points."""
    pm, pf = profile.p_miss, profile.p_fa
    diff = pm - pf  # -1 at the start, +1 at the end, non-decreasing
    i = int(np.flatnonzero(diff >= 0)[0])
    if diff[i] == 0:
        return float(pm[i])
    j = i - 1
    # intersect the segment (pf_j, pm_j) -> (pf_i, pm_i) with pm == pf
    t = -diff[j] / (diff[i] - diff[j])
    return float(pm[j] + t * (pm[i] - pm[j]))


def compute_eer(scores, keys) -> float:
    return eer(error_profile(scores, keys))


def normalized_cost(p_miss, p_fa, p_tgt, c_miss, c_fa):
    return (c_miss * p_tgt * p_miss + c_fa * (1 - p_tgt) * p_fa) / min(c_miss * p_tgt, c_fa * (1 - p_tgt))


def _cprimary_pooled(s, k, params: CostParams, mode: str) -> float:
    costs = []
    if mode == "min":
        prof = error_profile(s, k)
        for p, cm, cf in params.operating_points:
            costs.append(float(normalized_cost(prof.p_miss, prof.p_fa, p, cm, cf).min()))
    elif mode == "act":
        tar, non = s[k], s[~k]
        for (p, cm, cf), th in zip(params.operating_points, params.bayes_thresholds()):
            pm = float(np.mean(tar < th))
            pf = float(np.mean(non >= th))
            costs.append(float(normalized_cost(pm, pf, p, cm, cf)))
    else:
        raise DataError(f"unknown Cprimary mode {mode!r}")
    return float(np.mean(costs))


def cprimary(
    scores,
    keys,
    params: CostParams = CostParams(),
    mode: str = "min",
    partitions: Sequence[str | None] | None = None,
) -> float:
    """Average normalized detection cost over the operating points.

    ``mode='min'`` optimizes the threshold per operating point, ``'act'``
    thresholds at the Bayes point (scores must be LLRs). With
    ``partitions`` the result is the mean of per-partition costs (equalized);
    otherwise all trials are pooled.
    """
    s, k = _split(scores, keys)
    if partitions is None:
        return _cprimary_pooled(s, k, params, mode)
    return _equalized(s, k, partitions, lambda ss, kk: _cprimary_pooled(ss, kk, params, mode))


def _equalized(s, k, partitions, fn) -> float:
    tags = list(partitions)
    if len(tags) != s.size:
        raise DataError("partition tags differ in length from scores")
    if any(t is None for t in tags):
        raise DataError("equalized metrics need a partition tag on every trial")
    vals = []
    for tag in sorted(set(tags)):
        m = np.array([t == tag for t in tags])
        if k[m].all() or not k[m].any():
            raise DataError(f"partition {tag!r} lacks target or nontarget trials")
        vals.append(fn(s[m], k[m]))
    return float(np.mean(vals))


def equalized_eer(scores, keys, partitions) -> float:
    s, k = _split(scores, keys)
    return _equalized(s, k, partitions, compute_eer)


# ----------------------------------------------------------------- report


@dataclass(frozen=True, eq=False)
class SystemScores:
    """Raw scores carry the ranking (EER, min-Cprimary); calibrated LLRs give
    act-Cprimary."""

    name: str
    raw: ScoreSet
    calibrated: ScoreSet | None = None


def evaluate(entry: SystemScores, params: CostParams = CostParams()) -> dict:
    keys = entry.raw.trials.keys()
    parts = entry.raw.trials.partitions()
    raw = entry.raw.scores
    if entry.calibrated is None or not entry.calibrated.calibrated:
        warnings.warn(f"{entry.name}: act-Cprimary computed on scores not marked as calibrated")
    act_scores = (entry.calibrated or entry.raw).scores
    have_parts = all(p is not None for p in parts)
    out = {
        "system": entry.name,
        "unequalized": {
            "eer": compute_eer(raw, keys),
            "min_cprimary": cprimary(raw, keys, params, "min"),
            "act_cprimary": cprimary(act_scores, keys, params, "act"),
        },
    }
    if have_parts:
        out["equalized"] = {
            "eer": equalized_eer(raw, keys, parts),
            "min_cprimary": cprimary(raw, keys, params, "min", parts),
            "act_cprimary": cprimary(act_scores, keys, params, "act", parts),
        }
    return out


REPORT_COLUMNS = ("EER", "minCp", "actCp")


def report(entries: Sequence[SystemScores], params: CostParams = CostParams()) -> tuple[str, dict]:
    """Text table plus a JSON-ready mirror.

    Columns: system, then EER(%) / min-Cprimary / act-Cprimary for the
    equalized block, ``--``, the same three for the unequalized block.
    """
    rows = [evaluate(e, params) for e in entries]
    header = "system".ljust(16) + "  EER%   minCp  actCp  --  EER%   minCp  actCp"
    lines = [header, "(equalized -- unequalized)"]
    for r in rows:
        blocks = []
        for name in ("equalized", "unequalized"):
            m = r.get(name)
            if m is None:
                blocks.append("   nan    nan    nan")
            else:
                blocks.append(f"{100 * m['eer']:6.2f} {m['min_cprimary']:6.3f} {m['act_cprimary']:6.3f}")
        lines.append(f"{r['system']:<16}{blocks[0]}  --{blocks[1]}")
    doc = {
        "operating_points": [list(p) for p in params.operating_points],
        "systems": rows,
    }
    return "\n".join(lines) + "\n", doc


def write_report(text: str, doc: Mapping, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_det(profile: ErrorProfile, path) -> None:
    """Gnuplot-friendly DET table: threshold, p_miss, p_fa."""
    lines = ["# threshold p_miss p_fa"]
    for t, m, f in zip(profile.thresholds, profile.p_miss, profile.p_fa):
        lines.append(f"{t:.12g} {m:.12g} {f:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")

