#!/usr/bin/env python3
"""Directional checks on the synthetic mismatch scenario.

Each check runs a pair (or group) of pipeline configurations over several
seeds and reports the per-seed metric values plus a win count. The
acceptance suite imports the functions from here; run the file directly for
a printed table:

    python scripts/directional.py --seeds 1 2 3 4 5 --out runs/directional
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from spkback.pipeline import deep_merge, load_config, run_experiment, run_fusion

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SCENARIO = CONFIGS / "synth" / "mismatch.json"
# dev/eval speaker count override (--eval-speakers); None keeps the scenario file
EVAL_SPEAKERS: int | None = None


def scenario_data() -> dict:
    synth = json.loads(SCENARIO.read_text())
    if EVAL_SPEAKERS:
        synth["n_speakers"].update(dev=EVAL_SPEAKERS, eval=EVAL_SPEAKERS)
    return {"synth": synth}


def _preset(preset: str, seed: int, **delta) -> dict:
    cfg = load_config(CONFIGS / f"{preset}.json", seed=seed)
    n = cfg["data"]["synth"] = scenario_data()["synth"]
    cfg["clustering"]["k_minor"] = n["n_speakers"]["in_domain_minor"]
    cfg["clustering"]["k_major"] = n["n_speakers"]["in_domain_major"]
    return deep_merge(cfg, delta)


@dataclass
class Comparison:
    """Per-seed values of a metric for a candidate and a baseline; lower wins."""

    name: str
    metric: str
    candidate: list[float] = field(default_factory=list)
    baseline: list[float] = field(default_factory=list)
    margin: float = 0.0

    @property
    def wins(self) -> int:
        return sum(c <= b + self.margin for c, b in zip(self.candidate, self.baseline))

    def table(self) -> str:
        rows = [f"{self.name} ({self.metric}, candidate vs baseline)"]
        for i, (c, b) in enumerate(zip(self.candidate, self.baseline)):
            mark = "win" if c <= b + self.margin else "loss"
            rows.append(f"  seed#{i}: {c:.4f} vs {b:.4f}  {mark}")
        rows.append(f"  {self.wins}/{len(self.candidate)} seeds")
        return "\n".join(rows)


def _metric(result, block: str, key: str) -> float:
    (row,) = result.report_doc["systems"]
    return float(row[block][key])


def _run(cfg: dict, out: Path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_experiment(cfg, out)


def centering(seeds, out: Path) -> Comparison:
    """In-domain mean subtraction before PLDA vs none (dev trials, EER)."""
    cmp = Comparison("in-domain centering vs none", "unequalized EER")
    for s in seeds:
        base = {"target": "dev", "plda": {"data": "labeled"}, "projection": {"data": "labeled"},
                "filter_min_segments": 0}
        on = _preset("backend_crss1", s, **base, chain=["project", "center"], name="centered")
        off = _preset("backend_crss1", s, **base, chain=["project"], name="uncentered")
        cmp.candidate.append(_metric(_run(on, out / f"center_on_{s}"), "unequalized", "eer"))
        cmp.baseline.append(_metric(_run(off, out / f"center_off_{s}"), "unequalized", "eer"))
    return cmp


def svda_vs_lda(seeds, out: Path) -> Comparison:
    """Subsystem 6 (SVDA with unlabeled rest class, then LDA) vs subsystem 5."""
    cmp = Comparison("SVDA+LDA vs LDA only", "equalized min-Cprimary")
    for s in seeds:
        six = _preset("subsystem6", s, target="dev")
        five = _preset("subsystem5", s, target="dev")
        cmp.candidate.append(_metric(_run(six, out / f"svda_{s}"), "equalized", "min_cprimary"))
        cmp.baseline.append(_metric(_run(five, out / f"lda_{s}"), "equalized", "min_cprimary"))
    return cmp


def matched_plda(seeds, out: Path) -> Comparison:
    """PLDA on clustered matched-domain data vs the same plus the mismatched
    unlabeled set (eval trials, EER)."""
    cmp = Comparison("matched-only PLDA vs pooled PLDA", "unequalized EER")
    for s in seeds:
        base = {"target": "eval", "projection": {"data": "labeled"}, "filter_min_segments": 0}
        matched = _preset("backend_crss1", s, **base, plda={"data": "clustered_major"}, name="matched")
        pooled = _preset("backend_crss1", s, **base, plda={"data": "clustered_all"}, name="pooled")
        cmp.candidate.append(_metric(_run(matched, out / f"plda_matched_{s}"), "unequalized", "eer"))
        cmp.baseline.append(_metric(_run(pooled, out / f"plda_pooled_{s}"), "unequalized", "eer"))
    return cmp


def fusion(seeds, out: Path, preset: str = "primary") -> Comparison:
    """Fused EER vs the best member EER, with a 0.5 point allowance."""
    cmp = Comparison(f"{preset} fusion vs best member", "unequalized EER", margin=0.005)
    raw = json.loads((CONFIGS / f"{preset}.json").read_text())
    for s in seeds:
        members = [_preset(Path(m).stem, s) for m in raw["members"]]
        cfg = {**raw, "members": members, "seed": s}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, doc = run_fusion(cfg, out / f"fusion_{preset}_{s}")
        rows = {r["system"]: r["unequalized"]["eer"] for r in doc["systems"]}
        fused = rows.pop(raw["name"])
        cmp.candidate.append(fused)
        cmp.baseline.append(min(rows.values()))
    return cmp


def calibration_strategies(seed: int, out: Path) -> dict[str, dict]:
    """Unequalized and equalized metrics of subsystem 5 under each strategy."""
    res = {}
    for strategy in ("dev_only", "unlabeled_only", "dev_plus_unlabeled"):
        cfg = _preset("subsystem5", seed, calibration={"strategy": strategy})
        r = _run(cfg, out / f"cal_{strategy}_{seed}")
        res[strategy] = r.report_doc["systems"][0]
    return res


CHECKS = {"centering": centering, "svda": svda_vs_lda, "plda": matched_plda, "fusion": fusion}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--only", choices=sorted(CHECKS), nargs="*")
    ap.add_argument("--out", type=Path)
    ap.add_argument("--eval-speakers", type=int, help="dev and eval speaker count (less metric noise)")
    args = ap.parse_args(argv)
    global EVAL_SPEAKERS
    EVAL_SPEAKERS = args.eval_speakers
    out = args.out or Path(tempfile.mkdtemp(prefix="directional-"))
    for name in args.only or CHECKS:
        print(CHECKS[name](args.seeds, out).table(), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
