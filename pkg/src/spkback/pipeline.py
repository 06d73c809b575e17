"""Declarative experiment runner: data -> filter -> conditioning chain ->
projection -> PLDA -> scoring -> calibration -> report, plus multi-system
fusion. Every stage writes its artefact to the run directory and records a
digest in ``manifest.json``."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import scipy

from . import __version__
from .calfuse import (
    CalibrationStrategy,
    calibrate,
    calibration_set,
    fuse_apply,
    fuse_fit,
    make_unlabeled_trials,
    pav_apply,
    pav_fit,
    write_calibration,
    write_fusion,
)
from .cluster import ClusterAssignment, cluster_total, fit_gender
from .corpus import (
    Corpus,
    Domain,
    ScoreSet,
    SynthConfig,
    TrialSet,
    filter_speakers,
    generate_corpus,
    make_eval_trials,
    random_direction,
    read_corpus,
    read_scores,
    read_trials,
    write_corpus,
    write_scores,
    write_trials,
)
from .errors import ConfigError, DataError, SpkbackError
from .lda import Projection, fit_lda, project, write_projection
from .metrics import CostParams, SystemScores, error_profile, report, write_det, write_report
from .plda import fit_plda, score_trialset, write_plda
from .preprocess import CenteringSource, center, center_domains, compute_mean, length_normalize
from .svda import fit_svda, fit_svda_lda_cascade

log = logging.getLogger(__name__)

STAGES = ("center", "length_normalize", "project", "trial_mean_subtract")
PROJECTIONS = ("none", "lda", "svda", "svda_lda_cascade")
DATA_SELECTORS = (
    "labeled",
    "labeled+clustered",
    "clustered",
    "clustered_minor",
    "clustered_major",
    "clustered_all",
    "labeled+clustered_all",
)
MATCHED = {"dev": Domain.IN_DOMAIN_MINOR, "eval": Domain.IN_DOMAIN_MAJOR}
UNLABELED = (Domain.IN_DOMAIN_MINOR, Domain.IN_DOMAIN_MAJOR)

DEFAULTS: dict[str, Any] = {
    "name": "experiment",
    "target": "dev",
    "filter_min_segments": 0,
    "chain": ["center", "length_normalize", "project", "length_normalize", "trial_mean_subtract"],
    "centering": "auto",
    "centering_labeled": "shared",
    "projection": {"kind": "lda", "out_dim": None, "mid_dim": None, "data": "labeled",
                   "unlabeled": ["in_domain_minor", "in_domain_major"], "C_reg": 1.0, "ridge": 1e-6},
    "plda": {"data": "labeled", "n_iters": 10, "floor": 1e-6},
    "clustering": {"k_minor": 75, "k_major": 300, "n_restarts": 10},
    "calibration": {"strategy": "dev_plus_unlabeled", "n_target": 1000, "n_nontarget": 4000},
    "metrics": {"operating_points": [[0.01, 1.0, 1.0], [0.005, 1.0, 1.0]]},
    "seed": 0,
}


# ---------------------------------------------------------------- config


def deep_merge(base: Mapping, delta: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in delta.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path, seed: int | None = None) -> dict:
    """Read a JSON config, resolving ``extends`` chains and relative paths.

    ``seed`` overrides the global seed (and hence the synthetic data seed).
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if "extends" in raw:
        parent = load_config(path.parent / raw.pop("extends"))
        parent.pop("name", None)
        raw = deep_merge(parent, raw)
    raw = _resolve_paths(raw, path.parent)
    if seed is not None:
        raw["seed"] = int(seed)
    return raw


def _resolve_paths(cfg: dict, base: Path) -> dict:
    cfg = copy.deepcopy(cfg)
    data = cfg.get("data")
    if isinstance(data, dict):
        if isinstance(data.get("synth"), str):
            spec = json.loads((base / data["synth"]).read_text())
            data["synth"] = spec
        for key in ("corpus",):
            if isinstance(data.get(key), str):
                data[key] = str((base / data[key]).resolve())
        if isinstance(data.get("trials"), dict):
            data["trials"] = {k: str((base / v).resolve()) for k, v in data["trials"].items()}
    if isinstance(cfg.get("members"), list):
        cfg["members"] = [
            m if isinstance(m, dict) else load_config(base / m) for m in cfg["members"]
        ]
    return cfg


def config_hash(cfg: Mapping) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class ExperimentConfig:
    name: str
    data: dict
    target: str
    filter_min_segments: int
    chain: list[str]
    centering: str
    centering_labeled: str
    projection: dict
    plda: dict
    clustering: dict
    calibration: dict
    metrics: dict
    seed: int
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> ExperimentConfig:
        unknown = set(d) - set(DEFAULTS) - {"data", "extends", "description", "out"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "data" not in d:
            raise ConfigError("config needs a 'data' section")
        full = deep_merge(DEFAULTS, {k: v for k, v in d.items() if k not in ("description", "out")})
        cfg = cls(**{k: full[k] for k in DEFAULTS}, data=full["data"], raw=full)
        cfg.validate()
        return cfg

    def validate(self):
        if self.target not in MATCHED:
            raise ConfigError(f"target must be 'dev' or 'eval', got {self.target!r}")
        if not self.chain:
            raise ConfigError("stage chain is empty")
        bad = [s for s in self.chain if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; allowed: {STAGES}")
        if "trial_mean_subtract" in self.chain and self.chain[-1] != "trial_mean_subtract":
            raise ConfigError("trial_mean_subtract happens at scoring time and must be the last stage")
        if self.chain.count("project") > 1:
            raise ConfigError("at most one projection stage")
        p = self.projection
        if p["kind"] not in PROJECTIONS:
            raise ConfigError(f"projection kind must be one of {PROJECTIONS}")
        if ("project" in self.chain) != (p["kind"] != "none"):
            raise ConfigError("chain has 'project' iff projection.kind is not 'none'")
        if p["kind"] != "none":
            if not isinstance(p.get("out_dim"), int) or p["out_dim"] < 1:
                raise ConfigError("projection.out_dim must be a positive integer")
        if p["kind"] == "svda_lda_cascade":
            if not isinstance(p.get("mid_dim"), int) or p["mid_dim"] < p["out_dim"]:
                raise ConfigError("cascade needs integer mid_dim >= out_dim")
        for sel in (p["data"], self.plda["data"]):
            if sel not in DATA_SELECTORS:
                raise ConfigError(f"data selector {sel!r} not in {DATA_SELECTORS}")
        if self.centering != "auto":
            try:
                CenteringSource(self.centering)
            except ValueError:
                raise ConfigError(f"unknown centering source {self.centering!r}") from None
        if self.centering_labeled not in ("shared", "own"):
            raise ConfigError("centering_labeled must be 'shared' or 'own'")
        try:
            CalibrationStrategy(self.calibration["strategy"])
        except ValueError:
            raise ConfigError(f"unknown calibration strategy {self.calibration['strategy']!r}") from None
        for key in ("k_minor", "k_major"):
            if int(self.clustering[key]) < 1:
                raise ConfigError(f"clustering.{key} must be >= 1")
        d = self.data
        if "synth" not in d and "corpus" not in d:
            raise ConfigError("data needs 'synth' or 'corpus'")
        CostParams(tuple(tuple(x) for x in self.metrics["operating_points"]))

    @property
    def centering_source(self) -> CenteringSource:
        if self.centering == "auto":
            return CenteringSource.MINOR_ONLY if self.target == "dev" else CenteringSource.MAJOR_ONLY
        return CenteringSource(self.centering)

    @property
    def cost_params(self) -> CostParams:
        return CostParams(tuple(tuple(x) for x in self.metrics["operating_points"]))


# ------------------------------------------------------------------ data


def synth_config(spec: Mapping, seed: int, front_end: int = 0) -> SynthConfig:
    """Build a :class:`SynthConfig` from a compact JSON spec.

    Shifts may be given as explicit vectors (``domain_shifts``) or as norms
    (``domain_shift_norms``) with seeded random directions; ``shared_shifts``
    lets a domain reuse another's shift (dev trials share the minor
    language, eval the major one).
    """
    d = int(spec["dimension"])
    shifts = {k: list(v) for k, v in spec.get("domain_shifts", {}).items()}
    for dom, norm in spec.get("domain_shift_norms", {}).items():
        shifts[dom] = random_direction(d, float(norm), seed, list(Domain).index(Domain(dom))).tolist()
    for dom, src in spec.get("shared_shifts", {}).items():
        if src in shifts:
            shifts[dom] = shifts[src]
    gender = spec.get("gender_shift")
    if gender is None and spec.get("gender_shift_norm"):
        gender = random_direction(d, float(spec["gender_shift_norm"]), seed, 99).tolist()
    return SynthConfig(
        dimension=d,
        n_speakers=spec["n_speakers"],
        segments_per_speaker=tuple(spec.get("segments_per_speaker", (4, 10))),
        between_std=float(spec.get("between_std", 3.0)),
        within_std=float(spec.get("within_std", 1.0)),
        domain_shifts=shifts,
        gender_shift=gender,
        rng_seed=int(seed),
        front_end=int(front_end),
    )


@dataclass
class DataBundle:
    corpus: Corpus
    trials: dict[str, TrialSet]


def reference_assignment(corpus: Corpus, domain: Domain, k_total: int, seed: int, n_restarts: int = 10):
    """Cluster one unlabeled set after in-domain centering and length
    normalization, with a gender classifier trained on the labeled data."""
    X = center(corpus, compute_mean(corpus, CenteringSource.MINOR_PLUS_MAJOR))
    X = length_normalize(X)
    labeled = X.in_domains([Domain.OUT_OF_DOMAIN])
    gender = fit_gender(labeled)
    sub = X.in_domains([domain])
    prefix = "min:" if domain is Domain.IN_DOMAIN_MINOR else "maj:"
    return cluster_total(sub, gender, k_total, seed=seed, n_restarts=n_restarts, prefix=prefix)


def hide_unlabeled(corpus: Corpus) -> Corpus:
    """Strip speaker labels from the unlabeled in-domain sets."""
    return Corpus(
        corpus.dimension,
        [replace(s, speaker_id=None) if s.domain in UNLABELED else s for s in corpus.segments],
    )


def prepare_data(cfg: ExperimentConfig) -> DataBundle:
    d = cfg.data
    if "synth" in d:
        spec = d["synth"]
        fe = int(d.get("front_end", 0))
        corpus = generate_corpus(synth_config(spec, cfg.seed, fe))
        n_enroll = int(d.get("n_enroll", 1))
        trials = {
            name: make_eval_trials(corpus, dom, n_enroll)
            for name, dom in (("dev", Domain.DEV), ("eval", Domain.EVAL))
            if any(s.domain is dom for s in corpus)
        }
        ref_fe = int(d.get("reference_front_end", 0))
        ref = corpus if ref_fe == fe else generate_corpus(synth_config(spec, cfg.seed, ref_fe))
        corpus = hide_unlabeled(corpus)
        ref = hide_unlabeled(ref)
    else:
        corpus = read_corpus(d["corpus"])
        trials = {k: read_trials(v) for k, v in d.get("trials", {}).items()}
        ref = corpus
    if cfg.target not in trials:
        raise DataError(f"no {cfg.target} trials available")
    if "unlabeled" not in trials:
        dom = MATCHED[cfg.target]
        k = cfg.clustering["k_minor" if dom is Domain.IN_DOMAIN_MINOR else "k_major"]
        assign = reference_assignment(ref, dom, int(k), cfg.seed, int(cfg.clustering["n_restarts"]))
        parts = {s.segment_id: s.partition_tag for s in ref.in_domains([dom])}
        trials["unlabeled"] = make_unlabeled_trials(
            assign, int(cfg.calibration["n_target"]), int(cfg.calibration["n_nontarget"]), cfg.seed, parts
        )
    return DataBundle(corpus, trials)


# --------------------------------------------------------------- running


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Recorder:
    def __init__(self, out: Path):
        self.out = out
        self.stages: list[dict] = []
        self.timings: dict[str, float] = {}
        self._t = time.perf_counter()

    def stage(self, name: str, *files: str, **info):
        now = time.perf_counter()
        self.timings[f"{len(self.stages):02d}_{name}"] = round(now - self._t, 6)
        self._t = now
        outputs = {f: _digest(self.out / f) for f in files}
        self.stages.append({"stage": name, "outputs": outputs, **info})


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict
    scores: dict[str, ScoreSet]
    calibrated: ScoreSet
    report_text: str
    report_doc: dict


def _versions() -> dict:
    return {"spkback": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _select(sel: str, corpus: Corpus, target: str, clusters: dict[Domain, ClusterAssignment]) -> Corpus:
    labeled = corpus.in_domains([Domain.OUT_OF_DOMAIN]).labeled()

    def clustered(domains):
        parts = [clusters[dm].apply(corpus.in_domains([dm])) for dm in domains]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out

    matched = [MATCHED[target]]
    return {
        "labeled": lambda: labeled,
        "labeled+clustered": lambda: labeled + clustered(matched),
        "labeled+clustered_all": lambda: labeled + clustered(UNLABELED),
        "clustered": lambda: clustered(matched),
        "clustered_minor": lambda: clustered([Domain.IN_DOMAIN_MINOR]),
        "clustered_major": lambda: clustered([Domain.IN_DOMAIN_MAJOR]),
        "clustered_all": lambda: clustered(UNLABELED),
    }[sel]()


def _needed_clusters(sel: str, target: str) -> list[Domain]:
    if sel == "labeled":
        return []
    if sel in ("labeled+clustered", "clustered"):
        return [MATCHED[target]]
    if sel == "clustered_minor":
        return [Domain.IN_DOMAIN_MINOR]
    if sel == "clustered_major":
        return [Domain.IN_DOMAIN_MAJOR]
    return list(UNLABELED)


def run_experiment(config: Mapping, out_dir=None) -> RunResult:
    """Execute one sub-system end to end and persist every artefact."""
    cfg = ExperimentConfig.from_dict(config)
    out = Path(out_dir or config.get("out") or Path("runs") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    rec = _Recorder(out)
    current_stage = "data"
    try:
        data = prepare_data(cfg)
        corpus = data.corpus
        write_corpus(corpus, out / "corpus.tsv")
        trial_files = []
        for name, ts in sorted(data.trials.items()):
            write_trials(ts, out / f"trials_{name}.tsv")
            trial_files.append(f"trials_{name}.tsv")
        rec.stage("data", "corpus.tsv", *trial_files, n_segments=len(corpus))

        if cfg.filter_min_segments > 1:
            current_stage = "filter"
            labeled_part = corpus.in_domains([Domain.OUT_OF_DOMAIN])
            kept = filter_speakers(labeled_part, cfg.filter_min_segments)
            keep_ids = set(kept.ids)
            corpus = corpus.select(lambda s: s.domain is not Domain.OUT_OF_DOMAIN or s.segment_id in keep_ids)
            write_corpus(corpus, out / "corpus_filtered.tsv")
            rec.stage("filter", "corpus_filtered.tsv", kept_segments=len(kept))

        clusters: dict[Domain, ClusterAssignment] = {}
        need = set(_needed_clusters(cfg.projection["data"], cfg.target)) if "project" in cfg.chain else set()
        need |= set(_needed_clusters(cfg.plda["data"], cfg.target))

        def ensure_clusters(corp: Corpus):
            if not need - set(clusters):
                return
            gender = fit_gender(corp.in_domains([Domain.OUT_OF_DOMAIN]))
            for dom in sorted(need - set(clusters), key=lambda d: d.value):
                k = cfg.clustering["k_minor" if dom is Domain.IN_DOMAIN_MINOR else "k_major"]
                prefix = "min:" if dom is Domain.IN_DOMAIN_MINOR else "maj:"
                clusters[dom] = cluster_total(
                    corp.in_domains([dom]), gender, int(k), seed=cfg.seed + 17,
                    n_restarts=int(cfg.clustering["n_restarts"]), prefix=prefix,
                )
                fname = f"clusters_{dom.value}.tsv"
                write_corpus(clusters[dom].apply(corp.in_domains([dom])), out / fname)
                rec.stage("cluster", fname, domain=dom.value, n_clusters=clusters[dom].n_clusters)

        trial_mean = False
        applied = []
        for idx, stage in enumerate(cfg.chain):
            current_stage = stage
            if stage == "center":
                stats = compute_mean(corpus, cfg.centering_source)
                if cfg.centering_labeled == "own":
                    corpus = center_domains(corpus, stats, [Domain.OUT_OF_DOMAIN])
                else:
                    corpus = center(corpus, stats)
                fname = f"stage{idx}_center.tsv"
                write_corpus(corpus, out / fname)
                rec.stage(stage, fname, source=stats.source.value, labeled=cfg.centering_labeled)
            elif stage == "length_normalize":
                corpus = length_normalize(corpus)
                fname = f"stage{idx}_lnorm.tsv"
                write_corpus(corpus, out / fname)
                rec.stage(stage, fname)
            elif stage == "project":
                ensure_clusters(corpus)
                proj = _fit_projection(cfg, corpus, clusters)
                write_projection(proj, out / "projection.txt")
                corpus = project(proj, corpus)
                fname = f"stage{idx}_project.tsv"
                write_corpus(corpus, out / fname)
                rec.stage(stage, "projection.txt", fname, kind=cfg.projection["kind"],
                          shape=list(proj.matrix.shape))
            elif stage == "trial_mean_subtract":
                trial_mean = True
                rec.stage(stage)
            applied.append(stage)

        current_stage = "fit_plda"
        ensure_clusters(corpus)
        plda_data = _select(cfg.plda["data"], corpus, cfg.target, clusters)
        model = fit_plda(plda_data, int(cfg.plda["n_iters"]), float(cfg.plda["floor"]))
        write_plda(model, out / "plda.txt")
        rec.stage("fit_plda", "plda.txt", n_segments=len(plda_data))

        current_stage = "score"
        scores = {name: score_trialset(model, corpus, ts, trial_mean) for name, ts in sorted(data.trials.items())}
        for name, ss in scores.items():
            write_scores(ss, out / f"scores_{name}.tsv")
        rec.stage("score", *[f"scores_{n}.tsv" for n in scores])

        current_stage = "calibrate"
        strategy = CalibrationStrategy(cfg.calibration["strategy"])
        cal_scores, cal_keys = calibration_set(strategy, scores.get("dev"), scores.get("unlabeled"))
        cmap = pav_fit(cal_scores, cal_keys)
        write_calibration(cmap, out / "calibration.txt")
        calibrated = calibrate(cmap, scores[cfg.target])
        write_scores(calibrated, out / f"scores_{cfg.target}_calibrated.tsv")
        rec.stage("calibrate", "calibration.txt", f"scores_{cfg.target}_calibrated.tsv", strategy=strategy.value)

        current_stage = "report"
        text, doc = report([SystemScores(cfg.name, scores[cfg.target], calibrated)], cfg.cost_params)
        write_report(text, doc, out)
        write_det(error_profile(scores[cfg.target].scores, scores[cfg.target].trials.keys()), out / "det.txt")
        rec.stage("report", "report.txt", "report.json", "det.txt")
    except SpkbackError as exc:
        raise type(exc)(f"stage {current_stage}: {exc}") from exc

    manifest = {
        "name": cfg.name,
        "config_hash": config_hash(cfg.raw),
        "config": cfg.raw,
        "applied_chain": applied,
        "stages": rec.stages,
        "versions": _versions(),
        "timings": rec.timings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunResult(out, manifest, scores, calibrated, text, doc)


def _fit_projection(cfg: ExperimentConfig, corpus: Corpus, clusters) -> Projection:
    p = cfg.projection
    train = _select(p["data"], corpus, cfg.target, clusters)
    kind = p["kind"]
    ridge = float(p.get("ridge", 1e-6))
    if kind == "lda":
        return fit_lda(train, int(p["out_dim"]), ridge)
    unlabeled = corpus.in_domains(p.get("unlabeled", []))
    unlabeled = unlabeled if len(unlabeled) else None
    C = float(p.get("C_reg", 1.0))
    if kind == "svda":
        return fit_svda(train, unlabeled, int(p["out_dim"]), C, ridge)
    return fit_svda_lda_cascade(train, unlabeled, int(p["mid_dim"]), int(p["out_dim"]), C, ridge)


# ----------------------------------------------------------------- fusion

FUSION_DEFAULTS = {
    "name": "fusion",
    "calibration": {"strategy": "dev_plus_unlabeled"},
    "fusion": {"l2": 1e-6, "prior": 0.5, "recalibrate": False},
    "metrics": DEFAULTS["metrics"],
    "seed": 0,
}


def run_fusion(config: Mapping, out_dir=None) -> tuple[str, dict]:
    """Run (or reuse) every member, calibrate each with the fusion's
    strategy, fit logistic-regression fusion on the calibration trials and
    report members plus the fused system on the target trials."""
    cfg = deep_merge(FUSION_DEFAULTS, {k: v for k, v in config.items() if k != "members"})
    members = config.get("members")
    if not members:
        raise ConfigError("fusion config needs a non-empty 'members' list")
    strategy = CalibrationStrategy(cfg["calibration"]["strategy"])
    out = Path(out_dir or cfg.get("out") or Path("runs") / cfg["name"])
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg["seed"])
    results = []
    for m in members:
        m = dict(m)
        m["seed"] = seed
        results.append(_member_scores(m, out / "members" / m.get("name", "member")))
    targets = {r["target"] for r in results}
    if len(targets) != 1:
        raise ConfigError(f"members score different targets: {sorted(targets)}")
    target = targets.pop()
    missing = [r["name"] for r in results if target not in r["scores"]]
    if missing:
        raise DataError(f"missing member scores for {target}: {missing}")

    entries, cal_cols, tgt_cols = [], [], []
    cal_keys = None
    tgt_trials = results[0]["scores"][target].trials
    for r in results:
        sc = r["scores"]
        if sc[target].trials != tgt_trials:
            raise DataError(f"member {r['name']} scored a different {target} trial list")
        s, k = calibration_set(strategy, sc.get("dev"), sc.get("unlabeled"))
        if cal_keys is not None and not np.array_equal(k, cal_keys):
            raise DataError(f"member {r['name']} has different calibration trials")
        cal_keys = k
        cmap = pav_fit(s, k)
        cal = calibrate(cmap, sc[target])
        entries.append(SystemScores(r["name"], sc[target], cal))
        cal_cols.append(pav_apply(cmap, s))
        tgt_cols.append(cal.scores)
    f = cfg["fusion"]
    model = fuse_fit(np.column_stack(cal_cols), cal_keys, float(f["l2"]), float(f["prior"]))
    fused = fuse_apply(model, np.column_stack(tgt_cols))
    fused_set = ScoreSet(tgt_trials, fused, calibrated=True)
    if f.get("recalibrate"):
        cal_fused = fuse_apply(model, np.column_stack(cal_cols))
        fused_set = calibrate(pav_fit(cal_fused, cal_keys), ScoreSet(tgt_trials, fused))
    write_fusion(model, out / "fusion.txt", [r["name"] for r in results])
    write_scores(ScoreSet(tgt_trials, fused, calibrated=True), out / f"scores_{target}_fused.tsv")
    entries.append(SystemScores(cfg["name"], ScoreSet(tgt_trials, fused), fused_set))
    params = CostParams(tuple(tuple(x) for x in cfg["metrics"]["operating_points"]))
    text, doc = report(entries, params)
    doc["fusion"] = {"weights": model.weights.tolist(), "bias": model.bias, "strategy": strategy.value}
    write_report(text, doc, out)
    return text, doc


def _member_scores(config: Mapping, out: Path) -> dict:
    cfg = ExperimentConfig.from_dict(config)
    manifest = out / "manifest.json"
    h = config_hash(cfg.raw)
    if manifest.exists():
        prev = json.loads(manifest.read_text())
        names = [f"scores_{n}.tsv" for n in ("dev", "eval", "unlabeled")]
        if prev.get("config_hash") == h and any((out / n).exists() for n in names):
            scores = {n[7:-4]: read_scores(out / n) for n in names if (out / n).exists()}
            return {"name": cfg.name, "target": cfg.target, "scores": scores}
    res = run_experiment(config, out)
    return {"name": cfg.name, "target": cfg.target, "scores": res.scores}


def is_fusion_config(cfg: Mapping) -> bool:
    return "members" in cfg

