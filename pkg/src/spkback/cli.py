"""Command-line entry point.

``spkback run --config configs/subsystem5.json --seed 1 --out runs/s5`` runs
a whole preset (or a fusion preset when the config lists ``members``). The
other subcommands expose one stage each and work on the text formats written
by the library, so a pipeline can also be driven step by step.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .calfuse import (
    calibrate,
    fuse_apply,
    fuse_fit,
    pav_fit,
    read_calibration,
    read_fusion,
    write_calibration,
    write_fusion,
)
from .cluster import cluster_total, fit_gender
from .corpus import (
    Domain,
    ScoreSet,
    generate_corpus,
    make_eval_trials,
    read_corpus,
    read_scores,
    read_trials,
    write_corpus,
    write_scores,
    write_trials,
)
from .errors import ConfigError, DataError, SpkbackError
from .lda import fit_lda, project, write_projection
from .metrics import CostParams, SystemScores, error_profile, report, write_det, write_report
from .pipeline import is_fusion_config, load_config, run_experiment, run_fusion, synth_config
from .plda import fit_plda, read_plda, score_trialset, write_plda
from .preprocess import CenteringSource, center, compute_mean, length_normalize
from .svda import fit_svda, fit_svda_lda_cascade

log = logging.getLogger("spkback")


def _out(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required")
    return Path(args.out)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def cmd_gen_data(args) -> None:
    cfg = load_config(args.config) if args.config else {}
    spec = cfg.get("data", {}).get("synth", cfg) if "data" in cfg else cfg
    if not spec or "dimension" not in spec:
        raise ConfigError("gen-data needs a synthetic corpus spec (or an experiment config with data.synth)")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    corpus = generate_corpus(synth_config(spec, seed, args.front_end))
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out / "corpus.tsv")
    for name, dom in (("dev", Domain.DEV), ("eval", Domain.EVAL)):
        if any(s.domain is dom for s in corpus):
            write_trials(make_eval_trials(corpus, dom, args.n_enroll), out / f"trials_{name}.tsv")
    print(f"{len(corpus)} segments -> {out}")


def cmd_preprocess(args) -> None:
    corpus = read_corpus(args.corpus)
    for step in args.steps.split(","):
        if step == "center":
            corpus = center(corpus, compute_mean(corpus, CenteringSource(args.centering)))
        elif step == "length_normalize":
            corpus = length_normalize(corpus)
        else:
            raise ConfigError(f"unknown preprocessing step {step!r}")
    write_corpus(corpus, _out(args))


def cmd_fit_projection(args) -> None:
    corpus = read_corpus(args.corpus)
    train = corpus.in_domains([Domain.OUT_OF_DOMAIN]).labeled()
    unlabeled = corpus.in_domains(args.unlabeled) if args.unlabeled else None
    if args.kind == "lda":
        proj = fit_lda(train, args.out_dim, args.ridge)
    elif args.kind == "svda":
        proj = fit_svda(train, unlabeled, args.out_dim, args.C, args.ridge)
    else:
        if args.mid_dim is None:
            raise ConfigError("svda_lda_cascade needs --mid-dim")
        proj = fit_svda_lda_cascade(train, unlabeled, args.mid_dim, args.out_dim, args.C, args.ridge)
    write_projection(proj, _out(args))
    if args.projected:
        write_corpus(project(proj, corpus), args.projected)


def cmd_fit_plda(args) -> None:
    corpus = read_corpus(args.corpus)
    train = corpus.in_domains(args.domains).labeled()
    model = fit_plda(train, args.iters)
    write_plda(model, _out(args))
    print(f"PLDA log-likelihood {model.em_log_likelihoods[0]:.6g} -> {model.em_log_likelihoods[-1]:.6g}")


def cmd_cluster(args) -> None:
    corpus = read_corpus(args.corpus)
    gender = fit_gender(corpus.in_domains([Domain.OUT_OF_DOMAIN]))
    sub = corpus.in_domains([args.domain])
    seed = args.seed if args.seed is not None else 0
    assign = cluster_total(sub, gender, args.k, seed=seed, n_restarts=args.restarts)
    write_corpus(assign.apply(sub), _out(args))
    for w in assign.warnings:
        log.warning(w)
    print(f"{len(sub)} segments in {assign.n_clusters} clusters")


def cmd_score(args) -> None:
    corpus = read_corpus(args.corpus)
    scores = score_trialset(read_plda(args.plda), corpus, read_trials(args.trials), args.trial_mean)
    write_scores(scores, _out(args))


def _pooled(paths) -> tuple[np.ndarray, np.ndarray]:
    sets = [read_scores(p) for p in paths]
    return np.concatenate([s.scores for s in sets]), np.concatenate([s.trials.keys() for s in sets])


def cmd_calibrate(args) -> None:
    if args.map:
        cmap = read_calibration(args.map)
    else:
        if not args.train:
            raise ConfigError("calibrate needs --train score files or an existing --map")
        cmap = pav_fit(*_pooled(args.train))
        if args.map_out:
            write_calibration(cmap, args.map_out)
    write_scores(calibrate(cmap, read_scores(args.scores)), _out(args))


def cmd_fuse(args) -> None:
    if args.model:
        model, _ = read_fusion(args.model)
    else:
        if not args.train:
            raise ConfigError("fuse needs --train score files (one per system) or --model")
        sets = [read_scores(p) for p in args.train]
        keys = sets[0].trials.keys()
        if any(s.trials != sets[0].trials for s in sets[1:]):
            raise DataError("fusion training score files list different trials")
        model = fuse_fit(np.column_stack([s.scores for s in sets]), keys, args.l2, args.prior)
        if args.model_out:
            write_fusion(model, args.model_out, [Path(p).stem for p in args.train])
    sets = [read_scores(p) for p in args.scores]
    if any(s.trials != sets[0].trials for s in sets[1:]):
        raise DataError("score files to fuse list different trials")
    if len(sets) != model.weights.size:
        raise DataError(f"fusion model has {model.weights.size} weights but {len(sets)} score files were given")
    fused = fuse_apply(model, np.column_stack([s.scores for s in sets]))
    write_scores(ScoreSet(sets[0].trials, fused, calibrated=True), _out(args))


def cmd_evaluate(args) -> None:
    raw = read_scores(args.scores)
    cal = read_scores(args.calibrated) if args.calibrated else (raw if raw.calibrated else None)
    params = CostParams()
    if args.config:
        pts = _read_json(args.config).get("metrics", {}).get("operating_points")
        if pts:
            params = CostParams(tuple(tuple(p) for p in pts))
    text, doc = report([SystemScores(args.name or Path(args.scores).stem, raw, cal)], params)
    if args.out:
        write_report(text, doc, args.out)
        write_det(error_profile(raw.scores, raw.trials.keys()), Path(args.out) / "det.txt")
    print(text, end="")


def cmd_run(args) -> None:
    if args.config is None:
        raise ConfigError("run needs --config")
    cfg = load_config(args.config, args.seed)
    if is_fusion_config(cfg):
        text, _ = run_fusion(cfg, args.out)
    else:
        text = run_experiment(cfg, args.out).report_text
    print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="spkback", description="speaker-verification back-end toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="sample a synthetic corpus and trial lists")
    p.add_argument("--front-end", type=int, default=0)
    p.add_argument("--n-enroll", type=int, default=1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("preprocess", parents=[common], help="center and/or length-normalize a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--steps", default="center,length_normalize")
    p.add_argument("--centering", default="minor_plus_major", choices=[s.value for s in CenteringSource])
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit-projection", parents=[common], help="train LDA / SVDA on labeled data")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", default="lda", choices=["lda", "svda", "svda_lda_cascade"])
    p.add_argument("--out-dim", type=int, required=True)
    p.add_argument("--mid-dim", type=int)
    p.add_argument("--unlabeled", nargs="*", default=[], help="domains added to the SVM rest class")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--projected", help="also write the projected corpus here")
    p.set_defaults(func=cmd_fit_projection)

    p = sub.add_parser("fit-plda", parents=[common], help="EM-train a two-covariance PLDA")
    p.add_argument("--corpus", required=True)
    p.add_argument("--domains", nargs="+", default=[Domain.OUT_OF_DOMAIN.value])
    p.add_argument("--iters", type=int, default=10)
    p.set_defaults(func=cmd_fit_plda)

    p = sub.add_parser("cluster", parents=[common], help="gender-split k-means on an unlabeled domain")
    p.add_argument("--corpus", required=True)
    p.add_argument("--domain", default=Domain.IN_DOMAIN_MINOR.value)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--restarts", type=int, default=10)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("score", parents=[common], help="PLDA-score a trial list")
    p.add_argument("--corpus", required=True)
    p.add_argument("--plda", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--trial-mean", action="store_true", help="trial-based mean subtraction")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("calibrate", parents=[common], help="PAV calibration")
    p.add_argument("--scores", required=True)
    p.add_argument("--train", nargs="*", help="keyed score files to fit on (pooled)")
    p.add_argument("--map", help="apply an existing calibration map")
    p.add_argument("--map-out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fuse", parents=[common], help="logistic-regression fusion")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--train", nargs="*", help="keyed score files, one per system, in the same order")
    p.add_argument("--model")
    p.add_argument("--model-out")
    p.add_argument("--l2", type=float, default=1e-6)
    p.add_argument("--prior", type=float, default=0.5)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", parents=[common], help="EER and Cprimary report")
    p.add_argument("--scores", required=True, help="raw (ranking) scores")
    p.add_argument("--calibrated", help="calibrated scores for act-Cprimary")
    p.add_argument("--name")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="full preset or fusion preset")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except SpkbackError as exc:
        print(f"spkback {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"spkback {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
