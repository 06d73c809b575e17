import json
import warnings
from pathlib import Path

import numpy as np
import pytest

from spkback.corpus import read_corpus, read_scores, read_trials
from spkback.errors import ConfigError, DataError, SpkbackError
from spkback.lda import read_projection
from spkback.metrics import compute_eer, cprimary
from spkback.pipeline import (
    ExperimentConfig,
    config_hash,
    deep_merge,
    load_config,
    run_experiment,
    run_fusion,
)
from spkback.plda import read_plda

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def quiet(fn, *a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*a)


@pytest.fixture(scope="module")
def s5_run(tmp_path_factory):
    cfg = load_config(CONFIGS / "subsystem5.json", seed=1)
    return cfg, quiet(run_experiment, cfg, tmp_path_factory.mktemp("s5"))


def test_every_preset_validates():
    for path in sorted(CONFIGS.glob("*.json")):
        if path.name == "base.json":  # shared defaults, no projection size
            continue
        cfg = load_config(path, seed=0)
        if "members" in cfg:
            assert all(ExperimentConfig.from_dict(m) for m in cfg["members"])
        else:
            ExperimentConfig.from_dict(cfg)


def test_preset_deltas():
    five = load_config(CONFIGS / "subsystem5.json")
    six = load_config(CONFIGS / "subsystem6.json")
    delta = {k for k in set(five) | set(six) if five.get(k) != six.get(k)}
    assert delta == {"name", "description", "projection"}
    assert {k for k in five["projection"] if five["projection"][k] != six["projection"].get(k)} == {"kind"}
    assert six["projection"]["kind"] == "svda_lda_cascade"

    primary = json.loads((CONFIGS / "primary.json").read_text())
    c1 = json.loads((CONFIGS / "contrastive1.json").read_text())
    c2 = json.loads((CONFIGS / "contrastive2.json").read_text())
    assert {k for k in primary if primary[k] != c1.get(k)} == {"name", "calibration"}
    assert c1["calibration"]["strategy"] == "dev_only"
    assert len(primary["members"]) == 7 and len(c2["members"]) == 11
    assert c2["calibration"] == primary["calibration"]


def test_large_dimension_preset_accepted():
    cfg = deep_merge(load_config(CONFIGS / "subsystem6.json"), {"projection": {"mid_dim": 500, "out_dim": 400}})
    assert ExperimentConfig.from_dict(cfg).projection["mid_dim"] == 500


@pytest.mark.parametrize(
    "delta",
    [
        {"chain": []},
        {"chain": ["nonsense"]},
        {"projection": {"kind": "lda", "out_dim": 0}},
        {"projection": {"kind": "svda_lda_cascade", "mid_dim": 2}},
        {"target": "test"},
        {"calibration": {"strategy": "magic"}},
        {"bogus": 1},
    ],
)
def test_invalid_configs(delta):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(deep_merge(load_config(CONFIGS / "subsystem5.json"), delta))


def test_config_hash_semantic():
    a = {"x": 1, "y": {"z": [1, 2]}}
    b = json.loads(json.dumps(a, indent=7))
    assert config_hash(a) == config_hash(b) == config_hash({"y": {"z": [1, 2]}, "x": 1})
    assert config_hash(a) != config_hash({"x": 2, "y": {"z": [1, 2]}})


def test_run_writes_reloadable_artifacts(s5_run):
    _, res = s5_run
    out = res.out_dir
    read_corpus(out / "corpus.tsv")
    read_trials(out / "trials_dev.tsv")
    read_projection(out / "projection.txt")
    read_plda(out / "plda.txt")
    assert read_scores(out / "scores_dev_calibrated.tsv").calibrated
    back = read_scores(out / "scores_dev.tsv")
    assert back.trials == res.scores["dev"].trials
    assert np.allclose(back.scores, res.scores["dev"].scores, rtol=1e-11, atol=0)
    doc = json.loads((out / "report.json").read_text())
    assert doc == json.loads(json.dumps(res.report_doc))
    names = [s["stage"] for s in res.manifest["stages"]]
    assert names[0] == "data" and names[-3:] == ["score", "calibrate", "report"]


def test_rerun_is_byte_identical(s5_run, tmp_path):
    cfg, first = s5_run
    second = quiet(run_experiment, cfg, tmp_path)
    for f in sorted(first.out_dir.iterdir()):
        if f.name == "manifest.json":
            a, b = json.loads(f.read_text()), json.loads((tmp_path / f.name).read_text())
            a.pop("timings"), b.pop("timings")
            assert a == b
        else:
            assert f.read_bytes() == (tmp_path / f.name).read_bytes(), f.name


def test_stage_errors_name_the_stage(tmp_path):
    cfg = load_config(CONFIGS / "subsystem5.json", seed=1)
    cfg = deep_merge(cfg, {"projection": {"out_dim": 60, "mid_dim": 60}})
    with pytest.raises(SpkbackError, match="stage project"):
        quiet(run_experiment, cfg, tmp_path)


def test_single_member_fusion_keeps_ranking(s5_run, tmp_path):
    # fusion sees calibrated member scores; one positive weight keeps their order
    cfg, res = s5_run
    text, doc = quiet(run_fusion, {"name": "solo", "seed": 1, "members": [cfg]}, tmp_path)
    _, fused = doc["systems"]
    cal, keys = res.calibrated.scores, res.calibrated.trials.keys()
    assert fused["unequalized"]["eer"] == pytest.approx(compute_eer(cal, keys), abs=1e-12)
    assert fused["unequalized"]["min_cprimary"] == pytest.approx(cprimary(cal, keys), abs=1e-12)
    assert doc["fusion"]["weights"][0] > 0
    assert "solo" in text


def test_fusion_needs_members(tmp_path):
    with pytest.raises(ConfigError):
        run_fusion({"name": "x", "members": []}, tmp_path)


def test_fusion_rejects_mixed_targets(tmp_path):
    a = load_config(CONFIGS / "subsystem5.json", seed=1)
    b = deep_merge(a, {"target": "eval", "name": "other"})
    with pytest.raises(ConfigError, match="different targets"):
        quiet(run_fusion, {"name": "mix", "members": [a, b]}, tmp_path)


def test_missing_corpus_file(tmp_path):
    cfg = deep_merge(load_config(CONFIGS / "subsystem5.json"), {})
    cfg["data"] = {"corpus": str(tmp_path / "absent.tsv")}
    with pytest.raises((DataError, FileNotFoundError)):
        run_experiment(cfg, tmp_path / "o")
