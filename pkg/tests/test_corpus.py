from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import labeled_corpus
from spkback.corpus import (
    Corpus,
    Domain,
    Gender,
    Key,
    ScoreSet,
    Segment,
    SynthConfig,
    Trial,
    TrialSet,
    filter_speakers,
    generate_corpus,
    make_eval_trials,
    read_corpus,
    read_scores,
    read_trials,
    write_corpus,
    write_scores,
    write_trials,
)
from spkback.errors import ConfigError, DataError, ParseError


def test_same_config_gives_identical_corpus(small_synth):
    a, b = generate_corpus(small_synth), generate_corpus(small_synth)
    assert a == b
    assert np.array_equal(a.matrix, b.matrix)


def test_front_end_changes_noise_not_speakers(small_synth):
    a = generate_corpus(small_synth)
    b = generate_corpus(replace(small_synth, front_end=1))
    assert a.ids == b.ids and a.speaker_ids == b.speaker_ids
    assert not np.allclose(a.matrix, b.matrix)


def test_zero_within_std_collapses_segments(small_synth):
    c = generate_corpus(replace(small_synth, within_std=0.0))
    by_spk = {}
    for s in c:
        by_spk.setdefault(s.speaker_id, []).append(s.vector)
    for vecs in by_spk.values():
        assert all(np.array_equal(v, vecs[0]) for v in vecs)


def test_well_separated_two_speakers():
    cfg = SynthConfig(2, {"out_of_domain": 2}, (3, 6), between_std=10.0, within_std=0.1, rng_seed=7)
    c = generate_corpus(cfg)
    X, spk = c.matrix, np.array(c.speaker_ids)
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    same = spk[:, None] == spk[None]
    off = ~np.eye(len(c), dtype=bool)
    assert D[same & off].max() < D[~same].min()


def test_shifts_and_gender(small_corpus):
    minor = small_corpus.in_domains(["in_domain_minor"])
    assert all(s.partition_tag == s.gender.value for s in minor)
    # gender shift sits on the last axis only for males
    males = [s for s in small_corpus.in_domains(["out_of_domain"]) if s.gender is Gender.M]
    assert males


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dimension": 0},
        {"between_std": 0.0},
        {"domain_shifts": {"dev": [1.0, 2.0]}},
        {"gender_shift": [1.0]},
        {"segments_per_speaker": (3, 2)},
    ],
)
def test_invalid_synth_config(kwargs):
    base = {"dimension": 3, "n_speakers": {"dev": 2}}
    with pytest.raises(ConfigError):
        SynthConfig(**{**base, **kwargs})


def test_synth_config_dict_round_trip(small_synth):
    again = SynthConfig.from_dict(small_synth.to_dict())
    assert generate_corpus(again) == generate_corpus(small_synth)


def test_corpus_round_trip(tmp_path, small_corpus):
    path = tmp_path / "c.tsv"
    write_corpus(small_corpus, path)
    back = read_corpus(path)
    assert back == small_corpus
    assert np.array_equal(back.matrix, small_corpus.matrix)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=3), st.booleans())
def test_vector_text_round_trip_is_exact(tmp_path_factory, values, labeled):
    path = tmp_path_factory.mktemp("rt") / "c.tsv"
    seg = Segment("x", values, "spk" if labeled else None, None, Domain.DEV, None)
    write_corpus(Corpus(3, [seg]), path)
    assert read_corpus(path).segments[0] == seg


def test_dimension_mismatch_line_number(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("#dim=2\na\ts\tF\tdev\tF\t1 2\nb\ts\tF\tdev\tF\t1 2 3\n")
    with pytest.raises(ParseError) as err:
        read_corpus(path)
    assert err.value.line == 3


def test_duplicate_ids_rejected():
    seg = Segment("a", [1.0, 2.0])
    with pytest.raises(DataError):
        Corpus(2, [seg, seg])


def test_filter_speakers():
    labels = ["a"] * 4 + ["b"] * 2 + [None]
    c = labeled_corpus(np.zeros((7, 2)), labels)
    kept = filter_speakers(c, 4)
    assert kept.speaker_ids == ["a"] * 4 + [None]
    assert filter_speakers(c, 1) == c


@given(st.lists(st.integers(1, 6), min_size=1, max_size=8), st.integers(1, 7))
def test_filter_speakers_property(counts, m):
    labels = [f"s{i}" for i, n in enumerate(counts) for _ in range(n)]
    c = labeled_corpus(np.zeros((len(labels), 1)), labels)
    kept = filter_speakers(c, m)
    assert all(n >= m for n in kept.speaker_counts().values())
    assert len(kept) == sum(n for n in counts if n >= m)


def test_trials_and_scores_round_trip(tmp_path):
    ts = TrialSet([
        Trial(("a", "b"), "c", Key.TARGET, "F"),
        Trial(("d",), "e", Key.NONTARGET, None),
        Trial(("d",), "f", None, "M"),
    ])
    write_trials(ts, tmp_path / "t.tsv")
    assert read_trials(tmp_path / "t.tsv") == ts
    ss = ScoreSet(ts, [1.5, -2.25, 1e-9], calibrated=True)
    write_scores(ss, tmp_path / "s.tsv")
    back = read_scores(tmp_path / "s.tsv")
    assert back.trials == ts and back.calibrated
    assert np.array_equal(back.scores, ss.scores)


def test_unknown_key_token(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("a\tb\tmaybe\t-\n")
    with pytest.raises(ParseError):
        read_trials(path)


def test_keys_refuse_missing():
    ts = TrialSet([Trial(("a",), "b", Key.TARGET), Trial(("a",), "c", None)])
    assert not ts.has_keys
    with pytest.raises(DataError):
        ts.keys()


def test_eval_trials_cover_same_gender_pairs(small_corpus):
    ts = make_eval_trials(small_corpus, Domain.DEV)
    dev = small_corpus.in_domains([Domain.DEV])
    gender = {s.segment_id: s.gender for s in dev}
    spk = {s.segment_id: s.speaker_id for s in dev}
    for t in ts:
        assert gender[t.enroll_ids[0]] is gender[t.test_id]
        assert (t.key is Key.TARGET) == (spk[t.enroll_ids[0]] == spk[t.test_id])
        assert t.test_id not in t.enroll_ids
    assert ts.keys().any() and (~ts.keys()).any()


def test_vectors_are_read_only(small_corpus):
    with pytest.raises(ValueError):
        small_corpus.matrix[0, 0] = 1.0
    with pytest.raises(ValueError):
        small_corpus.segments[0].vector[0] = 1.0
