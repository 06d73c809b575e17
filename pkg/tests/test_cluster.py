import numpy as np
import pytest

from conftest import labeled_corpus, rng
from spkback.cluster import cluster_unlabeled, fit_gender, kmeans, purity, split_k
from spkback.corpus import Domain, Gender, SynthConfig, generate_corpus
from spkback.errors import DataError


def gender_corpus(seed, n_spk=40, d=8, shift=10.0, between=3.0, domain="out_of_domain"):
    cfg = SynthConfig(
        dimension=d,
        n_speakers={domain: n_spk},
        segments_per_speaker=(4, 6),
        between_std=between,
        within_std=1.0,
        gender_shift=[shift] + [0.0] * (d - 1),
        rng_seed=seed,
    )
    return generate_corpus(cfg)


def test_symmetric_gender_means():
    X = np.array([[-2.0, 1.0], [-2.0, -1.0], [2.0, 1.0], [2.0, -1.0]])
    gm = fit_gender(labeled_corpus(X, "aabb", genders="FFMM"))
    assert np.allclose(gm.direction, [1, 0]) and gm.threshold == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_gender_accuracy_well_separated(seed):
    c = gender_corpus(seed, shift=10.0, between=0.5)
    gm = fit_gender(c)
    assert np.isclose(np.linalg.norm(gm.direction), 1)
    assert gm.predict(c.matrix) == [s.gender for s in c.segments]


def test_gender_errors():
    X = np.array([[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DataError):
        fit_gender(labeled_corpus(X, "ab", genders="FF"))
    with pytest.raises(DataError):
        fit_gender(labeled_corpus(X, "ab", genders="FM"))


def test_kmeans_separated_pairs():
    res = kmeans(np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]), 2, seed=3)
    assert res.labels[0] == res.labels[1] != res.labels[2] == res.labels[3]
    assert res.inertia == pytest.approx(1.0)


def test_kmeans_k_equals_n():
    X = rng(0).standard_normal((7, 3))
    res = kmeans(X, 7)
    assert res.inertia == 0 and len(set(res.labels)) == 7
    with pytest.raises(DataError):
        kmeans(X, 8)


def test_kmeans_beats_random_assignments():
    X = rng(1).standard_normal((20, 2)) + np.repeat([[0, 0], [4, 0], [0, 4]], [7, 7, 6], axis=0)
    best = kmeans(X, 3, seed=0).inertia
    r = rng(2)
    for _ in range(1000):
        lab = r.integers(0, 3, size=20)
        inertia = sum(((X[lab == c] - X[lab == c].mean(0)) ** 2).sum() for c in range(3) if (lab == c).any())
        assert best <= inertia + 1e-9


def test_kmeans_history_and_determinism():
    X = rng(3).standard_normal((200, 4))
    a, b = kmeans(X, 8, seed=5), kmeans(X, 8, seed=5)
    assert np.array_equal(a.labels, b.labels) and a.inertia == b.inertia
    assert np.all(np.diff(a.inertia_history) <= 1e-9)


def test_purity_separated_ten_speakers():
    c = gender_corpus(0, n_spk=10, d=10, shift=300.0, between=30.0, domain="in_domain_minor")
    ood = gender_corpus(1, d=10, shift=300.0, between=3.0)
    gm = fit_gender(ood)
    k = {g: len({s.speaker_id for s in c.segments if s.gender is g}) for g in Gender}
    asg = cluster_unlabeled(c.without_speakers(), gm, k, seed=0)
    assert purity(asg, dict(zip(c.ids, c.speaker_ids))) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_purity_high_separation(seed):
    c = gender_corpus(seed, n_spk=30, d=10, shift=40.0, between=10.0, domain="in_domain_major")
    gm = fit_gender(gender_corpus(100 + seed, d=10, shift=40.0))
    k = {g: len({s.speaker_id for s in c.segments if s.gender is g}) for g in Gender}
    asg = cluster_unlabeled(c.without_speakers(), gm, k, seed=seed)
    assert purity(asg, dict(zip(c.ids, c.speaker_ids))) >= 0.95


def test_assignment_covers_each_segment_once():
    c = gender_corpus(2, n_spk=20, domain="in_domain_minor").without_speakers()
    gm = fit_gender(gender_corpus(3))
    asg = cluster_unlabeled(c, gm, {"F": 5, "M": 5}, seed=1)
    assert sorted(asg.labels) == sorted(c.ids)
    f = {v for v in asg.labels.values() if v.startswith("F_")}
    m = {v for v in asg.labels.values() if v.startswith("M_")}
    assert f and m and not f & m and len(f | m) == asg.n_clusters
    relabeled = asg.apply(c)
    assert relabeled.speaker_ids == [asg.labels[i] for i in c.ids]


def test_single_gender_subset_warns():
    X = rng(0).standard_normal((12, 3)) - [20, 0, 0]
    c = labeled_corpus(X, [None] * 12, Domain.IN_DOMAIN_MINOR)
    gm = fit_gender(labeled_corpus(np.array([[-1.0, 0, 0], [1.0, 0, 0]]), "ab", genders="FM"))
    with pytest.warns(UserWarning, match="no segments"):
        asg = cluster_unlabeled(c, gm, {"F": 3, "M": 2})
    assert set(asg.centroids) == {"F"}


def test_split_k():
    assert split_k(75, {"F": 100, "M": 50}) == {"F": 50, "M": 25}
    assert split_k(300, {"F": 1, "M": 999}) == {"F": 1, "M": 299}
    assert split_k(5, {"F": 0, "M": 9}) == {"F": 0, "M": 5}
    assert sum(split_k(75, {"F": 37, "M": 41}).values()) == 75
