import os
import time

import hypothesis
import numpy as np
import pytest

from spkback.corpus import Corpus, Domain, Segment, SynthConfig, generate_corpus

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=400, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def rng(seed=0):
    return np.random.default_rng(seed)


def labeled_corpus(X, labels, domain=Domain.OUT_OF_DOMAIN, genders=None):
    segs = []
    for i, (x, lab) in enumerate(zip(X, labels)):
        g = None if genders is None else genders[i]
        segs.append(Segment(f"s{i:05d}", x, None if lab is None else str(lab), g, domain, g))
    return Corpus(np.asarray(X).shape[1], segs)


@pytest.fixture
def small_synth():
    return SynthConfig(
        dimension=6,
        n_speakers={"out_of_domain": 12, "in_domain_minor": 4, "dev": 5},
        segments_per_speaker=(3, 5),
        between_std=3.0,
        within_std=1.0,
        domain_shifts={"in_domain_minor": [2.0] * 6, "dev": [2.0] * 6},
        gender_shift=[0.0] * 5 + [4.0],
        rng_seed=11,
    )


@pytest.fixture
def small_corpus(small_synth):
    return generate_corpus(small_synth)


_SESSION_START = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    dt = time.perf_counter() - _SESSION_START
    mark = "PASS" if dt < 600 else "FAIL"
    terminalreporter.write_line(f"{mark}  full test suite within 10 minutes  [{dt:.0f}s]")
