"""Embedding corpora, trial lists, score sets: data model, text I/O and a
seeded synthetic generator.

File formats (tab separated, one record per line)::

    corpus:  #dim=<d>
             segment_id  speaker|-  gender|-  domain  partition|-  v1 v2 ... vd
    trials:  enroll_id[,enroll_id...]  test_id  target|nontarget|-  partition|-
    scores:  #calibrated=0|1
             <trial fields>  score
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError

MISSING = "-"


class Domain(str, enum.Enum):
    OUT_OF_DOMAIN = "out_of_domain"
    IN_DOMAIN_MINOR = "in_domain_minor"
    IN_DOMAIN_MAJOR = "in_domain_major"
    DEV = "dev"
    EVAL = "eval"


class Gender(str, enum.Enum):
    F = "F"
    M = "M"


class Key(str, enum.Enum):
    TARGET = "target"
    NONTARGET = "nontarget"


def _frozen_vector(v) -> np.ndarray:
    arr = np.array(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"embedding must be 1-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Segment:
    segment_id: str
    vector: np.ndarray
    speaker_id: str | None = None
    gender: Gender | None = None
    domain: Domain = Domain.OUT_OF_DOMAIN
    partition_tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "vector", _frozen_vector(self.vector))
        if self.gender is not None:
            object.__setattr__(self, "gender", Gender(self.gender))
        object.__setattr__(self, "domain", Domain(self.domain))

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            self.segment_id == other.segment_id
            and self.speaker_id == other.speaker_id
            and self.gender == other.gender
            and self.domain == other.domain
            and self.partition_tag == other.partition_tag
            and self.vector.shape == other.vector.shape
            and bool(np.array_equal(self.vector, other.vector))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable collection of segments sharing one embedding dimension."""

    dimension: int
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        if int(self.dimension) <= 0:
            raise ConfigError(f"corpus dimension must be positive, got {self.dimension}")
        object.__setattr__(self, "segments", tuple(self.segments))
        seen = set()
        for seg in self.segments:
            if seg.vector.shape != (self.dimension,):
                raise DataError(
                    f"segment {seg.segment_id!r} has dimension {seg.vector.shape[0]}, "
                    f"corpus declares {self.dimension}"
                )
            if seg.segment_id in seen:
                raise DataError(f"duplicate segment_id {seg.segment_id!r}")
            seen.add(seg.segment_id)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.dimension == other.dimension and self.segments == other.segments

    __hash__ = None

    @cached_property
    def matrix(self) -> np.ndarray:
        """Embeddings stacked row-wise, shape (n, d); read-only."""
        if not self.segments:
            m = np.zeros((0, self.dimension))
        else:
            m = np.stack([s.vector for s in self.segments])
        m.setflags(write=False)
        return m

    @cached_property
    def index(self) -> dict[str, int]:
        return {s.segment_id: i for i, s in enumerate(self.segments)}

    @property
    def ids(self) -> list[str]:
        return [s.segment_id for s in self.segments]

    @property
    def speaker_ids(self) -> list[str | None]:
        return [s.speaker_id for s in self.segments]

    def vector(self, segment_id: str) -> np.ndarray:
        return self.segments[self.index[segment_id]].vector

    def select(self, keep: Callable[[Segment], bool] | Sequence[bool]) -> Corpus:
        if callable(keep):
            segs = [s for s in self.segments if keep(s)]
        else:
            segs = [s for s, k in zip(self.segments, keep) if k]
        return Corpus(self.dimension, segs)

    def in_domains(self, domains: Iterable[Domain | str]) -> Corpus:
        wanted = {Domain(d) for d in domains}
        return self.select(lambda s: s.domain in wanted)

    def with_matrix(self, X: np.ndarray) -> Corpus:
        """Same segments and attributes, new vectors (dimension may change)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != len(self):
            raise DataError(f"matrix shape {X.shape} does not match {len(self)} segments")
        segs = [replace(s, vector=x) for s, x in zip(self.segments, X)]
        return Corpus(X.shape[1], segs)

    def with_speakers(self, labels: Mapping[str, str | None]) -> Corpus:
        segs = [replace(s, speaker_id=labels.get(s.segment_id, s.speaker_id)) for s in self.segments]
        return Corpus(self.dimension, segs)

    def without_speakers(self) -> Corpus:
        return Corpus(self.dimension, [replace(s, speaker_id=None) for s in self.segments])

    def labeled(self) -> Corpus:
        return self.select(lambda s: s.speaker_id is not None)

    def __add__(self, other: Corpus) -> Corpus:
        if other.dimension != self.dimension:
            raise DataError(f"cannot join corpora of dimension {self.dimension} and {other.dimension}")
        return Corpus(self.dimension, self.segments + other.segments)

    def speaker_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.segments:
            if s.speaker_id is not None:
                counts[s.speaker_id] = counts.get(s.speaker_id, 0) + 1
        return counts


def labels_to_codes(labels: Sequence) -> tuple[np.ndarray, list]:
    """Map labels to integer codes in order of first appearance."""
    order: dict = {}
    codes = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab is None:
            raise DataError(f"segment {i} has no speaker label")
        codes[i] = order.setdefault(lab, len(order))
    return codes, list(order)


def filter_speakers(corpus: Corpus, min_segments: int) -> Corpus:
    """Drop labeled speakers with fewer than ``min_segments`` segments.

    Unlabeled segments pass through; order is preserved.
    """
    counts = corpus.speaker_counts()
    return corpus.select(
        lambda s: s.speaker_id is None or counts[s.speaker_id] >= min_segments
    )


# ---------------------------------------------------------------- trials


@dataclass(frozen=True)
class Trial:
    enroll_ids: tuple[str, ...]
    test_id: str
    key: Key | None = None
    partition_tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "enroll_ids", tuple(self.enroll_ids))
        if not self.enroll_ids:
            raise DataError("trial needs at least one enrollment segment")
        if self.key is not None:
            object.__setattr__(self, "key", Key(self.key))


@dataclass(frozen=True)
class TrialSet:
    trials: tuple[Trial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __add__(self, other: TrialSet) -> TrialSet:
        return TrialSet(self.trials + other.trials)

    @property
    def has_keys(self) -> bool:
        return bool(self.trials) and all(t.key is not None for t in self.trials)

    def keys(self) -> np.ndarray:
        """Boolean target mask; refuses keyless trial sets."""
        if not self.has_keys:
            raise DataError("trial set has missing keys; metrics need a fully keyed trial set")
        return np.array([t.key is Key.TARGET for t in self.trials])

    def partitions(self) -> list[str | None]:
        return [t.partition_tag for t in self.trials]


@dataclass(frozen=True, eq=False)
class ScoreSet:
    trials: TrialSet
    scores: np.ndarray
    calibrated: bool = False

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        if s.shape[0] != len(self.trials):
            raise DataError(f"{s.shape[0]} scores for {len(self.trials)} trials")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return len(self.trials)

    def __eq__(self, other):
        if not isinstance(other, ScoreSet):
            return NotImplemented
        return (
            self.trials == other.trials
            and self.calibrated == other.calibrated
            and bool(np.array_equal(self.scores, other.scores))
        )

    __hash__ = None

    def with_scores(self, scores, calibrated: bool | None = None) -> ScoreSet:
        return ScoreSet(self.trials, scores, self.calibrated if calibrated is None else calibrated)


# ------------------------------------------------------------------- I/O


def _opt(value: str) -> str | None:
    return None if value == MISSING else value


def _fmt_opt(value) -> str:
    if value is None:
        return MISSING
    return value.value if isinstance(value, enum.Enum) else str(value)


def write_corpus(corpus: Corpus, path) -> None:
    lines = [f"#dim={corpus.dimension}"]
    for s in corpus:
        vec = " ".join(repr(float(x)) for x in s.vector)
        lines.append(
            "\t".join(
                [s.segment_id, _fmt_opt(s.speaker_id), _fmt_opt(s.gender), s.domain.value,
                 _fmt_opt(s.partition_tag), vec]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_corpus(path) -> Corpus:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#dim="):
        raise ParseError("missing '#dim=<d>' header", path, 1)
    try:
        dim = int(lines[0][len("#dim="):])
    except ValueError:
        raise ParseError(f"bad header {lines[0]!r}", path, 1) from None
    if dim <= 0:
        raise ParseError(f"dimension must be positive, got {dim}", path, 1)
    segments: list[Segment] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise ParseError(f"expected 6 tab-separated fields, got {len(fields)}", path, lineno)
        seg_id, spk, gender, domain, part, vec = fields
        try:
            values = [float(x) for x in vec.split()]
        except ValueError as exc:
            raise ParseError(f"bad vector value ({exc})", path, lineno) from None
        if len(values) != dim:
            raise ParseError(f"vector has {len(values)} values, header declares {dim}", path, lineno)
        if seg_id in seen:
            raise ParseError(f"duplicate segment_id {seg_id!r}", path, lineno)
        seen.add(seg_id)
        try:
            segments.append(Segment(seg_id, values, _opt(spk), _opt(gender), Domain(domain), _opt(part)))
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    return Corpus(dim, segments)


def _trial_fields(t: Trial) -> str:
    return "\t".join([",".join(t.enroll_ids), t.test_id, _fmt_opt(t.key), _fmt_opt(t.partition_tag)])


def _parse_trial(fields: list[str], path, lineno) -> Trial:
    enroll, test, key, part = fields
    if key not in ("target", "nontarget", MISSING):
        raise ParseError(f"unknown key token {key!r}", path, lineno)
    ids = [e for e in enroll.split(",") if e]
    if not ids or not test:
        raise ParseError("empty enrollment or test id", path, lineno)
    return Trial(tuple(ids), test, _opt(key), _opt(part))


def write_trials(trials: TrialSet, path) -> None:
    Path(path).write_text("".join(_trial_fields(t) + "\n" for t in trials))


def read_trials(path) -> TrialSet:
    path = Path(path)
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(fields)}", path, lineno)
        out.append(_parse_trial(fields, path, lineno))
    return TrialSet(out)


def write_scores(scoreset: ScoreSet, path) -> None:
    lines = [f"#calibrated={int(scoreset.calibrated)}"]
    for t, s in zip(scoreset.trials, scoreset.scores):
        lines.append(f"{_trial_fields(t)}\t{float(s):.12g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path) -> ScoreSet:
    path = Path(path)
    trials, scores = [], []
    calibrated = False
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if line.startswith("#calibrated="):
            calibrated = line.strip().endswith("1")
            continue
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ParseError(f"expected 5 tab-separated fields, got {len(fields)}", path, lineno)
        trials.append(_parse_trial(fields[:4], path, lineno))
        try:
            scores.append(float(fields[4]))
        except ValueError:
            raise ParseError(f"bad score {fields[4]!r}", path, lineno) from None
    return ScoreSet(TrialSet(trials), scores, calibrated)


# ------------------------------------------------------------- synthesis

_DOMAIN_PREFIX = {
    Domain.OUT_OF_DOMAIN: "ood",
    Domain.IN_DOMAIN_MINOR: "min",
    Domain.IN_DOMAIN_MAJOR: "maj",
    Domain.DEV: "dev",
    Domain.EVAL: "evl",
}
_DOMAIN_ORDER = list(Domain)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the Gaussian speaker/segment generator.

    ``front_end`` selects an independent segment-noise realisation over the
    same speakers, standing in for different embedding extractors.
    """

    dimension: int
    n_speakers: Mapping[Domain, int]
    segments_per_speaker: tuple[int, int] = (4, 10)
    between_std: float = 3.0
    within_std: float = 1.0
    domain_shifts: Mapping[Domain, Sequence[float]] = field(default_factory=dict)
    gender_shift: Sequence[float] | None = None
    rng_seed: int = 0
    front_end: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_speakers", {Domain(k): int(v) for k, v in self.n_speakers.items()})
        object.__setattr__(
            self, "domain_shifts", {Domain(k): np.asarray(v, float) for k, v in self.domain_shifts.items()}
        )
        if self.gender_shift is not None:
            object.__setattr__(self, "gender_shift", np.asarray(self.gender_shift, float))
        object.__setattr__(self, "segments_per_speaker", tuple(int(x) for x in self.segments_per_speaker))
        self.validate()

    def validate(self):
        d = self.dimension
        if not isinstance(d, (int, np.integer)) or d <= 0:
            raise ConfigError(f"dimension must be a positive integer, got {d!r}")
        if not (self.between_std > 0 and self.within_std >= 0):
            raise ConfigError("between_std must be > 0 and within_std >= 0")
        lo, hi = self.segments_per_speaker
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad segments_per_speaker range {(lo, hi)}")
        for dom, v in self.domain_shifts.items():
            if v.shape != (d,):
                raise ConfigError(f"shift for {dom.value} has shape {v.shape}, expected ({d},)")
        if self.gender_shift is not None and self.gender_shift.shape != (d,):
            raise ConfigError(f"gender_shift has shape {self.gender_shift.shape}, expected ({d},)")
        if any(n < 0 for n in self.n_speakers.values()):
            raise ConfigError("speaker counts must be non-negative")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d: Mapping) -> SynthConfig:
        d = dict(d)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad synth config: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "dimension": int(self.dimension),
            "n_speakers": {k.value: v for k, v in self.n_speakers.items()},
            "segments_per_speaker": list(self.segments_per_speaker),
            "between_std": float(self.between_std),
            "within_std": float(self.within_std),
            "domain_shifts": {k.value: v.tolist() for k, v in self.domain_shifts.items()},
            "gender_shift": None if self.gender_shift is None else self.gender_shift.tolist(),
            "rng_seed": int(self.rng_seed),
            "front_end": int(self.front_end),
        }


def _generator(seed: int, *spawn_key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


def generate_corpus(cfg: SynthConfig) -> Corpus:
    """Sample a corpus from the two-level Gaussian model in ``cfg``.

    Stream discipline: speaker ``i`` of domain ``k`` draws gender, segment
    count and mean from PCG64 seeded by ``SeedSequence(seed, spawn_key=(k, i))``;
    its segment ``j`` draws noise from ``spawn_key=(k, i, j, front_end)``.
    Male speakers receive ``gender_shift``; partition tags carry the gender.
    """
    d = cfg.dimension
    zero = np.zeros(d)
    lo, hi = cfg.segments_per_speaker
    segments = []
    for dom, n_spk in cfg.n_speakers.items():
        k = _DOMAIN_ORDER.index(dom)
        shift = cfg.domain_shifts.get(dom, zero)
        prefix = _DOMAIN_PREFIX[dom]
        for i in range(n_spk):
            rng = _generator(cfg.rng_seed, k, i)
            gender = Gender.M if rng.random() < 0.5 else Gender.F
            n_seg = int(rng.integers(lo, hi + 1))
            mean = cfg.between_std * rng.standard_normal(d) + shift
            if gender is Gender.M and cfg.gender_shift is not None:
                mean = mean + cfg.gender_shift
            spk = f"{prefix}{i:04d}"
            for j in range(n_seg):
                noise = _generator(cfg.rng_seed, k, i, j, cfg.front_end).standard_normal(d)
                segments.append(
                    Segment(f"{spk}-{j:03d}", mean + cfg.within_std * noise, spk, gender, dom, gender.value)
                )
    return Corpus(d, segments)


def random_direction(d: int, norm: float, seed: int, stream: int) -> np.ndarray:
    """Seeded vector of the given Euclidean norm (for building shifts)."""
    v = _generator(seed, 1000 + stream).standard_normal(d)
    return norm * v / np.linalg.norm(v)


def make_eval_trials(
    corpus: Corpus,
    domain: Domain | str,
    n_enroll: int = 1,
    cross_gender: bool = False,
) -> TrialSet:
    """Enrollment/test trials over every speaker of ``domain``.

    Each speaker's first ``n_enroll`` segments form its enrollment model; every
    model is paired with every remaining segment (same gender only unless
    ``cross_gender``). Partition tag is the test segment's tag.
    """
    sub = corpus.in_domains([domain])
    by_spk: dict[str, list[Segment]] = {}
    for s in sub:
        if s.speaker_id is None:
            raise DataError(f"segment {s.segment_id!r} has no speaker label")
        by_spk.setdefault(s.speaker_id, []).append(s)
    models = []
    tests = []
    for spk, segs in by_spk.items():
        if len(segs) <= n_enroll:
            continue
        models.append((spk, segs[0].gender, tuple(s.segment_id for s in segs[:n_enroll])))
        tests.extend(segs[n_enroll:])
    trials = []
    for spk, gender, enroll in models:
        for t in tests:
            if not cross_gender and t.gender != gender:
                continue
            key = Key.TARGET if t.speaker_id == spk else Key.NONTARGET
            trials.append(Trial(enroll, t.segment_id, key, t.partition_tag))
    return TrialSet(trials)
