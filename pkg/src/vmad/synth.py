"""Synthetic V-MAD scenarios with quality-coupled score noise.

Each frame gets a quality ``q`` and, for every attempt it takes part in, a
MAD score

    clip(mean[label] + N(0, base_sd * (1 + coupling * (1 - q))), 0, 1)

so low-quality frames are noisier whenever ``coupling > 0``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .errors import InvalidConfig
from .model import (
    Dataset,
    DocumentRecord,
    FrameRecord,
    Label,
    SequenceRecord,
    check_dataset,
    pair_attempts,
)

MAD_TRACK = "mad:synth"
QUALITY_TRACK = "q:synth"


@dataclass(frozen=True)
class ScenarioConfig:
    n_subjects: int = 40
    n_bonafide_docs: int = 120
    n_morph_docs: int = 240
    frames_per_sequence: tuple[int, int] = (30, 70)
    bonafide_score_mean: float = 0.45
    morph_score_mean: float = 0.55
    base_noise_sd: float = 0.15
    quality_noise_coupling: float = 1.0
    # ("uniform", lo, hi) or ("beta", a, b)
    quality_distribution: tuple[str, float, float] = ("uniform", 0.0, 1.0)
    sequences_per_subject: int = 1
    # None: every subject has sequences; otherwise only the first k do.
    subjects_with_sequences: int | None = None
    seed: int = 0

    def validate(self) -> "ScenarioConfig":
        lo, hi = self.frames_per_sequence
        problems = []
        if self.n_subjects < 2:
            problems.append("n_subjects must be >= 2 (morphs need two contributors)")
        if self.n_bonafide_docs < 0 or self.n_morph_docs < 0:
            problems.append("document counts must be nonnegative")
        if not 1 <= lo <= hi:
            problems.append("frames_per_sequence needs 1 <= min <= max")
        if not 0.0 <= self.bonafide_score_mean < self.morph_score_mean <= 1.0:
            problems.append("need 0 <= bonafide_score_mean < morph_score_mean <= 1")
        if self.base_noise_sd < 0:
            problems.append("base_noise_sd must be >= 0")
        if self.quality_noise_coupling < 0:
            problems.append("quality_noise_coupling must be >= 0")
        if self.sequences_per_subject < 1:
            problems.append("sequences_per_subject must be >= 1")
        k = self.subjects_with_sequences
        if k is not None and not 1 <= k <= self.n_subjects:
            problems.append("subjects_with_sequences must lie in [1, n_subjects]")
        kind, a, b = self.quality_distribution
        if kind == "uniform":
            if not 0.0 <= a <= b <= 1.0:
                problems.append("uniform quality bounds must satisfy 0 <= lo <= hi <= 1")
        elif kind == "beta":
            if not (a > 0 and b > 0):
                problems.append("beta quality parameters must be positive")
        else:
            problems.append(f"unknown quality distribution {kind!r}")
        if problems:
            raise InvalidConfig("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frames_per_sequence"] = list(self.frames_per_sequence)
        d["quality_distribution"] = list(self.quality_distribution)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        if "frames_per_sequence" in data:
            data["frames_per_sequence"] = tuple(int(v) for v in data["frames_per_sequence"])
        if "quality_distribution" in data:
            kind, a, b = data["quality_distribution"]
            data["quality_distribution"] = (str(kind), float(a), float(b))
        return cls(**data)


def reference_scale_config(seed: int = 0, **overrides) -> ScenarioConfig:
    """60 subjects, 205 bona fide and 1142 morphed documents.

    With sequences for 33 of the 60 subjects this yields roughly 110 bona
    fide and 1250 morph attempts of 30-70 frames each.
    """
    base = ScenarioConfig(
        n_subjects=60,
        n_bonafide_docs=205,
        n_morph_docs=1142,
        subjects_with_sequences=33,
        seed=seed,
    )
    return replace(base, **overrides)


def _draw_quality(rng: np.random.Generator, config: ScenarioConfig, size: int) -> np.ndarray:
    kind, a, b = config.quality_distribution
    if kind == "uniform":
        return rng.uniform(a, b, size)
    return rng.beta(a, b, size)


def generate_scenario(config: ScenarioConfig) -> Dataset:
    config.validate()
    rng = np.random.default_rng(config.seed)
    width = len(str(max(config.n_subjects, config.n_bonafide_docs, config.n_morph_docs, 1)))

    subjects = tuple(f"S{i:0{width}d}" for i in range(config.n_subjects))

    documents = []
    for i in range(config.n_bonafide_docs):
        s = subjects[int(rng.integers(config.n_subjects))]
        documents.append(DocumentRecord(f"B{i:0{width}d}", Label.BONAFIDE, s))
    for i in range(config.n_morph_docs):
        a, b = rng.choice(config.n_subjects, size=2, replace=False)
        documents.append(DocumentRecord(f"M{i:0{width}d}", Label.MORPH, subjects[int(a)], subjects[int(b)]))

    k = config.subjects_with_sequences or config.n_subjects
    lo, hi = config.frames_per_sequence
    skeleton = []
    for s in subjects[:k]:
        for j in range(config.sequences_per_subject):
            n_frames = int(rng.integers(lo, hi + 1))
            quality = _draw_quality(rng, config, n_frames)
            skeleton.append((f"Q{s[1:]}-{j}", s, quality))

    bare = Dataset(
        subjects=subjects,
        documents=tuple(documents),
        sequences=tuple(
            SequenceRecord(sid, subj, tuple(FrameRecord(f"F{f:03d}") for f in range(len(q))))
            for sid, subj, q in skeleton
        ),
    )
    attempts = pair_attempts(bare)

    by_sequence: dict[str, list] = {}
    for att in attempts:
        by_sequence.setdefault(att.sequence, []).append(att)

    mean = {Label.BONAFIDE: config.bonafide_score_mean, Label.MORPH: config.morph_score_mean}
    sequences = []
    for sid, subj, quality in skeleton:
        sd = config.base_noise_sd * (1.0 + config.quality_noise_coupling * (1.0 - quality))
        per_frame: list[dict] = [{} for _ in quality]
        for att in by_sequence.get(sid, ()):
            scores = np.clip(mean[att.label] + rng.standard_normal(len(quality)) * sd, 0.0, 1.0)
            for f, v in enumerate(scores):
                per_frame[f][(att.document, MAD_TRACK)] = float(v)
        frames = tuple(
            FrameRecord(
                f"F{f:03d}",
                quality_scores={QUALITY_TRACK: float(q)},
                attempt_mad_scores=per_frame[f],
            )
            for f, q in enumerate(quality)
        )
        sequences.append(SequenceRecord(sid, subj, frames))

    dataset = replace(bare, sequences=tuple(sequences), attempts=tuple(attempts))
    return check_dataset(dataset)


def scenario_suite(config: ScenarioConfig, seeds: Sequence[int]) -> list[Dataset]:
    if not seeds:
        raise InvalidConfig("scenario suite needs at least one seed")
    return [generate_scenario(replace(config, seed=int(s))) for s in seeds]
