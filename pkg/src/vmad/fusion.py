"""Sequence-level score fusion.

Each strategy condenses the per-frame MAD scores of one attempt (optionally
together with a per-frame quality track) into a single score in [0, 1]:

    avg   arithmetic mean
    med   median (mean of the two central values for even length)
    vote  fraction of frames scoring strictly above ``thr``
    wavg  quality-weighted mean, sum(D*Q) / sum(Q)
    best  score of the highest-quality frame (first one on ties)
    rnd   one uniformly drawn frame score (baseline)
    mxd   min for bona fide, max for morph attempts (label-aware oracle)
"""

from __future__ import annotations

import csv
import enum
import io
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AllZeroWeights,
    EmptySequence,
    LengthMismatch,
    MissingLabel,
    ParseError,
    ThresholdOutOfRange,
)
from .model import UNKNOWN_LABEL, Attempt, Dataset, Label, label_text
from .quality import QualityNormalization, normalize_quality

DEFAULT_VOTE_THRESHOLD = 0.5


def _as_scores(scores) -> np.ndarray:
    arr = np.asarray(scores, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySequence("cannot fuse an empty score sequence")
    return arr


def _paired(scores, other, what: str) -> tuple[np.ndarray, np.ndarray]:
    s = _as_scores(scores)
    o = np.asarray(other, dtype=float).ravel()
    if o.size != s.size:
        raise LengthMismatch(f"{s.size} scores but {o.size} {what}")
    return s, o


def fuse_avg(scores) -> float:
    return float(np.mean(_as_scores(scores)))


def fuse_med(scores) -> float:
    return float(np.median(_as_scores(scores)))


def fuse_vote(scores, thr: float = DEFAULT_VOTE_THRESHOLD) -> float:
    s = _as_scores(scores)
    if not 0.0 <= thr <= 1.0:
        raise ThresholdOutOfRange(f"vote threshold {thr} outside [0,1]")
    return int(np.count_nonzero(s > thr)) / s.size


def fuse_wavg(scores, weights, normalized: bool = True) -> float:
    """Quality-weighted average.

    With ``normalized=False`` returns the bare weighted sum, which is not a
    score in [0, 1] and grows with the sequence length.
    """
    s, w = _paired(scores, weights, "weights")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if not total > 0:
        raise AllZeroWeights("all quality weights are zero")
    weighted = float(np.dot(s, w))
    return weighted / float(total) if normalized else weighted


def fuse_best_quality(scores, qualities) -> float:
    s, q = _paired(scores, qualities, "qualities")
    return float(s[int(np.argmax(q))])  # argmax returns the first maximum


def rnd_generator(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def baseline_rnd(scores, seed: int, index: int = 0) -> float:
    s = _as_scores(scores)
    return float(s[rnd_generator(seed, index).integers(s.size)])


def baseline_mxd(scores, label: Label | None) -> float:
    s = _as_scores(scores)
    if label is Label.BONAFIDE:
        return float(s.min())
    if label is Label.MORPH:
        return float(s.max())
    raise MissingLabel("mxd needs the ground-truth label of every attempt")


# -- strategies --------------------------------------------------------------


class Kind(str, enum.Enum):
    AVG = "avg"
    MED = "med"
    VOTE = "vote"
    WAVG = "wavg"
    BEST = "best"
    RND = "rnd"
    MXD = "mxd"


QUALITY_KINDS = (Kind.WAVG, Kind.BEST)


@dataclass(frozen=True)
class FusionStrategy:
    kind: Kind
    mad_track: str
    thr: float = DEFAULT_VOTE_THRESHOLD
    quality_track: str | None = None
    normalization: QualityNormalization | None = None
    seed: int = 0
    unnormalized: bool = False  # wavg only: bare weighted sum

    def __post_init__(self):
        if self.kind is Kind.VOTE and not 0.0 <= self.thr <= 1.0:
            raise ThresholdOutOfRange(f"vote threshold {self.thr} outside [0,1]")
        if self.kind in QUALITY_KINDS and not self.quality_track:
            raise ValueError(f"{self.kind.value} needs a quality track")

    @property
    def spec(self) -> str:
        """Short form without the MAD track, e.g. ``vote=0.3`` or ``wavg=q:illum|100``."""
        k = self.kind
        if k is Kind.VOTE:
            return f"vote={self.thr!r}"
        if k is Kind.RND:
            return f"rnd={self.seed}"
        if k in QUALITY_KINDS:
            text = f"{k.value}={self.quality_track}"
            if self.normalization is not None:
                text += f"|{self.normalization}"
            if self.unnormalized:
                text += "|sum"
            return text
        return k.value

    @property
    def descriptor(self) -> str:
        return f"{self.spec}@{self.mad_track}"

    def __str__(self) -> str:
        return self.descriptor


def _frange(text: str) -> list[float]:
    lo, hi, step = (float(v) for v in text.split(":"))
    if step <= 0:
        raise ValueError(f"grid step must be positive: {text!r}")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def parse_strategies(text: str, mad_track: str) -> list[FusionStrategy]:
    """Parse a comma-separated strategy list.

    Items: ``avg``, ``med``, ``mxd``, ``vote[=thr]``, ``vote=lo:hi:step`` (grid),
    ``rnd=seed``, ``wavg=<q-track>[|norm][|sum]``, ``best=<q-track>[|norm]``;
    ``norm`` is ``identity``, ``100``, ``median`` or ``median:<value>``.
    An optional ``@<mad-track>`` suffix overrides the default MAD track.
    """
    out: list[FusionStrategy] = []
    for item in (p.strip() for p in text.split(",")):
        if not item:
            continue
        track = mad_track
        if "@" in item:
            item, track = item.rsplit("@", 1)
        name, _, arg = item.partition("=")
        try:
            kind = Kind(name)
        except ValueError:
            raise ValueError(f"unknown fusion strategy {name!r}") from None
        if kind is Kind.VOTE:
            thrs = _frange(arg) if arg.count(":") == 2 else [float(arg) if arg else DEFAULT_VOTE_THRESHOLD]
            out.extend(FusionStrategy(kind, track, thr=t) for t in thrs)
        elif kind is Kind.RND:
            if not arg:
                raise ValueError("rnd needs an explicit seed: rnd=<seed>")
            out.append(FusionStrategy(kind, track, seed=int(arg)))
        elif kind in QUALITY_KINDS:
            parts = arg.split("|")
            norm = None
            unnormalized = False
            for opt in parts[1:]:
                if opt == "sum":
                    unnormalized = True
                else:
                    norm = QualityNormalization.parse(opt)
            out.append(
                FusionStrategy(kind, track, quality_track=parts[0], normalization=norm, unnormalized=unnormalized)
            )
        else:
            if arg:
                raise ValueError(f"{name} takes no argument")
            out.append(FusionStrategy(kind, track))
    return out


def parse_descriptor(text: str) -> FusionStrategy:
    spec, _, track = text.rpartition("@")
    if not spec:
        raise ValueError(f"strategy descriptor needs '@<mad-track>': {text!r}")
    (strategy,) = parse_strategies(spec, track)
    return strategy


@dataclass(frozen=True)
class VmadScore:
    attempt: Attempt
    value: float
    strategy: FusionStrategy = field(compare=False)


def fuse_series(
    strategy: FusionStrategy,
    scores: np.ndarray,
    qualities: np.ndarray | None = None,
    label: Label | None = None,
    index: int = 0,
) -> float:
    k = strategy.kind
    if k is Kind.AVG:
        return fuse_avg(scores)
    if k is Kind.MED:
        return fuse_med(scores)
    if k is Kind.VOTE:
        return fuse_vote(scores, strategy.thr)
    if k is Kind.WAVG:
        return fuse_wavg(scores, qualities, normalized=not strategy.unnormalized)
    if k is Kind.BEST:
        return fuse_best_quality(scores, qualities)
    if k is Kind.RND:
        return baseline_rnd(scores, strategy.seed, index)
    if k is Kind.MXD:
        return baseline_mxd(scores, label)
    raise AssertionError(k)


def _fitted_normalization(
    dataset: Dataset, attempts: Sequence[Attempt], strategy: FusionStrategy
) -> QualityNormalization | None:
    norm = strategy.normalization
    if norm is None or not norm.needs_fit:
        return norm
    seen = dict.fromkeys(a.sequence for a in attempts)
    values = [dataset.quality_series(s, strategy.quality_track) for s in seen]
    return norm.fitted(np.concatenate(values))


def apply_strategy(
    dataset: Dataset,
    strategy: FusionStrategy,
    attempts: Sequence[Attempt] | None = None,
) -> list[VmadScore]:
    """Fuse every attempt (default: all of ``dataset.attempts``), order-preserving.

    The rnd draw for an attempt is keyed by its position in
    ``dataset.attempts``, so it does not depend on which subset is evaluated.
    """
    if attempts is None:
        attempts = dataset.attempts
    position = {a: i for i, a in enumerate(dataset.attempts)}
    norm = _fitted_normalization(dataset, attempts, strategy) if strategy.kind in QUALITY_KINDS else None

    out = []
    for a in attempts:
        scores = dataset.mad_series(a, strategy.mad_track)
        qualities = None
        if strategy.kind in QUALITY_KINDS:
            qualities = dataset.quality_series(a.sequence, strategy.quality_track, attempt=a.key)
            if norm is not None:
                qualities = np.atleast_1d(normalize_quality(qualities, norm))
        if strategy.kind is Kind.MXD and a.label is None:
            raise MissingLabel(f"attempt {a.key}: mxd needs ground-truth labels")
        value = fuse_series(strategy, scores, qualities, a.label, position.get(a, zlib.crc32(a.key.encode())))
        out.append(VmadScore(a, value, strategy))
    return out



# -- fused score table -------------------------------------------------------

FUSED_COLUMNS = ("document_id", "sequence_id", "label", "strategy", "value")


@dataclass(frozen=True)
class FusedRow:
    document: str
    sequence: str
    label: Label | None
    strategy: str
    value: float


def fused_rows(scores: Sequence[VmadScore], name: str | None = None) -> list[FusedRow]:
    return [
        FusedRow(s.attempt.document, s.attempt.sequence, s.attempt.label, name or s.strategy.descriptor, s.value)
        for s in scores
    ]


def format_fused(rows: Sequence[FusedRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FUSED_COLUMNS)
    for r in rows:
        w.writerow((r.document, r.sequence, label_text(r.label), r.strategy, repr(float(r.value))))
    return buf.getvalue()


def parse_fused(text: str) -> list[FusedRow]:
    reader = csv.reader(io.StringIO(text))
    rows = []
    header = None
    for line, cells in enumerate(reader, start=1):
        if not cells or cells[0].startswith("#"):
            continue
        cells = [c.strip() for c in cells]
        if header is None:
            if tuple(cells) != FUSED_COLUMNS:
                raise ParseError(f"fused table header must be {','.join(FUSED_COLUMNS)}", line, "header")
            header = cells
            continue
        if len(cells) != len(FUSED_COLUMNS):
            raise ParseError(f"expected {len(FUSED_COLUMNS)} fields, got {len(cells)}", line)
        doc, seq, label, strategy, raw = cells
        try:
            lab = None if label in ("", UNKNOWN_LABEL) else Label(label)
        except ValueError:
            raise ParseError(f"bad label {label!r}", line, "label") from None
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(f"not a number: {raw!r}", line, "value") from None
        if not np.isfinite(value):
            raise ParseError(f"non-finite value {raw!r}", line, "value")
        rows.append(FusedRow(doc, seq, lab, strategy, value))
    if header is None:
        raise ParseError("fused table has no header", 1, "header")
    return rows
