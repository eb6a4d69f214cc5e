"""Core data types, manifest and score-table I/O, attempt pairing, validation.

Score orientation is fixed for the whole toolkit: a higher MAD score means a
higher probability that the document image is morphed. Detectors that emit
the opposite polarity are declared in the manifest ``[detectors]`` section and
flipped (``1 - v``) when their score table is ingested.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateEntry,
    InvalidDataset,
    MissingFile,
    MissingTrack,
    ParseError,
    ReferentialIntegrityError,
    ScoreOutOfRange,
    UnknownFrame,
)

MANIFEST_MAGIC = "vmad-manifest"
MANIFEST_VERSION = "1"

MAD_PREFIX = "mad:"
QUALITY_PREFIX = "q:"

SECTION_COLUMNS: dict[str, tuple[str, ...]] = {
    "subjects": ("subject_id",),
    "detectors": ("track_name", "polarity"),
    "documents": ("document_id", "label", "subject_a", "subject_b"),
    "sequences": ("sequence_id", "subject_id"),
    "frames": (
        "sequence_id",
        "frame_id",
        "image_path",
        "image_width",
        "image_height",
        "box_x",
        "box_y",
        "box_w",
        "box_h",
    ),
}
SECTION_ORDER = ("subjects", "detectors", "documents", "sequences", "frames")
REQUIRED_SECTIONS = ("subjects", "documents", "sequences", "frames")

SCORE_COLUMNS = ("sequence_id", "frame_id", "track_name", "value")
SCORE_COLUMNS_WITH_DOC = SCORE_COLUMNS + ("document_id",)

POLARITIES = ("higher_is_morph", "higher_is_bonafide")


class Label(str, enum.Enum):
    BONAFIDE = "bonafide"
    MORPH = "morph"

    def __str__(self) -> str:
        return self.value


UNKNOWN_LABEL = "unknown"


def label_text(label: Label | None) -> str:
    return UNKNOWN_LABEL if label is None else label.value


def is_mad_track(name: str) -> bool:
    return name.startswith(MAD_PREFIX)


def is_quality_track(name: str) -> bool:
    return name.startswith(QUALITY_PREFIX)


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned face rectangle in pixel coordinates (top-left origin)."""

    x: int
    y: int
    w: int
    h: int

    def within(self, width: int, height: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.w >= 0
            and self.h >= 0
            and self.x + self.w <= width
            and self.y + self.h <= height
        )

    def mirrored(self, width: int) -> "FaceBox":
        return FaceBox(width - self.x - self.w, self.y, self.w, self.h)


@dataclass(frozen=True)
class DocumentRecord:
    id: str
    label: Label | None  # None when ground truth is withheld
    subject_a: str
    subject_b: str | None = None

    @property
    def contributors(self) -> tuple[str, ...]:
        if self.subject_b is None:
            return (self.subject_a,)
        return (self.subject_a, self.subject_b)


@dataclass(frozen=True)
class FrameRecord:
    """One gate frame.

    ``mad_scores`` holds document-independent detector output keyed by track.
    ``attempt_mad_scores`` holds the usual differential case, keyed by
    ``(document_id, track)``, since a D-MAD score depends on the document the
    frame is compared against. Lookups prefer the document-specific value.
    """

    id: str
    image_path: str | None = None
    image_size: tuple[int, int] | None = None  # (width, height)
    face_box: FaceBox | None = None
    mad_scores: Mapping[str, float] = field(default_factory=dict)
    quality_scores: Mapping[str, float] = field(default_factory=dict)
    attempt_mad_scores: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def mad_score(self, track: str, document: str | None = None) -> float | None:
        if document is not None:
            value = self.attempt_mad_scores.get((document, track))
            if value is not None:
                return value
        return self.mad_scores.get(track)


@dataclass(frozen=True)
class SequenceRecord:
    id: str
    subject: str
    frames: tuple[FrameRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Attempt:
    document: str
    sequence: str
    label: Label | None

    @property
    def key(self) -> str:
        return f"{self.document}/{self.sequence}"


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of subjects, documents, sequences and attempts."""

    subjects: tuple[str, ...] = ()
    documents: tuple[DocumentRecord, ...] = ()
    sequences: tuple[SequenceRecord, ...] = ()
    attempts: tuple[Attempt, ...] = ()
    flipped_tracks: frozenset[str] = frozenset()

    @cached_property
    def _documents(self) -> dict[str, DocumentRecord]:
        return {d.id: d for d in self.documents}

    @cached_property
    def _sequences(self) -> dict[str, SequenceRecord]:
        return {s.id: s for s in self.sequences}

    def document(self, ident: str) -> DocumentRecord:
        return self._documents[ident]

    def sequence(self, ident: str) -> SequenceRecord:
        return self._sequences[ident]

    def has_document(self, ident: str) -> bool:
        return ident in self._documents

    def has_sequence(self, ident: str) -> bool:
        return ident in self._sequences

    def frame_count(self) -> int:
        return sum(len(s.frames) for s in self.sequences)

    def mad_series(self, attempt: Attempt, track: str) -> np.ndarray:
        """Per-frame MAD scores of ``track`` for one attempt, in frame order."""
        seq = self.sequence(attempt.sequence)
        out = np.empty(len(seq.frames))
        for i, frame in enumerate(seq.frames):
            value = frame.mad_score(track, attempt.document)
            if value is None:
                raise MissingTrack(attempt.key, track)
            out[i] = value
        return out

    def quality_series(self, sequence: str, track: str, attempt: str | None = None) -> np.ndarray:
        seq = self.sequence(sequence)
        try:
            return np.array([f.quality_scores[track] for f in seq.frames], dtype=float)
        except KeyError:
            raise MissingTrack(attempt or sequence, track) from None

    def tracks(self) -> list[str]:
        names: set[str] = set()
        for seq in self.sequences:
            for f in seq.frames:
                names.update(f.mad_scores)
                names.update(t for _, t in f.attempt_mad_scores)
                names.update(f.quality_scores)
        return sorted(names)

    def labeled_counts(self) -> dict[Label, int]:
        counts = {Label.BONAFIDE: 0, Label.MORPH: 0}
        for a in self.attempts:
            if a.label is not None:
                counts[a.label] += 1
        return counts


# -- pairing -----------------------------------------------------------------


def pair_attempts(dataset: Dataset) -> list[Attempt]:
    """Bona fide documents meet same-subject sequences; morphs meet both contributors'."""
    by_subject: dict[str, list[str]] = {}
    for seq in dataset.sequences:
        by_subject.setdefault(seq.subject, []).append(seq.id)

    attempts = []
    for doc in sorted(dataset.documents, key=lambda d: d.id):
        eligible: set[str] = set()
        for subject in doc.contributors:
            eligible.update(by_subject.get(subject, ()))
        for seq_id in sorted(eligible):
            attempts.append(Attempt(doc.id, seq_id, doc.label))
    return attempts


def with_attempts(dataset: Dataset) -> Dataset:
    return replace(dataset, attempts=tuple(pair_attempts(dataset)))


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    ident: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.ident}: {self.message}"


REFERENTIAL_KINDS = frozenset(
    {
        "duplicate_id",
        "unknown_subject",
        "morph_contributors",
        "bonafide_contributors",
        "unknown_document",
        "unknown_sequence",
        "attempt_label",
        "attempt_pairing",
    }
)


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    # Informational; never counted as a violation.
    unpaired_documents: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.violations)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, ident: str, message: str) -> None:
        self.violations.append(Violation(kind, ident, message))


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    report = ValidationReport()

    subjects: set[str] = set()
    for s in dataset.subjects:
        if s in subjects:
            report.add("duplicate_id", s, "subject listed twice")
        subjects.add(s)

    docs: dict[str, DocumentRecord] = {}
    for doc in dataset.documents:
        if doc.id in docs:
            report.add("duplicate_id", doc.id, "document listed twice")
        docs[doc.id] = doc
        for subject in doc.contributors:
            if subject not in subjects:
                report.add("unknown_subject", doc.id, f"references unknown subject {subject!r}")
        if doc.label is Label.MORPH:
            if doc.subject_b is None or doc.subject_b == doc.subject_a:
                report.add(
                    "morph_contributors", doc.id, "morphed document needs two distinct subjects"
                )
        elif doc.label is Label.BONAFIDE and doc.subject_b is not None:
            report.add("bonafide_contributors", doc.id, "bona fide document lists a second subject")

    seqs: dict[str, SequenceRecord] = {}
    for seq in dataset.sequences:
        if seq.id in seqs:
            report.add("duplicate_id", seq.id, "sequence listed twice")
        seqs[seq.id] = seq
        if seq.subject not in subjects:
            report.add("unknown_subject", seq.id, f"references unknown subject {seq.subject!r}")
        if not seq.frames:
            report.add("empty_sequence", seq.id, "sequence has no frames")
        frame_ids: set[str] = set()
        for frame in seq.frames:
            fid = f"{seq.id}/{frame.id}"
            if frame.id in frame_ids:
                report.add("duplicate_id", fid, "frame listed twice in sequence")
            frame_ids.add(frame.id)
            if frame.face_box is not None:
                b = frame.face_box
                if b.w <= 0 or b.h <= 0 or b.x < 0 or b.y < 0:
                    report.add("face_box", fid, f"invalid face box {b}")
                elif frame.image_size is not None and not b.within(*frame.image_size):
                    report.add("face_box", fid, f"face box {b} exceeds image {frame.image_size}")
            for track, value in _frame_mad_items(frame):
                if not (0.0 <= value <= 1.0):
                    report.add("score_range", fid, f"{track}={value} outside [0,1]")

    for a in dataset.attempts:
        doc = docs.get(a.document)
        seq = seqs.get(a.sequence)
        if doc is None:
            report.add("unknown_document", a.key, "attempt references unknown document")
        if seq is None:
            report.add("unknown_sequence", a.key, "attempt references unknown sequence")
        if doc is None or seq is None:
            continue
        if a.label is not doc.label:
            report.add("attempt_label", a.key, "attempt label differs from document label")
        if seq.subject not in doc.contributors:
            report.add(
                "attempt_pairing", a.key, f"sequence subject {seq.subject!r} did not contribute"
            )

    paired = {a.document for a in dataset.attempts}
    report.unpaired_documents = [d.id for d in dataset.documents if d.id not in paired]
    return report


def _frame_mad_items(frame: FrameRecord) -> Iterator[tuple[str, float]]:
    yield from frame.mad_scores.items()
    for (_, track), value in frame.attempt_mad_scores.items():
        yield track, value


def check_dataset(dataset: Dataset) -> Dataset:
    report = validate_dataset(dataset)
    if report:
        first = report.violations[0]
        msg = f"{first.message} ({len(report)} violation(s) total)"
        if first.kind in REFERENTIAL_KINDS:
            raise ReferentialIntegrityError(first.ident, msg, report)
        raise InvalidDataset(f"{first.ident}: {msg}", report)
    return dataset


# -- manifest I/O ------------------------------------------------------------


def _opt(value: str) -> str | None:
    value = value.strip()
    return value or None


def _int_field(value: str, line: int, name: str) -> int | None:
    value = value.strip()
    if not value:
        return None
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"expected integer, got {value!r}", line, name) from None


def _data_lines(text: str) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, raw


def parse_manifest(text: str) -> Dataset:
    lines = list(_data_lines(text))
    if not lines:
        raise ParseError("empty manifest", 1)
    lineno, header = lines[0]
    magic = [c.strip() for c in header.split(",")]
    if magic[0] != MANIFEST_MAGIC:
        raise ParseError(f"missing '{MANIFEST_MAGIC}' header line", lineno)
    if len(magic) != 2 or magic[1] != MANIFEST_VERSION:
        raise ParseError(f"unsupported manifest version {magic[1:]!r}", lineno, "version")

    rows: dict[str, list[tuple[int, list[str]]]] = {}
    section = None
    expect_header = False
    for lineno, raw in lines[1:]:
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SECTION_COLUMNS:
                raise ParseError(f"unknown section [{section}]", lineno)
            if section in rows:
                raise ParseError(f"section [{section}] repeated", lineno)
            rows[section] = []
            expect_header = True
            continue
        if section is None:
            raise ParseError("record outside of any section", lineno)
        cells = next(csv.reader([raw]))
        cells = [c.strip() for c in cells]
        columns = SECTION_COLUMNS[section]
        if expect_header:
            if tuple(cells) != columns:
                raise ParseError(
                    f"section [{section}] header must be {','.join(columns)}", lineno, "header"
                )
            expect_header = False
            continue
        if len(cells) != len(columns):
            raise ParseError(
                f"expected {len(columns)} fields, got {len(cells)}", lineno, columns[min(len(cells), len(columns) - 1)]
            )
        rows[section].append((lineno, cells))

    for name in REQUIRED_SECTIONS:
        if name not in rows:
            raise ParseError(f"missing section [{name}]")

    subjects = tuple(cells[0] for _, cells in rows["subjects"])

    flipped = set()
    for lineno, (track, polarity) in rows.get("detectors", []):
        if not is_mad_track(track):
            raise ParseError(f"detector track must start with {MAD_PREFIX!r}", lineno, "track_name")
        if polarity not in POLARITIES:
            raise ParseError(f"polarity must be one of {POLARITIES}", lineno, "polarity")
        if polarity == "higher_is_bonafide":
            flipped.add(track)

    documents = []
    for lineno, (doc_id, label, a, b) in rows["documents"]:
        if label in ("", UNKNOWN_LABEL):
            lab = None
        else:
            try:
                lab = Label(label)
            except ValueError:
                raise ParseError(
                    f"label must be bonafide, morph or {UNKNOWN_LABEL}, got {label!r}", lineno, "label"
                ) from None
        documents.append(DocumentRecord(doc_id, lab, a, _opt(b)))

    frames: dict[str, list[FrameRecord]] = {}
    for lineno, cells in rows["frames"]:
        seq_id, frame_id, path, iw, ih, bx, by, bw, bh = cells
        width = _int_field(iw, lineno, "image_width")
        height = _int_field(ih, lineno, "image_height")
        if (width is None) != (height is None):
            raise ParseError("image_width and image_height go together", lineno, "image_width")
        box_vals = [_int_field(v, lineno, n) for v, n in zip((bx, by, bw, bh), SECTION_COLUMNS["frames"][5:])]
        if any(v is None for v in box_vals) and not all(v is None for v in box_vals):
            raise ParseError("face box needs all four of box_x,box_y,box_w,box_h", lineno, "box_x")
        box = None if box_vals[0] is None else FaceBox(*box_vals)  # type: ignore[arg-type]
        size = None if width is None else (width, height)
        frames.setdefault(seq_id, []).append(
            FrameRecord(frame_id, _opt(path), size, box)  # type: ignore[arg-type]
        )

    sequences = []
    seen = set()
    for lineno, (seq_id, subject) in rows["sequences"]:
        seen.add(seq_id)
        sequences.append(SequenceRecord(seq_id, subject, tuple(frames.get(seq_id, ()))))
    for seq_id in frames:
        if seq_id not in seen:
            lineno = next(ln for ln, c in rows["frames"] if c[0] == seq_id)
            raise ReferentialIntegrityError(seq_id, f"frame on line {lineno} references unknown sequence")

    dataset = Dataset(
        subjects=subjects,
        documents=tuple(documents),
        sequences=tuple(sequences),
        flipped_tracks=frozenset(flipped),
    )
    # Validate structure before pairing so that pairing sees sane references.
    check_dataset(dataset)
    return check_dataset(with_attempts(dataset))


def load_manifest(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    return parse_manifest(path.read_text(encoding="utf-8"))


def format_manifest(dataset: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"{MANIFEST_MAGIC},{MANIFEST_VERSION}\n")

    def section(name: str, records: Iterable[Sequence[object]]) -> None:
        buf.write(f"[{name}]\n")
        w.writerow(SECTION_COLUMNS[name])
        for rec in records:
            w.writerow(["" if v is None else v for v in rec])

    section("subjects", ((s,) for s in dataset.subjects))
    if dataset.flipped_tracks:
        section("detectors", ((t, "higher_is_bonafide") for t in sorted(dataset.flipped_tracks)))
    section(
        "documents",
        ((d.id, label_text(d.label), d.subject_a, d.subject_b) for d in dataset.documents),
    )
    section("sequences", ((s.id, s.subject) for s in dataset.sequences))

    def frame_rows():
        for seq in dataset.sequences:
            for f in seq.frames:
                size = f.image_size or (None, None)
                box = f.face_box
                box_vals = (box.x, box.y, box.w, box.h) if box else (None,) * 4
                yield (seq.id, f.id, f.image_path, *size, *box_vals)

    section("frames", frame_rows())
    return buf.getvalue()


def save_manifest(dataset: Dataset, path: str | os.PathLike) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, format_manifest(dataset))


# -- score tables ------------------------------------------------------------


def format_value(value: float) -> str:
    return repr(float(value))


def parse_score_rows(text: str) -> Iterator[tuple[int, str, str, str, float, str | None]]:
    """Yield ``(line, sequence, frame, track, value, document)`` per data row."""
    reader = csv.reader(io.StringIO(text))
    header = None
    for idx, cells in enumerate(reader, start=1):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            continue
        if cells[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in cells]
        if header is None:
            if tuple(cells) not in (SCORE_COLUMNS, SCORE_COLUMNS_WITH_DOC):
                raise ParseError(
                    f"score table header must be {','.join(SCORE_COLUMNS)}[,document_id]", idx, "header"
                )
            header = tuple(cells)
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", idx)
        seq_id, frame_id, track, raw = cells[:4]
        doc = _opt(cells[4]) if len(cells) == 5 else None
        if not (is_mad_track(track) or is_quality_track(track)):
            raise ParseError(
                f"track name must start with {MAD_PREFIX!r} or {QUALITY_PREFIX!r}", idx, "track_name"
            )
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(f"not a number: {raw!r}", idx, "value") from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {raw!r}", idx, "value")
        if doc is not None and not is_mad_track(track):
            raise ParseError("document_id is only meaningful for MAD tracks", idx, "document_id")
        yield idx, seq_id, frame_id, track, value, doc
    if header is None:
        raise ParseError("score table has no header", 1, "header")


def attach_scores(
    dataset: Dataset,
    rows: Iterable[tuple[int, str, str, str, float, str | None]],
) -> Dataset:
    """Return a copy of ``dataset`` with the score rows attached to their frames."""
    frame_index: dict[tuple[str, str], int] = {}
    for seq in dataset.sequences:
        for i, f in enumerate(seq.frames):
            frame_index[(seq.id, f.id)] = i

    additions: dict[tuple[str, str], dict[str, dict]] = {}
    for line, seq_id, frame_id, track, value, doc in rows:
        key = (seq_id, frame_id)
        if key not in frame_index:
            raise UnknownFrame(f"line {line}: unknown frame {seq_id}/{frame_id}")
        if doc is not None and not dataset.has_document(doc):
            raise ReferentialIntegrityError(doc, f"line {line}: unknown document")
        if is_mad_track(track):
            if not (0.0 <= value <= 1.0):
                raise ScoreOutOfRange(f"line {line}: {track}={value} outside [0,1]")
            if track in dataset.flipped_tracks:
                value = 1.0 - value
        slot = additions.setdefault(key, {"mad": {}, "q": {}, "amad": {}})
        frame = dataset.sequence(seq_id).frames[frame_index[key]]
        if is_mad_track(track) and doc is not None:
            bucket, existing, k = slot["amad"], frame.attempt_mad_scores, (doc, track)
        elif is_mad_track(track):
            bucket, existing, k = slot["mad"], frame.mad_scores, track
        else:
            bucket, existing, k = slot["q"], frame.quality_scores, track
        if k in bucket or k in existing:
            where = f"{seq_id}/{frame_id}" + (f" vs {doc}" if doc else "")
            raise DuplicateEntry(f"line {line}: second value for {track} on {where}")
        bucket[k] = value

    if not additions:
        return dataset

    sequences = []
    for seq in dataset.sequences:
        frames = []
        for f in seq.frames:
            slot = additions.get((seq.id, f.id))
            if slot is None:
                frames.append(f)
                continue
            frames.append(
                replace(
                    f,
                    mad_scores={**f.mad_scores, **slot["mad"]},
                    quality_scores={**f.quality_scores, **slot["q"]},
                    attempt_mad_scores={**f.attempt_mad_scores, **slot["amad"]},
                )
            )
        sequences.append(replace(seq, frames=tuple(frames)))
    return replace(dataset, sequences=tuple(sequences))


def load_score_table(path: str | os.PathLike, dataset: Dataset) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"score table not found: {path}")
    return attach_scores(dataset, parse_score_rows(path.read_text(encoding="utf-8")))


def iter_score_rows(dataset: Dataset, tracks: Iterable[str] | None = None):
    """Rows ``(sequence, frame, track, value, document)`` in canonical order.

    Flipped tracks are written back in their native polarity so that a
    save/load round trip is the identity.
    """
    wanted = None if tracks is None else set(tracks)
    for seq in dataset.sequences:
        for f in seq.frames:
            for track in sorted(f.mad_scores):
                if wanted is None or track in wanted:
                    yield seq.id, f.id, track, _native(dataset, track, f.mad_scores[track]), None
            for doc, track in sorted(f.attempt_mad_scores):
                if wanted is None or track in wanted:
                    v = f.attempt_mad_scores[(doc, track)]
                    yield seq.id, f.id, track, _native(dataset, track, v), doc
            for track in sorted(f.quality_scores):
                if wanted is None or track in wanted:
                    yield seq.id, f.id, track, f.quality_scores[track], None


def _native(dataset: Dataset, track: str, value: float) -> float:
    return 1.0 - value if track in dataset.flipped_tracks else value


def format_score_rows(rows: Iterable[tuple[str, str, str, float, str | None]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_COLUMNS_WITH_DOC)
    for seq_id, frame_id, track, value, doc in rows:
        w.writerow((seq_id, frame_id, track, format_value(value), doc or ""))
    return buf.getvalue()


def save_score_table(dataset: Dataset, path: str | os.PathLike, tracks: Iterable[str] | None = None) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, format_score_rows(iter_score_rows(dataset, tracks)))
