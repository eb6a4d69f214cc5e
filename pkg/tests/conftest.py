from __future__ import annotations

import pytest

from vmad.model import (
    Dataset,
    DocumentRecord,
    FrameRecord,
    Label,
    SequenceRecord,
    with_attempts,
)


def make_dataset(docs, sequences, subjects=None, frames_per_seq=3) -> Dataset:
    """Small paired dataset.

    ``docs``: iterable of ``(doc_id, label, subject_a, subject_b)``;
    ``sequences``: iterable of ``(seq_id, subject)``.
    """
    documents = tuple(DocumentRecord(d, Label(lab), a, b) for d, lab, a, b in docs)
    seqs = tuple(
        SequenceRecord(s, subj, tuple(FrameRecord(f"f{i}") for i in range(frames_per_seq)))
        for s, subj in sequences
    )
    if subjects is None:
        names = {subj for _, subj in sequences}
        for d in documents:
            names.update(d.contributors)
        subjects = tuple(sorted(names))
    return with_attempts(Dataset(subjects=tuple(subjects), documents=documents, sequences=seqs))


MINIMAL_MANIFEST = """\
# one subject, one document, one three-frame sequence
vmad-manifest,1
[subjects]
subject_id
A
[documents]
document_id,label,subject_a,subject_b
d1,bonafide,A,
[sequences]
sequence_id,subject_id
s1,A
[frames]
sequence_id,frame_id,image_path,image_width,image_height,box_x,box_y,box_w,box_h
s1,f1,,,,,,,
s1,f2,,,,,,,
s1,f3,img/f3.png,64,48,8,4,40,40
"""


@pytest.fixture
def minimal_manifest(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text(MINIMAL_MANIFEST)
    return path
