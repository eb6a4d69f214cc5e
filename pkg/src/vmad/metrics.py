"""Biometric error rates over fused scores.

Convention used everywhere: an attempt is classified as morph iff its score
is strictly greater than the threshold. Hence

    APCER(t) = #{morph scores <= t} / #morph
    BPCER(t) = #{bona fide scores > t} / #bona fide
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateCurve, EmptySet

# B10 / B20 / B100 operating points.
OPERATING_POINTS = {"bpcer10": 0.10, "bpcer20": 0.05, "bpcer100": 0.01}
SUMMARY_COLUMNS = ("strategy", "eer", "bpcer10", "bpcer20", "bpcer100")
DET_COLUMNS = ("threshold", "apcer", "bpcer", "apcer_nd", "bpcer_nd")


def _population(scores, what: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySet(f"{what} score set is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} scores must be finite")
    return arr


def apcer(morph_scores, thr: float) -> float:
    m = _population(morph_scores, "morph")
    return int(np.count_nonzero(m <= thr)) / m.size


def bpcer(bonafide_scores, thr: float) -> float:
    b = _population(bonafide_scores, "bona fide")
    return int(np.count_nonzero(b > thr)) / b.size


@dataclass(frozen=True)
class LabeledScoreSet:
    bonafide: np.ndarray
    morph: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bonafide", _population(self.bonafide, "bona fide"))
        object.__setattr__(self, "morph", _population(self.morph, "morph"))


@dataclass(frozen=True)
class DetCurve:
    """Operating points ordered by strictly increasing threshold."""

    thresholds: np.ndarray
    apcer: np.ndarray
    bpcer: np.ndarray
    n_bonafide: int
    n_morph: int

    def __len__(self) -> int:
        return len(self.thresholds)

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.apcer.tolist(), self.bpcer.tolist()))


def det_curve(scores: LabeledScoreSet) -> DetCurve:
    """One point per distinct score plus a sentinel on either side of the range."""
    b = np.sort(scores.bonafide)
    m = np.sort(scores.morph)
    distinct = np.unique(np.concatenate([b, m]))
    below = np.nextafter(distinct[0], -np.inf)
    above = np.nextafter(distinct[-1], np.inf)
    thr = np.concatenate([[below], distinct, [above]])
    # side="right" counts values <= t
    ap = np.searchsorted(m, thr, side="right") / m.size
    bp = (b.size - np.searchsorted(b, thr, side="right")) / b.size
    return DetCurve(thr, ap, bp, b.size, m.size)


def eer(curve: DetCurve, interpolate: bool = True) -> tuple[float, float]:
    """Equal error rate and the threshold where it occurs.

    Default: linear interpolation between the two adjacent points where
    ``apcer - bpcer`` changes sign. If a run of points has exactly equal
    rates, the threshold is the midpoint of the interval over which the
    step functions keep that value. ``interpolate=False`` returns the
    average of the two rates at the point where they are closest.
    """
    ap, bp, thr = curve.apcer, curve.bpcer, curve.thresholds
    diff = ap - bp

    if not interpolate:
        k = int(np.argmin(np.abs(diff)))
        return float((ap[k] + bp[k]) / 2.0), float(thr[k])

    zero = np.flatnonzero(diff == 0)
    if zero.size:
        k = int(zero[0])
        end = k
        while end + 1 < len(diff) and diff[end + 1] == 0:
            end += 1
        hi = thr[end + 1] if end + 1 < len(thr) else thr[end]
        return float(ap[k]), float((thr[k] + hi) / 2.0)

    cross = np.flatnonzero((diff[:-1] < 0) & (diff[1:] > 0))
    if cross.size == 0:
        raise DegenerateCurve("apcer - bpcer never changes sign")
    k = int(cross[0])
    w = -diff[k] / (diff[k + 1] - diff[k])
    rate = ap[k] + w * (ap[k + 1] - ap[k])
    return float(rate), float(thr[k] + w * (thr[k + 1] - thr[k]))


def bpcer_at_apcer(curve: DetCurve, alpha: float) -> float:
    """Lowest BPCER over operating points with APCER <= alpha (1.0 if none)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    ok = curve.apcer <= alpha
    if not np.any(ok):
        return 1.0
    return float(curve.bpcer[ok].min())


@dataclass(frozen=True)
class Summary:
    strategy: str
    eer: float
    bpcer10: float
    bpcer20: float
    bpcer100: float

    def row(self) -> tuple[str, str, str, str, str]:
        return (
            self.strategy,
            *(f"{v:.6f}" for v in (self.eer, self.bpcer10, self.bpcer20, self.bpcer100)),
        )


def summarize(strategy: str, curve: DetCurve, interpolate: bool = True) -> Summary:
    rate, _ = eer(curve, interpolate=interpolate)
    return Summary(strategy, rate, *(bpcer_at_apcer(curve, a) for a in OPERATING_POINTS.values()))


# -- export ------------------------------------------------------------------

_STD_NORMAL = NormalDist()


def normal_deviate(rate: float) -> float:
    """Probit transform used for DET plot axes; presentation only."""
    if rate <= 0.0:
        return -math.inf
    if rate >= 1.0:
        return math.inf
    return _STD_NORMAL.inv_cdf(rate)


def format_det(curve: DetCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DET_COLUMNS)
    for t, a, b in curve.points:
        w.writerow((repr(t), repr(a), repr(b), repr(normal_deviate(a)), repr(normal_deviate(b))))
    return buf.getvalue()


def format_summary(rows: Iterable[Summary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in rows:
        w.writerow(s.row())
    return buf.getvalue()


_TICKS = (0.001, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95)
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def det_svg(curves: Sequence[tuple[str, DetCurve]], size: int = 480, floor: float = 1e-3) -> str:
    """Minimal deterministic SVG of DET curves on normal-deviate axes.

    Rates below ``floor`` (or above ``1 - floor``) are pinned to the border.
    """
    lo, hi = normal_deviate(floor), normal_deviate(1 - floor)
    margin = 50
    span = size - 2 * margin

    def px(rate: float) -> float:
        z = min(max(normal_deviate(min(max(rate, floor), 1 - floor)), lo), hi)
        return margin + (z - lo) / (hi - lo) * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="10">',
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="#000"/>',
    ]
    for t in _TICKS:
        p = px(t)
        parts.append(f'<line x1="{p:.2f}" y1="{margin}" x2="{p:.2f}" y2="{size - margin}" stroke="#ddd"/>')
        parts.append(f'<line x1="{margin}" y1="{size - p:.2f}" x2="{size - margin}" y2="{size - p:.2f}" stroke="#ddd"/>')
        parts.append(f'<text x="{p:.2f}" y="{size - margin + 14}" text-anchor="middle">{t:g}</text>')
        parts.append(f'<text x="{margin - 4}" y="{size - p + 3:.2f}" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{size / 2}" y="{size - 12}" text-anchor="middle">APCER</text>')
    parts.append(
        f'<text x="14" y="{size / 2}" text-anchor="middle" transform="rotate(-90 14 {size / 2})">BPCER</text>'
    )
    for i, (name, curve) in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(a):.2f},{size - px(b):.2f}" for _, a, b in curve.points)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{margin + 8}" y="{margin + 14 + 12 * i}" fill="{color}">{_escape(name)}</text>'
        )
    parts.append("</svg>\n")
    return "\n".join(parts)


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
