"""Learned fusion: fixed-length feature vectors and an epsilon-SVR trained by SMO.

The dual is solved in the usual 2l-variable form

    min_a  1/2 a^T Q a + p^T a    s.t.  y^T a = 0,  0 <= a_t <= C

with ``a = [alpha; alpha*]``, ``y = [+1...; -1...]``, ``p = [eps - z; eps + z]``
and ``Q_ts = y_t y_s K(x_t, x_s)``. The regression function is
``f(x) = sum_i (alpha_i - alpha*_i) K(x_i, x) + b``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptySequence,
    MissingFile,
    ModelFormatError,
    NonConvergence,
    TooFewAttempts,
)
from .model import Attempt, Dataset, Label, is_mad_track
from .quality import QualityNormalization, default_normalization, normalize_quality

DEFAULT_C = 1.0
DEFAULT_GAMMA = 1e-3
DEFAULT_EPSILON = 0.1
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 1_000_000
DEFAULT_MAX_FRAMES = 50

MODEL_MAGIC = "vmad-svr-model"
MODEL_VERSION = "1"

_TAU = 1e-12


# -- features ----------------------------------------------------------------


@dataclass(frozen=True)
class FeatureLayout:
    tracks: tuple[str, ...]
    max_frames: int = DEFAULT_MAX_FRAMES
    pad_value: float = 0.0
    normalizations: Mapping[str, QualityNormalization] = field(default_factory=dict)

    def __post_init__(self):
        if not self.tracks or not is_mad_track(self.tracks[0]):
            raise ValueError("first layout track must be a MAD track")
        if len(set(self.tracks)) != len(self.tracks):
            raise ValueError("layout tracks must be distinct")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if not 0.0 <= self.pad_value <= 1.0:
            raise ValueError("pad_value must lie in [0, 1]")

    @property
    def dimension(self) -> int:
        return self.max_frames * len(self.tracks)

    def normalization(self, track: str) -> QualityNormalization | None:
        if is_mad_track(track):
            return None
        return self.normalizations.get(track, default_normalization(track))

    @property
    def spec(self) -> str:
        parts = []
        for t in self.tracks:
            norm = self.normalization(t)
            parts.append(t if norm is None else f"{t}|{norm}")
        return ",".join(parts)


def parse_layout(text: str, max_frames: int = DEFAULT_MAX_FRAMES, pad_value: float = 0.0) -> FeatureLayout:
    """``mad:dfr,q:magface|median,q:illum|100`` -> FeatureLayout.

    Quality tracks without an explicit normalization get the per-track default.
    """
    tracks, norms = [], {}
    for item in (p.strip() for p in text.split(",")):
        if not item:
            continue
        name, _, norm = item.partition("|")
        tracks.append(name)
        if norm:
            if is_mad_track(name):
                raise ValueError(f"MAD track {name} takes no normalization")
            norms[name] = QualityNormalization.parse(norm)
    return FeatureLayout(tuple(tracks), max_frames, pad_value, norms)


def _track_values(dataset: Dataset, attempt: Attempt, track: str) -> np.ndarray:
    if is_mad_track(track):
        return dataset.mad_series(attempt, track)
    return dataset.quality_series(attempt.sequence, track, attempt=attempt.key)


def fit_layout(layout: FeatureLayout, dataset: Dataset, attempts: Sequence[Attempt]) -> FeatureLayout:
    """Resolve data-dependent normalizations (dataset median) on ``attempts`` only."""
    norms = dict(layout.normalizations)
    sequences = list(dict.fromkeys(a.sequence for a in attempts))
    for track in layout.tracks[1:]:
        norm = layout.normalization(track)
        if norm is not None and norm.needs_fit:
            values = np.concatenate([dataset.quality_series(s, track) for s in sequences])
            norms[track] = norm.fitted(values)
        elif norm is not None:
            norms[track] = norm
    return replace(layout, normalizations=norms)


def assemble_features(dataset: Dataset, attempt: Attempt, layout: FeatureLayout) -> np.ndarray:
    """Concatenate per-track frame values, clipped/padded to ``max_frames``."""
    n = layout.max_frames
    out = np.full(layout.dimension, layout.pad_value, dtype=float)
    for k, track in enumerate(layout.tracks):
        values = _track_values(dataset, attempt, track)
        if values.size == 0:
            raise EmptySequence(f"attempt {attempt.key} has no frames")
        norm = layout.normalization(track)
        if norm is not None:
            values = np.atleast_1d(normalize_quality(values, norm))
        m = min(n, values.size)
        out[k * n : k * n + m] = values[:m]
    return out


def feature_matrix(dataset: Dataset, attempts: Sequence[Attempt], layout: FeatureLayout) -> np.ndarray:
    if not attempts:
        return np.empty((0, layout.dimension))
    return np.vstack([assemble_features(dataset, a, layout) for a in attempts])


def targets_for(attempts: Sequence[Attempt]) -> np.ndarray:
    if any(a.label is None for a in attempts):
        raise DegenerateInput("training needs labeled attempts")
    return np.array([1.0 if a.label is Label.MORPH else 0.0 for a in attempts])


# -- split -------------------------------------------------------------------


def split_dataset(
    attempts: Sequence[Attempt], fraction: float = 0.5, seed: int = 0
) -> tuple[list[Attempt], list[Attempt]]:
    """Label-stratified split that keeps every document's attempts on one side.

    Documents are visited in a seeded random order and each one joins the
    training side when that moves the per-label training count closer to
    ``round(fraction * n_label)``. Both sides keep the input order.
    """
    if not attempts:
        raise TooFewAttempts("nothing to split")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_docs: set[str] = set()
    for label in (Label.BONAFIDE, Label.MORPH):
        groups: dict[str, int] = {}
        for a in attempts:
            if a.label is label:
                groups[a.document] = groups.get(a.document, 0) + 1
        if len(groups) < 2:
            raise TooFewAttempts(f"need at least two {label.value} documents to stratify")
        total = sum(groups.values())
        target = math.floor(fraction * total + 0.5)
        docs = list(groups)
        count = 0
        chosen = []
        for idx in rng.permutation(len(docs)):
            doc = docs[idx]
            size = groups[doc]
            if abs(count + size - target) < abs(count - target):
                chosen.append(doc)
                count += size
        if not chosen or count == total:
            raise TooFewAttempts(f"cannot place {label.value} attempts on both sides")
        train_docs.update(chosen)
    if any(a.label is None for a in attempts):
        raise TooFewAttempts("unlabeled attempts cannot be stratified")
    train = [a for a in attempts if a.document in train_docs]
    test = [a for a in attempts if a.document not in train_docs]
    return train, test


# -- kernel ------------------------------------------------------------------


def rbf_kernel(x, y, gamma: float = DEFAULT_GAMMA) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = x - y
    return math.exp(-gamma * float(np.dot(d, d)))


def rbf_matrix(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.einsum("ij,ij->i", X, X)[:, None]
        + np.einsum("ij,ij->i", Y, Y)[None, :]
        - 2.0 * (X @ Y.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


class KernelRowCache:
    """LRU cache of kernel rows bounded by ``budget_bytes``."""

    def __init__(self, X: np.ndarray, gamma: float, budget_bytes: int | None = None):
        self.X = X
        self.gamma = gamma
        row_bytes = max(1, X.shape[0] * 8)
        if budget_bytes is None:
            self.capacity = X.shape[0]
        else:
            self.capacity = max(2, budget_bytes // row_bytes)
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return r
        self.misses += 1
        r = rbf_matrix(self.X[i : i + 1], self.X, self.gamma)[0]
        self._rows[i] = r
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return r


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray  # alpha - alpha*
    bias: float
    gamma: float
    c: float
    epsilon: float
    layout: FeatureLayout | None = None
    iterations: int = 0
    objective: float = 0.0

    @property
    def dimension(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def n_support(self) -> int:
        return len(self.dual_coefficients)


def train_svr(
    features,
    targets,
    c: float = DEFAULT_C,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    layout: FeatureLayout | None = None,
    cache_bytes: int | None = None,
    debug: bool = False,
) -> SvrModel:
    """SMO with maximal-violating-pair working-set selection.

    Stops once the KKT gap ``max_{I_up} -y G - min_{I_low} -y G`` drops
    below ``tol``. With ``debug=True`` the dual objective is checked to be
    monotone at every step.
    """
    X = np.asarray(features, dtype=float)
    z = np.asarray(targets, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != z.size:
        raise DegenerateInput(f"features {X.shape} do not match {z.size} targets")
    n = z.size
    if n < 2:
        raise DegenerateInput("need at least two training samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(z))):
        raise DegenerateInput("non-finite training data")
    if np.any(z < 0) or np.any(z > 1):
        raise DegenerateInput("targets must lie in [0, 1]")
    if not (c > 0 and gamma > 0 and epsilon >= 0 and tol > 0):
        raise ValueError("need c > 0, gamma > 0, epsilon >= 0, tol > 0")
    if layout is not None and layout.dimension != X.shape[1]:
        raise DimensionMismatch(f"layout expects {layout.dimension} features, got {X.shape[1]}")

    cache = KernelRowCache(X, gamma, cache_bytes)
    l2 = 2 * n
    y = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - z, epsilon + z])
    a = np.zeros(l2)
    G = p.copy()
    qd = 1.0  # K(x, x) for the RBF kernel

    def q_row(t: int) -> np.ndarray:
        k = cache.row(t % n)
        return y[t] * y * np.concatenate([k, k])

    def objective() -> float:
        return 0.5 * float(np.dot(a, G + p))

    last_obj = objective() if debug else 0.0
    iterations = 0
    while True:
        minus_yg = -y * G
        up = ((y > 0) & (a < c)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < c))
        i = int(np.argmax(np.where(up, minus_yg, -np.inf)))
        j = int(np.argmin(np.where(low, minus_yg, np.inf)))
        gap = minus_yg[i] - minus_yg[j]
        if not up[i] or not low[j] or gap < tol:
            break
        if iterations >= max_iter:
            raise NonConvergence(iterations, float(gap))
        iterations += 1

        Qi = q_row(i)
        Qj = q_row(j)
        ai_old, aj_old = a[i], a[j]
        if y[i] != y[j]:
            quad = max(2 * qd + 2 * Qi[j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > c:
                    a[i] = c
                    a[j] = c - diff
            elif a[j] > c:
                a[j] = c
                a[i] = c + diff
        else:
            quad = max(2 * qd - 2 * Qi[j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > c:
                if a[i] > c:
                    a[i] = c
                    a[j] = total - c
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > c:
                if a[j] > c:
                    a[j] = c
                    a[i] = total - c
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total
        G += Qi * (a[i] - ai_old) + Qj * (a[j] - aj_old)

        if debug:
            obj = objective()
            if obj > last_obj + 1e-12 * max(1.0, abs(last_obj)):
                raise AssertionError(f"dual objective increased at iteration {iterations}: {last_obj} -> {obj}")
            last_obj = obj

    bias = -_rho(a, G, y, c)
    coef = a[:n] - a[n:]
    sv = np.flatnonzero(coef != 0)
    return SvrModel(
        support_vectors=X[sv].copy(),
        dual_coefficients=coef[sv].copy(),
        bias=float(bias),
        gamma=gamma,
        c=c,
        epsilon=epsilon,
        layout=layout,
        iterations=iterations,
        # reported in the maximization convention
        objective=-objective(),
    )


def _rho(a: np.ndarray, G: np.ndarray, y: np.ndarray, c: float) -> float:
    yg = y * G
    at_upper = a >= c
    at_lower = a <= 0
    free = ~(at_upper | at_lower)
    if np.any(free):
        return float(yg[free].mean())
    ub = np.inf
    lb = -np.inf
    for t in range(len(a)):
        if at_upper[t]:
            if y[t] < 0:
                ub = min(ub, yg[t])
            else:
                lb = max(lb, yg[t])
        else:
            if y[t] > 0:
                ub = min(ub, yg[t])
            else:
                lb = max(lb, yg[t])
    return float((ub + lb) / 2.0)


def predict_raw(model: SvrModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.dimension:
        raise DimensionMismatch(f"model expects {model.dimension} features, got {X.shape[1]}")
    if model.n_support == 0:
        out = np.full(X.shape[0], model.bias)
    else:
        out = rbf_matrix(X, model.support_vectors, model.gamma) @ model.dual_coefficients + model.bias
    return out[0] if single else out


def predict(model: SvrModel, features):
    """Regression output clamped to [0, 1]; scalar for a single vector."""
    raw = predict_raw(model, features)
    out = np.clip(raw, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


# -- persistence -------------------------------------------------------------


def format_model(model: SvrModel) -> str:
    if model.layout is None:
        raise ModelFormatError("only models with a feature layout can be saved")
    lay = model.layout
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((MODEL_MAGIC, MODEL_VERSION))
    w.writerow(("c", repr(model.c)))
    w.writerow(("gamma", repr(model.gamma)))
    w.writerow(("epsilon", repr(model.epsilon)))
    w.writerow(("bias", repr(model.bias)))
    w.writerow(("max_frames", lay.max_frames))
    w.writerow(("pad_value", repr(lay.pad_value)))
    w.writerow(("tracks", *lay.tracks))
    for t in lay.tracks[1:]:
        w.writerow(("norm", t, str(lay.normalization(t))))
    w.writerow(("n_support", model.n_support))
    w.writerow(("dimension", model.dimension))
    w.writerow(("[support]",))
    for coef, sv in zip(model.dual_coefficients, model.support_vectors):
        w.writerow((repr(float(coef)), *(repr(float(v)) for v in sv)))
    return buf.getvalue()


def parse_model(text: str) -> SvrModel:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != (MODEL_MAGIC, MODEL_VERSION):
        raise ModelFormatError(f"not a {MODEL_MAGIC} v{MODEL_VERSION} file")
    header: dict[str, list[str]] = {}
    norms: dict[str, QualityNormalization] = {}
    k = 1
    try:
        while rows[k] != ["[support]"]:
            key, *vals = rows[k]
            if key == "norm":
                norms[vals[0]] = QualityNormalization.parse(vals[1])
            else:
                header[key] = vals
            k += 1
        layout = FeatureLayout(
            tuple(header["tracks"]),
            int(header["max_frames"][0]),
            float(header["pad_value"][0]),
            norms,
        )
        n_sv = int(header["n_support"][0])
        dim = int(header["dimension"][0])
        body = rows[k + 1 :]
        if len(body) != n_sv:
            raise ModelFormatError(f"expected {n_sv} support rows, found {len(body)}")
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(n_sv, dim + 1)
        model = SvrModel(
            support_vectors=data[:, 1:],
            dual_coefficients=data[:, 0],
            bias=float(header["bias"][0]),
            gamma=float(header["gamma"][0]),
            c=float(header["c"][0]),
            epsilon=float(header["epsilon"][0]),
            layout=layout,
        )
    except (IndexError, KeyError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    if layout.dimension != dim:
        raise ModelFormatError(f"layout dimension {layout.dimension} != stored dimension {dim}")
    return model


def save_model(model: SvrModel, path: str | os.PathLike) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, format_model(model))


def load_model(path: str | os.PathLike, layout: FeatureLayout | None = None) -> SvrModel:
    """Load a model; if ``layout`` is given it must match the stored one."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"model not found: {path}")
    model = parse_model(path.read_text(encoding="utf-8"))
    if layout is not None:
        check_layout(model, layout)
    return model


def check_layout(model: SvrModel, layout: FeatureLayout) -> None:
    stored = model.layout
    if stored is None:
        return
    if layout.dimension != stored.dimension:
        raise DimensionMismatch(
            f"model expects {stored.dimension} features ({stored.spec}), layout gives {layout.dimension}"
        )
    if layout.tracks != stored.tracks or layout.max_frames != stored.max_frames:
        raise DimensionMismatch(f"layout {layout.spec} does not match model layout {stored.spec}")
