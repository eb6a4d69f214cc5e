"""Independent reference implementations used to check the package.

These are deliberately naive (plain Python loops, exact arithmetic) and
share no code with ``vmad``.
"""

from __future__ import annotations

import math
from fractions import Fraction


def kahan_sum(values) -> float:
    total = 0.0
    comp = 0.0
    for v in values:
        y = float(v) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def exact_mean(values) -> float:
    vals = [Fraction(float(v)) for v in values]
    return float(sum(vals) / len(vals))


def sort_median(values) -> float:
    s = sorted(float(v) for v in values)
    n = len(s)
    if n % 2:
        return s[n // 2]
    return float((Fraction(s[n // 2 - 1]) + Fraction(s[n // 2])) / 2)


def count_vote(values, thr) -> float:
    hits = 0
    for v in values:
        if v > thr:
            hits += 1
    return hits / len(values)


def hand_wavg(scores, weights) -> float:
    num = Fraction(0)
    den = Fraction(0)
    for s, w in zip(scores, weights):
        num += Fraction(float(s)) * Fraction(float(w))
        den += Fraction(float(w))
    return float(num / den)


def argmax_scan(scores, qualities) -> float:
    best = 0
    for i in range(1, len(qualities)):
        if qualities[i] > qualities[best]:
            best = i
    return float(scores[best])


# -- metrics -----------------------------------------------------------------


def brute_rates(bonafide, morph, thr) -> tuple[float, float]:
    miss = 0
    for s in morph:
        if s <= thr:
            miss += 1
    fa = 0
    for s in bonafide:
        if s > thr:
            fa += 1
    return miss / len(morph), fa / len(bonafide)


def brute_det(bonafide, morph) -> list[tuple[float, float, float]]:
    """O(n^2) sweep: every distinct score plus -inf / +inf sentinels."""
    thresholds = [-math.inf] + sorted(set(float(v) for v in list(bonafide) + list(morph))) + [math.inf]
    return [(t, *brute_rates(bonafide, morph, t)) for t in thresholds]


def brute_det_np(bonafide, morph) -> list[tuple[float, float, float]]:
    """Same sweep as ``brute_det`` but compares every threshold with every score at once."""
    import numpy as np

    b = np.asarray(bonafide, dtype=float)
    m = np.asarray(morph, dtype=float)
    thr = np.array([-math.inf] + sorted(set(b.tolist()) | set(m.tolist())) + [math.inf])
    miss = (m[None, :] <= thr[:, None]).sum(axis=1)
    fa = (b[None, :] > thr[:, None]).sum(axis=1)
    return [(float(t), int(x) / m.size, int(y) / b.size) for t, x, y in zip(thr, miss, fa)]


def dominates_np(bon_x, mor_x, bon_y, mor_y) -> bool:
    """Vectorised ``dominates``."""
    import numpy as np

    pools = [np.asarray(v, dtype=float) for v in (bon_x, mor_x, bon_y, mor_y)]
    thr = np.array([-math.inf] + sorted(set(np.concatenate(pools).tolist())) + [math.inf])[:, None]
    bx, mx, by, my = pools
    ax = (mx[None, :] <= thr).sum(axis=1) / mx.size
    ay = (my[None, :] <= thr).sum(axis=1) / my.size
    fx = (bx[None, :] > thr).sum(axis=1) / bx.size
    fy = (by[None, :] > thr).sum(axis=1) / by.size
    return bool(np.all(ax <= ay) and np.all(fx <= fy))


def brute_eer(points) -> float:
    """Linear-interpolated crossing of apcer - bpcer along a brute sweep."""
    for _, a, b in points:
        if a == b:
            return a
    for (_, a0, b0), (_, a1, b1) in zip(points, points[1:]):
        d0, d1 = a0 - b0, a1 - b1
        if d0 < 0 < d1:
            w = -d0 / (d1 - d0)
            return a0 + w * (a1 - a0)
    raise AssertionError("no crossing")


def brute_bpcer_at(points, alpha) -> float:
    best = 1.0
    for _, a, b in points:
        if a <= alpha and b < best:
            best = b
    return best


def dominates(bon_x, mor_x, bon_y, mor_y) -> bool:
    """True iff x has APCER and BPCER no larger than y at every threshold."""
    thresholds = sorted(set(float(v) for v in list(bon_x) + list(mor_x) + list(bon_y) + list(mor_y)))
    for t in [-math.inf] + thresholds + [math.inf]:
        ax, bx = brute_rates(bon_x, mor_x, t)
        ay, by = brute_rates(bon_y, mor_y, t)
        if ax > ay or bx > by:
            return False
    return True


# -- quality -----------------------------------------------------------------


def histogram_intersection(rows, x, y, w, h) -> float:
    half = w // 2
    left, right = {}, {}
    for r in range(y, y + h):
        for c in range(x, x + half):
            v = int(rows[r][c])
            left[v] = left.get(v, 0) + 1
        for c in range(x + w - half, x + w):
            v = int(rows[r][c])
            right[v] = right.get(v, 0) + 1
    n = half * h
    inter = Fraction(0)
    for v in set(left) | set(right):
        inter += min(Fraction(left.get(v, 0), n), Fraction(right.get(v, 0), n))
    return float(100 * inter)


def loop_defocus(rows, x, y, w, h) -> float:
    """3x3 mean filter with edge replication inside the box, by explicit loops."""
    total = Fraction(0)
    for r in range(h):
        for c in range(w):
            acc = 0
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr = min(max(r + dr, 0), h - 1)
                    cc = min(max(c + dc, 0), w - 1)
                    acc += int(rows[y + rr][x + cc])
            total += abs(Fraction(int(rows[y + r][x + c])) - Fraction(acc, 9))
    return float(100 * total / (w * h) / 255)


# -- svr ---------------------------------------------------------------------


def rbf_loop(x, y, gamma) -> float:
    return math.exp(-gamma * sum((float(a) - float(b)) ** 2 for a, b in zip(x, y)))


def svr_kkt_violations(coef, f, y, c, eps, tol) -> list[str]:
    """ε-SVR optimality conditions per training point.

    ``coef`` is alpha - alpha* for every training row (0 for non-SVs),
    ``f`` the raw model output on the training rows.
    """
    bad = []
    total = 0.0
    for i, (a, fi, yi) in enumerate(zip(coef, f, y)):
        total += a
        r = yi - fi
        if abs(a) > c * (1 + 1e-12):
            bad.append(f"{i}: |coef| {a} > C")
        elif a == 0:
            if abs(r) > eps + tol:
                bad.append(f"{i}: zero coef but |y-f|={abs(r)}")
        elif abs(a) >= c * (1 - 1e-12):
            if a > 0 and r < eps - tol:
                bad.append(f"{i}: coef=+C but y-f={r}")
            if a < 0 and -r < eps - tol:
                bad.append(f"{i}: coef=-C but f-y={-r}")
        else:
            target = eps if a > 0 else -eps
            if abs(r - target) > tol:
                bad.append(f"{i}: free coef but y-f={r}")
    if abs(total) > 1e-9 * max(1.0, c * len(coef)):
        bad.append(f"sum of coefficients {total} != 0")
    return bad
