import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_bpcer_at, brute_det, brute_eer
from vmad.errors import DegenerateCurve, EmptySet
from vmad.metrics import (
    DET_COLUMNS,
    SUMMARY_COLUMNS,
    LabeledScoreSet,
    apcer,
    bpcer,
    bpcer_at_apcer,
    det_curve,
    det_svg,
    eer,
    format_det,
    format_summary,
    normal_deviate,
    summarize,
)


def curve_of(bon, mor):
    return det_curve(LabeledScoreSet(np.asarray(bon, float), np.asarray(mor, float)))


def test_apcer_bpcer_convention():
    # morph iff score > thr
    assert apcer([0.2, 0.5, 0.9], 0.5) == pytest.approx(2 / 3)
    assert bpcer([0.2, 0.5, 0.9], 0.5) == pytest.approx(1 / 3)


def test_empty_population_rejected():
    with pytest.raises(EmptySet):
        LabeledScoreSet(np.array([]), np.array([0.5]))
    with pytest.raises(EmptySet):
        apcer([], 0.5)


def test_perfect_separation_has_zero_eer():
    rate, thr = eer(curve_of([0.1, 0.2], [0.8, 0.9]))
    assert rate == 0.0
    assert 0.2 <= thr < 0.8


def test_identical_populations_eer_half():
    rate, _ = eer(curve_of([0.5, 0.5], [0.5, 0.5]))
    assert rate == pytest.approx(0.5)


def test_overlapping_example_eer():
    # one error on each side out of two; equal rates hold for t in [0.3, 0.4)
    rate, thr = eer(curve_of([0.1, 0.4], [0.3, 0.8]))
    assert rate == 0.5
    assert thr == pytest.approx(0.35)


def test_midpoint_mode():
    rate, _ = eer(curve_of([0.1, 0.4], [0.3, 0.8]), interpolate=False)
    assert rate == 0.5


def test_sentinels_bracket_range():
    c = curve_of([0.3], [0.6])
    assert (c.apcer[0], c.bpcer[0]) == (0.0, 1.0)
    assert (c.apcer[-1], c.bpcer[-1]) == (1.0, 0.0)
    assert np.all(np.diff(c.thresholds) > 0)


def test_bpcer_at_apcer_rejects_bad_alpha():
    c = curve_of([0.3], [0.6])
    for alpha in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            bpcer_at_apcer(c, alpha)


def test_degenerate_curve():
    from vmad.metrics import DetCurve

    c = DetCurve(np.array([0.0, 1.0]), np.array([0.0, 0.0]), np.array([1.0, 0.5]), 2, 2)
    with pytest.raises(DegenerateCurve):
        eer(c)


def _check_against_brute(bon, mor):
    c = curve_of(bon, mor)
    ref = brute_det(bon, mor)
    assert len(c) == len(ref)
    assert c.apcer.tolist() == [a for _, a, _ in ref]
    assert c.bpcer.tolist() == [b for _, _, b in ref]
    assert c.thresholds[1:-1].tolist() == [t for t, _, _ in ref[1:-1]]
    assert abs(eer(c)[0] - brute_eer(ref)) <= 1e-9
    for alpha in (0.1, 0.05, 0.01):
        assert bpcer_at_apcer(c, alpha) == brute_bpcer_at(ref, alpha)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=40),
    st.lists(st.floats(0, 1), min_size=1, max_size=40),
)
def test_matches_brute_sweep(bon, mor):
    _check_against_brute(bon, mor)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(0, 5), min_size=1, max_size=30),
    st.lists(st.integers(0, 5), min_size=1, max_size=30),
)
def test_matches_brute_sweep_with_ties(bon, mor):
    _check_against_brute([v / 5 for v in bon], [v / 5 for v in mor])


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(-1000, 1000), min_size=2, max_size=30),
    st.lists(st.integers(-1000, 1000), min_size=2, max_size=30),
)
def test_rates_invariant_under_monotone_transform(bon, mor):
    # t**3 + 7t is strictly increasing and exact in float64 on this range
    f = lambda v: [float(t) ** 3 + 7.0 * t for t in v]  # noqa: E731
    a = curve_of(bon, mor)
    b = curve_of(f(bon), f(mor))
    assert a.apcer.tolist() == b.apcer.tolist()
    assert a.bpcer.tolist() == b.bpcer.tolist()
    assert eer(a)[0] == pytest.approx(eer(b)[0], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=50),
    st.lists(st.floats(0, 1), min_size=1, max_size=50),
)
def test_operating_points_ordered(bon, mor):
    s = summarize("x", curve_of(bon, mor))
    assert s.bpcer100 >= s.bpcer20 >= s.bpcer10


def test_normal_deviate():
    assert normal_deviate(0.5) == 0.0
    assert normal_deviate(0.0) == -math.inf
    assert normal_deviate(1.0) == math.inf
    assert normal_deviate(0.975) == pytest.approx(1.959964, abs=1e-6)


def test_format_det_and_summary_columns():
    c = curve_of([0.1, 0.4], [0.3, 0.8])
    lines = format_det(c).splitlines()
    assert lines[0] == ",".join(DET_COLUMNS)
    assert len(lines) == 1 + len(c)
    text = format_summary([summarize("avg", c)])
    head, row = text.splitlines()
    assert head == ",".join(SUMMARY_COLUMNS)
    assert row.split(",")[:2] == ["avg", "0.500000"]


def test_svg_is_deterministic():
    c = curve_of([0.1, 0.4, 0.2], [0.3, 0.8, 0.7])
    a = det_svg([("avg", c), ("med", c)])
    assert a == det_svg([("avg", c), ("med", c)])
    assert a.startswith("<svg") or a.startswith("<?xml")
    assert "avg" in a and "med" in a
