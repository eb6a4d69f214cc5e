from dataclasses import replace

import numpy as np
import pytest

from vmad.errors import InvalidConfig
from vmad.model import Label, format_manifest, format_score_rows, iter_score_rows, validate_dataset
from vmad.synth import (
    MAD_TRACK,
    QUALITY_TRACK,
    ScenarioConfig,
    generate_scenario,
    reference_scale_config,
    scenario_suite,
)


def frame_pairs(ds):
    """(quality, score, label) for every attempt frame."""
    q, s, lab = [], [], []
    for a in ds.attempts:
        q.extend(ds.quality_series(a.sequence, QUALITY_TRACK))
        s.extend(ds.mad_series(a, MAD_TRACK))
        lab.extend([a.label] * len(ds.sequence(a.sequence)))
    return np.array(q), np.array(s), np.array(lab)


def quartile_sds(q, s, lab, label, mean):
    resid = s[lab == label] - mean
    qq = q[lab == label]
    edges = np.quantile(qq, [0, 0.25, 0.5, 0.75, 1])
    idx = np.clip(np.searchsorted(edges, qq, side="right") - 1, 0, 3)
    return [float(np.std(resid[idx == k])) for k in range(4)]


def test_default_scenario_is_valid():
    ds = generate_scenario(ScenarioConfig())
    assert validate_dataset(ds).ok
    counts = ds.labeled_counts()
    assert counts[Label.BONAFIDE] == 120
    assert counts[Label.MORPH] == 480


def test_zero_coupling_noise_independent_of_quality():
    cfg = ScenarioConfig(quality_noise_coupling=0.0, base_noise_sd=0.05, seed=1)
    q, s, lab = frame_pairs(generate_scenario(cfg))
    assert np.count_nonzero(lab == Label.MORPH) >= 10_000
    sds = quartile_sds(q, s, lab, Label.MORPH, cfg.morph_score_mean)
    assert 0.9 <= min(sds) / max(sds) and max(sds) / min(sds) <= 1.1


def test_coupling_makes_low_quality_noisier():
    scipy_stats = pytest.importorskip("scipy.stats")
    cfg = ScenarioConfig(quality_noise_coupling=1.0, base_noise_sd=0.05, seed=2)
    q, s, lab = frame_pairs(generate_scenario(cfg))
    m = lab == Label.MORPH
    rho, p = scipy_stats.spearmanr(q[m], np.abs(s[m] - cfg.morph_score_mean))
    assert rho < 0 and p < 0.01


def test_zero_noise_gives_exact_means():
    ds = generate_scenario(ScenarioConfig(base_noise_sd=0.0, n_subjects=5, n_bonafide_docs=5, n_morph_docs=5))
    for a in ds.attempts:
        want = 0.45 if a.label is Label.BONAFIDE else 0.55
        assert np.all(ds.mad_series(a, MAD_TRACK) == want)


def test_same_seed_same_dataset():
    cfg = ScenarioConfig(n_subjects=6, n_bonafide_docs=4, n_morph_docs=6, seed=9)
    a, b = generate_scenario(cfg), generate_scenario(cfg)
    assert format_manifest(a) == format_manifest(b)
    assert format_score_rows(iter_score_rows(a)) == format_score_rows(iter_score_rows(b))


def test_suite_differs_only_by_draws():
    cfg = ScenarioConfig(n_subjects=6, n_bonafide_docs=4, n_morph_docs=6)
    one, two = scenario_suite(cfg, [1, 2])
    assert format_score_rows(iter_score_rows(one)) != format_score_rows(iter_score_rows(two))
    assert one.tracks() == two.tracks() == [MAD_TRACK, QUALITY_TRACK]
    assert len(scenario_suite(cfg, list(range(20)))) == 20
    with pytest.raises(InvalidConfig):
        scenario_suite(cfg, [])


def test_reference_scale_counts():
    ds = generate_scenario(reference_scale_config(seed=0))
    counts = ds.labeled_counts()
    assert len(ds.documents) == 205 + 1142
    assert len(ds.subjects) == 60
    # the order of magnitude of 125 bona fide and 1145 morph attempts
    assert 60 <= counts[Label.BONAFIDE] <= 250
    assert 600 <= counts[Label.MORPH] <= 2300
    lengths = [len(s) for s in ds.sequences]
    assert min(lengths) >= 30 and max(lengths) <= 70


@pytest.mark.parametrize(
    "override",
    [
        {"n_subjects": 1},
        {"frames_per_sequence": (5, 2)},
        {"bonafide_score_mean": 0.7, "morph_score_mean": 0.6},
        {"base_noise_sd": -1.0},
        {"quality_distribution": ("gamma", 1.0, 1.0)},
        {"subjects_with_sequences": 0},
    ],
)
def test_invalid_config(override):
    with pytest.raises(InvalidConfig):
        generate_scenario(replace(ScenarioConfig(), **override))


def test_config_dict_round_trip():
    cfg = ScenarioConfig(quality_distribution=("beta", 2.0, 5.0), seed=4)
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(InvalidConfig):
        ScenarioConfig.from_dict({"bogus": 1})
