import numpy as np
import pytest

from audiodiff.dsp import white_noise
from audiodiff.errors import ContractError, ParameterError
from audiodiff.metrics import (GaussianStats, MelStatsEmbedder,
                               RandomLinearClassifier,
                               RandomProjectionEmbedder, default_embedders,
                               evaluate_suite, fit_gaussian, frechet_distance,
                               label_kl)


def _stats(mean, cov):
    return GaussianStats(mean=np.asarray(mean, dtype=float),
                         cov=np.asarray(cov, dtype=float), count=2)


def test_frechet_closed_forms():
    tol = 1e-9
    # mean shift only
    a = _stats([0.0], [[1.0]])
    b = _stats([1.0], [[1.0]])
    assert abs(frechet_distance(a, b) - 1.0) < tol
    # variance change only: 1 + 4 - 2*sqrt(4) = 1
    c = _stats([0.0], [[4.0]])
    assert abs(frechet_distance(a, c) - 1.0) < tol
    # diagonal 2-d composite: 2 + (2 + 13) - 2*(2 + 3) = 7
    d = _stats([0.0, 0.0], np.eye(2))
    e = _stats([1.0, 1.0], np.diag([4.0, 9.0]))
    assert abs(frechet_distance(d, e) - 7.0) < tol


def test_frechet_symmetry_identity_and_clamp():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 3))
    y = rng.standard_normal((200, 3)) @ np.diag([1.0, 2.0, 0.5]) + 0.3
    a = fit_gaussian(x)
    b = fit_gaussian(y)
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a),
                                                   abs=1e-10)
    assert frechet_distance(a, a) < 1e-10
    assert frechet_distance(a, b) >= 0.0
    with pytest.raises(ContractError):
        frechet_distance(a, _stats([0.0], [[1.0]]))  # dimension mismatch


def test_fit_gaussian_unbiased_hand_case():
    stats = fit_gaussian(np.array([[0.0, 0.0], [2.0, 0.0]]))
    assert np.array_equal(stats.mean, [1.0, 0.0])
    assert np.array_equal(stats.cov, [[2.0, 0.0], [0.0, 0.0]])
    assert stats.count == 2
    with pytest.raises(ParameterError):
        fit_gaussian(np.zeros((1, 4)))


class _FixedClassifier:
    def __init__(self, table):
        self.table = table

    def probabilities(self, key):
        return np.asarray(self.table[key], dtype=float)


def test_label_kl_identical_is_exactly_zero():
    clf = _FixedClassifier({"a": [0.7, 0.3], "b": [0.1, 0.9]})
    assert label_kl(["a", "b"], ["a", "b"], clf) == 0.0


def test_label_kl_flooring_matches_direct_formula():
    clf = _FixedClassifier({"ref": [1.0, 0.0], "gen": [0.0, 1.0]})
    floor = 1e-8
    p = np.maximum([1.0, 0.0], floor)
    p = p / p.sum()
    q = np.maximum([0.0, 1.0], floor)
    q = q / q.sum()
    expect = float(np.sum(p * np.log(p / q)))
    got = label_kl(["ref"], ["gen"], clf, floor=floor)
    assert got == pytest.approx(expect, rel=1e-12)
    assert np.isfinite(got)
    # averaged over pairs
    two = label_kl(["ref", "ref"], ["gen", "ref"], clf, floor=floor)
    assert two == pytest.approx(expect / 2.0, rel=1e-12)
    with pytest.raises(ParameterError):
        label_kl(["ref"], [], clf)


def test_embedders_are_deterministic_and_sized():
    w = white_noise(0.5, amplitude=0.3, seed=1)
    mel = MelStatsEmbedder(n_mels=32)
    assert mel.embed(w).shape == (32,)
    assert np.array_equal(mel.embed(w), mel.embed(w))
    proj = RandomProjectionEmbedder(dim=16, n_mels=32, seed=5)
    assert proj.embed(w).shape == (16,)
    assert np.array_equal(proj.embed(w), proj.embed(w))
    other = RandomProjectionEmbedder(dim=16, n_mels=32, seed=6)
    assert not np.array_equal(proj.embed(w), other.embed(w))

    names = [name for name, _ in default_embedders()]
    assert names == ["mel-stats", "rand-proj-32"]


def test_classifier_outputs_distributions():
    clf = RandomLinearClassifier(n_labels=6, seed=2)
    for seed in range(3):
        p = clf.probabilities(white_noise(0.3, amplitude=0.2, seed=seed))
        assert p.shape == (6,)
        assert np.all(p > 0.0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        RandomLinearClassifier(n_labels=1)


def test_evaluate_suite_identical_sets_are_null(tmp_path):
    clips = [white_noise(0.4, amplitude=0.3, seed=s) for s in range(6)]
    report = evaluate_suite(clips, clips)
    for metric, embedder, value in report.rows:
        assert value < 1e-6, (metric, embedder)
    assert report.value("frechet", "mel-stats") < 1e-6
    assert report.value("frechet", "rand-proj-32") < 1e-6
    assert report.value("label_kl") == 0.0

    path = tmp_path / "metrics.csv"
    report.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "metric,embedder,value"
    assert len(lines) == 1 + len(report.rows)
    with pytest.raises(KeyError):
        report.value("nope")


def test_evaluate_suite_separates_different_sets():
    quiet = [white_noise(0.4, amplitude=0.05, seed=s) for s in range(8)]
    loud = [white_noise(0.4, amplitude=0.8, seed=100 + s) for s in range(8)]
    same = evaluate_suite(quiet[:4], quiet[4:])
    diff = evaluate_suite(quiet[:4], loud[:4])
    assert diff.value("frechet", "mel-stats") > \
        same.value("frechet", "mel-stats")
    assert diff.value("label_kl") > 0.0
