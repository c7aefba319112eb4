import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgbcc.evaluation import (REPORT_KEYS, accuracy, cluster, cluster_views, contingency,
                              format_text, fuse, metrics_record, nmi, purity)
from mgbcc.granular import sse
from mgbcc.model import TrainConfig

from oracles import brute_force_accuracy, entropy_nmi


# -- fuse -------------------------------------------------------------------------

def test_fuse_examples():
    h = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(fuse([h]), h)
    np.testing.assert_array_equal(fuse([h, -h]), 0.0)
    np.testing.assert_allclose(fuse([[[1.0, 0.0]], [[0.0, 1.0]]]), [[0.5, 0.5]])


def test_fuse_shape_mismatch():
    with pytest.raises(ValueError):
        fuse([np.zeros((3, 2)), np.zeros((3, 3))])


# -- cluster ------------------------------------------------------------------------

def test_cluster_recovers_separated_gaussians():
    rng = np.random.default_rng(0)
    centers = np.array([[0, 0], [10, 0], [0, 10]], float)
    truth = np.repeat(np.arange(3), 50)
    z = centers[truth] + rng.normal(size=(150, 2))  # separation 10x the std
    labels = cluster(z, 3, rng=1)
    assert accuracy(labels, truth) == 1.0


def test_cluster_trivial_k():
    z = np.random.default_rng(1).normal(size=(7, 2))
    assert len(set(cluster(z, 1, rng=0))) == 1
    assert sse(z, cluster(z, 7, rng=0)) == 0.0
    with pytest.raises(ValueError):
        cluster(z, 8, rng=0)


def test_cluster_views_reports_metrics():
    rng = np.random.default_rng(2)
    truth = np.repeat([0, 1], 20)
    h = np.where(truth[:, None] == 0, -5.0, 5.0) + rng.normal(size=(40, 2))
    res = cluster_views([h, h + 0.1], 2, truth, rng=0)
    assert res.metrics["acc"] == 1.0 and res.metrics["nmi"] == 1.0
    assert len(set(res.labels)) <= 2
    assert res.fused.shape == (40, 2)
    assert "acc" not in cluster_views([h], 2, rng=0).metrics


# -- metrics ------------------------------------------------------------------------

def test_accuracy_examples():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert accuracy([2, 0, 1], [0, 1, 2]) == 1.0
    assert accuracy([1, 1, 1, 0], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-12)


def test_length_mismatch():
    for f in (accuracy, nmi, purity):
        with pytest.raises(ValueError):
            f([0, 1], [0, 1, 1])


def test_nmi_examples():
    assert nmi([1, 1, 0, 0], [0, 0, 1, 1]) == pytest.approx(1.0, abs=1e-12)
    assert nmi([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)
    assert nmi([0, 0, 0], [1, 1, 1]) == 1.0
    assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0


def test_nmi_hand_value():
    # truth [0,0,1,1], pred [0,0,0,1]: H(t) = ln 2, H(p) = -(3/4 ln 3/4 + 1/4 ln 1/4),
    # I = 1/2 ln(4/3) + 1/4 ln(2/3) + 1/4 ln 2
    ht = math.log(2)
    hp = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    mi = 0.5 * math.log(4 / 3) + 0.25 * math.log(2 / 3) + 0.25 * math.log(2)
    assert nmi([0, 0, 0, 1], [0, 0, 1, 1]) == pytest.approx(mi / math.sqrt(hp * ht), abs=1e-9)


def test_nmi_independent_partitions_near_zero():
    rng = np.random.default_rng(0)
    assert nmi(rng.integers(0, 4, 10_000), rng.integers(0, 4, 10_000)) <= 0.05


def test_purity_examples():
    assert purity([0, 1, 2], [0, 1, 2]) == 1.0
    assert purity([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5
    assert purity([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 2, 2]) == pytest.approx(4 / 6, abs=1e-9)


def test_contingency_counts():
    np.testing.assert_array_equal(contingency([5, 5, 7], ["a", "b", "b"]), [[1, 1], [0, 1]])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_metrics_against_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    kp, kt = rng.integers(1, 7, size=2)
    pred, truth = rng.integers(0, kp, n), rng.integers(0, kt, n)
    assert accuracy(pred, truth) == pytest.approx(brute_force_accuracy(pred.tolist(), truth.tolist()), abs=1e-12)
    if len(set(pred)) > 1 and len(set(truth)) > 1:
        assert nmi(pred, truth) == pytest.approx(entropy_nmi(pred.tolist(), truth.tolist()), abs=1e-9)
    # invariant under relabelling either side
    perm = rng.permutation(10)
    for f in (accuracy, nmi, purity):
        v = f(pred, truth)
        assert 0.0 <= v <= 1.0
        assert f(perm[pred], truth) == pytest.approx(v, abs=1e-12)
        assert f(pred, perm[truth]) == pytest.approx(v, abs=1e-12)
    assert purity(pred, truth) >= 1 / len(set(truth)) - 1e-12


# -- reporting ------------------------------------------------------------------------

def test_report_format():
    rec = metrics_record({"acc": 0.5, "nmi": 0.25, "pur": None}, TrainConfig(dim=8), 3)
    assert tuple(rec) == REPORT_KEYS
    text = format_text(rec)
    assert text.splitlines()[:3] == ["acc=0.5", "nmi=0.25", "pur=NA"]
    assert "lambda=1.0" in text and "d=8" in text
