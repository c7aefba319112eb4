import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgbcc.association import (assemble_mask, association_rule, cross_association,
                               membership_counts, pair_mask)
from mgbcc.granular import generate_balls_kmeans, make_ballset


def ballset_from_groups(groups, view_id=0, dim=2, seed=0):
    """BallSet whose balls hold exactly the given global ids."""
    ids = np.concatenate([np.asarray(g) for g in groups])
    labels = np.concatenate([[j] * len(g) for j, g in enumerate(groups)])
    h = np.random.default_rng(seed).normal(size=(len(ids), dim))
    return make_ballset(h, labels, ids, view_id)


def test_identical_partitions_give_identity():
    groups = [[0, 1], [2, 3], [4, 5]]
    P = cross_association(ballset_from_groups(groups), ballset_from_groups(groups, 1), 0.1)
    np.testing.assert_array_equal(P.matrix, np.eye(3))
    assert P.view_pair == (0, 1)


def test_ratio_rule_arithmetic():
    # t_i = 4, t_j = 6, t_both = 1: 1 / 4 = 0.25 >= 0.1
    s_m = ballset_from_groups([[0, 1, 2, 3], [4, 5, 6, 7, 8, 9]])
    s_n = ballset_from_groups([[3, 4, 5, 6, 7, 8], [0, 1, 2, 9]], 1)
    counts = membership_counts(s_m, s_n)
    assert counts[0, 0] == 1 and s_m.sizes[0] == 4 and s_n.sizes[0] == 6
    P = cross_association(s_m, s_n, 0.1).matrix
    assert P[0, 0] == 1
    assert cross_association(s_m, s_n, 0.3).matrix[0, 0] == 0
    assert association_rule(1, 4, 6, 0.25) == 1


def test_disjoint_members_never_associate():
    s_m = ballset_from_groups([[0, 1], [2, 3]])
    s_n = ballset_from_groups([[0, 1], [2, 3]], 1)
    P = cross_association(s_m, s_n, 1e-9).matrix
    assert P[0, 1] == 0 and P[1, 0] == 0


def test_mismatched_id_universe():
    with pytest.raises(ValueError):
        cross_association(ballset_from_groups([[0, 1]]), ballset_from_groups([[0, 2]], 1))


def test_tau_bounds():
    s = ballset_from_groups([[0, 1]])
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            cross_association(s, s, bad)


def random_partitions(rng, n=30, k=6):
    ids = rng.permutation(200)[:n]

    def part():
        labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
        rng.shuffle(labels)
        return labels

    h = rng.normal(size=(n, 3))
    return (make_ballset(h, part(), ids, 0),
            make_ballset(rng.normal(size=(n, 3)), part(), rng.permutation(ids), 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_association_transpose_and_monotone(seed, t1, t2):
    rng = np.random.default_rng(seed)
    s_m, s_n = random_partitions(rng)
    lo, hi = sorted((t1, t2))
    P = cross_association(s_m, s_n, lo).matrix
    np.testing.assert_array_equal(cross_association(s_n, s_m, lo).matrix, P.T)
    P_hi = cross_association(s_m, s_n, hi).matrix
    assert np.all(P_hi <= P)
    # every association is backed by a shared sample and the ratio rule
    counts = membership_counts(s_m, s_n)
    small = np.minimum(s_m.sizes[:, None], s_n.sizes[None, :])
    assert np.all(counts[P == 1] >= 1)
    np.testing.assert_array_equal(P, (counts / small >= lo).astype(int))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_tau_one_requires_containment(seed):
    rng = np.random.default_rng(seed)
    s_m, s_n = random_partitions(rng, n=20, k=5)
    P = cross_association(s_m, s_n, 1.0).matrix
    for i, j in zip(*np.nonzero(P)):
        a, b = set(s_m.members[i]), set(s_n.members[j])
        assert a <= b or b <= a


# -- mask ---------------------------------------------------------------------

def test_mask_all_zero():
    z = np.zeros((3, 3))
    mask = assemble_mask(z, z, z)
    assert not mask.M.any()
    assert all(len(p) == 0 for p in mask.positives)
    assert all(len(n) == 5 for n in mask.negatives)


def test_mask_single_ball_pair():
    mask = assemble_mask([[0]], [[0]], [[1]])
    np.testing.assert_array_equal(mask.M, [[0, 1], [1, 0]])
    assert list(mask.positives[0]) == [1]
    assert len(mask.negatives[0]) == 0


def test_mask_block_bookkeeping():
    mask = assemble_mask([[0, 1], [1, 0]], np.zeros((2, 2)), np.eye(2))
    assert list(mask.positives[0]) == [1, 2]
    assert list(mask.negatives[0]) == [3]


def test_mask_shape_error():
    with pytest.raises(ValueError):
        assemble_mask(np.zeros((2, 2)), np.zeros((3, 3)), np.zeros((2, 2)))


def test_unequal_ball_counts_rejected():
    rng = np.random.default_rng(0)
    a = generate_balls_kmeans(rng.normal(size=(12, 2)), 2, rng=0)
    b = generate_balls_kmeans(rng.normal(size=(12, 2)), 3, rng=0, view_id=1)
    with pytest.raises(ValueError, match="different ball counts"):
        pair_mask(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3, 4]), st.floats(0.05, 1.0))
def test_mask_structure_random_ballsets(seed, p, tau):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 40))
    ids = rng.permutation(1000)[:n]
    s_m = generate_balls_kmeans(rng.normal(size=(n, 3)), p, ids, rng, 0)
    s_n = generate_balls_kmeans(rng.normal(size=(n, 3)), p, ids, rng, 1)
    k = s_m.k
    mask = pair_mask(s_m, s_n, tau)
    M = mask.M
    P = cross_association(s_m, s_n, tau).matrix
    np.testing.assert_array_equal(M, M.T)
    assert not np.diag(M).any()
    np.testing.assert_array_equal(M[:k, :k], s_m.overlap)
    np.testing.assert_array_equal(M[k:, k:], s_n.overlap)
    np.testing.assert_array_equal(M[:k, k:], P)
    np.testing.assert_array_equal(M[k:, :k], P.T)
    for i, (pos, neg) in enumerate(zip(mask.positives, mask.negatives)):
        assert not set(pos) & set(neg)
        assert len(pos) + len(neg) == 2 * k - 1
        assert i not in pos and i not in neg
