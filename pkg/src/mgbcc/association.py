"""Cross-view ball association and the unified contrastive mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .granular import BallSet


@dataclass
class AssociationMatrix:
    view_pair: tuple[int, int]
    matrix: np.ndarray
    tau: float

    @property
    def T(self) -> "AssociationMatrix":
        return AssociationMatrix(self.view_pair[::-1], self.matrix.T.copy(), self.tau)


@dataclass
class MaskMatrix:
    """2k x 2k block mask ``[[A_m, P], [P^T, A_n]]``.

    Row i's positives are the columns holding 1, its negatives every other
    column except i itself.
    """
    M: np.ndarray

    @property
    def k(self) -> int:
        return self.M.shape[0] // 2

    @property
    def positives(self) -> list[np.ndarray]:
        return [np.flatnonzero(row) for row in self.M]

    @property
    def negatives(self) -> list[np.ndarray]:
        neg = self.negative_mask
        return [np.flatnonzero(row) for row in neg]

    @property
    def negative_mask(self) -> np.ndarray:
        neg = self.M == 0
        np.fill_diagonal(neg, False)
        return neg


def membership_counts(s_m: BallSet, s_n: BallSet) -> np.ndarray:
    """Number of shared samples for every (ball of m, ball of n) pair."""
    if not np.array_equal(np.sort(s_m.ids), np.sort(s_n.ids)):
        raise ValueError("ball sets were built from different sample ids")
    # align s_n's rows to s_m's id order
    order_n = np.argsort(s_n.ids)
    rank_m = np.argsort(np.argsort(s_m.ids))
    labels_n = s_n.labels[order_n][rank_m]
    counts = np.zeros((s_m.k, s_n.k), dtype=np.int64)
    np.add.at(counts, (s_m.labels, labels_n), 1)
    return counts


def association_rule(shared, size_i, size_j, tau: float):
    """1 where ``shared / min(size_i, size_j) >= tau`` (broadcasts)."""
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    smaller = np.minimum(size_i, size_j)
    return (np.asarray(shared) / smaller >= tau).astype(np.int8)


def cross_association(s_m: BallSet, s_n: BallSet, tau: float = 0.1) -> AssociationMatrix:
    shared = membership_counts(s_m, s_n)
    P = association_rule(shared, s_m.sizes[:, None], s_n.sizes[None, :], tau)
    return AssociationMatrix((s_m.view_id, s_n.view_id), P, tau)


def assemble_mask(a_m, a_n, p_mn) -> MaskMatrix:
    a_m, a_n, p_mn = (np.asarray(a, dtype=np.int8) for a in (a_m, a_n, p_mn))
    k = a_m.shape[0]
    for name, a in (("A_m", a_m), ("A_n", a_n), ("P", p_mn)):
        if a.shape != (k, k):
            raise ValueError(f"{name} has shape {a.shape}, expected {(k, k)}")
    M = np.block([[a_m, p_mn], [p_mn.T, a_n]])
    np.fill_diagonal(M, 0)
    return MaskMatrix(M)


def pair_mask(s_m: BallSet, s_n: BallSet, tau: float = 0.1) -> MaskMatrix:
    if s_m.k != s_n.k:
        raise ValueError(f"views {s_m.view_id} and {s_n.view_id} have different ball counts "
                         f"({s_m.k} vs {s_n.k}); use the same granularity for every view")
    P = cross_association(s_m, s_n, tau)
    return assemble_mask(s_m.overlap, s_n.overlap, P.matrix)
