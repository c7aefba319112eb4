"""Granular balls over latent features.

A ball is a group of neighbouring samples summarised by its center (member
mean) and radius (mean member distance to the center).  Balls are built per
view and per batch, either by a single k-means pass with ``k = max(N // p, 1)``
clusters, or by the classic recursive split-then-merge procedure.

Assignments are discrete and never differentiated; centers and radii are
computed on the live latent tensor so gradients flow through them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

MAX_ITER = 100


# ----------------------------------------------------------------------------
# k-means

def _sq_dists(x, c):
    d = (x * x).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * x @ c.T
    return np.maximum(d, 0.0)


def _plusplus(x, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for i in range(1, k):
        tot = closest.sum()
        if tot > 0:
            idx = rng.choice(n, p=closest / tot)
        else:
            idx = rng.integers(n)
        centers[i] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[i:i + 1])[:, 0])
    return centers


def _fill_empty(x, labels, centers, k):
    """Give every empty cluster the point farthest from its own centroid.

    Only points from clusters with more than one member are taken, so no
    cluster is emptied by the move.
    """
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        dist = ((x - centers[labels]) ** 2).sum(1)
        dist[counts[labels] < 2] = -1.0
        far = int(np.argmax(dist))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        centers[j] = x[far]
    return labels


def _lloyd(x, k, rng, max_iter):
    centers = _plusplus(x, k, rng)
    labels = np.full(len(x), -1)
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(x, centers), axis=1)
        new = _fill_empty(x, new, centers, k)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            centers[j] = x[labels == j].mean(0)
    return labels


def sse(x, labels) -> float:
    """Within-cluster sum of squared distances to the cluster means."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for j in np.unique(labels):
        pts = x[labels == j]
        total += float(((pts - pts.mean(0)) ** 2).sum())
    return total


def kmeans(x, k: int, rng: np.random.Generator, n_init: int = 1, max_iter: int = MAX_ITER) -> np.ndarray:
    """Lloyd's k-means from k-means++ seeding; best of ``n_init`` restarts by SSE.

    Returns integer labels in ``[0, k)``; every label is used.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= N, got k={k}, N={n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("k-means input contains non-finite values")
    if k == n:
        return np.arange(n)
    best, best_sse = None, np.inf
    for _ in range(max(n_init, 1)):
        labels = _lloyd(x, k, rng, max_iter)
        s = sse(x, labels)
        if s < best_sse:
            best, best_sse = labels, s
    return best


# ----------------------------------------------------------------------------
# balls

def ball_count(n: int, p: int) -> int:
    if p < 1:
        raise ValueError(f"granularity p must be >= 1, got {p}")
    return max(n // p, 1)


def ball_stats(points) -> tuple[Tensor, Tensor]:
    """Center (1 x d) and radius (1 x 1) of one ball, both differentiable."""
    points = dc.as_tensor(points)
    n = points.shape[0]
    if n < 1:
        raise ValueError("ball_stats needs at least one point")
    avg = np.full((1, n), 1.0 / n)
    center = dc.matmul(avg, points)
    spread = dc.sub(points, dc.matmul(np.ones((n, 1)), center))
    radius = dc.matmul(avg, dc.row_norms(spread))
    return center, radius


def _batched_stats(h: Tensor, labels, k):
    """Centers (k x d) and radii (k x 1) for all balls at once."""
    n = h.shape[0]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    counts = onehot.sum(0)
    avg = (onehot / counts).T
    centers = dc.matmul(avg, h)
    spread = dc.sub(h, dc.matmul(onehot, centers))
    radii = dc.matmul(avg, dc.row_norms(spread))
    return centers, radii


@dataclass
class GranularBall:
    member_ids: np.ndarray
    center: Tensor
    radius: Tensor

    @property
    def n(self) -> int:
        return len(self.member_ids)


@dataclass
class BallSet:
    """All balls of one view in one batch.

    ``labels[i]`` is the ball of the i-th batch row; ``ids`` are the global
    sample indices of the batch rows.
    """
    view_id: int
    ids: np.ndarray
    labels: np.ndarray
    centers: Tensor
    radii: Tensor
    overlap: np.ndarray = None
    overlap_counts: np.ndarray = None
    _members: list = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def members(self) -> list[np.ndarray]:
        if self._members is None:
            self._members = [np.sort(self.ids[self.labels == j]) for j in range(self.k)]
        return self._members

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    @property
    def balls(self) -> list[GranularBall]:
        return [GranularBall(m, dc.take_rows(self.centers, [j]), dc.take_rows(self.radii, [j]))
                for j, m in enumerate(self.members)]

    def finalize(self) -> "BallSet":
        self.overlap, self.overlap_counts = overlap_matrix(self.centers.value, self.radii.value)
        return self


def make_ballset(h, labels, global_ids=None, view_id: int = 0) -> BallSet:
    """Build a finalized BallSet from fixed assignments."""
    h = dc.as_tensor(h)
    labels = np.asarray(labels, dtype=np.intp)
    n = h.shape[0]
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} rows")
    ids = np.arange(n) if global_ids is None else np.asarray(global_ids)
    if len(np.unique(ids)) != n:
        raise ValueError("global ids must be unique")
    # relabel to a dense 0..k-1 range
    _, labels = np.unique(labels, return_inverse=True)
    k = labels.max() + 1
    centers, radii = _batched_stats(h, labels, k)
    return BallSet(view_id, ids, labels, centers, radii).finalize()


def generate_balls_kmeans(h, p: int, global_ids=None, rng=None, view_id: int = 0) -> BallSet:
    """One k-means pass with ``max(N // p, 1)`` clusters; each cluster is a ball."""
    h = dc.as_tensor(h)
    rng = np.random.default_rng(rng)
    k = ball_count(h.shape[0], p)
    labels = kmeans(h.value, k, rng)
    return make_ballset(h, labels, global_ids, view_id)


def _mean_radius(x):
    return float(np.sqrt(((x - x.mean(0)) ** 2).sum(1)).mean())


def generate_balls_classic(h, eta: int, global_ids=None, rng=None, view_id: int = 0) -> BallSet:
    """Recursive 2-means splitting followed by pairwise merging.

    A ball with more than ``eta`` members splits in two when its radius
    exceeds the size-weighted mean radius of the two halves.  Overlapping
    balls are then merged, closest pair first, until no pair overlaps.
    """
    h = dc.as_tensor(h)
    if eta < 1:
        raise ValueError(f"capacity threshold must be >= 1, got {eta}")
    rng = np.random.default_rng(rng)
    x = h.value
    pending = [np.arange(len(x))]
    done = []
    while pending:
        idx = pending.pop()
        if len(idx) <= eta:
            done.append(idx)
            continue
        sub = x[idx]
        halves = kmeans(sub, 2, rng)
        a, b = idx[halves == 0], idx[halves == 1]
        child = (len(a) * _mean_radius(x[a]) + len(b) * _mean_radius(x[b])) / len(idx)
        if _mean_radius(sub) > child:
            pending.extend([a, b])
        else:
            done.append(idx)

    groups = [list(g) for g in done]
    while len(groups) > 1:
        centers = np.array([x[g].mean(0) for g in groups])
        radii = np.array([_mean_radius(x[g]) for g in groups])
        adj, _ = overlap_matrix(centers, radii)
        if not adj.any():
            break
        gap = np.sqrt(_sq_dists(centers, centers)) - (radii[:, None] + radii[None, :])
        gap = np.where(np.triu(adj, 1) > 0, gap, np.inf)
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        groups[i] = groups[i] + groups[j]
        del groups[j]

    labels = np.empty(len(x), dtype=np.intp)
    for j, g in enumerate(groups):
        labels[g] = j
    return make_ballset(h, labels, global_ids, view_id)


def overlap_matrix(centers, radii) -> tuple[np.ndarray, np.ndarray]:
    """Binary ball-overlap matrix and per-ball overlap counts.

    First pass counts strict overlaps (center distance below the radius
    sum).  Second pass applies the tolerant test

        |c_i - c_j| - (r_i + r_j) < min(r_i, r_j) / min(p_i, p_j)

    with p the first-pass counts, and a zero tolerance where a count is 0.
    Returned counts are the row sums of the final matrix.
    """
    if isinstance(centers, BallSet):
        centers, radii = centers.centers.value, centers.radii.value
    c = np.asarray(centers, dtype=float)
    r = np.asarray(radii, dtype=float).reshape(-1)
    k = len(c)
    dist = np.sqrt(_sq_dists(c, c))
    np.fill_diagonal(dist, 0.0)
    gap = dist - (r[:, None] + r[None, :])
    strict = gap < 0
    np.fill_diagonal(strict, False)
    p = strict.sum(1)
    pmin = np.minimum(p[:, None], p[None, :])
    rmin = np.minimum(r[:, None], r[None, :])
    omega = np.where(pmin > 0, rmin / np.maximum(pmin, 1), 0.0)
    adj = (gap < omega).astype(np.int8)
    np.fill_diagonal(adj, 0)
    adj = np.maximum(adj, adj.T)
    return adj, adj.sum(1).astype(int)


def balls_overlap(c_i, c_j, r_i: float, r_j: float, p_i: int, p_j: int) -> bool:
    """Tolerant overlap test for one pair given their overlap counts."""
    gap = float(np.linalg.norm(np.asarray(c_i, float) - np.asarray(c_j, float))) - (r_i + r_j)
    pm = min(p_i, p_j)
    omega = min(r_i, r_j) / pm if pm > 0 else 0.0
    return gap < omega
