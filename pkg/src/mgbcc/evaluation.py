"""Clustering phase and external clustering metrics (ACC, NMI, purity)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .granular import kmeans, sse


@dataclass
class ClusteringResult:
    labels: np.ndarray
    fused: np.ndarray
    metrics: dict = field(default_factory=dict)


def fuse(h_views) -> np.ndarray:
    """Equal-weight average of per-view latent features."""
    h_views = [np.asarray(h, dtype=float) for h in h_views]
    if not h_views:
        raise ValueError("no views to fuse")
    shape = h_views[0].shape
    for v, h in enumerate(h_views):
        if h.shape != shape:
            raise ValueError(f"view {v} has shape {h.shape}, expected {shape}")
    return np.mean(h_views, axis=0)


def cluster(z, n_clusters: int, rng=None, restarts: int = 10) -> np.ndarray:
    """k-means labels with the lowest SSE over ``restarts`` runs."""
    return kmeans(np.asarray(z, dtype=float), n_clusters, np.random.default_rng(rng), n_init=restarts)


def _check(pred, truth):
    pred, truth = np.asarray(pred).reshape(-1), np.asarray(truth).reshape(-1)
    if len(pred) != len(truth):
        raise ValueError(f"label lengths differ: {len(pred)} vs {len(truth)}")
    if len(pred) == 0:
        raise ValueError("empty labelling")
    return pred, truth


def contingency(pred, truth) -> np.ndarray:
    pred, truth = _check(pred, truth)
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy(pred, truth) -> float:
    """Fraction matched under the best one-to-one cluster-to-class mapping."""
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return table[rows, cols].sum() / table.sum()


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information normalised by the geometric mean of the entropies."""
    table = contingency(pred, truth).astype(float)
    n = table.sum()
    hp, ht = _entropy(table.sum(1)), _entropy(table.sum(0))
    if hp == 0 or ht == 0:
        # both constant is a perfect (trivial) match
        return 1.0 if hp == ht else 0.0
    pij = table / n
    outer = np.outer(table.sum(1), table.sum(0)) / n ** 2
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return min(max(mi / np.sqrt(hp * ht), 0.0), 1.0)


def purity(pred, truth) -> float:
    table = contingency(pred, truth)
    return table.max(axis=1).sum() / table.sum()


def evaluate_labels(pred, truth) -> dict:
    return {"acc": float(accuracy(pred, truth)), "nmi": float(nmi(pred, truth)),
            "pur": float(purity(pred, truth))}


def cluster_views(h_views, n_clusters: int, truth=None, rng=None, restarts: int = 10) -> ClusteringResult:
    z = fuse(h_views)
    labels = cluster(z, n_clusters, rng, restarts)
    metrics = {"sse": sse(z, labels)}
    if truth is not None:
        metrics.update(evaluate_labels(labels, truth))
    return ClusteringResult(labels, z, metrics)


REPORT_KEYS = ("acc", "nmi", "pur", "k", "p", "tau", "lambda", "d", "seed", "epochs")


def metrics_record(metrics: dict, cfg, n_clusters: int) -> dict:
    rec = {
        "acc": metrics.get("acc"), "nmi": metrics.get("nmi"), "pur": metrics.get("pur"),
        "k": n_clusters, "p": cfg.p, "tau": cfg.tau, "lambda": cfg.lam, "d": cfg.dim,
        "seed": cfg.seed, "epochs": cfg.epochs,
    }
    return {k: rec[k] for k in REPORT_KEYS}


def format_text(record: dict) -> str:
    """Flat ``key=value`` lines, in the fixed report key order."""
    return "".join(f"{k}={_fmt(record[k])}\n" for k in REPORT_KEYS if k in record)


def format_json(record: dict) -> str:
    return json.dumps(record, indent=2) + "\n"


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)
