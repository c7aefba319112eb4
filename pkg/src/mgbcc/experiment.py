"""Train / evaluate / sweep / export drivers that read and write files."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import MultiViewDataset, write_matrix
from .evaluation import cluster_views, format_json, format_text, fuse, metrics_record
from .model import MGBCC, EpochSummary, TrainConfig, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("epoch", "l_con", "l_rec", "l_total")
SWEEP_COLUMNS = ("p", "d", "acc", "nmi", "pur")
P_GRID = (1, 2, 4, 8, 16)
D_GRID = (8, 16, 32, 64, 128, 256)


def _loss_row(s: EpochSummary) -> str:
    return f"{s.epoch},{float(s.l_con)!r},{float(s.l_rec)!r},{float(s.l_total)!r}\n"


def evaluate_model(model: MGBCC, ds: MultiViewDataset, n_clusters: int | None = None):
    """Cluster the fused embedding; returns (ClusteringResult, report record)."""
    k = n_clusters or ds.n_clusters
    if k is None:
        raise ValueError("number of clusters unknown: dataset has no labels and none was given")
    # evaluation k-means gets its own stream so results do not depend on training
    res = cluster_views(model.embed(ds.views), k, ds.labels, rng=[model.cfg.seed, 3])
    return res, metrics_record(res.metrics, model.cfg, k)


def write_report(record: dict, out_dir, stem="metrics"):
    out_dir = Path(out_dir)
    (out_dir / f"{stem}.json").write_text(format_json(record))
    (out_dir / f"{stem}.txt").write_text(format_text(record))


def run_train(ds: MultiViewDataset, cfg: TrainConfig, out_dir, resume=None,
              n_clusters: int | None = None) -> dict:
    """Train, writing ``checkpoint.npz``, ``losses.csv`` and, with labels, metrics.

    With ``resume`` the model continues from that checkpoint's epoch counter
    and trains until ``cfg.epochs`` total epochs; rows are appended to the
    existing loss log.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loss_path = out_dir / "losses.csv"
    if resume is not None:
        model = load_checkpoint(resume)
        if list(model.view_dims) != ds.dims:
            raise ValueError(f"checkpoint expects view dims {model.view_dims}, dataset has {ds.dims}")
        model.cfg.epochs = cfg.epochs
        if not loss_path.exists():
            loss_path.write_text(",".join(LOSS_COLUMNS) + "\n")
    else:
        model = MGBCC(ds.dims, cfg)
        loss_path.write_text(",".join(LOSS_COLUMNS) + "\n")

    ckpt = out_dir / "checkpoint.npz"
    with open(loss_path, "a") as fh:
        while model.epoch < model.cfg.epochs:
            s = model.train_epoch(ds.views)
            fh.write(_loss_row(s))
            fh.flush()
    save_checkpoint(model, ckpt)

    result = {"checkpoint": str(ckpt), "losses": str(loss_path), "epoch": model.epoch}
    if ds.labels is not None or n_clusters:
        _, record = evaluate_model(model, ds, n_clusters)
        write_report(record, out_dir)
        result["metrics"] = record
    return result


def run_evaluate(checkpoint, ds: MultiViewDataset, n_clusters: int | None = None, out_dir=None) -> dict:
    model = load_checkpoint(checkpoint)
    _check_dims(model, ds)
    res, record = evaluate_model(model, ds, n_clusters)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_report(record, out_dir)
        np.savetxt(Path(out_dir) / "labels.csv", res.labels, fmt="%d", header="label", comments="")
    return record


def _check_dims(model, ds):
    if len(model.view_dims) != len(ds.views):
        raise ValueError(f"checkpoint has {len(model.view_dims)} views, dataset has {len(ds.views)}")
    for v, (want, got) in enumerate(zip(model.view_dims, ds.dims)):
        if want != got:
            raise ValueError(f"view {v}: checkpoint expects d_v={want}, dataset has d_v={got}")


def _sweep_cell(args):
    ds, cfg, n_clusters = args
    model = MGBCC(ds.dims, cfg)
    model.fit(ds.views)
    _, record = evaluate_model(model, ds, n_clusters)
    return {"p": cfg.p, "d": cfg.dim, "acc": record["acc"], "nmi": record["nmi"], "pur": record["pur"]}


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("GBCC_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(int(cap), 1))
    return max(n, 1)


def run_sweep(ds: MultiViewDataset, cfg: TrainConfig, p_grid=P_GRID, d_grid=D_GRID,
              out_dir=None, workers: int | None = 1, n_clusters: int | None = None) -> list[dict]:
    """Full train + evaluate per (p, d) cell.  Every cell uses ``cfg.seed``."""
    p_grid, d_grid = list(p_grid), list(d_grid)
    if not p_grid or not d_grid:
        raise ValueError("sweep grids must be non-empty")
    cells = [(ds, replace(cfg, p=int(p), dim=int(d)), n_clusters) for p in p_grid for d in d_grid]
    n = worker_count(workers)
    if n > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "sweep.csv").write_text(sweep_csv(rows))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def export_embeddings(checkpoint, ds: MultiViewDataset, out_dir, fmt: str = "gbmv") -> list[Path]:
    """Write per-view latent features ``h_view<v>`` and the fused ``z_fused``.

    A small ``embeddings.json`` index records N, d and the view tag of each file.
    """
    model = load_checkpoint(checkpoint)
    _check_dims(model, ds)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = ".csv" if fmt == "csv" else ".gbmv"
    hs = model.embed(ds.views)
    fused = fuse(hs)
    paths, index = [], []
    for tag, mat in [*((f"view{v}", h) for v, h in enumerate(hs)), ("fused", fused)]:
        name = f"z_fused{ext}" if tag == "fused" else f"h_{tag}{ext}"
        paths.append(write_matrix(out_dir / name, mat))
        index.append({"file": name, "view": tag, "n": mat.shape[0], "d": mat.shape[1]})
    (out_dir / "embeddings.json").write_text(json.dumps(index, indent=2) + "\n")
    return paths
