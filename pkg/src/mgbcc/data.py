"""Multi-view datasets: matrix files, manifests and synthetic generators.

Matrix files
------------
``.gbmv`` binary, little-endian::

    4 bytes   magic b"GBMV"
    u32       format version (1)
    u64       rows
    u64       cols
    f64 x rows*cols, row-major

``.csv`` text with one header row, then one row per sample.

Manifest
--------
A plain text file; blank lines and ``#`` comments are ignored::

    name   mnist-usps
    view   view0.gbmv
    view   view1.csv  minmax
    labels labels.csv

Paths are relative to the manifest.  ``minmax`` rescales that view's
columns to [0, 1] on load.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GBMV"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
MANIFEST_NAME = "manifest.txt"


class DataError(ValueError):
    """Malformed or inconsistent dataset files."""


@dataclass
class MultiViewDataset:
    views: list
    labels: np.ndarray | None = None
    name: str = "dataset"
    scaling: list = field(default_factory=list)

    def __post_init__(self):
        self.views = [np.ascontiguousarray(v, dtype=np.float64) for v in self.views]
        if not self.views:
            raise DataError("a dataset needs at least one view")
        n = self.views[0].shape[0]
        for v, x in enumerate(self.views):
            if x.ndim != 2:
                raise DataError(f"view {v} is not a matrix")
            if x.shape[0] != n:
                raise DataError(f"view rows differ: view 0 has {n}, view {v} has {x.shape[0]}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels).astype(np.int64).reshape(-1)
            if len(self.labels) != n:
                raise DataError(f"{len(self.labels)} labels for {n} samples")
        if not self.scaling:
            self.scaling = [None] * len(self.views)

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def dims(self) -> list[int]:
        return [x.shape[1] for x in self.views]

    @property
    def n_clusters(self) -> int | None:
        return None if self.labels is None else len(np.unique(self.labels))


# ----------------------------------------------------------------------------
# matrix files

def _check_finite(x, path):
    bad = np.argwhere(~np.isfinite(x))
    if len(bad):
        r, c = bad[0]
        raise DataError(f"{path}: non-finite value {x[r, c]} at row {r}, column {c}")


def write_matrix(path, x) -> Path:
    path = Path(path)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if path.suffix == ".csv":
        header = ",".join(f"c{j}" for j in range(x.shape[1]))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in x:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        return path
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, x.shape[0], x.shape[1]))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    return path


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read matrix file {path}: {e.strerror}") from e
    if raw[:4] == MAGIC:
        if len(raw) < _HEADER.size:
            raise DataError(f"{path}: truncated header")
        _, version, rows, cols = _HEADER.unpack_from(raw)
        if version != VERSION:
            raise DataError(f"{path}: unsupported format version {version}")
        expected = _HEADER.size + 8 * rows * cols
        if len(raw) != expected:
            raise DataError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(raw)}")
        x = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)
    else:
        x = _parse_csv(raw.decode(), path)
    _check_finite(x, path)
    return x


def _parse_csv(text, path):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty CSV file")
    rows = []
    for i, ln in enumerate(lines[1:], start=1):
        try:
            rows.append([float(v) for v in ln.split(",")])
        except ValueError as e:
            raise DataError(f"{path}: line {i + 1}: {e}") from None
    if not rows:
        return np.zeros((0, len(lines[0].split(","))))
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise DataError(f"{path}: ragged CSV rows")
    return np.array(rows, dtype=np.float64)


def minmax_scale(x) -> np.ndarray:
    lo, hi = x.min(0), x.max(0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (x - lo) / span


# ----------------------------------------------------------------------------
# manifests

def _manifest_path(path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_manifest(path) -> dict:
    path = _manifest_path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise OSError(f"cannot read manifest {path}: {e.strerror}") from e
    manifest = {"name": path.parent.name or "dataset", "views": [], "labels": None}
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "name" and len(rest) == 1:
            manifest["name"] = rest[0]
        elif key == "view" and len(rest) in (1, 2):
            scale = rest[1] if len(rest) == 2 else None
            if scale not in (None, "minmax"):
                raise DataError(f"{path}:{no}: unknown scaling directive {scale!r}")
            manifest["views"].append((rest[0], scale))
        elif key == "labels" and len(rest) == 1:
            manifest["labels"] = rest[0]
        else:
            raise DataError(f"{path}:{no}: cannot parse {line!r}")
    if not manifest["views"]:
        raise DataError(f"{path}: manifest lists no views")
    return manifest


def load_dataset(path) -> MultiViewDataset:
    """Load a dataset from a manifest file or a directory holding ``manifest.txt``."""
    mpath = _manifest_path(path)
    manifest = read_manifest(mpath)
    root = mpath.parent
    views, scaling = [], []
    for i, (rel, scale) in enumerate(manifest["views"]):
        x = read_matrix(root / rel)
        views.append(minmax_scale(x) if scale == "minmax" else x)
        scaling.append(scale)
    n = views[0].shape[0]
    for i, x in enumerate(views[1:], start=1):
        if x.shape[0] != n:
            raise DataError(f"view rows differ: view 0 ({manifest['views'][0][0]}) has {n} rows, "
                            f"view {i} ({manifest['views'][i][0]}) has {x.shape[0]}")
    labels = None
    if manifest["labels"]:
        lab = read_matrix(root / manifest["labels"])
        if lab.shape[1] != 1 or np.any(lab != np.round(lab)):
            raise DataError(f"{manifest['labels']}: labels must be a single integer column")
        labels = lab[:, 0].astype(np.int64)
    return MultiViewDataset(views, labels, manifest["name"], scaling)


def save_dataset(ds: MultiViewDataset, directory, fmt: str = "gbmv") -> Path:
    """Write views, labels and a manifest; returns the manifest path.

    Views are written as loaded (after any scaling), so the manifest drops
    the scaling directives.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = ".csv" if fmt == "csv" else ".gbmv"
    lines = [f"name {ds.name}"]
    for v, x in enumerate(ds.views):
        write_matrix(directory / f"view{v}{ext}", x)
        lines.append(f"view view{v}{ext}")
    if ds.labels is not None:
        write_matrix(directory / f"labels{ext}", ds.labels.astype(np.float64))
        lines.append(f"labels labels{ext}")
    mpath = directory / MANIFEST_NAME
    mpath.write_text("\n".join(lines) + "\n")
    return mpath


# ----------------------------------------------------------------------------
# synthetic data

def synth(n_clusters: int = 3, per_cluster: int = 100, n_views: int = 2, dims=20,
          sigma: float = 0.1, seed: int = 0, latent_dim: int | None = None,
          private: float = 0.0) -> MultiViewDataset:
    """Planted-cluster multi-view data.

    Cluster centers live in a shared latent space and are rescaled so their
    RMS distance from the centroid (the center spread) is 1; ``sigma`` is
    therefore relative to that spread.  Each view is an independent random
    linear map of the latent points plus N(0, sigma^2) noise.

    With ``private > 0`` every view also carries its own random partition
    into ``n_clusters`` groups, with center spread ``private``, mapped into the
    view by a second independent matrix.  Those groups are unrelated across
    views, which makes per-view structure misleading for the shared labels.
    """
    if n_clusters < 2 or n_views < 2 or per_cluster < 1 or sigma < 0 or private < 0:
        raise ValueError("need n_clusters >= 2, n_views >= 2, per_cluster >= 1, sigma >= 0, private >= 0")
    dims = [dims] * n_views if np.isscalar(dims) else list(dims)
    if len(dims) != n_views or min(dims) < 1:
        raise ValueError(f"dims must give one positive size per view, got {dims}")
    q = latent_dim or max(n_clusters, 2)
    rng = np.random.default_rng(seed)

    def centers(spread):
        c = rng.normal(size=(n_clusters, q))
        c -= c.mean(0)
        rms = np.sqrt((c ** 2).sum(1).mean())
        return c * (spread / rms)

    labels = np.repeat(np.arange(n_clusters), per_cluster)
    n = len(labels)
    shared = centers(1.0)[labels]
    views = []
    for d in dims:
        W = rng.normal(size=(q, d)) / np.sqrt(q)
        x = shared @ W + sigma * rng.normal(size=(n, d))
        if private > 0:
            own = rng.permutation(labels)
            Wp = rng.normal(size=(q, d)) / np.sqrt(q)
            x += centers(private)[own] @ Wp
        views.append(x)
    return MultiViewDataset(views, labels, name=f"synth-k{n_clusters}-v{n_views}-s{seed}")
