# Write a dataset to disk, train through the file-based driver, then export
# per-view and fused embeddings for plotting elsewhere.
import tempfile
from pathlib import Path

import numpy as np

from mgbcc import TrainConfig, load_dataset, save_dataset, synth
from mgbcc.data import read_matrix
from mgbcc.experiment import export_embeddings, run_train

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    manifest = save_dataset(synth(3, 30, 2, [12, 8], seed=3), tmp / "data")
    print(manifest.read_text())
    ds = load_dataset(manifest)

    res = run_train(ds, TrainConfig(dim=8, hidden=(64,), epochs=20, lr=1e-3), tmp / "run")
    print((tmp / "run" / "metrics.txt").read_text())
    print((tmp / "run" / "losses.csv").read_text().splitlines()[:3])

    paths = export_embeddings(res["checkpoint"], ds, tmp / "emb")
    h0, h1, z = (read_matrix(p) for p in paths)
    print([p.name for p in paths], z.shape)
    print("fused is the mean of the views:", np.array_equal(z, (h0 + h1) / 2))
