# Train on a planted-cluster two-view dataset and cluster the fused embedding.
# About half a minute on one core.
import logging

from mgbcc import MGBCC, TrainConfig, synth
from mgbcc.experiment import evaluate_model

logging.basicConfig(level=logging.INFO, format="%(message)s")

ds = synth(n_clusters=3, per_cluster=150, n_views=2, dims=20, sigma=0.1, seed=0)
print(ds.name, "views", ds.dims, "samples", ds.n)

cfg = TrainConfig(p=2, tau=0.1, lam=1.0, dim=16, epochs=50, seed=0)
model = MGBCC(ds.dims, cfg)
history = model.fit(ds.views)
print("first / last epoch total loss:", round(history[0].l_total, 2), round(history[-1].l_total, 2))

result, record = evaluate_model(model, ds)
print({k: record[k] for k in ("acc", "nmi", "pur")})
