# Sweep the granularity p and latent size d, and compare with training on
# reconstruction alone.  Small grid so it finishes in well under a minute.
import tempfile

from mgbcc import TrainConfig, synth
from mgbcc.experiment import run_sweep, run_train, sweep_csv

# each view hides its own misleading partition next to the shared clusters
ds = synth(n_clusters=4, per_cluster=100, n_views=2, dims=20, sigma=0.3, private=1.5, seed=0)
cfg = TrainConfig(dim=16, epochs=40, hidden=(256, 128), batch_size=64, lr=1e-3, temperature=0.1)

if __name__ == "__main__":  # sweep cells run in worker processes
    rows = run_sweep(ds, cfg, p_grid=[1, 2, 8], d_grid=[8, 16], workers=2)
    print(sweep_csv(rows))

    with tempfile.TemporaryDirectory() as tmp:
        rec_cfg = TrainConfig(**{**cfg.to_dict(), "contrastive": False})
        rec_only = run_train(ds, rec_cfg, tmp)["metrics"]
    print("reconstruction only: acc", round(rec_only["acc"], 4))
