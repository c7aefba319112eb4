"""Multi-view granular-ball contrastive clustering on a small numpy autodiff core."""
from .association import AssociationMatrix, MaskMatrix, assemble_mask, cross_association, pair_mask
from .data import MultiViewDataset, load_dataset, save_dataset, synth
from .evaluation import accuracy, cluster, cluster_views, fuse, nmi, purity
from .granular import (BallSet, GranularBall, ball_stats, generate_balls_classic, generate_balls_kmeans,
                       kmeans, overlap_matrix)
from .model import MGBCC, TrainConfig, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
