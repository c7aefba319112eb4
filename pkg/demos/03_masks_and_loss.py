# Cross-view association of balls, the unified positive/negative mask, and
# the ball-level contrastive loss it drives.
import math

import numpy as np

from mgbcc.association import assemble_mask, cross_association, pair_mask
from mgbcc.granular import make_ballset
from mgbcc.model import contrastive_loss_pair

rng = np.random.default_rng(1)
ids = np.arange(8)
# two views that group the same 8 samples a little differently
view_a = make_ballset(rng.normal(size=(8, 2)), [0, 0, 1, 1, 2, 2, 3, 3], ids, view_id=0)
view_b = make_ballset(rng.normal(size=(8, 2)), [0, 0, 0, 1, 2, 2, 3, 3], ids, view_id=1)

# a pair of balls is associated when the shared samples make up at least
# tau of the smaller ball
for tau in (0.1, 0.6, 1.0):
    print(f"tau={tau}\n", cross_association(view_a, view_b, tau).matrix)

mask = pair_mask(view_a, view_b, tau=0.5)
print("unified mask (intra-view overlaps on the diagonal blocks)\n", mask.M)
print("positives of ball 0:", mask.positives[0], " negatives:", mask.negatives[0])

# hand check: identical centers, one overlap in view m, one cross link
toy = assemble_mask([[0, 1], [1, 0]], [[0, 0], [0, 0]], [[1, 0], [0, 0]])
same = np.ones((2, 3))
print("loss with identical centers", contrastive_loss_pair(same, same, toy).item(), "= ln 6 =", math.log(6))

loss = contrastive_loss_pair(view_a.centers, view_b.centers, mask, temperature=0.5)
print("contrastive loss on the random views", loss.item())
