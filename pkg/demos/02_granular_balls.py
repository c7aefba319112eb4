# Granular balls: groups of neighbouring points summarised by a center (their
# mean) and a radius (mean distance to that center).
import numpy as np

from mgbcc.granular import (ball_count, ball_stats, generate_balls_classic, generate_balls_kmeans,
                            overlap_matrix)

c, r = ball_stats([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
print("triangle center", c.value, "radius", round(r.item(), 5))

# k-means generator: p is the average ball size, so k = max(N // p, 1)
rng = np.random.default_rng(0)
pts = np.vstack([rng.normal(0, 0.3, (12, 2)), rng.normal((3, 0), 0.3, (12, 2))])
for p in (1, 2, 4, 24):
    print(f"p={p:2d} -> k={ball_count(len(pts), p)}")

balls = generate_balls_kmeans(pts, p=4, rng=0)
for b in balls.balls:
    print("ball", b.member_ids, "radius", round(b.radius.item(), 3))

# which balls touch: a strict pass counts overlaps per ball, a second pass
# tolerates small gaps scaled by the smallest radius / smallest count
print("overlap matrix\n", balls.overlap)
print("strict vs tolerant on a toy chain:")
A, counts = overlap_matrix([[0, 0], [1.5, 0], [3.0, 0], [-2.2, 0]], [1, 1, 1, 1])
print(A, counts)

# the classic split/merge generator adapts the number of balls to the data
classic = generate_balls_classic(pts, eta=12, rng=0)
print("classic generator found", classic.k, "balls of sizes", classic.sizes)
