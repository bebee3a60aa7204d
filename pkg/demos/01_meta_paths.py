"""Meta paths and proximity on a network small enough to check by hand.

Four users, three follow links and three posts.  We count each meta path,
look at the normalized proximities, and see which pairs each path calls
close.

    python demos/01_meta_paths.py
"""

import numpy as np

from dime import META_PATHS, count_path_instances, proximity_bundle
from dime.netcore import parse_network

TEXT = """
# users
U ann
U bob
U cat
U dan
# ann follows bob and cat, dan follows bob
F ann bob
F ann cat
F dan bob
# ann and dan both post about coffee, cat posts from the same place as ann
P p1 ann
P p2 dan
P p3 cat
AW p1 coffee
AW p2 coffee
AW p2 tea
AL p1 cafe7
AL p3 cafe7
AT p1 1262304000
AT p2 1262305800
"""

net = parse_network(TEXT.splitlines())
names = net.user_ids
print(f"{net.n_users} users, {net.n_follows} follow links, {net.n_posts} posts\n")

# Raw counts.  Phi_2 (follow, follow^-1) pairs users with a common followee:
# ann and dan both follow bob, so they get one instance each way.
for path in META_PATHS:
    counts = count_path_instances(net, path.id).tocoo()
    pairs = [f"{names[i]}->{names[j]}:{c}" for i, j, c in zip(counts.row, counts.col, counts.data)]
    print(f"Phi{path.id} {' , '.join(path.steps):<48} {' '.join(pairs) or '-'}")

# Proximity divides each count by the pair's row and column totals, 2c/(r+s),
# so a single shared word between two light posters scores 1.0.
print()
bundle = proximity_bundle(net)
np.set_printoptions(precision=2, suppress=True)
for pm in bundle:
    if pm.matrix.nnz:
        print(f"Phi{pm.path_id} proximity\n{pm.toarray()}\n")

# Phi_6 shares an hour-of-week bucket: both stamps fall in the same hour.
print("time tokens per post:", [sorted(t) for t in net.attribute_tokens("time")])
