"""Link prediction and community detection with the four model variants.

A reduced version of the full experiments: one generator seed, three folds
and the sparsest setting, where borrowing from the mature network should
matter most.  The full protocol is in tests/test_acceptance.py and
`dime eval`.

    python demos/03_evaluation.py            # a few minutes
"""

from dime import ArchitectureSpec, SynthConfig, TrainConfig, generate_pair, proximity_bundle
from dime.evalkit import (
    METHODS,
    community_metrics,
    random_clustering_coverage,
    run_community_experiment,
    run_link_experiment,
)

synth = generate_pair(SynthConfig(seed=3))
pair = synth.pair
bundle_mature = proximity_bundle(pair.net_mature)
arch = ArchitectureSpec(encoder_widths=(64,), init_gain=4.0)
cfg = TrainConfig(epochs=150, clip_norm=1000.0)

# Link prediction: all emerging follows are positives, an equal number of
# non-edges are negatives.  Each fold hides its positives, thins what is left
# to lambda, re-embeds, and scores a linear SVM on [z_u, z_v].
lam = 0.1
print(f"link prediction, lambda={lam}, theta=1, 3 folds")
for method in METHODS:
    res = run_link_experiment(pair, arch, cfg, lam, 1, seed=0, method=method,
                              n_folds=3, bundle_mature=bundle_mature)
    t = res.table()
    print(f"  {method:<12} AUC {t['auc']}  F1 {t['f1']}")

# Community detection: k-means on the embeddings, scored on the full follow
# graph.  Coverage is the share of (undirected) links inside clusters.
k = synth.config.n_communities
net = pair.net_emerging
planted = community_metrics(net, synth.labels_emerging)["coverage"]
chance = random_clustering_coverage(net, k, 100, seed=0).mean()
print(f"\ncommunity detection, k={k}: planted coverage {planted:.3f}, random {chance:.3f}")
for method in ("dime", "dime-sh", "autoencoder"):
    res = run_community_experiment(pair, arch, cfg, 1.0, k, seed=0, method=method,
                                   n_runs=2, bundle_mature=bundle_mature)
    t = res.table()
    print(f"  {method:<12} coverage {t['coverage']}  density {t['density']}")
