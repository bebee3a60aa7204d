"""Synthetic aligned heterogeneous network pairs with planted communities.

People are drawn once and shared between the two networks through the anchor
set.  Each person has a community and an activity level; both follow links
and post volume scale with activity, and post attributes lean towards the
author's community.  A single person-level follow graph backs both networks,
so anchored friends stay friends, and the emerging network keeps each of its
follow links (and draws posts) at the rate set by ``emergence``.
"""

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .netcore import AlignedPair, HeterogeneousNetwork, dump_anchors, dump_network
from .seeding import rng_for

__all__ = ["SynthConfig", "SyntheticPair", "generate_pair", "write_pair", "planted_follows"]

WEEK = 7 * 24 * 3600
BASE_TIME = 1_262_304_000  # 2010-01-01 UTC


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 200
    n_communities: int = 4
    p_intra: float = 0.15
    p_inter: float = 0.01
    posts_per_user: float = 20.0
    vocab_size: int = 200
    words_per_post: int = 5
    n_locations: int = 40
    attr_skew: float = 0.7
    anchor_fraction: float = 0.6
    emergence: float = 0.3
    # log-normal sigma of per-person activity, 0 gives equal activity
    activity_spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_communities < 1:
            raise ValueError("need at least one user and one community")
        if self.n_communities > self.n_users:
            raise ValueError("more communities than users")
        for name in ("p_intra", "p_inter", "attr_skew", "anchor_fraction", "emergence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n_communities > 1 and not self.p_intra > self.p_inter:
            raise ValueError("p_intra must exceed p_inter")
        if self.posts_per_user < 0 or self.words_per_post < 0 or self.activity_spread < 0:
            raise ValueError("post counts and activity spread must be non-negative")
        if self.vocab_size < self.n_communities or self.n_locations < self.n_communities:
            raise ValueError("vocabulary and locations need one block per community")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True, eq=False)
class SyntheticPair:
    pair: AlignedPair
    labels_emerging: np.ndarray
    labels_mature: np.ndarray
    config: SynthConfig


def _blocks(size, k):
    return np.array_split(np.arange(size), k)


def planted_follows(community, activity, p_intra, p_inter, rng):
    """Directed planted-partition edges, ``P(u->v) = p_block * a_u * a_v``
    capped at one."""
    same = community[:, None] == community[None, :]
    prob = np.where(same, p_intra, p_inter) * activity[:, None] * activity[None, :]
    np.fill_diagonal(prob, 0.0)
    hit = rng.random(prob.shape) < np.minimum(prob, 1.0)
    return np.argwhere(hit)


def _posts(cfg, persons, community, activity, rate, rng, prefix):
    words_by_c = _blocks(cfg.vocab_size, cfg.n_communities)
    locs_by_c = _blocks(cfg.n_locations, cfg.n_communities)
    hours_by_c = _blocks(168, cfg.n_communities)

    def draw(block, size):
        if rng.random() < cfg.attr_skew:
            return int(rng.choice(block))
        return int(rng.integers(size))

    post_ids, author, words, stamps, locs = [], [], [], [], []
    for idx, person in enumerate(persons):
        c = community[person]
        for _ in range(rng.poisson(rate * activity[person])):
            post_ids.append(f"{prefix}{len(post_ids)}")
            author.append(idx)
            words.append({f"w{draw(words_by_c[c], cfg.vocab_size)}"
                          for _ in range(cfg.words_per_post)})
            hour = draw(hours_by_c[c], 168)
            week = int(rng.integers(52))
            stamps.append({BASE_TIME + week * WEEK + hour * 3600 + int(rng.integers(3600))})
            locs.append({f"l{draw(locs_by_c[c], cfg.n_locations)}"})
    return post_ids, author, words, stamps, locs


def generate_pair(cfg):
    """Draw an aligned pair plus per-user community labels.

    Anchored people occupy the first ``round(anchor_fraction * n_users)``
    slots of the emerging network; the mature network lists its users in a
    random order, so with full anchoring the transition matrix is a
    permutation matrix.
    """
    n = cfg.n_users
    n_anchor = int(round(cfg.anchor_fraction * n))
    n_persons = 2 * n - n_anchor
    rng = rng_for(cfg.seed, "synth", "people")
    community = rng.permutation(np.arange(n_persons) % cfg.n_communities)
    activity = rng.lognormal(0.0, cfg.activity_spread, size=n_persons) if cfg.activity_spread else np.ones(n_persons)
    activity = activity / activity.mean()

    edges = planted_follows(
        community, activity, cfg.p_intra, cfg.p_inter, rng_for(cfg.seed, "synth", "follow")
    )
    persons1 = np.arange(n)
    persons2 = np.concatenate([
        np.arange(n_anchor), np.arange(n, n_persons)
    ])[rng_for(cfg.seed, "synth", "order").permutation(n)]

    def induced(persons, keep_rate, stream):
        slot = np.full(n_persons, -1)
        slot[persons] = np.arange(len(persons))
        e = slot[edges]
        e = e[(e >= 0).all(axis=1)]
        if keep_rate < 1.0:
            e = e[rng_for(cfg.seed, "synth", stream).random(len(e)) < keep_rate]
        return e[np.lexsort((e[:, 1], e[:, 0]))]

    nets = []
    for tag, persons, rate in (("a", persons1, cfg.emergence), ("b", persons2, 1.0)):
        post_ids, author, words, stamps, locs = _posts(
            cfg, persons, community, activity, cfg.posts_per_user * rate,
            rng_for(cfg.seed, "synth", "posts", tag), f"{tag}p",
        )
        nets.append(HeterogeneousNetwork(
            user_ids=[f"{tag}{p}" for p in persons],
            post_ids=post_ids,
            post_author=author,
            follow=induced(persons, rate, f"thin-{tag}"),
            post_words=words,
            post_timestamps=stamps,
            post_locations=locs,
        ))

    where2 = {int(p): j for j, p in enumerate(persons2)}
    anchors = [(i, where2[i]) for i in range(n_anchor)]
    return SyntheticPair(
        AlignedPair(nets[0], nets[1], anchors),
        community[persons1].copy(),
        community[persons2].copy(),
        cfg,
    )


def write_pair(synth, out_dir):
    """Write both networks, the anchors and a labels CSV; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "emerging": out / "emerging.edges",
        "mature": out / "mature.edges",
        "anchors": out / "anchors.txt",
        "labels": out / "labels.csv",
    }
    dump_network(synth.pair.net_emerging, paths["emerging"])
    dump_network(synth.pair.net_mature, paths["mature"])
    dump_anchors(synth.pair, paths["anchors"])
    with open(paths["labels"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["network", "user_id", "community"])
        for name, net, labels in (
            ("emerging", synth.pair.net_emerging, synth.labels_emerging),
            ("mature", synth.pair.net_mature, synth.labels_mature),
        ):
            for uid, c in zip(net.user_ids, labels):
                w.writerow([name, uid, int(c)])
    return paths
