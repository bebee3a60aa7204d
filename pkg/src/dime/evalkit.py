"""Link prediction and community detection protocols for learned embeddings.

Link prediction: every follow edge of the emerging network is a positive,
``theta`` times as many non-edges are negatives, and both sets are split into
ten folds.  For each held-out fold the test positives are deleted from the
network, the remaining links and posts are thinned to ``lambda``, embeddings
are learned on what is left, and a linear hinge-loss classifier over
concatenated endpoint embeddings scores the held-out pairs.

Community detection: thin the network, embed, cluster the embeddings with
k-means and score the clusters against the unthinned follow graph.
"""

import csv
import json
import math
from dataclasses import dataclass, field, asdict, replace

import numpy as np
from scipy.stats import rankdata

from . import deepalign as da
from .metaprox import proximity_bundle
from .netcore import sample_network
from .seeding import derive_seed, rng_for

__all__ = [
    "METHODS",
    "LinkExperimentPlan",
    "Clustering",
    "LinearClassifier",
    "InsufficientNonEdgesError",
    "sample_negatives",
    "make_link_plan",
    "link_features",
    "train_linear_classifier",
    "auc",
    "classification_metrics",
    "embed_with_method",
    "run_link_experiment",
    "kmeans",
    "community_metrics",
    "random_clustering_coverage",
    "run_community_experiment",
    "ExperimentResult",
    "format_mean_std",
    "write_metric_csv",
]

METHODS = ("dime", "dime-anchor", "dime-sh", "autoencoder")
SEPARABILITY_SENTINEL = 1e12


class InsufficientNonEdgesError(ValueError):
    pass


# link prediction ------------------------------------------------------------


def sample_negatives(net, theta, positives, seed):
    """``theta * |positives|`` distinct ordered non-edge pairs ``(u, v)``, ``u != v``.

    Pairs that are follow edges or positives are excluded.  Returns an
    ``(m, 2)`` int array in draw order.
    """
    theta = int(theta)
    if theta < 1:
        raise ValueError("theta must be >= 1")
    n = net.n_users
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    need = theta * len(positives)
    taken = set((net.follow[:, 0] * n + net.follow[:, 1]).tolist())
    taken |= set((positives[:, 0] * n + positives[:, 1]).tolist())
    available = n * (n - 1) - len(taken)
    if need > available:
        raise InsufficientNonEdgesError(
            f"need {need} negative pairs, only {available} non-edges exist"
        )
    rng = np.random.default_rng(seed)
    if available <= 4 * need:
        # dense regime: enumerate the complement and pick without replacement
        codes = np.arange(n * n, dtype=np.int64)
        codes = codes[codes // n != codes % n]
        codes = codes[~np.isin(codes, np.fromiter(taken, dtype=np.int64, count=len(taken)))]
        chosen = codes[rng.choice(len(codes), need, replace=False)]
    else:
        chosen, seen = [], set(taken)
        while len(chosen) < need:
            for c in rng.integers(0, n * n, size=2 * (need - len(chosen)) + 16).tolist():
                if c // n != c % n and c not in seen:
                    seen.add(c)
                    chosen.append(c)
                    if len(chosen) == need:
                        break
        chosen = np.array(chosen, dtype=np.int64)
    return np.stack([chosen // n, chosen % n], axis=1)


@dataclass(frozen=True, eq=False)
class LinkExperimentPlan:
    positives: np.ndarray
    negatives: np.ndarray
    pos_fold: np.ndarray
    neg_fold: np.ndarray
    lam: float
    theta: int
    seed: int
    n_folds: int = 10

    def split(self, fold):
        """``(train_pairs, train_labels, test_pairs, test_labels, test_positives)``."""
        pos_te = self.pos_fold == fold
        neg_te = self.neg_fold == fold
        tr = np.concatenate([self.positives[~pos_te], self.negatives[~neg_te]])
        te = np.concatenate([self.positives[pos_te], self.negatives[neg_te]])
        ytr = np.concatenate([np.ones((~pos_te).sum()), -np.ones((~neg_te).sum())])
        yte = np.concatenate([np.ones(pos_te.sum()), -np.ones(neg_te.sum())])
        return tr, ytr, te, yte, self.positives[pos_te]


def _fold_ids(count, n_folds, rng):
    ids = np.empty(count, dtype=np.int64)
    ids[rng.permutation(count)] = np.arange(count) % n_folds
    return ids


def make_link_plan(net, lam, theta, seed, n_folds=10):
    positives = net.follow.copy()
    negatives = sample_negatives(net, theta, positives, derive_seed(seed, "negatives"))
    rng = rng_for(seed, "folds")
    return LinkExperimentPlan(
        positives, negatives,
        _fold_ids(len(positives), n_folds, rng), _fold_ids(len(negatives), n_folds, rng),
        lam, int(theta), seed, n_folds,
    )


def link_features(Z, pairs):
    """Concatenated endpoint embeddings ``[Z[u], Z[v]]`` for each pair."""
    Z = np.asarray(Z)
    pairs = np.asarray(pairs, dtype=np.int64)
    single = pairs.ndim == 1
    pairs = pairs.reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= len(Z)):
        raise IndexError("pair index out of range")
    feats = np.concatenate([Z[pairs[:, 0]], Z[pairs[:, 1]]], axis=1)
    return feats[0] if single else feats


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray

    def decision_function(self, X):
        X = (np.asarray(X, dtype=np.float64) - self.mean) / self.scale
        return X @ self.weights + self.bias

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)


def train_linear_classifier(X, y, seed, reg=1e-4, passes=200, standardize=True):
    """Linear SVM trained by stochastic subgradient descent (Pegasos).

    Minimizes ``reg/2 ||w||^2 + mean(hinge)`` with step ``1/(reg t)``; the
    bias is an extra always-one feature.  Features are z-scored with the
    training statistics when ``standardize`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y).tolist()) != {-1.0, 1.0}:
        raise ValueError("training labels must contain both +1 and -1")
    mean = X.mean(axis=0) if standardize else np.zeros(X.shape[1])
    scale = X.std(axis=0) if standardize else np.ones(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    Xa = np.hstack([(X - mean) / scale, np.ones((len(X), 1))])
    rng = np.random.default_rng(seed)
    # w = s * v keeps the shrink step O(1)
    v = np.zeros(Xa.shape[1])
    s = 1.0
    t = 1
    for _ in range(passes):
        for i in rng.permutation(len(Xa)).tolist():
            t += 1
            eta = 1.0 / (reg * t)
            xi, yi = Xa[i], y[i]
            margin = yi * s * float(xi @ v)
            s *= 1.0 - eta * reg
            if margin < 1.0:
                v += (eta * yi / s) * xi
    w = s * v
    return LinearClassifier(w[:-1].copy(), float(w[-1]), mean, scale)


def auc(scores, labels):
    """Probability that a random positive outscores a random negative, ties
    counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def classification_metrics(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth != 1)))
    fn = int(np.sum((pred != 1) & (truth == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": float(np.mean(pred == truth)) if len(truth) else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def method_arch(arch, method):
    if method == "autoencoder":
        return replace(arch, paths=(0,))
    return arch


def embed_with_method(pair, bundle_emerging, bundle_mature, arch, config, method):
    """Embeddings of the emerging network's users under one of :data:`METHODS`."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method in ("dime", "dime-anchor"):
        cfg = replace(config, anchor_rows_only=(method == "dime-anchor"))
        return da.train(pair, (bundle_emerging, bundle_mature), arch, cfg).Z1
    return da.embed_single(pair.net_emerging, bundle_emerging, method_arch(arch, method), config).Z1


@dataclass
class ExperimentResult:
    """Per-run metric dictionaries plus their mean and standard deviation."""

    method: str
    lam: float
    param_name: str
    param: int
    runs: list
    config: dict = field(default_factory=dict)

    @property
    def metrics(self):
        return list(self.runs[0]) if self.runs else []

    def mean(self, metric):
        return float(np.mean([r[metric] for r in self.runs]))

    def std(self, metric):
        vals = [r[metric] for r in self.runs]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    def summary(self):
        return {m: (self.mean(m), self.std(m)) for m in self.metrics}

    def table(self):
        return {m: format_mean_std(*self.summary()[m]) for m in self.metrics}


def format_mean_std(mean, std, digits=3):
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def _config_dict(arch, config, **extra):
    d = {"arch": asdict(arch), "train": asdict(config)}
    d.update(extra)
    return d


def run_link_experiment(pair, arch, config, lam, theta, seed, method="dime",
                        n_folds=10, bundle_mature=None, classifier_passes=200):
    """Ten-fold link prediction on the emerging network.

    Returns an :class:`ExperimentResult` whose runs are the folds, each with
    ``auc``, ``accuracy``, ``precision``, ``recall`` and ``f1``.
    """
    net = pair.net_emerging
    plan = make_link_plan(net, lam, theta, seed, n_folds)
    if bundle_mature is None and method in ("dime", "dime-anchor"):
        bundle_mature = proximity_bundle(pair.net_mature)
    runs = []
    for fold in range(n_folds):
        tr, ytr, te, yte, test_pos = plan.split(fold)
        reduced = net.without_follows(test_pos)
        sampled = sample_network(reduced, lam, derive_seed(seed, "sample", fold))
        bundle = proximity_bundle(sampled)
        cfg = replace(config, seed=derive_seed(seed, "train", fold), track_full_loss=False)
        Z = embed_with_method(pair.with_emerging(sampled), bundle, bundle_mature, arch, cfg, method)
        clf = train_linear_classifier(
            link_features(Z, tr), ytr, derive_seed(seed, "svm", fold), passes=classifier_passes
        )
        scores = clf.decision_function(link_features(Z, te))
        m = classification_metrics(np.where(scores >= 0, 1, -1), yte)
        runs.append({"auc": auc(scores, yte), **m})
    return ExperimentResult(
        method, lam, "theta", int(theta), runs,
        _config_dict(arch, config, seed=seed, n_folds=n_folds, lam=lam, theta=int(theta)),
    )


# community detection --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: np.ndarray
    k: int
    inertia: float = float("nan")

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if not 1 <= self.k <= max(len(labels), 1):
            raise ValueError("k out of range")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError("cluster id out of range")


def _kmeanspp(X, k, rng):
    centers = [X[rng.integers(len(X))]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(X))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, len(X) - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(X, centers, max_iter):
    for _ in range(max_iter):
        d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d.argmin(axis=1)
        new = centers.copy()
        for c in range(len(centers)):
            members = X[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        if np.array_equal(new, centers):
            break
        centers = new
    d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d.argmin(axis=1)
    return labels, float(d[np.arange(len(X)), labels].sum())


def kmeans(Z, k, seed, n_init=10, max_iter=300):
    """Lloyd's algorithm from k-means++ seeds; best of ``n_init`` restarts."""
    X = np.asarray(Z, dtype=np.float64)
    if not 1 <= k <= len(X):
        raise ValueError(f"k must be in [1, {len(X)}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, inertia = _lloyd(X, _kmeanspp(X, k, rng), max_iter)
        if best is None or inertia < best[1]:
            best = (labels, inertia)
    return Clustering(best[0], k, best[1])


def _undirected_edges(net):
    f = net.follow
    if not len(f):
        return f.reshape(0, 2)
    return np.unique(np.sort(f, axis=1), axis=0)


def community_metrics(net, clustering):
    """Density, separability, coverage and expansion on the symmetrized
    follow graph."""
    labels = clustering.labels if isinstance(clustering, Clustering) else np.asarray(clustering)
    if len(labels) != net.n_users:
        raise ValueError("clustering must cover every user")
    edges = _undirected_edges(net)
    m = len(edges)
    if m == 0:
        raise ValueError("network has no follow edges")
    intra = int(np.sum(labels[edges[:, 0]] == labels[edges[:, 1]]))
    cross = m - intra
    sizes = np.bincount(labels)
    pairs = int(np.sum(sizes * (sizes - 1) // 2))
    return {
        "density": intra / pairs if pairs else 0.0,
        "separability": intra / cross if cross else SEPARABILITY_SENTINEL,
        "coverage": intra / m,
        "expansion": cross / m,
    }


def random_clustering_coverage(net, k, n_draws, seed):
    """Coverage of ``n_draws`` uniformly random k-clusterings."""
    rng = np.random.default_rng(seed)
    return np.array([
        community_metrics(net, rng.integers(k, size=net.n_users))["coverage"]
        for _ in range(n_draws)
    ])


def run_community_experiment(pair, arch, config, lam, k, seed, method="dime",
                             n_runs=5, bundle_mature=None):
    """Thin, embed, cluster and score ``n_runs`` times with derived seeds."""
    net = pair.net_emerging
    if bundle_mature is None and method in ("dime", "dime-anchor"):
        bundle_mature = proximity_bundle(pair.net_mature)
    runs = []
    for r in range(n_runs):
        sampled = sample_network(net, lam, derive_seed(seed, "sample", r))
        cfg = replace(config, seed=derive_seed(seed, "train", r), track_full_loss=False)
        Z = embed_with_method(
            pair.with_emerging(sampled), proximity_bundle(sampled), bundle_mature, arch, cfg, method
        )
        clustering = kmeans(Z, k, derive_seed(seed, "kmeans", r))
        runs.append(community_metrics(net, clustering))
    return ExperimentResult(
        method, lam, "k", int(k), runs,
        _config_dict(arch, config, seed=seed, n_runs=n_runs, lam=lam, k=int(k)),
    )


# output ---------------------------------------------------------------------

CSV_COLUMNS = ("method", "metric", "lambda", "theta_or_k", "mean", "std", "n_runs")


def write_metric_csv(results, path):
    """One row per (result, metric) with round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for res in results:
            for metric in res.metrics:
                w.writerow([
                    res.method, metric, repr(float(res.lam)), res.param,
                    repr(res.mean(metric)), repr(res.std(metric)), len(res.runs),
                ])


def read_metric_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
