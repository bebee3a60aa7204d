"""Independent reference implementations used as test oracles.

Everything here is written with plain loops and dicts, sharing no code with
the library beyond reading a network's raw fields.
"""

import itertools
import math
from collections import defaultdict

import numpy as np


def _tokens(net, kind):
    if kind == "word":
        return [set(s) for s in net.post_words]
    if kind == "location":
        return [set(s) for s in net.post_locations]
    return [{str((t // 3600) % 168) for t in s} for s in net.post_timestamps]


def brute_force_counts(net, path_id):
    """Enumerate every meta path instance explicitly; ``{(i, j): count}``
    with self pairs dropped."""
    n = net.n_users
    out_nb = defaultdict(list)
    in_nb = defaultdict(list)
    for u, v in net.follow.tolist():
        out_nb[u].append(v)
        in_nb[v].append(u)
    counts = defaultdict(int)
    if path_id == 0:
        for u, v in net.follow.tolist():
            counts[(u, v)] += 1
    elif path_id in (1, 2, 3, 4):
        # first hop from u to w, second hop from w to v
        first = out_nb if path_id in (1, 2) else in_nb
        second = {1: out_nb, 2: in_nb, 3: out_nb, 4: in_nb}[path_id]
        for u in range(n):
            for w in first[u]:
                for v in second[w]:
                    counts[(u, v)] += 1
    else:
        kind = {5: "word", 6: "time", 7: "location"}[path_id]
        tokens = _tokens(net, kind)
        author = net.post_author.tolist()
        for p, q in itertools.product(range(net.n_posts), repeat=2):
            for _t in tokens[p] & tokens[q]:
                counts[(author[p], author[q])] += 1
    return {k: c for k, c in counts.items() if k[0] != k[1] and c}


def scalar_meta_proximity(counts, n):
    """Meta proximity from a count dict, one entry at a time."""
    row = [0] * n
    col = [0] * n
    for (i, j), c in counts.items():
        row[i] += c
        col[j] += c
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            c = counts.get((i, j), 0)
            denom = row[i] + col[j]
            out[i, j] = 0.0 if denom == 0 else 2.0 * c / denom
    return out


def sigmoid(a):
    return 1.0 / (1.0 + math.exp(-a))


def naive_encode(p, x):
    """One user's embedding by explicit loops; ``x`` is ``(n_paths, n_users)``."""
    K = x.shape[0]
    top = []
    for k in range(K):
        a = list(x[k])
        for W, b in zip(p.enc_W, p.enc_b):
            a = [sigmoid(sum(W[k, r, c] * a[c] for c in range(len(a))) + b[k, r])
                 for r in range(W.shape[1])]
        top.append(a)
    f = p.fuse_W.shape[1]
    yf = [sigmoid(sum(p.fuse_W[k, r, c] * top[k][c]
                      for k in range(K) for c in range(len(top[k]))) + p.fuse_b[r])
          for r in range(f)]
    d = p.emb_W.shape[0]
    return np.array([sigmoid(sum(p.emb_W[r, c] * yf[c] for c in range(f)) + p.emb_b[r])
                     for r in range(d)])


def naive_decode(p, z):
    """Per-path reconstructions of one embedding by explicit loops."""
    f = p.demb_W.shape[0]
    yh = [sigmoid(sum(p.demb_W[r, c] * z[c] for c in range(len(z))) + p.demb_b[r])
          for r in range(f)]
    K = p.disp_W.shape[0]
    out = []
    for k in range(K):
        h = [sigmoid(sum(p.disp_W[k, r, c] * yh[c] for c in range(f)) + p.disp_b[k, r])
             for r in range(p.disp_W.shape[1])]
        for l in range(len(p.dec_W), 0, -1):
            W, b = p.dec_W[l - 1], p.dec_b[l - 1]
            h = [sigmoid(sum(W[k, r, c] * h[c] for c in range(len(h))) + b[k, r])
                 for r in range(W.shape[1])]
        out.append(h)
    return np.array(out)


def central_differences(f, params, h=1e-5):
    """Finite-difference gradient of ``f(params)`` for every parameter entry."""
    grads = []
    for a in params.tensors():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            fp = f(params)
            a[idx] = old - h
            fm = f(params)
            a[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    """Per-tensor relative error ``||a - n|| / max(||a||, ||n||)``."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if den == 0 else num / den


def hand_kmeans_inertia(X, labels):
    total = 0.0
    for c in set(labels.tolist()):
        pts = X[labels == c]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total
