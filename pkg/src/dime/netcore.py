"""Attributed heterogeneous social networks, their file formats and anchors.

A network holds users, posts, directed follow edges, one write edge per post
and three categorical attribute namespaces per post (words, timestamps,
locations).  Everything is index based; string ids are kept only for I/O.

edge-list-v1 (UTF-8, whitespace separated, ``#`` starts a comment line)::

    U <id>                      user node
    P <id> <user-id>            post written by user
    F <u> <v>                   follow edge u -> v
    AW <post> <word>            word attached to post
    AT <post> <seconds>         timestamp attached to post
    AL <post> <location-id>     location attached to post

anchors-v1: one ``<g1-user-id> <g2-user-id>`` pair per line.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NetworkFormatError",
    "DanglingReferenceError",
    "DuplicateEdgeError",
    "AnchorError",
    "HeterogeneousNetwork",
    "AlignedPair",
    "TIME_BUCKETINGS",
    "load_network",
    "parse_network",
    "dump_network",
    "format_network",
    "load_anchors",
    "dump_anchors",
    "sample_network",
    "build_transition_matrix",
]

ATTRIBUTE_KINDS = ("word", "time", "location")

TIME_BUCKETINGS = {
    "hour-of-week": lambda ts: (ts // 3600) % 168,
    "hour-of-day": lambda ts: (ts // 3600) % 24,
    "day-of-week": lambda ts: (ts // 86400) % 7,
    "none": lambda ts: ts,
}


class NetworkFormatError(ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DanglingReferenceError(NetworkFormatError):
    pass


class DuplicateEdgeError(NetworkFormatError):
    pass


class AnchorError(ValueError):
    pass


def _frozen(a, dtype=np.int64, shape=None):
    a = np.array(a, dtype=dtype)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HeterogeneousNetwork:
    """Users, posts, follow/write links and per-post attribute sets.

    ``follow`` is an ``(m, 2)`` array of directed ``(u, v)`` user index pairs
    and ``post_author[p]`` is the user that wrote post ``p``.  Attribute
    tuples are aligned with the posts.  Timestamps are stored raw in seconds;
    :meth:`attribute_tokens` buckets them according to ``time_bucketing``.
    """

    user_ids: tuple
    post_ids: tuple = ()
    post_author: np.ndarray = field(default_factory=lambda: _frozen([]))
    follow: np.ndarray = field(default_factory=lambda: _frozen([], shape=(0, 2)))
    post_words: tuple = ()
    post_timestamps: tuple = ()
    post_locations: tuple = ()
    time_bucketing: str = "hour-of-week"

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "user_ids", tuple(str(u) for u in self.user_ids))
        set_(self, "post_ids", tuple(str(p) for p in self.post_ids))
        n_posts = len(self.post_ids)
        set_(self, "post_author", _frozen(self.post_author, shape=(-1,)))
        set_(self, "follow", _frozen(self.follow, shape=(-1, 2)))
        for name in ("post_words", "post_locations"):
            value = tuple(frozenset(str(t) for t in s) for s in getattr(self, name))
            set_(self, name, value or (frozenset(),) * n_posts)
        stamps = tuple(frozenset(int(t) for t in s) for s in self.post_timestamps)
        set_(self, "post_timestamps", stamps or (frozenset(),) * n_posts)
        self._validate()

    def _validate(self):
        n_u, n_p = self.n_users, self.n_posts
        if len(set(self.user_ids)) != n_u:
            raise NetworkFormatError("duplicate user id")
        if len(set(self.post_ids)) != n_p:
            raise NetworkFormatError("duplicate post id")
        if self.post_author.shape != (n_p,):
            raise NetworkFormatError("every post needs exactly one author")
        for name in ("post_words", "post_timestamps", "post_locations"):
            if len(getattr(self, name)) != n_p:
                raise NetworkFormatError(f"{name} must have one entry per post")
        if self.time_bucketing not in TIME_BUCKETINGS:
            raise ValueError(f"unknown time bucketing {self.time_bucketing!r}")
        if n_p and (self.post_author.min() < 0 or self.post_author.max() >= n_u):
            raise DanglingReferenceError("post author out of range")
        f = self.follow
        if len(f):
            if f.min() < 0 or f.max() >= n_u:
                raise DanglingReferenceError("follow endpoint out of range")
            if np.any(f[:, 0] == f[:, 1]):
                raise NetworkFormatError("self-loop follow edge")
            if len(np.unique(f[:, 0] * n_u + f[:, 1])) != len(f):
                raise DuplicateEdgeError("duplicate follow edge")

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_posts(self):
        return len(self.post_ids)

    @property
    def n_follows(self):
        return len(self.follow)

    def user_index(self):
        return {u: i for i, u in enumerate(self.user_ids)}

    def follow_set(self):
        return {(int(u), int(v)) for u, v in self.follow}

    def follow_matrix(self):
        """Directed user-by-user adjacency, ``A[u, v] = 1`` iff ``u -> v``."""
        n = self.n_users
        f = self.follow
        return sp.csr_matrix(
            (np.ones(len(f), dtype=np.int64), (f[:, 0], f[:, 1])), shape=(n, n)
        )

    def write_matrix(self):
        """User-by-post incidence of the write relation."""
        n_p = self.n_posts
        return sp.csr_matrix(
            (np.ones(n_p, dtype=np.int64), (self.post_author, np.arange(n_p))),
            shape=(self.n_users, n_p),
        )

    def attribute_tokens(self, kind):
        """Per-post token sets of one attribute namespace, as strings."""
        if kind == "word":
            return self.post_words
        if kind == "location":
            return self.post_locations
        if kind == "time":
            bucket = TIME_BUCKETINGS[self.time_bucketing]
            return tuple(
                frozenset(str(bucket(t)) for t in s) for s in self.post_timestamps
            )
        raise ValueError(f"unknown attribute kind {kind!r}")

    def attribute_matrix(self, kind):
        """Post-by-token incidence of the have relation for ``kind``.

        Token columns are ordered by sorted token string.
        """
        tokens = self.attribute_tokens(kind)
        vocab = sorted(set().union(*tokens)) if tokens else []
        col = {t: j for j, t in enumerate(vocab)}
        rows, cols = [], []
        for p, s in enumerate(tokens):
            for t in s:
                rows.append(p)
                cols.append(col[t])
        return sp.csr_matrix(
            (np.ones(len(rows), dtype=np.int64), (rows, cols)),
            shape=(self.n_posts, len(vocab)),
        )

    def with_changes(self, **changes):
        fields = dict(
            user_ids=self.user_ids,
            post_ids=self.post_ids,
            post_author=self.post_author,
            follow=self.follow,
            post_words=self.post_words,
            post_timestamps=self.post_timestamps,
            post_locations=self.post_locations,
            time_bucketing=self.time_bucketing,
        )
        fields.update(changes)
        return HeterogeneousNetwork(**fields)

    def without_follows(self, edges):
        """Copy with the given ``(u, v)`` follow edges removed."""
        drop = {(int(u), int(v)) for u, v in edges}
        keep = [k for k, (u, v) in enumerate(self.follow) if (int(u), int(v)) not in drop]
        return self.with_changes(follow=self.follow[keep])

    def same_as(self, other):
        """Structural equality, including index order."""
        return (
            self.user_ids == other.user_ids
            and self.post_ids == other.post_ids
            and np.array_equal(self.post_author, other.post_author)
            and np.array_equal(self.follow, other.follow)
            and self.post_words == other.post_words
            and self.post_timestamps == other.post_timestamps
            and self.post_locations == other.post_locations
            and self.time_bucketing == other.time_bucketing
        )

    def __repr__(self):
        return (
            f"HeterogeneousNetwork(users={self.n_users}, posts={self.n_posts}, "
            f"follows={self.n_follows})"
        )


# edge-list-v1 ---------------------------------------------------------------

_ARITY = {"U": 1, "P": 2, "F": 2, "AW": 2, "AT": 2, "AL": 2}


def parse_network(lines, time_bucketing="hour-of-week"):
    """Parse edge-list-v1 records from an iterable of text lines."""
    records = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag, args = parts[0], parts[1:]
        if tag not in _ARITY:
            raise NetworkFormatError(f"unknown record type {tag!r}", lineno)
        if len(args) != _ARITY[tag]:
            raise NetworkFormatError(
                f"{tag} record takes {_ARITY[tag]} fields, got {len(args)}", lineno
            )
        records.append((lineno, tag, args))

    users, posts, authors = {}, {}, []
    for lineno, tag, args in records:
        if tag == "U":
            if args[0] in users:
                raise NetworkFormatError(f"user {args[0]!r} declared twice", lineno)
            users[args[0]] = len(users)
        elif tag == "P":
            if args[0] in posts:
                raise NetworkFormatError(f"post {args[0]!r} declared twice", lineno)
            posts[args[0]] = len(posts)
            authors.append((lineno, args[1]))

    def user(uid, lineno):
        if uid not in users:
            raise DanglingReferenceError(f"undeclared user {uid!r}", lineno)
        return users[uid]

    def post(pid, lineno):
        if pid not in posts:
            raise DanglingReferenceError(f"undeclared post {pid!r}", lineno)
        return posts[pid]

    post_author = [user(uid, lineno) for lineno, uid in authors]
    n_p = len(posts)
    words = [set() for _ in range(n_p)]
    stamps = [set() for _ in range(n_p)]
    locs = [set() for _ in range(n_p)]
    follow, seen = [], set()
    for lineno, tag, args in records:
        if tag == "F":
            e = (user(args[0], lineno), user(args[1], lineno))
            if e[0] == e[1]:
                raise NetworkFormatError(f"self-loop on user {args[0]!r}", lineno)
            if e in seen:
                raise DuplicateEdgeError(
                    f"duplicate follow edge {args[0]} -> {args[1]}", lineno
                )
            seen.add(e)
            follow.append(e)
        elif tag == "AW":
            words[post(args[0], lineno)].add(args[1])
        elif tag == "AL":
            locs[post(args[0], lineno)].add(args[1])
        elif tag == "AT":
            p = post(args[0], lineno)
            try:
                stamps[p].add(int(args[1]))
            except ValueError:
                raise NetworkFormatError(
                    f"timestamp {args[1]!r} is not an integer", lineno
                ) from None

    return HeterogeneousNetwork(
        user_ids=tuple(users),
        post_ids=tuple(posts),
        post_author=post_author,
        follow=np.array(follow, dtype=np.int64).reshape(-1, 2),
        post_words=words,
        post_timestamps=stamps,
        post_locations=locs,
        time_bucketing=time_bucketing,
    )


def load_network(path, format="edge-list-v1", time_bucketing="hour-of-week"):
    """Read a network file; node indices follow declaration order."""
    if format != "edge-list-v1":
        raise ValueError(f"unsupported network format {format!r}")
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh, time_bucketing=time_bucketing)


def format_network(net):
    """Canonical edge-list-v1 text for ``net``.

    Users and posts are written in index order, follow edges sorted by index
    pair, attribute records per post with tokens sorted.
    """
    out = [f"U {u}" for u in net.user_ids]
    out += [f"P {p} {net.user_ids[a]}" for p, a in zip(net.post_ids, net.post_author)]
    for u, v in sorted(map(tuple, net.follow.tolist())):
        out.append(f"F {net.user_ids[u]} {net.user_ids[v]}")
    for k, pid in enumerate(net.post_ids):
        out += [f"AW {pid} {w}" for w in sorted(net.post_words[k])]
        out += [f"AT {pid} {t}" for t in sorted(net.post_timestamps[k])]
        out += [f"AL {pid} {loc}" for loc in sorted(net.post_locations[k])]
    return "\n".join(out) + "\n"


def dump_network(net, path):
    Path(path).write_text(format_network(net), encoding="utf-8")


# alignment ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AlignedPair:
    """Emerging network, mature network and the anchor links between them.

    ``anchors`` holds ``(i, j)`` pairs: user ``i`` of the emerging network is
    the same person as user ``j`` of the mature network.
    """

    net_emerging: HeterogeneousNetwork
    net_mature: HeterogeneousNetwork
    anchors: tuple = ()

    def __post_init__(self):
        anchors = tuple(sorted((int(i), int(j)) for i, j in self.anchors))
        object.__setattr__(self, "anchors", anchors)
        left = [i for i, _ in anchors]
        right = [j for _, j in anchors]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise AnchorError("anchor links must form a one-to-one matching")
        for i, j in anchors:
            if not (0 <= i < self.net_emerging.n_users):
                raise AnchorError(f"anchor user {i} not in emerging network")
            if not (0 <= j < self.net_mature.n_users):
                raise AnchorError(f"anchor user {j} not in mature network")

    @property
    def n_anchors(self):
        return len(self.anchors)

    def with_emerging(self, net):
        return AlignedPair(net, self.net_mature, self.anchors)

    def swapped(self):
        """The same alignment viewed from the mature network."""
        return AlignedPair(
            self.net_mature, self.net_emerging, [(j, i) for i, j in self.anchors]
        )


def load_anchors(path, g1, g2):
    """Read anchors-v1 and validate them against both networks."""
    idx1, idx2 = g1.user_index(), g2.user_index()
    anchors, seen1, seen2 = [], {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise NetworkFormatError("anchor line needs two user ids", lineno)
            a, b = parts
            if a not in idx1:
                raise AnchorError(f"line {lineno}: unknown emerging user {a!r}")
            if b not in idx2:
                raise AnchorError(f"line {lineno}: unknown mature user {b!r}")
            i, j = idx1[a], idx2[b]
            if seen1.get(i, j) != j or seen2.get(j, i) != i:
                raise AnchorError(f"line {lineno}: anchor mapping is not injective")
            if i in seen1:
                raise AnchorError(f"line {lineno}: duplicate anchor {a} {b}")
            seen1[i], seen2[j] = j, i
            anchors.append((i, j))
    return AlignedPair(g1, g2, anchors)


def dump_anchors(pair, path):
    u1, u2 = pair.net_emerging.user_ids, pair.net_mature.user_ids
    text = "".join(f"{u1[i]} {u2[j]}\n" for i, j in pair.anchors)
    Path(path).write_text(text, encoding="utf-8")


def build_transition_matrix(pair):
    """Binary ``|U1| x |U2|`` matrix with a one at every anchor pair."""
    shape = (pair.net_emerging.n_users, pair.net_mature.n_users)
    if not pair.anchors:
        return sp.csr_matrix(shape, dtype=np.float64)
    i, j = np.array(pair.anchors, dtype=np.int64).T
    return sp.csr_matrix((np.ones(len(i)), (i, j)), shape=shape)


# sparsification -------------------------------------------------------------


def _kept_count(fraction, count):
    # round first so that e.g. 0.3 * 10 does not ceil to 4
    return min(count, math.ceil(round(fraction * count, 9)))


def sample_network(net, lam, seed, protected_edges=()):
    """Keep ``ceil(lam * count)`` follow edges and posts, chosen at random.

    Protected follow edges always survive and are not part of the sampled
    population.  Users are never removed.
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"sampling ratio must be in (0, 1], got {lam}")
    rng = np.random.default_rng(seed)
    protected = {(int(u), int(v)) for u, v in protected_edges}
    is_protected = np.array(
        [(int(u), int(v)) in protected for u, v in net.follow], dtype=bool
    )
    candidates = np.flatnonzero(~is_protected)
    chosen = rng.choice(len(candidates), _kept_count(lam, len(candidates)), replace=False)
    keep_edge = is_protected.copy()
    keep_edge[candidates[chosen]] = True

    posts = np.sort(rng.choice(net.n_posts, _kept_count(lam, net.n_posts), replace=False))
    return net.with_changes(
        follow=net.follow[keep_edge],
        post_ids=[net.post_ids[p] for p in posts],
        post_author=net.post_author[posts],
        post_words=[net.post_words[p] for p in posts],
        post_timestamps=[net.post_timestamps[p] for p in posts],
        post_locations=[net.post_locations[p] for p in posts],
    )
