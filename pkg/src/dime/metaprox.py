"""Meta path instance counting and meta proximity matrices.

Eight social meta paths start and end at users::

    0  U -follow-> U
    1  U -follow-> U -follow-> U
    2  U -follow-> U <-follow- U
    3  U <-follow- U -follow-> U
    4  U <-follow- U <-follow- U
    5  U -write-> P -have-> Word <-have- P <-write- U
    6  U -write-> P -have-> Time <-have- P <-write- U
    7  U -write-> P -have-> Location <-have- P <-write- U

Instance counts are chained sparse products of the step adjacency matrices.
Path 0 uses the binary follow indicator; paths 1-7 use the normalized score
``2 c(i, j) / (c(i, .) + c(., j))``.
"""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MetaPath",
    "META_PATHS",
    "ProximityMatrix",
    "count_path_instances",
    "meta_proximity",
    "friendship_proximity",
    "proximity_bundle",
    "save_bundle",
    "load_bundle",
    "BundleFormatError",
]


@dataclass(frozen=True)
class MetaPath:
    id: int
    notation: str
    steps: tuple
    semantics: str

    def __str__(self):
        return f"Phi{self.id}"


META_PATHS = (
    MetaPath(0, "U->U", ("follow",), "follow"),
    MetaPath(1, "U->U->U", ("follow", "follow"), "follower of follower"),
    MetaPath(2, "U->U<-U", ("follow", "follow^-1"), "common out neighbor"),
    MetaPath(3, "U<-U->U", ("follow^-1", "follow"), "common in neighbor"),
    MetaPath(4, "U<-U<-U", ("follow^-1", "follow^-1"), "followee of followee"),
    MetaPath(
        5, "U->P->W<-P<-U", ("write", "have_word", "have_word^-1", "write^-1"),
        "posts containing common words",
    ),
    MetaPath(
        6, "U->P->T<-P<-U", ("write", "have_time", "have_time^-1", "write^-1"),
        "posts containing common timestamps",
    ),
    MetaPath(
        7, "U->P->L<-P<-U",
        ("write", "have_location", "have_location^-1", "write^-1"),
        "posts attaching common location check-ins",
    ),
)


def _as_path(phi):
    if isinstance(phi, MetaPath):
        return phi
    try:
        return META_PATHS[int(phi)]
    except (IndexError, ValueError, TypeError):
        raise ValueError(f"unknown meta path {phi!r}") from None


def _relation(net, step, cache):
    if step in cache:
        return cache[step]
    inverse = step.endswith("^-1")
    base = step[:-3] if inverse else step
    if base == "follow":
        m = net.follow_matrix()
    elif base == "write":
        m = net.write_matrix()
    elif base.startswith("have_"):
        m = net.attribute_matrix(base[len("have_"):])
    else:
        raise ValueError(f"unknown relation {step!r}")
    m = m.T.tocsr() if inverse else m
    cache[step] = m
    return m


def _estimated_nnz(a, b):
    inner = max(a.shape[1], 1)
    return min(a.shape[0] * b.shape[1], a.nnz * b.nnz / inner)


def _blocked_matmul(a, b, block_rows=None, top_n=None):
    """``a @ b`` computed in row blocks, optionally keeping the ``top_n``
    largest entries of every output row."""
    a, b = a.tocsr(), b.tocsr()
    if block_rows is None and top_n is None:
        return (a @ b).tocsr()
    step = block_rows or a.shape[0] or 1
    blocks = []
    for start in range(0, a.shape[0], step):
        blk = (a[start:start + step] @ b).tocsr()
        if top_n is not None:
            blk = _truncate_rows(blk, top_n)
        blocks.append(blk)
    if not blocks:
        return sp.csr_matrix((a.shape[0], b.shape[1]), dtype=a.dtype)
    return sp.vstack(blocks, format="csr")


def _truncate_rows(m, top_n):
    m.sort_indices()
    data, indices, indptr = [], [], [0]
    for r in range(m.shape[0]):
        lo, hi = m.indptr[r], m.indptr[r + 1]
        vals, cols = m.data[lo:hi], m.indices[lo:hi]
        if hi - lo > top_n:
            # stable: ties broken by column index
            keep = np.sort(np.argsort(-vals, kind="stable")[:top_n])
            vals, cols = vals[keep], cols[keep]
        data.append(vals)
        indices.append(cols)
        indptr.append(indptr[-1] + len(vals))
    return sp.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
        shape=m.shape,
    )


def _chain_product(mats, block_rows=None, top_n=None):
    # Greedy association: always multiply the adjacent pair with the smallest
    # estimated output, the last product goes through the blocked kernel.
    mats = [m.tocsr().astype(np.int64) for m in mats]
    while len(mats) > 2:
        k = min(range(len(mats) - 1), key=lambda i: _estimated_nnz(mats[i], mats[i + 1]))
        mats[k:k + 2] = [(mats[k] @ mats[k + 1]).tocsr()]
    if len(mats) == 1:
        return mats[0].copy()
    return _blocked_matmul(mats[0], mats[1], block_rows, top_n)


def count_path_instances(net, phi, include_self=False, block_rows=None, top_n=None):
    """Number of instances of meta path ``phi`` between every user pair.

    Returns an int64 CSR matrix with sorted column indices.  The diagonal
    (paths that return to their start user) is zeroed unless
    ``include_self`` is set.
    """
    path = _as_path(phi)
    cache = {}
    counts = _chain_product(
        [_relation(net, s, cache) for s in path.steps], block_rows, top_n
    )
    if not include_self:
        counts.setdiag(0)
    counts.eliminate_zeros()
    counts.sort_indices()
    return counts


@dataclass(frozen=True, eq=False)
class ProximityMatrix:
    """User-by-user proximity along one meta path.

    ``row_sums`` and ``col_sums`` are the path-count totals the scores were
    normalized with; they are ``None`` for matrices read back from disk.
    """

    path_id: int
    matrix: sp.csr_matrix
    row_sums: np.ndarray = None
    col_sums: np.ndarray = None

    @property
    def n_users(self):
        return self.matrix.shape[0]

    def toarray(self):
        return self.matrix.toarray()


def meta_proximity(net, phi, include_self=False, block_rows=None, top_n=None):
    """Normalized meta proximity for paths 1-7."""
    path = _as_path(phi)
    if path.id == 0:
        raise ValueError("path 0 uses friendship_proximity, not meta_proximity")
    counts = count_path_instances(net, path, include_self, block_rows, top_n)
    row_sums = np.asarray(counts.sum(axis=1)).ravel().astype(np.int64)
    col_sums = np.asarray(counts.sum(axis=0)).ravel().astype(np.int64)
    coo = counts.tocoo()
    denom = row_sums[coo.row] + col_sums[coo.col]
    values = 2.0 * coo.data / denom
    prox = sp.csr_matrix((values, (coo.row, coo.col)), shape=counts.shape)
    prox.sort_indices()
    return ProximityMatrix(path.id, prox, row_sums, col_sums)


def friendship_proximity(net):
    """Binary follow indicator matrix (path 0)."""
    a = net.follow_matrix().astype(np.float64)
    a.sort_indices()
    f = net.follow
    n = net.n_users
    return ProximityMatrix(
        0,
        a,
        np.bincount(f[:, 0], minlength=n).astype(np.int64),
        np.bincount(f[:, 1], minlength=n).astype(np.int64),
    )


def proximity_bundle(net, paths=None, include_self=False, block_rows=None, top_n=None):
    """Proximity matrices for ``paths`` (default: all eight, in id order)."""
    ids = range(len(META_PATHS)) if paths is None else sorted({int(p) for p in paths})
    out = []
    for k in ids:
        if k == 0:
            out.append(friendship_proximity(net))
        else:
            out.append(meta_proximity(net, k, include_self, block_rows, top_n))
    return out


# binary container -----------------------------------------------------------

BUNDLE_MAGIC = b"DIMEPROX1"
_HEADER = struct.Struct("<9sQIQ")  # magic, n_users, path id, nnz
_TRIPLET = np.dtype([("row", "<i8"), ("col", "<i8"), ("value", "<f8")])


class BundleFormatError(ValueError):
    pass


def save_bundle(bundle, path):
    """Write proximity matrices as consecutive DIMEPROX1 records.

    Each record is a little-endian header (magic, user count, path id,
    triplet count) followed by ``(row, col, value)`` triplets sorted
    row-major.
    """
    with open(path, "wb") as fh:
        for pm in bundle:
            coo = pm.matrix.tocsr()
            coo.sort_indices()
            coo = coo.tocoo()
            trip = np.empty(coo.nnz, dtype=_TRIPLET)
            trip["row"], trip["col"], trip["value"] = coo.row, coo.col, coo.data
            fh.write(_HEADER.pack(BUNDLE_MAGIC, pm.n_users, pm.path_id, coo.nnz))
            fh.write(trip.tobytes())


def load_bundle(path):
    data = open(path, "rb").read()
    out, pos = [], 0
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise BundleFormatError("truncated bundle header")
        magic, n, path_id, nnz = _HEADER.unpack_from(data, pos)
        if magic != BUNDLE_MAGIC:
            raise BundleFormatError("bad bundle magic")
        pos += _HEADER.size
        end = pos + nnz * _TRIPLET.itemsize
        if end > len(data):
            raise BundleFormatError("truncated triplet list")
        trip = np.frombuffer(data[pos:end], dtype=_TRIPLET)
        pos = end
        m = sp.csr_matrix((trip["value"], (trip["row"], trip["col"])), shape=(n, n))
        m.sort_indices()
        out.append(ProximityMatrix(int(path_id), m))
    return out
