"""Aligned multi-path autoencoders.

Each network gets one encoder stack per meta path.  The top hidden layers of
all paths are fused by a fully connected layer into a shared hidden vector,
which is mapped to the embedding ``z``.  Decoding mirrors this: ``z`` is
mapped back to a shared hidden vector, dispatched to every path and decoded
to a reconstruction of that path's proximity row.  All activations are
logistic sigmoids.

Objective for an aligned pair::

    L = L1 + L2 + alpha * ||T' Z1 W12 - Z2||_F^2 + beta * L_reg

where ``Li`` is the reconstruction error with non-zero input entries
weighted by ``gamma`` and ``L_reg`` sums the squared Frobenius norms of all
weight matrices (biases excluded) and of ``W12``.

Per-path weights are stored stacked, shape ``(n_paths, out, in)``, so one
batched matmul runs every path at once.
"""

import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .seeding import rng_for

__all__ = [
    "ArchitectureSpec",
    "TrainConfig",
    "NetworkParams",
    "DimeParams",
    "TrainingData",
    "TrainResult",
    "DivergenceError",
    "init_params",
    "encode",
    "decode",
    "recon_loss",
    "fusion_loss",
    "reg_loss",
    "total_loss",
    "gradients",
    "loss_and_gradients",
    "full_loss",
    "embed_all",
    "train",
    "embed_single",
    "save_checkpoint",
    "load_checkpoint",
    "write_embeddings_csv",
]

ALL_PATHS = tuple(range(8))


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer widths of one network's model.

    ``encoder_widths`` are the per-path hidden widths from the input side;
    the decoder mirrors them.  ``paths`` selects which meta paths feed the
    model, ``(0,)`` gives a plain adjacency autoencoder.
    """

    encoder_widths: tuple = (500, 50)
    fusion_width: int = 50
    embed_dim: int = 50
    paths: tuple = ALL_PATHS
    # multiplier on the Glorot bound; 4 is a common choice for logistic units
    init_gain: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "paths", tuple(sorted({int(p) for p in self.paths})))
        if not self.encoder_widths:
            raise ValueError("need at least one encoder layer")
        if min(self.encoder_widths) < 1 or self.fusion_width < 1 or self.embed_dim < 1:
            raise ValueError("all layer widths must be >= 1")
        if not self.init_gain > 0:
            raise ValueError("init_gain must be positive")
        if not self.paths or not set(self.paths) <= set(ALL_PATHS):
            raise ValueError(f"paths must be a non-empty subset of 0..7, got {self.paths}")

    @property
    def n_paths(self):
        return len(self.paths)

    @property
    def depth(self):
        return len(self.encoder_widths)

    def decoder_widths(self, n_inputs):
        return tuple(reversed((n_inputs,) + self.encoder_widths[:-1]))


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    beta: float = 0.02
    gamma: float = 100.0
    epochs: int = 600
    batch_size: int = 64
    learning_rate: float = 0.001
    seed: int = 0
    # restrict the fusion loss to anchored rows of Z2
    anchor_rows_only: bool = False
    track_full_loss: bool = True
    # rescale each step's gradient to at most this global L2 norm (0 = off)
    clip_norm: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must be > 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.clip_norm < 0:
            raise ValueError("clip_norm must be >= 0")


# parameters -----------------------------------------------------------------


@dataclass
class NetworkParams:
    """Weights of one network's model.

    Encoder layer ``l`` (1-based) has ``enc_W[l-1]`` of shape
    ``(n_paths, h_l, h_{l-1})`` with ``h_0`` the number of users.  Decoder
    layer ``dec_W[l-1]`` maps ``h_l`` back to ``h_{l-1}``, so ``dec_W[0]``
    produces the reconstruction.
    """

    enc_W: list
    enc_b: list
    fuse_W: np.ndarray  # (n_paths, fusion, h_o)
    fuse_b: np.ndarray
    emb_W: np.ndarray  # (d, fusion)
    emb_b: np.ndarray
    demb_W: np.ndarray  # (fusion, d)
    demb_b: np.ndarray
    disp_W: np.ndarray  # (n_paths, h_o, fusion)
    disp_b: np.ndarray
    dec_W: list
    dec_b: list

    def named(self, prefix=""):
        """``(name, array)`` pairs in checkpoint order."""
        out = []
        for l, (w, b) in enumerate(zip(self.enc_W, self.enc_b), start=1):
            out += [(f"{prefix}enc{l}.W", w), (f"{prefix}enc{l}.b", b)]
        out += [
            (f"{prefix}fuse.W", self.fuse_W), (f"{prefix}fuse.b", self.fuse_b),
            (f"{prefix}emb.W", self.emb_W), (f"{prefix}emb.b", self.emb_b),
            (f"{prefix}demb.W", self.demb_W), (f"{prefix}demb.b", self.demb_b),
            (f"{prefix}disp.W", self.disp_W), (f"{prefix}disp.b", self.disp_b),
        ]
        for l in range(len(self.dec_W), 0, -1):
            out += [(f"{prefix}dec{l}.W", self.dec_W[l - 1]), (f"{prefix}dec{l}.b", self.dec_b[l - 1])]
        return out

    def weights(self):
        return [a for name, a in self.named() if name.endswith(".W")]

    def map(self, fn):
        return NetworkParams(
            [fn(a) for a in self.enc_W], [fn(a) for a in self.enc_b],
            fn(self.fuse_W), fn(self.fuse_b), fn(self.emb_W), fn(self.emb_b),
            fn(self.demb_W), fn(self.demb_b), fn(self.disp_W), fn(self.disp_b),
            [fn(a) for a in self.dec_W], [fn(a) for a in self.dec_b],
        )


@dataclass
class DimeParams:
    """Parameters of one (single-network) or two (aligned) models.

    ``cross`` is the ``(d1, d2)`` projection between the two embedding
    spaces, ``None`` for a single network.
    """

    archs: tuple
    input_dims: tuple
    nets: list
    cross: np.ndarray = None

    def named_tensors(self):
        out = []
        for i, p in enumerate(self.nets, start=1):
            out += p.named(f"net{i}.")
        if self.cross is not None:
            out.append(("cross.W", self.cross))
        return out

    def tensors(self):
        return [a for _, a in self.named_tensors()]

    def map(self, fn):
        return DimeParams(
            self.archs, self.input_dims, [p.map(fn) for p in self.nets],
            None if self.cross is None else fn(self.cross),
        )

    def copy(self):
        return self.map(np.copy)

    def zeros_like(self):
        return self.map(np.zeros_like)

    def scaled(self, c, weights_only=True):
        """Copy with weight matrices (and optionally biases) multiplied by ``c``."""
        out = self.copy()
        for name, a in out.named_tensors():
            if name.endswith(".W") or not weights_only:
                a *= c
        return out


def _glorot(rng, shape, gain=1.0):
    fan_out, fan_in = shape[-2], shape[-1]
    s = gain * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def _init_network(arch, n_inputs, rng):
    K, widths = arch.n_paths, (n_inputs,) + arch.encoder_widths
    h_o, f, d = widths[-1], arch.fusion_width, arch.embed_dim
    g = arch.init_gain
    enc_W = [_glorot(rng, (K, widths[l], widths[l - 1]), g) for l in range(1, len(widths))]
    enc_b = [np.zeros((K, w)) for w in widths[1:]]
    fuse_W = _glorot(rng, (K, f, h_o), g)
    emb_W = _glorot(rng, (d, f), g)
    demb_W = _glorot(rng, (f, d), g)
    disp_W = _glorot(rng, (K, h_o, f), g)
    dec_W = [_glorot(rng, (K, widths[l - 1], widths[l]), g) for l in range(1, len(widths))]
    dec_b = [np.zeros((K, w)) for w in widths[:-1]]
    return NetworkParams(
        enc_W, enc_b, fuse_W, np.zeros(f), emb_W, np.zeros(d),
        demb_W, np.zeros(f), disp_W, np.zeros((K, h_o)), dec_W, dec_b,
    )


def init_params(arch, seed, input_dims, arch_mature=None, names=None):
    """Glorot-uniform weights (bound scaled by ``arch.init_gain``) and zero biases.

    ``input_dims`` holds the user count of each network (one entry for a
    single network, two for an aligned pair).  Each network draws from its
    own named stream so its initial weights do not depend on the other.
    """
    input_dims = tuple(int(n) for n in input_dims)
    archs = (arch,) if len(input_dims) == 1 else (arch, arch_mature or arch)
    names = names or tuple(f"net{i}" for i in range(1, len(input_dims) + 1))
    nets = [
        _init_network(a, n, rng_for(seed, "init", name))
        for a, n, name in zip(archs, input_dims, names)
    ]
    cross = None
    if len(nets) == 2:
        # W12 is linear, so it keeps the plain Glorot bound
        cross = _glorot(rng_for(seed, "init", "cross"), (archs[0].embed_dim, archs[1].embed_dim))
    return DimeParams(archs, input_dims, nets, cross)


# forward / backward ---------------------------------------------------------


def _dsig(a):
    return a * (1.0 - a)


def _encode(p, x):
    acts = [x]
    a = x
    for W, b in zip(p.enc_W, p.enc_b):
        a = expit(np.matmul(a, W.transpose(0, 2, 1)) + b[:, None, :])
        acts.append(a)
    yf = expit(np.tensordot(a, p.fuse_W, axes=([0, 2], [0, 2])) + p.fuse_b)
    z = expit(yf @ p.emb_W.T + p.emb_b)
    return z, (acts, yf)


def _decode(p, z):
    yh = expit(z @ p.demb_W.T + p.demb_b)
    h = expit(np.matmul(yh, p.disp_W.transpose(0, 2, 1)) + p.disp_b[:, None, :])
    hs = [h]
    for W, b in zip(reversed(p.dec_W), reversed(p.dec_b)):
        h = expit(np.matmul(h, W.transpose(0, 2, 1)) + b[:, None, :])
        hs.append(h)
    return h, (yh, hs)


def _backward_decoder(p, g, z, cache, grads):
    """Accumulate decoder gradients given ``dL/dxhat``; return ``dL/dz``."""
    yh, hs = cache
    o = len(p.dec_W)
    delta = g * _dsig(hs[-1])
    for l in range(1, o + 1):
        inp = hs[-1 - l]
        grads.dec_W[l - 1] += np.matmul(delta.transpose(0, 2, 1), inp)
        grads.dec_b[l - 1] += delta.sum(axis=1)
        delta = np.matmul(delta, p.dec_W[l - 1]) * _dsig(inp)
    grads.disp_W += np.matmul(delta.transpose(0, 2, 1), yh)
    grads.disp_b += delta.sum(axis=1)
    dyh = np.tensordot(delta, p.disp_W, axes=([0, 2], [0, 1])) * _dsig(yh)
    grads.demb_W += dyh.T @ z
    grads.demb_b += dyh.sum(axis=0)
    return dyh @ p.demb_W


def _backward_encoder(p, dz, z, cache, grads):
    acts, yf = cache
    dpre = dz * _dsig(z)
    grads.emb_W += dpre.T @ yf
    grads.emb_b += dpre.sum(axis=0)
    dyf = (dpre @ p.emb_W) * _dsig(yf)
    grads.fuse_W += np.tensordot(dyf, acts[-1], axes=([0], [1])).transpose(1, 0, 2)
    grads.fuse_b += dyf.sum(axis=0)
    da = np.matmul(dyf, p.fuse_W)
    for l in range(len(p.enc_W), 0, -1):
        delta = da * _dsig(acts[l])
        grads.enc_W[l - 1] += np.matmul(delta.transpose(0, 2, 1), acts[l - 1])
        grads.enc_b[l - 1] += delta.sum(axis=1)
        if l > 1:
            da = np.matmul(delta, p.enc_W[l - 1])


def _as_batch(x, n_paths):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3 or x.shape[0] != n_paths:
        raise ValueError(f"expected ({n_paths}, batch, n_users) inputs, got {x.shape}")
    return x


def encode(params, net_id, x_bundle):
    """Embed a batch of users.

    ``x_bundle`` has shape ``(n_paths, batch, n_users)`` (or
    ``(n_paths, n_users)`` for one user).  Returns ``(z, cache)`` where the
    cache holds every hidden activation.
    """
    p = params.nets[net_id - 1]
    x = _as_batch(x_bundle, params.archs[net_id - 1].n_paths)
    if x.shape[2] != params.input_dims[net_id - 1]:
        raise ValueError(
            f"input rows have {x.shape[2]} entries, network has "
            f"{params.input_dims[net_id - 1]} users"
        )
    return _encode(p, x)


def decode(params, net_id, z):
    """Reconstruct every path's input rows from embeddings ``z``."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != params.archs[net_id - 1].embed_dim:
        raise ValueError(f"embedding has dimension {z.shape[1]}")
    return _decode(params.nets[net_id - 1], z)[0]


# losses ---------------------------------------------------------------------


def _recon_weights(x, gamma):
    return np.where(x != 0, gamma, 1.0)


def recon_loss(x_bundle, xhat_bundle, gamma):
    """Squared reconstruction error with non-zero inputs weighted by ``gamma``."""
    x = np.asarray(x_bundle, dtype=np.float64)
    r = (x - np.asarray(xhat_bundle, dtype=np.float64)) * _recon_weights(x, gamma)
    return float(np.sum(r * r))


def fusion_loss(Z1, Z2, T, W12, anchor_rows_only=False):
    """``||T' Z1 W12 - Z2||_F^2``.

    Rows of ``Z2`` without an anchor are compared against zero unless
    ``anchor_rows_only`` drops them.
    """
    Z1, Z2, W12 = (np.asarray(a, dtype=np.float64) for a in (Z1, Z2, W12))
    T = sp.csr_matrix(T)
    if T.shape != (Z1.shape[0], Z2.shape[0]) or W12.shape != (Z1.shape[1], Z2.shape[1]):
        raise ValueError("shape mismatch in fusion loss")
    r = T.T @ (Z1 @ W12) - Z2
    if anchor_rows_only:
        r = r[np.asarray(T.sum(axis=0)).ravel() > 0]
    return float(np.sum(r * r))


def reg_loss(params):
    """Sum of squared Frobenius norms of all weight matrices and ``W12``."""
    total = 0.0
    for p in params.nets:
        for w in p.weights():
            total += float(np.sum(w * w))
    if params.cross is not None:
        total += float(np.sum(params.cross * params.cross))
    return total


# training data --------------------------------------------------------------

_DENSE_LIMIT = 60_000_000


class _NetworkInputs:
    """Proximity rows of one network for the paths its model consumes."""

    def __init__(self, bundle, paths):
        by_id = {pm.path_id: pm for pm in bundle}
        missing = [k for k in paths if k not in by_id]
        if missing:
            raise ValueError(f"bundle lacks meta paths {missing}")
        self.mats = [sp.csr_matrix(by_id[k].matrix, dtype=np.float64) for k in paths]
        self.n_users = self.mats[0].shape[0]
        self.dense = None
        if len(paths) * self.n_users ** 2 <= _DENSE_LIMIT:
            self.dense = np.stack([m.toarray() for m in self.mats])

    def rows(self, idx):
        if self.dense is not None:
            return self.dense[:, idx, :]
        return np.stack([m[idx].toarray() for m in self.mats])


class TrainingData:
    """Model inputs for one or two networks plus the anchor mapping.

    ``bundles`` are lists of proximity matrices (as from
    :func:`dime.metaprox.proximity_bundle`); ``anchors`` are ``(i, j)`` user
    index pairs between network 1 and network 2.
    """

    def __init__(self, bundles, archs, anchors=()):
        self.inputs = [_NetworkInputs(b, a.paths) for b, a in zip(bundles, archs)]
        self.archs = tuple(archs)
        self.n_users = tuple(inp.n_users for inp in self.inputs)
        self.partner = None
        if len(self.inputs) == 2:
            self.partner = np.full(self.n_users[0], -1, dtype=np.int64)
            self.anchored2 = np.zeros(self.n_users[1], dtype=bool)
            for i, j in anchors:
                self.partner[i] = j
                self.anchored2[j] = True


@dataclass
class _Accum:
    loss: float = 0.0
    parts: dict = field(default_factory=dict)

    def add(self, key, value):
        self.loss += value
        self.parts[key] = self.parts.get(key, 0.0) + value


def _recon_step(p, data_in, rows, gamma, grads_net, need_grad, extra_rows=None):
    """Forward (and backward) for one network's batch.

    Returns ``(recon, z, dz, cache)`` where ``z`` covers ``rows`` followed
    by ``extra_rows`` (encoded only, no reconstruction).
    """
    all_rows = rows if extra_rows is None else np.concatenate([rows, extra_rows])
    x = data_in.rows(all_rows)
    z, enc_cache = _encode(p, x)
    nb = len(rows)
    xb = x[:, :nb, :]
    xh, dec_cache = _decode(p, z[:nb])
    wts = _recon_weights(xb, gamma)
    r = (xh - xb) * wts
    loss = float(np.sum(r * r))
    dz = None
    if need_grad:
        dz = np.zeros_like(z)
        dz[:nb] = _backward_decoder(p, 2.0 * r * wts, z[:nb], dec_cache, grads_net)
    return loss, z, dz, enc_cache


def loss_and_gradients(batch, params, config, data, need_grad=True):
    """Batch objective and (optionally) its exact gradient.

    ``batch`` holds one index array per network.  Reconstruction and
    regularization of a network enter only when its part of the batch is
    non-empty; the fusion term covers anchors whose emerging-side user is in
    the batch plus, in literal mode, the non-anchored mature users of the
    batch.
    """
    acc = _Accum()
    grads = params.zeros_like() if need_grad else None
    nets = len(params.nets)
    batch = [np.asarray(b, dtype=np.int64) for b in batch]
    fused = nets == 2 and config.alpha != 0
    zs, dzs, caches = [None] * nets, [None] * nets, [None] * nets

    anchor_rows = partner_pos = na_rows = None
    if fused:
        part = data.partner[batch[0]]
        anchor_rows = np.flatnonzero(part >= 0)
        partners = part[anchor_rows]
        # partner embeddings are taken from the batch rows when present
        pos_in_b2 = {int(j): k for k, j in enumerate(batch[1])}
        extra = [j for j in partners if int(j) not in pos_in_b2]
        extra_pos = {int(j): len(batch[1]) + k for k, j in enumerate(extra)}
        partner_pos = np.array(
            [pos_in_b2.get(int(j), extra_pos.get(int(j))) for j in partners], dtype=np.int64
        )
        partner_extra = np.array(extra, dtype=np.int64)
        if not config.anchor_rows_only:
            na_rows = np.flatnonzero(~data.anchored2[batch[1]])

    for i in range(nets):
        rows = batch[i]
        extra_rows = partner_extra if fused and i == 1 else None
        if len(rows) == 0 and (extra_rows is None or len(extra_rows) == 0):
            continue
        p = params.nets[i]
        loss, z, dz, cache = _recon_step(
            p, data.inputs[i], rows, config.gamma,
            grads.nets[i] if need_grad else None, need_grad, extra_rows,
        )
        if len(rows):
            acc.add(f"recon{i + 1}", loss)
            reg = sum(float(np.vdot(w, w)) for w in p.weights())
            acc.add(f"reg{i + 1}", config.beta * reg)
            if need_grad and config.beta:
                for w, gw in zip(p.weights(), grads.nets[i].weights()):
                    gw += 2.0 * config.beta * w
        zs[i], dzs[i], caches[i] = z, dz, cache

    if nets == 2:
        W12 = params.cross
        acc.add("reg_cross", config.beta * float(np.sum(W12 * W12)))
        if need_grad and config.beta:
            grads.cross += 2.0 * config.beta * W12
    if fused:
        a = config.alpha
        fl = 0.0
        if len(anchor_rows):
            z1 = zs[0][anchor_rows]
            r = z1 @ params.cross - zs[1][partner_pos]
            fl += float(np.sum(r * r))
            if need_grad:
                dzs[0][anchor_rows] += 2.0 * a * (r @ params.cross.T)
                grads.cross += 2.0 * a * (z1.T @ r)
                dzs[1][partner_pos] -= 2.0 * a * r
        if na_rows is not None and len(na_rows):
            z2 = zs[1][na_rows]
            fl += float(np.sum(z2 * z2))
            if need_grad:
                dzs[1][na_rows] += 2.0 * a * z2
        acc.add("fusion", a * fl)

    if need_grad:
        for i in range(nets):
            if zs[i] is not None:
                _backward_encoder(params.nets[i], dzs[i], zs[i], caches[i], grads.nets[i])
    return acc, grads


def total_loss(batch, params, config, data):
    return loss_and_gradients(batch, params, config, data, need_grad=False)[0].loss


def gradients(batch, params, config, data):
    return loss_and_gradients(batch, params, config, data)[1]


def embed_all(params, data, net_id, chunk=256):
    """Embeddings of every user of one network."""
    p = params.nets[net_id - 1]
    n = data.n_users[net_id - 1]
    out = [
        _encode(p, data.inputs[net_id - 1].rows(np.arange(s, min(s + chunk, n))))[0]
        for s in range(0, n, chunk)
    ]
    return np.concatenate(out) if out else np.zeros((0, params.archs[net_id - 1].embed_dim))


def full_loss(params, config, data, chunk=256):
    """Objective over all users with the regularizer counted once."""
    total = 0.0
    zs = []
    for i, p in enumerate(params.nets):
        n = data.n_users[i]
        for s in range(0, n, chunk):
            rows = np.arange(s, min(s + chunk, n))
            loss, _, _, _ = _recon_step(p, data.inputs[i], rows, config.gamma, None, False)
            total += loss
        zs.append(embed_all(params, data, i + 1, chunk))
    total += config.beta * reg_loss(params)
    if len(params.nets) == 2 and config.alpha != 0:
        anchored = np.flatnonzero(data.partner >= 0)
        r = zs[0][anchored] @ params.cross - zs[1][data.partner[anchored]]
        fl = float(np.sum(r * r))
        if not config.anchor_rows_only:
            z2 = zs[1][~data.anchored2]
            fl += float(np.sum(z2 * z2))
        total += config.alpha * fl
    return total


# trainer --------------------------------------------------------------------


@dataclass
class TrainResult:
    Z1: np.ndarray
    Z2: np.ndarray
    params: DimeParams
    loss_trace: list
    full_loss_trace: list

    @property
    def Z(self):
        return self.Z1


def _fit(data, archs, config, names):
    params = init_params(archs[0], config.seed, data.n_users,
                         archs[1] if len(archs) > 1 else None, names=names)
    rngs = [rng_for(config.seed, "shuffle", name) for name in names]
    empty = np.zeros(0, dtype=np.int64)
    trace, full_trace = [], []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        schedules = []
        for n, rng in zip(data.n_users, rngs):
            order = rng.permutation(n)
            schedules.append(np.array_split(order, max(1, math.ceil(n / config.batch_size))))
        steps = max(len(s) for s in schedules)
        losses = []
        for s in range(steps):
            batch = [sch[s] if s < len(sch) else empty for sch in schedules]
            acc, grads = loss_and_gradients(batch, params, config, data)
            if not math.isfinite(acc.loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1}, step {s + 1}")
            step = lr
            if config.clip_norm:
                norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.tensors()))
                if norm > config.clip_norm:
                    step = lr * config.clip_norm / norm
            for a, g in zip(params.tensors(), grads.tensors()):
                g *= step
                a -= g
            losses.append(acc.loss)
        trace.append(float(np.mean(losses)))
        if config.track_full_loss:
            fl = full_loss(params, config, data)
            if not math.isfinite(fl):
                raise DivergenceError(f"non-finite loss after epoch {epoch + 1}")
            full_trace.append(fl)
    return params, trace, full_trace


def train(pair, bundles, arch, config, arch_mature=None):
    """Jointly train both networks' models with the anchor fusion loss.

    ``bundles`` is ``(bundle1, bundle2)``.  Returns a :class:`TrainResult`
    with the embeddings of every user of both networks.
    """
    archs = (arch, arch_mature or arch)
    data = TrainingData([list(b) for b in bundles], archs, pair.anchors)
    _check_users(data, (pair.net_emerging, pair.net_mature))
    params, trace, full_trace = _fit(data, archs, config, ("net1", "net2"))
    return TrainResult(
        embed_all(params, data, 1), embed_all(params, data, 2), params, trace, full_trace
    )


def embed_single(net, bundle, arch, config, net_id=1):
    """Train one network's model alone (no fusion term).

    ``net_id`` picks the named random streams, so ``net_id=2`` reproduces
    the mature-side model of an ``alpha=0`` joint run.
    """
    data = TrainingData([list(bundle)], (arch,))
    _check_users(data, (net,))
    params, trace, full_trace = _fit(data, (arch,), config, (f"net{net_id}",))
    return TrainResult(embed_all(params, data, 1), None, params, trace, full_trace)


def _check_users(data, nets):
    for n, net in zip(data.n_users, nets):
        if n != net.n_users:
            raise ValueError(f"proximity bundle covers {n} users, network has {net.n_users}")


# persistence ----------------------------------------------------------------

CHECKPOINT_MAGIC = b"DIME1"


def save_checkpoint(params, path):
    """Binary checkpoint.

    Layout (little endian): magic ``DIME1``; uint32 header length; UTF-8
    JSON header with architectures and input sizes; then, for every tensor
    in :meth:`DimeParams.named_tensors` order, uint32 ndim, ndim x uint64
    shape and the float64 values in row-major order.
    """
    header = json.dumps(
        {
            "archs": [asdict(a) for a in params.archs],
            "input_dims": list(params.input_dims),
            "cross": params.cross is not None,
            "tensors": [name for name, _ in params.named_tensors()],
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, a in params.named_tensors():
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    data = open(path, "rb").read()
    if data[:5] != CHECKPOINT_MAGIC:
        raise ValueError("not a DIME1 checkpoint")
    (hlen,) = struct.unpack_from("<I", data, 5)
    header = json.loads(data[9:9 + hlen])
    pos = 9 + hlen
    archs = [ArchitectureSpec(**a) for a in header["archs"]]
    params = init_params(
        archs[0], 0, header["input_dims"], archs[1] if len(archs) > 1 else None
    )
    for name, a in params.named_tensors():
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        if tuple(shape) != a.shape:
            raise ValueError(f"tensor {name} has shape {shape}, expected {a.shape}")
        size = int(np.prod(shape)) * 8
        a[...] = np.frombuffer(data[pos:pos + size], dtype="<f8").reshape(shape)
        pos += size
    return params


def write_embeddings_csv(Z, user_ids, path):
    """CSV rows ``user_id, z_1, ..., z_d`` with round-trip float formatting."""
    d = Z.shape[1]
    lines = ["user_id," + ",".join(f"z{k}" for k in range(1, d + 1))]
    for uid, row in zip(user_ids, Z):
        lines.append(str(uid) + "," + ",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
