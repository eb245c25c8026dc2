"""Encoder-decoder link prediction model with hand-rolled autodiff.

The encoder is two SAGE-style heterogeneous convolution layers over 18
message channels: the three history relations and six exposure channels,
each in both directions. A channel named "writes:fwd" moves messages along
the stored edge (author to paper); ":rev" moves them against it. A node's
update is

    h' = act(W_self h_v + sum over channels c with dst type(v):
             gate_c(v) * (W_c AGG_{u in N_c(v)} h_u + b_c))

where gate_c(v) is 1 only when v has at least one neighbor in channel c,
so empty neighborhoods (and entirely empty channels) contribute nothing
and their parameters receive zero gradient. act is a rectifier on layer 1
and identity on layer 2. The decoder concatenates two author vectors in
canonical index order and applies a two-layer feed-forward net ending in
a sigmoid. Everything is float64 numpy; gradients are computed by a
manual reverse pass and checked against finite differences in the tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from . import binio
from .graph import NodeType, Relation, Snapshot, TRIPLES
from .infosphere import CHANNEL_TYPES, ExposureChannel, InfosphereEdgeSet
from .link_task import SPLIT_TRAIN, SPLIT_VAL, LinkDataset
from .rng import keyed_rng

CHECKPOINT_MAGIC = b"ANPM"
CHECKPOINT_VERSION = 1


class GnnError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Non-finite loss or parameters; carries the last finite state."""

    def __init__(self, message, model=None, history=None):
        super().__init__(message)
        self.model = model
        self.history = history or []


class Aggregation(IntEnum):
    SUM = 0
    MEAN = 1
    MIN = 2
    MAX = 3

    @classmethod
    def from_name(cls, name: str) -> "Aggregation":
        try:
            return cls[name.upper()]
        except KeyError:
            raise GnnError(f"unknown aggregation {name!r}") from None


class MsgChannel(NamedTuple):
    name: str
    src_type: NodeType   # type whose features are aggregated
    dst_type: NodeType   # type receiving the messages
    source: tuple        # ("hist", Relation) or ("exp", ExposureChannel)
    flipped: bool        # True when messages run against the stored edge


def _build_channel_table() -> tuple:
    chans = []
    for rel in Relation:
        st, dt = TRIPLES[rel]
        tag = ("hist", rel)
        chans.append(MsgChannel(f"{rel.name.lower()}:fwd", st, dt, tag, False))
        chans.append(MsgChannel(f"{rel.name.lower()}:rev", dt, st, tag, True))
    for ch in ExposureChannel:
        st, dt = CHANNEL_TYPES[ch]
        tag = ("exp", ch)
        chans.append(MsgChannel(f"{ch.name.lower()}:fwd", st, dt, tag, False))
        chans.append(MsgChannel(f"{ch.name.lower()}:rev", dt, st, tag, True))
    return tuple(chans)


CHANNELS = _build_channel_table()


# -- compiled message structure ----------------------------------------------


class CompiledChannel(NamedTuple):
    e_src: np.ndarray       # (E,) feature-source ids, grouped by destination
    e_dst: np.ndarray       # (E,) destination ids, ascending
    dst_indptr: np.ndarray  # (n_dst + 1,) segment bounds into e_src/e_dst
    counts: np.ndarray      # (n_dst,) neighbor counts
    perm_by_src: np.ndarray  # edge positions reordered by source id
    src_indptr: np.ndarray  # (n_src + 1,) segment bounds for the backward pass


@dataclass
class CompiledGraph:
    """Per-channel CSR message lists for one snapshot plus exposure set."""

    year: int
    n_authors: int
    n_papers: int
    n_topics: int
    ynorm: np.ndarray
    channels: dict

    def n_of(self, ntype: NodeType) -> int:
        return (self.n_authors, self.n_papers, self.n_topics)[int(ntype)]


def _compile_channel(src, dst, n_src: int, n_dst: int) -> CompiledChannel:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.lexsort((src, dst))
    src, dst = src[order], dst[order]
    dst_indptr = np.searchsorted(dst, np.arange(n_dst + 1))
    counts = np.diff(dst_indptr)
    perm_by_src = np.lexsort((dst, src))
    src_indptr = np.searchsorted(src[perm_by_src], np.arange(n_src + 1))
    return CompiledChannel(src, dst, dst_indptr, counts, perm_by_src, src_indptr)


def _apply_cap(src, dst, cap: int, seed, name: str):
    """Seeded subsampling of destinations with more than `cap` neighbors."""
    order = np.lexsort((src, dst))
    src, dst = src[order], dst[order]
    keep = np.ones(src.size, dtype=bool)
    bounds = np.flatnonzero(np.diff(dst)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [src.size]])
    for s, e in zip(starts.tolist(), ends.tolist()):
        if e - s <= cap:
            continue
        rng = keyed_rng(seed, "neighbor-cap", name, int(dst[s]))
        chosen = rng.choice(e - s, size=cap, replace=False)
        keep[s:e] = False
        keep[s + np.sort(chosen)] = True
    return src[keep], dst[keep]


def compile_graph(
    snapshot: Snapshot,
    edge_set: InfosphereEdgeSet | None = None,
    neighbor_cap: int | None = None,
    cap_seed=0,
) -> CompiledGraph:
    """Freeze snapshot history plus exposure rows into message lists."""
    base = snapshot.base
    sizes = {t: base.num_nodes(t) for t in NodeType}
    if edge_set is not None and edge_set.year != snapshot.year:
        raise GnnError(
            f"exposure set is for year {edge_set.year}, snapshot is {snapshot.year}"
        )
    hist = {}
    for rel in Relation:
        src, dst = base.edge_arrays(rel)
        if rel == Relation.WRITES:
            kept = snapshot.paper_mask[dst]
        elif rel == Relation.DEALS_WITH:
            kept = snapshot.paper_mask[src]
        else:
            kept = snapshot.paper_mask[src] & snapshot.paper_mask[dst]
        hist[rel] = (src[kept].astype(np.int64), dst[kept].astype(np.int64))
    expo = {ch: (np.empty(0, np.int64), np.empty(0, np.int64))
            for ch in ExposureChannel}
    if edge_set is not None:
        for ch, (src, dst) in edge_set.edges_by_channel().items():
            st, dt = CHANNEL_TYPES[ch]
            if src.size and (src.max() >= sizes[st] or dst.max() >= sizes[dt]):
                raise GnnError(f"exposure channel {ch.name} references unknown nodes")
            expo[ch] = (src, dst)

    channels = {}
    for ch in CHANNELS:
        kind, key = ch.source
        src, dst = hist[key] if kind == "hist" else expo[key]
        if ch.flipped:
            src, dst = dst, src
        if neighbor_cap is not None and src.size > neighbor_cap:
            src, dst = _apply_cap(src, dst, neighbor_cap, cap_seed, ch.name)
        channels[ch.name] = _compile_channel(
            src, dst, sizes[ch.src_type], sizes[ch.dst_type]
        )

    lo, hi = base.year_range()
    ynorm = (base.paper_years.astype(np.float64) - lo) / max(1, hi - lo)
    return CompiledGraph(
        snapshot.year, sizes[NodeType.AUTHOR], sizes[NodeType.PAPER],
        sizes[NodeType.TOPIC], ynorm, channels,
    )


# -- model -------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 500
    patience: int = 10
    batch: int = 1024
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    d: int = 64
    h: int = 64
    seed: int = 0

    def validate(self):
        if min(self.epochs, self.patience, self.batch, self.d, self.h) <= 0:
            raise GnnError("epochs, patience, batch, d and h must be positive")
        if min(self.lr, self.eps) <= 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise GnnError("bad optimizer constants")


@dataclass
class Model:
    d: int
    h: int
    aggregation: Aggregation
    n_authors: int
    n_papers: int
    n_topics: int
    params: dict

    def copy(self) -> "Model":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def param_keys(self) -> list[str]:
        return sorted(self.params)


def _param_shapes(d: int, h: int, n_a: int, n_p: int, n_t: int) -> dict:
    shapes = {
        "emb/author": (n_a, d),
        "emb/paper": (n_p, d),
        "emb/topic": (n_t, d),
        "emb/year": (d,),
        "dec/w1": (2 * d, h),
        "dec/b1": (h,),
        "dec/w2": (h, 1),
        "dec/b2": (1,),
    }
    for li in (1, 2):
        shapes[f"conv{li}/self"] = (d, d)
        for ch in CHANNELS:
            shapes[f"conv{li}/{ch.name}/w"] = (d, d)
            shapes[f"conv{li}/{ch.name}/b"] = (d,)
    return shapes


def _init_tensor(name: str, shape: tuple, d: int, seed) -> np.ndarray:
    rng = keyed_rng(seed, "init", name)
    if name.endswith("/b1") or name.endswith("/b2") or name.endswith("/b"):
        return np.zeros(shape)
    if name in ("emb/author", "emb/paper", "emb/topic"):
        return rng.standard_normal(shape) / math.sqrt(d)
    fan_in = shape[0] if len(shape) > 1 else 1
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_model(
    graph, config: TrainConfig, aggregation: Aggregation = Aggregation.MEAN
) -> Model:
    config.validate()
    n_a = graph.num_nodes(NodeType.AUTHOR)
    n_p = graph.num_nodes(NodeType.PAPER)
    n_t = graph.num_nodes(NodeType.TOPIC)
    shapes = _param_shapes(config.d, config.h, n_a, n_p, n_t)
    params = {
        name: _init_tensor(name, shape, config.d, config.seed)
        for name, shape in sorted(shapes.items())
    }
    return Model(config.d, config.h, Aggregation(aggregation), n_a, n_p, n_t, params)


# -- segment primitives --------------------------------------------------


def _segment_sum(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    n_seg = indptr.size - 1
    if values.shape[0] == 0:
        return np.zeros((n_seg, values.shape[1]))
    csum = np.cumsum(values, axis=0)
    padded = np.vstack([np.zeros((1, values.shape[1])), csum])
    return padded[indptr[1:]] - padded[indptr[:-1]]


def _segment_extreme(values, indptr, minimum: bool):
    """Per-segment min or max with the winning edge position per column.

    argmin/argmax take the first occurrence; rows are source-sorted inside
    each segment, so ties resolve to the lowest neighbor index.
    """
    n_seg = indptr.size - 1
    d = values.shape[1]
    out = np.zeros((n_seg, d))
    sel = np.full((n_seg, d), -1, dtype=np.int64)
    pick = np.argmin if minimum else np.argmax
    cols = np.arange(d)
    for i in range(n_seg):
        s, e = indptr[i], indptr[i + 1]
        if s == e:
            continue
        seg = values[s:e]
        arg = pick(seg, axis=0)
        sel[i] = s + arg
        out[i] = seg[arg, cols]
    return out, sel


def _aggregate(G, cc: CompiledChannel, agg: Aggregation):
    """(per-destination messages, selection map or None)."""
    if agg == Aggregation.SUM:
        return _segment_sum(G, cc.dst_indptr), None
    if agg == Aggregation.MEAN:
        denom = np.maximum(cc.counts, 1)[:, None]
        return _segment_sum(G, cc.dst_indptr) / denom, None
    return _segment_extreme(G, cc.dst_indptr, agg == Aggregation.MIN)


def _aggregate_backward(dM, G_shape, cc: CompiledChannel, agg: Aggregation, sel):
    """Gradient through AGG: per-destination grads back to per-edge grads."""
    dG = np.zeros(G_shape)
    if G_shape[0] == 0:
        return dG
    if agg == Aggregation.SUM:
        dG[:] = dM[cc.e_dst]
    elif agg == Aggregation.MEAN:
        denom = np.maximum(cc.counts, 1)[:, None]
        dG[:] = (dM / denom)[cc.e_dst]
    else:
        valid = sel >= 0
        cols = np.broadcast_to(np.arange(G_shape[1]), sel.shape)
        # one winner per (destination, column), so plain assignment is safe
        dG[sel[valid], cols[valid]] = dM[valid]
    return dG


# -- encoder -----------------------------------------------------------------


def _check_shapes(model: Model, cg: CompiledGraph):
    if (model.n_authors, model.n_papers, model.n_topics) != (
        cg.n_authors, cg.n_papers, cg.n_topics,
    ):
        raise GnnError(
            "dimension mismatch: model built for "
            f"({model.n_authors}, {model.n_papers}, {model.n_topics}) nodes, "
            f"graph has ({cg.n_authors}, {cg.n_papers}, {cg.n_topics})"
        )


def encode(model: Model, cg: CompiledGraph, keep_cache: bool = False):
    """Two-layer representations per node type; optional backward cache."""
    _check_shapes(model, cg)
    P = model.params
    H = {
        NodeType.AUTHOR: P["emb/author"],
        NodeType.PAPER: P["emb/paper"] + cg.ynorm[:, None] * P["emb/year"][None, :],
        NodeType.TOPIC: P["emb/topic"],
    }
    cache = {}
    for li in (1, 2):
        Z = {t: H[t] @ P[f"conv{li}/self"] for t in NodeType}
        layer_cache = {"H_in": H}
        for ch in CHANNELS:
            cc = cg.channels[ch.name]
            G = H[ch.src_type][cc.e_src]
            M, sel = _aggregate(G, cc, model.aggregation)
            gate = (cc.counts > 0).astype(np.float64)[:, None]
            Z[ch.dst_type] = Z[ch.dst_type] + gate * (
                M @ P[f"conv{li}/{ch.name}/w"] + P[f"conv{li}/{ch.name}/b"]
            )
            if keep_cache:
                layer_cache[ch.name] = (M, sel, gate)
        if li == 1:
            H = {t: np.maximum(Z[t], 0.0) for t in NodeType}
        else:
            H = Z
        if keep_cache:
            layer_cache["Z"] = Z
            cache[f"layer{li}"] = layer_cache
    if keep_cache:
        return H, cache
    return H


def _encode_backward(model: Model, cg: CompiledGraph, cache, dH, grads):
    """Reverse pass from representation grads down to the embeddings."""
    P = model.params
    for li in (2, 1):
        layer_cache = cache[f"layer{li}"]
        H_in = layer_cache["H_in"]
        if li == 1:
            Z = layer_cache["Z"]
            dZ = {t: dH[t] * (Z[t] > 0) for t in NodeType}
        else:
            dZ = dH
        W_self = P[f"conv{li}/self"]
        dH_in = {t: dZ[t] @ W_self.T for t in NodeType}
        for t in NodeType:
            grads[f"conv{li}/self"] += H_in[t].T @ dZ[t]
        for ch in CHANNELS:
            cc = cg.channels[ch.name]
            M, sel, gate = layer_cache[ch.name]
            dmsg = dZ[ch.dst_type] * gate
            grads[f"conv{li}/{ch.name}/w"] += M.T @ dmsg
            grads[f"conv{li}/{ch.name}/b"] += dmsg.sum(axis=0)
            dM = dmsg @ P[f"conv{li}/{ch.name}/w"].T
            dG = _aggregate_backward(
                dM, (cc.e_src.size, model.d), cc, model.aggregation, sel
            )
            if cc.e_src.size:
                dH_in[ch.src_type] += _segment_sum(
                    dG[cc.perm_by_src], cc.src_indptr
                )
        dH = dH_in
    grads["emb/author"] += dH[NodeType.AUTHOR]
    grads["emb/paper"] += dH[NodeType.PAPER]
    grads["emb/topic"] += dH[NodeType.TOPIC]
    grads["emb/year"] += (dH[NodeType.PAPER] * cg.ynorm[:, None]).sum(axis=0)


# -- decoder and loss ----------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _decoder_forward(P, H_author, pairs):
    a = np.minimum(pairs[:, 0], pairs[:, 1])
    b = np.maximum(pairs[:, 0], pairs[:, 1])
    X = np.concatenate([H_author[a], H_author[b]], axis=1)
    U = X @ P["dec/w1"] + P["dec/b1"]
    Ur = np.maximum(U, 0.0)
    logit = (Ur @ P["dec/w2"])[:, 0] + P["dec/b2"][0]
    return logit, (X, U, Ur, a, b)


def pair_probabilities(model: Model, H_author: np.ndarray, pairs) -> np.ndarray:
    """sigmoid(decoder(h_a, h_b)) per pair, clipped into the open interval."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    logit, _ = _decoder_forward(model.params, H_author, pairs)
    return np.clip(_sigmoid(logit), 1e-12, 1.0 - 1e-12)


def predict(model: Model, cg: CompiledGraph, pairs) -> np.ndarray:
    H = encode(model, cg)
    return pair_probabilities(model, H[NodeType.AUTHOR], pairs)


def loss_and_grad(model: Model, cg: CompiledGraph, pairs, labels):
    """(mean BCE, per-parameter grads, probabilities) for one batch."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if pairs.shape[0] != y.size or pairs.shape[0] == 0:
        raise GnnError("batch needs one label per pair and at least one pair")
    P = model.params
    H, cache = encode(model, cg, keep_cache=True)
    logit, (X, U, Ur, a, b) = _decoder_forward(P, H[NodeType.AUTHOR], pairs)
    # mean BCE straight from logits: softplus(z) - y z
    per_example = np.logaddexp(0.0, logit) - y * logit
    loss = float(per_example.mean())
    if not math.isfinite(loss):
        raise DivergenceError(
            f"non-finite loss (max |logit| = {np.abs(logit).max():.3g})"
        )
    probs = np.clip(_sigmoid(logit), 1e-12, 1.0 - 1e-12)

    grads = {k: np.zeros_like(v) for k, v in P.items()}
    dlogit = (_sigmoid(logit) - y) / y.size
    grads["dec/w2"] += Ur.T @ dlogit[:, None]
    grads["dec/b2"] += dlogit.sum(keepdims=True)
    dU = (dlogit[:, None] @ P["dec/w2"].T) * (U > 0)
    grads["dec/w1"] += X.T @ dU
    grads["dec/b1"] += dU.sum(axis=0)
    dX = dU @ P["dec/w1"].T
    d = model.d
    dHa = np.zeros_like(H[NodeType.AUTHOR])
    np.add.at(dHa, a, dX[:, :d])
    np.add.at(dHa, b, dX[:, d:])
    dH = {
        NodeType.AUTHOR: dHa,
        NodeType.PAPER: np.zeros_like(H[NodeType.PAPER]),
        NodeType.TOPIC: np.zeros_like(H[NodeType.TOPIC]),
    }
    _encode_backward(model, cg, cache, dH, grads)
    return loss, grads, probs


# -- optimizer and training loop ------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_model(cls, model: Model) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in model.params.items()},
            v={k: np.zeros_like(v) for k, v in model.params.items()},
        )


def adam_step(model: Model, grads: dict, state: AdamState, config: TrainConfig):
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for k in model.param_keys():
        g = grads[k]
        state.m[k] = config.beta1 * state.m[k] + (1.0 - config.beta1) * g
        state.v[k] = config.beta2 * state.v[k] + (1.0 - config.beta2) * (g * g)
        mhat = state.m[k] / bc1
        vhat = state.v[k] / bc2
        model.params[k] -= config.lr * mhat / (np.sqrt(vhat) + config.eps)


class EpochStats(NamedTuple):
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    model: Model
    history: list
    best_epoch: int
    adam: AdamState


def _forward_loss(model: Model, cg: CompiledGraph, pairs, labels):
    H = encode(model, cg)
    logit, _ = _decoder_forward(model.params, H[NodeType.AUTHOR], pairs)
    y = labels.astype(np.float64)
    loss = float((np.logaddexp(0.0, logit) - y * logit).mean())
    acc = float(((logit >= 0.0) == (y == 1.0)).mean())
    return loss, acc


def _params_finite(model: Model) -> bool:
    return all(np.all(np.isfinite(v)) for v in model.params.values())


def train(
    model: Model, cg: CompiledGraph, dataset: LinkDataset, config: TrainConfig
) -> TrainResult:
    """Minibatch Adam with early stopping on validation loss.

    Returns the parameters of the best validation epoch. Non-finite loss
    or parameters abort with the state of the last finite epoch attached.
    """
    config.validate()
    tr_pairs, tr_labels = dataset.subset(SPLIT_TRAIN)
    va_pairs, va_labels = dataset.subset(SPLIT_VAL)
    if len(tr_labels) == 0 or len(va_labels) == 0:
        raise GnnError("training needs non-empty train and validation splits")
    adam = AdamState.for_model(model)
    history: list[EpochStats] = []
    best_loss = math.inf
    best_model = model.copy()
    best_epoch = 0
    last_finite = model.copy()
    bad = 0
    n = len(tr_labels)
    for epoch in range(1, config.epochs + 1):
        order = keyed_rng(config.seed, "shuffle", epoch).permutation(n)
        running = 0.0
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            try:
                loss, grads, _ = loss_and_grad(
                    model, cg, tr_pairs[idx], tr_labels[idx]
                )
            except DivergenceError as exc:
                raise DivergenceError(
                    f"epoch {epoch}: {exc}", model=last_finite, history=history
                ) from None
            running += loss * idx.size
            adam_step(model, grads, adam, config)
        train_loss = running / n
        val_loss, val_acc = _forward_loss(model, cg, va_pairs, va_labels)
        if not math.isfinite(val_loss) or not _params_finite(model):
            raise DivergenceError(
                f"epoch {epoch}: non-finite validation loss or parameters",
                model=last_finite, history=history,
            )
        history.append(EpochStats(epoch, train_loss, val_loss, val_acc))
        last_finite = model.copy()
        if val_loss < best_loss:
            best_loss = val_loss
            best_model = model.copy()
            best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    return TrainResult(best_model, history, best_epoch, adam)


# -- evaluation ------------------------------------------------------------


def _auc(probs: np.ndarray, labels: np.ndarray) -> float:
    """Rank-statistic AUC with midrank tie handling."""
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(probs, kind="stable")
    ranks = np.empty(labels.size)
    sorted_p = probs[order]
    i = 0
    while i < sorted_p.size:
        j = i
        while j + 1 < sorted_p.size and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(model: Model, cg: CompiledGraph, pairs, labels) -> dict:
    """Threshold-0.5 accuracy plus precision, recall and AUC."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise GnnError("cannot evaluate an empty dataset")
    probs = predict(model, cg, pairs)
    pred = probs >= 0.5
    actual = labels == 1
    tp = int((pred & actual).sum())
    fp = int((pred & ~actual).sum())
    fn = int((~pred & actual).sum())
    return {
        "n": int(labels.size),
        "accuracy": float((pred == actual).mean()),
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "auc": _auc(probs, labels),
    }


# -- persistence ----------------------------------------------------------


def save_checkpoint(
    path, model: Model, config: TrainConfig, adam: AdamState | None = None
):
    with open(path, "wb") as f:
        binio.write_magic(f, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        binio.write_u32(f, model.d)
        binio.write_u32(f, model.h)
        binio.write_u8(f, int(model.aggregation))
        for count in (model.n_authors, model.n_papers, model.n_topics):
            binio.write_u64(f, count)
        binio.write_u32(f, config.epochs)
        binio.write_u32(f, config.patience)
        binio.write_u32(f, config.batch)
        for x in (config.lr, config.beta1, config.beta2, config.eps):
            binio.write_f64(f, x)
        binio.write_i64(f, config.seed)
        keys = model.param_keys()
        binio.write_u32(f, len(keys))
        for k in keys:
            binio.write_str(f, k)
            arr = model.params[k]
            binio.write_u8(f, arr.ndim)
            for dim in arr.shape:
                binio.write_u64(f, dim)
            binio.write_array(f, arr, "<f8")
        binio.write_u8(f, 0 if adam is None else 1)
        if adam is not None:
            binio.write_u64(f, adam.step)
            for k in keys:
                binio.write_array(f, adam.m[k], "<f8")
            for k in keys:
                binio.write_array(f, adam.v[k], "<f8")


def load_checkpoint(path):
    """-> (model, config, adam_state_or_none)."""
    with open(path, "rb") as f:
        binio.read_magic(f, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        d = binio.read_u32(f)
        h = binio.read_u32(f)
        agg = Aggregation(binio.read_u8(f))
        n_a, n_p, n_t = (binio.read_u64(f) for _ in range(3))
        config = TrainConfig(
            epochs=binio.read_u32(f),
            patience=binio.read_u32(f),
            batch=binio.read_u32(f),
            lr=binio.read_f64(f),
            beta1=binio.read_f64(f),
            beta2=binio.read_f64(f),
            eps=binio.read_f64(f),
            d=d,
            h=h,
            seed=binio.read_i64(f),
        )
        n_params = binio.read_u32(f)
        params = {}
        for _ in range(n_params):
            k = binio.read_str(f)
            ndim = binio.read_u8(f)
            shape = tuple(binio.read_u64(f) for _ in range(ndim))
            params[k] = binio.read_array(f, "<f8").reshape(shape)
        model = Model(d, h, agg, n_a, n_p, n_t, params)
        expected = _param_shapes(d, h, n_a, n_p, n_t)
        if {k: v.shape for k, v in params.items()} != expected:
            raise binio.FormatError("checkpoint parameter shapes are inconsistent")
        adam = None
        if binio.read_u8(f):
            step = binio.read_u64(f)
            keys = sorted(params)
            m = {k: binio.read_array(f, "<f8").reshape(params[k].shape) for k in keys}
            v = {k: binio.read_array(f, "<f8").reshape(params[k].shape) for k in keys}
            adam = AdamState(m, v, step)
    return model, config, adam


def write_history_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for row in history:
            w.writerow([
                row.epoch,
                f"{row.train_loss:.17g}",
                f"{row.val_loss:.17g}",
                f"{row.val_acc:.17g}",
            ])


def read_history_csv(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for rec in csv.DictReader(f):
            out.append(EpochStats(
                int(rec["epoch"]),
                float(rec["train_loss"]),
                float(rec["val_loss"]),
                float(rec["val_acc"]),
            ))
    return out
