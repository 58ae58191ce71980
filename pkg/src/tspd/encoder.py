"""Expander-graph attention encoder.

Nodes attend only along a sparse graph: symmetrised k-nearest neighbours in
embedding space, short-range stripes inside index groups, depot links, and
one extra global node wired to everything.  Attention scores add a learned
relative term indexed by bucketed coordinate distance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .instances import Instance
from .nn import tensor as T
from .nn.tensor import NumericError, Tensor


@dataclass(frozen=True)
class EncoderConfig:
    d_h: int = 128
    heads: int = 8
    layers: int = 3
    d_sparse: int = 16
    d_ff: int = 512
    hierarchical: bool = True
    eps: float = 1e-5

    def __post_init__(self):
        if self.d_h % self.heads:
            raise ValueError(f"d_h={self.d_h} not divisible by heads={self.heads}")
        if self.layers < 1 or self.d_sparse < 1 or self.d_ff < 1:
            raise ValueError("layers, d_sparse and d_ff must be >= 1")

    @property
    def d_k(self) -> int:
        return self.d_h // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


D_IN = 3


def knn_k(n: int) -> int:
    return math.ceil(math.log2(n))


@dataclass
class ExpanderGraph:
    adjacency: np.ndarray  # (N+1, N+1) bool, last index is the global node
    mask: np.ndarray  # additive {0, -inf}
    buckets: np.ndarray  # (N+1, N+1) int relative-position bucket
    knn: np.ndarray  # (N, N) bool, symmetrised k-NN part only


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "encoder.") -> dict[str, Tensor]:
    D, F = cfg.d_h, cfg.d_ff
    p = {
        "W_input": _uniform(rng, (D_IN, D), D_IN),
        "b_input": _uniform(rng, (D,), D_IN),
        "global_init": _uniform(rng, (D,), D),
    }
    for l in range(cfg.layers):
        p.update({
            f"layer{l}.W_Q": _uniform(rng, (D, D), D),
            f"layer{l}.W_K": _uniform(rng, (D, D), D),
            f"layer{l}.W_V": _uniform(rng, (D, D), D),
            f"layer{l}.W_o": _uniform(rng, (D, D), D),
            f"layer{l}.R": _uniform(rng, (cfg.heads, cfg.d_sparse, cfg.d_k), cfg.d_k),
            f"layer{l}.norm1_scale": np.ones(D),
            f"layer{l}.norm1_shift": np.zeros(D),
            f"layer{l}.W_ff1": _uniform(rng, (D, F), D),
            f"layer{l}.b_ff1": _uniform(rng, (F,), D),
            f"layer{l}.W_ff2": _uniform(rng, (F, D), F),
            f"layer{l}.norm2_scale": np.ones(D),
            f"layer{l}.norm2_shift": np.zeros(D),
        })
    return {prefix + k: Tensor(v, requires_grad=True, name=prefix + k) for k, v in p.items()}


def node_features(insts: list[Instance], coord_scale: float) -> np.ndarray:
    """(B, N, 3): scaled x, scaled y, depot flag."""
    B, N = len(insts), insts[0].n
    out = np.zeros((B, N, D_IN))
    for b, inst in enumerate(insts):
        out[b, :, :2] = inst.points() / coord_scale
        out[b, inst.depot, 2] = 1.0
    return out


def embed_inputs(features, W_input: Tensor, b_input: Tensor) -> Tensor:
    return T.linear(features, W_input, b_input)


def build_expander_graph(h: np.ndarray, depot: int, cfg: EncoderConfig, coords: np.ndarray | None = None) -> ExpanderGraph:
    """Sparse attention pattern for one instance from its (N, D) embeddings."""
    h = np.asarray(h)
    N = h.shape[0]
    if N < 2:
        raise ValueError("need at least two nodes")
    k = min(knn_k(N), N - 1)
    d2 = ((h[:, None, :] - h[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    knn = np.zeros((N, N), dtype=bool)
    knn[np.repeat(np.arange(N), k), order.ravel()] = True
    knn |= knn.T

    A = np.zeros((N + 1, N + 1), dtype=bool)
    A[:N, :N] = knn
    if cfg.hierarchical:
        groups = max(1, N // 8)
        stride = math.ceil(N / groups)
        idx = np.arange(N)
        same = (idx[:, None] // stride) == (idx[None, :] // stride)
        near = np.abs(idx[:, None] - idx[None, :]) <= 2
        A[:N, :N] |= same & near
    A[depot, :N] = True
    A[:N, depot] = True
    A[N, :] = True
    A[:, N] = True
    np.fill_diagonal(A, True)

    mask = np.where(A, 0.0, -np.inf)
    buckets = relative_buckets(coords if coords is not None else np.zeros((N, 2)), cfg.d_sparse)
    return ExpanderGraph(A, mask, buckets, knn)


def relative_buckets(coords: np.ndarray, d_sparse: int) -> np.ndarray:
    """Quantize pairwise coordinate distance into ``d_sparse - 1`` bins over
    [0, diameter]; pairs involving the global node use the last bucket."""
    coords = np.asarray(coords, dtype=np.float64)
    N = coords.shape[0]
    out = np.full((N + 1, N + 1), d_sparse - 1, dtype=np.int64)
    if d_sparse == 1:
        out[:] = 0
        return out
    dist = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    diam = dist.max()
    bins = d_sparse - 1
    if diam > 0:
        b = np.floor(dist / diam * bins).astype(np.int64)
    else:
        b = np.zeros_like(dist, dtype=np.int64)
    out[:N, :N] = np.minimum(b, bins - 1)
    return out


def ega_layer(h: Tensor, graphs: dict, params: dict[str, Tensor], cfg: EncoderConfig, l: int,
              prefix: str = "encoder.", keep_attention: bool = False):
    """One attention block over (B, N+1, D) features.

    Returns ``(h_out, pooled, attention)`` where ``pooled`` is the mean of the
    real-node inputs that was folded into the global node and ``attention``
    is the (B, H, N+1, N+1) weight array when requested.
    """
    P = lambda name: params[f"{prefix}layer{l}.{name}"]  # noqa: E731
    B, N1, D = h.shape
    N, H, dk = N1 - 1, cfg.heads, cfg.d_k

    pooled = T.mean(h[:, :N], axis=1)  # (B, D)
    glob = T.add(h[:, N], pooled)
    h = T.concat([h[:, :N], T.reshape(glob, (B, 1, D))], axis=1)

    def heads(W):
        return T.transpose(T.reshape(T.matmul(h, W), (B, N1, H, dk)), (0, 2, 1, 3))

    q, k, v = heads(P("W_Q")), heads(P("W_K")), heads(P("W_V"))
    scores = T.mul(T.einsum("bhid,bhjd->bhij", q, k), 1.0 / math.sqrt(dk))
    q_rel = T.einsum("bhid,hsd->bhis", q, P("R"))
    rel = T.einsum("bhis,bijs->bhij", q_rel, graphs["onehot"])
    scores = T.add(scores, rel)
    attn = T.masked_softmax(scores, graphs["mask"][:, None])
    ctx = T.einsum("bhij,bhjd->bhid", attn, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (B, N1, D))
    out = T.matmul(ctx, P("W_o"))

    hh = T.instance_norm(T.add(h, out), P("norm1_scale"), P("norm1_shift"), cfg.eps)
    # no output bias: a per-feature constant is erased by the node-wise norm
    ff = T.matmul(T.relu(T.linear(hh, P("W_ff1"), P("b_ff1"))), P("W_ff2"))
    h_out = T.instance_norm(T.add(hh, ff), P("norm2_scale"), P("norm2_shift"), cfg.eps)
    if not np.all(np.isfinite(h_out.data)):
        bad = ~np.isfinite(attn.data)
        head = int(np.argwhere(bad.any(axis=(0, 2, 3)))[0][0]) if bad.any() else -1
        raise NumericError(f"non-finite activations in encoder layer {l} (head {head})")
    return h_out, pooled, (attn.data if keep_attention else None)


@dataclass
class EncoderOutput:
    static: Tensor  # (B, N, D)
    final: Tensor  # (B, N+1, D) after multi-scale fusion
    pooled: Tensor  # (B, D) multi-scale vector
    graphs: list[ExpanderGraph]
    attention: list[np.ndarray] | None = None


def batch_graphs(insts: list[Instance], h0: np.ndarray, cfg: EncoderConfig) -> tuple[dict, list[ExpanderGraph]]:
    gs = [build_expander_graph(h0[b], inst.depot, cfg, inst.points()) for b, inst in enumerate(insts)]
    mask = np.stack([g.mask for g in gs])
    buckets = np.stack([g.buckets for g in gs])
    onehot = np.zeros(buckets.shape + (cfg.d_sparse,))
    np.put_along_axis(onehot, buckets[..., None], 1.0, axis=-1)
    return {"mask": mask, "onehot": onehot}, gs


def encode(insts: list[Instance], params: dict[str, Tensor], cfg: EncoderConfig, coord_scale: float = 100.0,
           prefix: str = "encoder.", keep_attention: bool = False) -> EncoderOutput:
    if len({inst.n for inst in insts}) != 1:
        raise ValueError("a batch must share the node count")
    feats = node_features(insts, coord_scale)
    B, N, _ = feats.shape
    h0 = embed_inputs(feats, params[prefix + "W_input"], params[prefix + "b_input"])
    graphs, gs = batch_graphs(insts, h0.data, cfg)
    glob = T.mul(params[prefix + "global_init"], np.ones((B, 1, 1)))
    h = T.concat([h0, glob], axis=1)
    pools, attns = [], []
    for l in range(cfg.layers):
        h, p, a = ega_layer(h, graphs, params, cfg, l, prefix, keep_attention)
        pools.append(T.reshape(p, (B, 1, -1)))
        attns.append(a)
    multi = T.mean(T.concat(pools, axis=1), axis=1)  # (B, D)
    h = T.add(h, T.reshape(multi, (B, 1, -1)))
    return EncoderOutput(h[:, :N], h, multi, gs, attns if keep_attention else None)
