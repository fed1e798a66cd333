"""Two-level attention encoder and dot-product decoder for drug pairs.

Per meta-path, drug features are projected per attention head, scored
against neighbors (leaky-relu of a learned vector applied to the
concatenated pair projection), normalized by a masked softmax over the
neighbor mask, and aggregated; heads are concatenated. A second attention
stage scores each meta-path embedding through a small tanh layer and fuses
them with softmax weights. Pair probabilities come from a sigmoid over the
dot product of the fused embeddings.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, ParameterError, ShapeError, Tensor
from .metapath import NeighborGraph

__all__ = [
    "ModelConfig",
    "ModelParams",
    "EncoderOutput",
    "init_params",
    "project",
    "node_level_attention",
    "aggregate_multihead",
    "metapath_attention",
    "fuse",
    "encode",
    "decode_pairs",
    "decode_pair",
    "bce_loss",
    "forward",
    "random_row_stochastic",
    "save_checkpoint",
    "load_checkpoint",
]

PROB_CLAMP = 1e-7


@dataclass
class ModelConfig:
    """Architecture knobs; defaults follow the published hyperparameters
    (8 heads of 8 hidden units, dropout 0.6, leaky slope 0.2)."""

    input_dim: int
    hidden_dim: int = 8
    heads: int = 8
    attn_dim: int = 128
    leaky_slope: float = 0.2
    dropout: float = 0.6
    activation: str = "relu"
    pool: str = "mean"  # node pooling in meta-path scoring: mean or sum
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "heads", "attn_dim"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if not (0 <= self.dropout < 1):
            raise ParameterError(f"dropout {self.dropout} outside [0, 1)")
        if self.pool not in ("mean", "sum"):
            raise ParameterError(f"pool must be 'mean' or 'sum', got {self.pool!r}")

    @property
    def embed_dim(self) -> int:
        return self.heads * self.hidden_dim

    def echo(self) -> dict[str, str]:
        return {
            "input_dim": str(self.input_dim),
            "hidden_dim": str(self.hidden_dim),
            "heads": str(self.heads),
            "attn_dim": str(self.attn_dim),
            "leaky_slope": repr(self.leaky_slope),
            "dropout": repr(self.dropout),
            "activation": self.activation,
            "pool": self.pool,
            "seed": str(self.seed),
        }

    @classmethod
    def from_echo(cls, echo: dict[str, str]) -> "ModelConfig":
        return cls(input_dim=int(echo["input_dim"]),
                   hidden_dim=int(echo["hidden_dim"]),
                   heads=int(echo["heads"]),
                   attn_dim=int(echo["attn_dim"]),
                   leaky_slope=float(echo["leaky_slope"]),
                   dropout=float(echo["dropout"]),
                   activation=echo["activation"],
                   pool=echo["pool"],
                   seed=int(echo["seed"]))


@dataclass
class ModelParams:
    """All trainable tensors.

    One projection matrix per head (shared across meta-paths), one
    attention vector per (meta-path, head), and the meta-path-level
    attention triple (W, b, q).
    """

    metapaths: tuple[str, ...]
    proj: list[Tensor]                  # heads x (d0, F)
    attn: dict[str, list[Tensor]]       # metapath -> heads x (2F,)
    w_mp: Tensor                        # (d_q, K*F)
    b_mp: Tensor                        # (d_q,)
    q_mp: Tensor                        # (d_q,)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for k, t in enumerate(self.proj):
            out[f"proj.{k}"] = t
        for mp in self.metapaths:
            for k, t in enumerate(self.attn[mp]):
                out[f"attn.{mp}.{k}"] = t
        out["w_mp"] = self.w_mp
        out["b_mp"] = self.b_mp
        out["q_mp"] = self.q_mp
        return out

    def trainable(self) -> list[Tensor]:
        return list(self.named().values())

    @property
    def dtype(self) -> np.dtype:
        return self.proj[0].dtype

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named().items()}

    def restore(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.named().items():
            t.data[...] = state[name]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape,
            dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(config: ModelConfig, metapaths, rng: np.random.Generator,
                dtype=np.float32) -> ModelParams:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) init, zero bias."""
    d0, f, k, dq = (config.input_dim, config.hidden_dim, config.heads,
                    config.attn_dim)
    metapaths = tuple(metapaths)
    proj = [Tensor(_glorot(rng, d0, f, (d0, f), dtype), requires_grad=True)
            for _ in range(k)]
    attn = {mp: [Tensor(_glorot(rng, 2 * f, 1, (2 * f,), dtype), requires_grad=True)
                 for _ in range(k)]
            for mp in metapaths}
    w_mp = Tensor(_glorot(rng, k * f, dq, (dq, k * f), dtype), requires_grad=True)
    b_mp = Tensor(np.zeros(dq, dtype=dtype), requires_grad=True)
    q_mp = Tensor(_glorot(rng, dq, 1, (dq,), dtype), requires_grad=True)
    return ModelParams(metapaths, proj, attn, w_mp, b_mp, q_mp)


@dataclass
class EncoderOutput:
    """Per-meta-path embeddings, their softmax weights, and the fusion."""
    z_mp: dict[str, Tensor]             # metapath -> (n, K*F)
    beta: Tensor                        # (T,) nonnegative, sums to 1
    fused: Tensor                       # (n, K*F)
    alphas: dict[str, list[Tensor]] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# encoder stages


def project(h: Tensor, m: Tensor, *, dropout_rate: float = 0.0,
            rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Project features into one head's subspace: dropout(h) @ m."""
    if h.shape[1] != m.shape[0]:
        raise ShapeError(f"project: features width {h.shape[1]} vs matrix {m.shape}")
    if training and dropout_rate:
        h = ad.dropout(h, dropout_rate, rng, training)
    return ad.matmul(h, m)


def node_level_attention(h_proj: Tensor, graph: NeighborGraph, a: Tensor,
                         slope: float) -> Tensor:
    """Attention coefficients over the meta-path neighbor mask.

    Pair scores are leaky_relu(a . [h_i || h_j]) computed via the split
    a = [a_src, a_dst]; rows are softmax-normalized over the mask.
    """
    f = h_proj.shape[1]
    if a.shape != (2 * f,):
        raise ShapeError(f"attention vector shape {a.shape}, expected ({2 * f},)")
    adj = graph.adjacency
    if not adj.diagonal().all():
        raise ContractError(f"{graph.name}: neighbor graph must include self-loops")
    s_src = ad.matvec(h_proj, ad.slice1d(a, 0, f))
    s_dst = ad.matvec(h_proj, ad.slice1d(a, f, 2 * f))
    e = ad.leaky_relu(ad.outer_sum(s_src, s_dst), slope)
    return ad.masked_row_softmax(e, adj)


def aggregate_multihead(alphas: list[Tensor], h_projs: list[Tensor],
                        activation: str) -> Tensor:
    """activation(alpha @ h') per head, concatenated in head order."""
    if len(alphas) != len(h_projs):
        raise ShapeError(f"{len(alphas)} attention matrices vs {len(h_projs)} heads")
    heads = [ad.apply_unary(activation, ad.matmul(alpha, h),
                            0.2 if activation == "leaky_relu" else None)
             for alpha, h in zip(alphas, h_projs)]
    return ad.concat_cols(heads)


def metapath_attention(z_list: list[Tensor], w: Tensor, b: Tensor, q: Tensor,
                       pool: str = "mean") -> tuple[Tensor, Tensor]:
    """Score each meta-path embedding and softmax-normalize the scores.

    Per meta-path: pool over drugs of q . tanh(W z_i + b). Returns the raw
    scores (T,) and their softmax weights (T,).
    """
    scores = []
    for z in z_list:
        s = ad.tanh(ad.add_bias(ad.matmul(z, ad.transpose(w)), b))
        per_node = ad.matvec(s, q)
        scores.append(ad.reduce_mean(per_node) if pool == "mean"
                      else ad.reduce_sum(per_node))
    w_vec = ad.stack_scalars(scores)
    t = len(z_list)
    beta_row = ad.masked_row_softmax(ad.reshape(w_vec, (1, t)),
                                     np.ones((1, t), dtype=bool))
    return w_vec, ad.reshape(beta_row, (t,))


def fuse(z_list: list[Tensor], beta: Tensor) -> Tensor:
    """Weighted sum of meta-path embeddings with the given weights."""
    if beta.shape != (len(z_list),):
        raise ShapeError(f"beta shape {beta.shape} vs {len(z_list)} meta-paths")
    fused = None
    for t, z in enumerate(z_list):
        term = ad.scale(z, ad.slice1d(beta, t, t + 1))
        fused = term if fused is None else ad.add(fused, term)
    return fused


def random_row_stochastic(adjacency: np.ndarray, rng: np.random.Generator,
                          dtype=np.float32) -> np.ndarray:
    """A fixed random attention surrogate: uniform draws on the mask,
    normalized so every row sums to 1 over its neighbors."""
    weights = rng.random(adjacency.shape) * adjacency
    return (weights / weights.sum(axis=1, keepdims=True)).astype(dtype)


def encode(params: ModelParams, features: np.ndarray,
           graphs: dict[str, NeighborGraph], config: ModelConfig,
           training: bool = False, rng: np.random.Generator | None = None,
           fixed_alpha: dict[str, np.ndarray] | None = None,
           uniform_beta: bool = False) -> EncoderOutput:
    """Run the full encoder; meta-paths are consumed in params order.

    `fixed_alpha` substitutes a constant row-stochastic matrix for the
    learned attention of each meta-path; `uniform_beta` bypasses the
    meta-path attention stage with equal weights.
    """
    if set(graphs) != set(params.metapaths):
        raise ShapeError(f"graphs {sorted(graphs)} vs params meta-paths "
                         f"{sorted(params.metapaths)}")
    dtype = params.dtype
    n = next(iter(graphs.values())).n_nodes
    if features.shape != (n, config.input_dim):
        raise ShapeError(f"features shape {features.shape}, expected "
                         f"({n}, {config.input_dim})")
    x = Tensor(np.asarray(features, dtype=dtype))
    if training and config.dropout:
        x = ad.dropout(x, config.dropout, rng, training)
    h_projs = [project(x, m) for m in params.proj]

    z_mp: dict[str, Tensor] = {}
    alphas_out: dict[str, list[Tensor]] = {}
    for mp in params.metapaths:
        graph = graphs[mp]
        alphas = []
        for k in range(config.heads):
            if fixed_alpha is not None and mp in fixed_alpha:
                alpha = Tensor(np.asarray(fixed_alpha[mp], dtype=dtype))
            else:
                alpha = node_level_attention(h_projs[k], graph,
                                             params.attn[mp][k],
                                             config.leaky_slope)
            if training and config.dropout:
                alpha = ad.dropout(alpha, config.dropout, rng, training)
            alphas.append(alpha)
        z_mp[mp] = aggregate_multihead(alphas, h_projs, config.activation)
        alphas_out[mp] = alphas

    z_list = [z_mp[mp] for mp in params.metapaths]
    t = len(z_list)
    if uniform_beta:
        beta = Tensor(np.full(t, 1.0 / t, dtype=dtype))
    else:
        _, beta = metapath_attention(z_list, params.w_mp, params.b_mp,
                                     params.q_mp, config.pool)
    fused = fuse(z_list, beta)
    return EncoderOutput(z_mp=z_mp, beta=beta, fused=fused, alphas=alphas_out)


# ---------------------------------------------------------------------------
# decoder and loss


def decode_pairs(fused: Tensor, pairs: np.ndarray) -> Tensor:
    """Sigmoid of the row dot products fused[i] . fused[j] per pair."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    zi = ad.gather_rows(fused, pairs[:, 0])
    zj = ad.gather_rows(fused, pairs[:, 1])
    return ad.sigmoid(ad.row_sum(ad.mul(zi, zj)))


def decode_pair(fused: Tensor, i: int, j: int) -> float:
    """Interaction probability of one drug pair; symmetric in (i, j)."""
    return float(decode_pairs(fused, np.array([[i, j]])).data[0])


def bce_loss(scores: Tensor, labels: np.ndarray) -> Tensor:
    """Binary cross-entropy, summed over examples.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    if labels.shape != scores.shape:
        raise ShapeError(f"labels shape {labels.shape} vs scores {scores.shape}")
    dtype = scores.dtype
    y = Tensor(labels.astype(dtype))
    one = Tensor(np.ones_like(y.data))
    p = ad.clip(scores, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = ad.mul(y, ad.log(p))
    neg = ad.mul(ad.sub(one, y), ad.log(ad.sub(one, p)))
    return ad.neg(ad.reduce_sum(ad.add(pos, neg)))


def forward(params: ModelParams, features: np.ndarray,
            graphs: dict[str, NeighborGraph], pairs: np.ndarray,
            config: ModelConfig, training: bool = False,
            rng: np.random.Generator | None = None,
            fixed_alpha: dict[str, np.ndarray] | None = None,
            uniform_beta: bool = False) -> tuple[Tensor, EncoderOutput]:
    """Encoder plus pairwise decoding; returns (scores, encoder output)."""
    out = encode(params, features, graphs, config, training=training, rng=rng,
                 fixed_alpha=fixed_alpha, uniform_beta=uniform_beta)
    return decode_pairs(out.fused, pairs), out


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"HINDDI\x01\x00"
_VERSION = 1


def save_checkpoint(path, params: ModelParams, config_echo: dict[str, str]) -> None:
    """Versioned binary checkpoint: magic, version, precision flag, config
    echo, then named tensors (name, rank, extents, little-endian payload).
    Round-trips bit-exactly."""
    named = params.named()
    itemsize = params.dtype.itemsize
    echo = dict(config_echo)
    echo["metapaths"] = ",".join(params.metapaths)
    echo_blob = "\n".join(f"{k}={v}" for k, v in sorted(echo.items())).encode("utf-8")

    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IB", _VERSION, itemsize))
    buf.write(struct.pack("<I", len(echo_blob)))
    buf.write(echo_blob)
    buf.write(struct.pack("<I", len(named)))
    le_dtype = "<f4" if itemsize == 4 else "<f8"
    for name, tensor in named.items():
        name_b = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", tensor.data.ndim))
        for extent in tensor.data.shape:
            buf.write(struct.pack("<Q", extent))
        buf.write(np.ascontiguousarray(tensor.data, dtype=le_dtype).tobytes())
    data = buf.getvalue()

    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(target)


def load_checkpoint(path) -> tuple[ModelParams, dict[str, str]]:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if bytes(view[:len(_MAGIC)]) != _MAGIC:
        raise ContractError(f"{path}: not a checkpoint file")
    offset = len(_MAGIC)
    version, itemsize = struct.unpack_from("<IB", view, offset)
    offset += 5
    if version != _VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {version}")
    (echo_len,) = struct.unpack_from("<I", view, offset)
    offset += 4
    echo_blob = bytes(view[offset:offset + echo_len]).decode("utf-8")
    offset += echo_len
    echo = dict(line.split("=", 1) for line in echo_blob.splitlines() if line)
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4
    le_dtype = np.dtype("<f4" if itemsize == 4 else "<f8")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", view, offset)
        offset += 1
        shape = struct.unpack_from(f"<{rank}Q", view, offset) if rank else ()
        offset += 8 * rank
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(view, dtype=le_dtype, count=size, offset=offset)
        offset += size * itemsize
        arrays[name] = arr.reshape(shape).astype(le_dtype.newbyteorder("="), copy=True)

    metapaths = tuple(echo.get("metapaths", "").split(",")) if echo.get("metapaths") else ()
    heads = sum(1 for name in arrays if name.startswith("proj."))
    proj = [Tensor(arrays[f"proj.{k}"], requires_grad=True) for k in range(heads)]
    attn = {mp: [Tensor(arrays[f"attn.{mp}.{k}"], requires_grad=True)
                 for k in range(heads)]
            for mp in metapaths}
    params = ModelParams(metapaths, proj, attn,
                         Tensor(arrays["w_mp"], requires_grad=True),
                         Tensor(arrays["b_mp"], requires_grad=True),
                         Tensor(arrays["q_mp"], requires_grad=True))
    return params, echo
