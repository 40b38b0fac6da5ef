"""The learnable reconstruction network.

Historical item embeddings are blended with the (noised or partially
reversed) target representation plus a sinusoidal step embedding, run
through a stack of bidirectional post-norm transformer blocks (or a single
GRU layer, kept for comparison), and the representation at the last valid
position is emitted as the reconstructed target.

Sequences are right-padded; index 0 of the item table is the padding row
and never receives gradient. Attention is unmasked across valid positions:
the network reconstructs one target from a completed history, so there is
no causal constraint, but padded positions are excluded as keys and learned
positional embeddings keep the encoder order-aware.
"""

from __future__ import annotations

import numpy as np

from .config import TrainConfig
from .rng import RngStream
from .tensor import (Tensor, add, dropout, embedding_lookup, gather_rows,
                     layer_norm, matmul, mul, relu, reshape, sigmoid, softmax,
                     tanh, transpose)

_NEG_INF = -1e9


def step_embedding(s: int, dim: int) -> np.ndarray:
    """Sinusoidal encoding of a diffusion/reverse step index.

    out[2i] = sin(s / 10000^(2i/dim)), out[2i+1] = cos of the same angle.
    """
    if dim % 2 != 0:
        raise ValueError(f"step embedding needs an even dim, got {dim}")
    freqs = 1.0 / np.power(10000.0, np.arange(0, dim, 2) / dim)
    angles = s * freqs
    out = np.empty(dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def step_embedding_batch(steps, dim: int) -> np.ndarray:
    """(B,) step indices -> (B, dim) sinusoidal encodings."""
    if dim % 2 != 0:
        raise ValueError(f"step embedding needs an even dim, got {dim}")
    s = np.asarray(steps, dtype=float).reshape(-1, 1)
    freqs = 1.0 / np.power(10000.0, np.arange(0, dim, 2) / dim)
    angles = s * freqs
    out = np.empty((s.shape[0], dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def mix(e_seq: Tensor, x, d, delta: float, rng: RngStream,
        mask: np.ndarray | None = None, scalar_lambda: bool = False) -> Tensor:
    """Blend the target representation into every history position.

    z_i = e_i + lambda_i * (x + d) with lambda drawn i.i.d. from a normal
    with mean `delta` and variance `delta` (per position and, unless
    `scalar_lambda`, per dimension). delta=0 reduces to the raw embeddings.
    Padded positions come out as zero vectors.
    """
    b, n, dim = e_seq.shape
    x_data = x.data if isinstance(x, Tensor) else np.asarray(x)
    u = add(reshape(x if isinstance(x, Tensor) else Tensor(x_data), (b, 1, dim)),
            Tensor(np.asarray(d).reshape(b, 1, dim)))
    lam_shape = (b, n, 1) if scalar_lambda else (b, n, dim)
    lam = rng.gaussian(lam_shape, mean=delta, std=np.sqrt(delta))
    z = add(e_seq, mul(Tensor(lam), u))
    if mask is not None:
        z = mul(z, Tensor(mask.reshape(b, n, 1).astype(z.data.dtype)))
    return z


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def _xavier(rng: RngStream, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.gaussian((fan_in, fan_out), std=np.sqrt(2.0 / (fan_in + fan_out)))


class TransformerParams:
    """Item/positional tables plus per-block attention and feed-forward weights."""

    def __init__(self, vocab_size: int, cfg: TrainConfig, rng: RngStream):
        dim = cfg.dim
        self.vocab_size = vocab_size
        self.item_emb = Tensor(rng.gaussian((vocab_size + 1, dim), std=1.0 / np.sqrt(dim)),
                               requires_grad=True)
        self.pos_emb = Tensor(rng.gaussian((cfg.max_len, dim), std=1.0 / np.sqrt(dim)),
                              requires_grad=True)
        self.blocks = []
        for _ in range(cfg.blocks):
            blk = {
                "wq": _xavier(rng, dim, dim),
                "wk": _xavier(rng, dim, dim),
                "wv": _xavier(rng, dim, dim),
                "wo": _xavier(rng, dim, dim),
                "w1": _xavier(rng, dim, 4 * dim),
                "b1": np.zeros(4 * dim),
                "w2": _xavier(rng, 4 * dim, dim),
                "b2": np.zeros(dim),
                "ln1_g": np.ones(dim),
                "ln1_b": np.zeros(dim),
                "ln2_g": np.ones(dim),
                "ln2_b": np.zeros(dim),
            }
            self.blocks.append({k: Tensor(v, requires_grad=True) for k, v in blk.items()})

    def named(self) -> list[tuple[str, Tensor]]:
        out = [("item_emb", self.item_emb), ("pos_emb", self.pos_emb)]
        for i, blk in enumerate(self.blocks):
            out.extend((f"block{i}.{k}", t) for k, t in blk.items())
        return out


_GRU_GATES = ("r", "z", "n")


class GruParams:
    """Item table plus a single GRU layer (separate matrices per gate)."""

    def __init__(self, vocab_size: int, cfg: TrainConfig, rng: RngStream):
        dim = cfg.dim
        self.vocab_size = vocab_size
        self.item_emb = Tensor(rng.gaussian((vocab_size + 1, dim), std=1.0 / np.sqrt(dim)),
                               requires_grad=True)
        self.gates = {}
        for gate in _GRU_GATES:
            self.gates[f"wi_{gate}"] = Tensor(_xavier(rng, dim, dim), requires_grad=True)
            self.gates[f"wh_{gate}"] = Tensor(_xavier(rng, dim, dim), requires_grad=True)
            self.gates[f"bi_{gate}"] = Tensor(np.zeros(dim), requires_grad=True)
            self.gates[f"bh_{gate}"] = Tensor(np.zeros(dim), requires_grad=True)

    def named(self) -> list[tuple[str, Tensor]]:
        out = [("item_emb", self.item_emb)]
        out.extend((f"gru.{k}", t) for k, t in sorted(self.gates.items()))
        return out


def init_params(vocab_size: int, cfg: TrainConfig, rng: RngStream):
    if cfg.approximator == "gru":
        return GruParams(vocab_size, cfg, rng)
    return TransformerParams(vocab_size, cfg, rng)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------


def _check_mask(mask: np.ndarray, b: int, n: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=float).reshape(b, n)
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("sequence with no valid positions (all padding)")
    return mask


def transformer_forward(z_seq: Tensor, padding_mask: np.ndarray,
                        params: TransformerParams, cfg: TrainConfig,
                        train_mode: bool, rng: RngStream | None = None) -> Tensor:
    """Bidirectional encoder over valid positions; returns the last valid row.

    (B, n, dim) -> (B, dim). Dropout is live only in train_mode, in which
    case `rng` is required.
    """
    b, n, dim = z_seq.shape
    if n > cfg.max_len:
        raise ValueError(f"sequence length {n} exceeds max_len {cfg.max_len}")
    mask = _check_mask(padding_mask, b, n)
    if train_mode and rng is None:
        raise ValueError("train_mode forward requires an rng for dropout")
    heads = cfg.heads
    dh = dim // heads
    key_bias = Tensor(((1.0 - mask) * _NEG_INF).reshape(b, 1, 1, n))

    h = add(z_seq, embedding_lookup(params.pos_emb, np.arange(n)))
    h = dropout(h, cfg.dropout_emb, rng, train_mode)
    for blk in params.blocks:
        q = _split_heads(matmul(h, blk["wq"]), b, n, heads, dh)
        k = _split_heads(matmul(h, blk["wk"]), b, n, heads, dh)
        v = _split_heads(matmul(h, blk["wv"]), b, n, heads, dh)
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        probs = softmax(add(scores, key_bias), axis=-1)
        probs = dropout(probs, cfg.dropout_block, rng, train_mode)
        ctx = reshape(transpose(matmul(probs, v), (0, 2, 1, 3)), (b, n, dim))
        attn_out = dropout(matmul(ctx, blk["wo"]), cfg.dropout_block, rng, train_mode)
        h = layer_norm(add(h, attn_out), blk["ln1_g"], blk["ln1_b"])
        ff = matmul(relu(add(matmul(h, blk["w1"]), blk["b1"])), blk["w2"])
        ff = dropout(add(ff, blk["b2"]), cfg.dropout_block, rng, train_mode)
        h = layer_norm(add(h, ff), blk["ln2_g"], blk["ln2_b"])
    last = mask.sum(axis=1).astype(int) - 1
    return gather_rows(h, last)


def _split_heads(x: Tensor, b: int, n: int, heads: int, dh: int) -> Tensor:
    return transpose(reshape(x, (b, n, heads, dh)), (0, 2, 1, 3))


def gru_forward(z_seq: Tensor, padding_mask: np.ndarray, params: GruParams,
                cfg: TrainConfig, train_mode: bool,
                rng: RngStream | None = None) -> Tensor:
    """Single-layer gated recurrence over valid positions; last valid state out.

    Padded steps carry the previous hidden state through unchanged, so with
    right padding the final state equals the state at the last valid item.
    """
    b, n, dim = z_seq.shape
    mask = _check_mask(padding_mask, b, n)
    if train_mode and rng is None:
        raise ValueError("train_mode forward requires an rng for dropout")
    g = params.gates
    z_seq = dropout(z_seq, cfg.dropout_emb, rng, train_mode)
    h = Tensor(np.zeros((b, dim)))
    for i in range(n):
        x = gather_rows(z_seq, np.full(b, i))
        r = sigmoid(add(add(matmul(x, g["wi_r"]), g["bi_r"]),
                        add(matmul(h, g["wh_r"]), g["bh_r"])))
        u = sigmoid(add(add(matmul(x, g["wi_z"]), g["bi_z"]),
                        add(matmul(h, g["wh_z"]), g["bh_z"])))
        cand = tanh(add(add(matmul(x, g["wi_n"]), g["bi_n"]),
                        mul(r, add(matmul(h, g["wh_n"]), g["bh_n"]))))
        h_new = add(cand, mul(u, add(h, -cand)))
        step_mask = Tensor(mask[:, i : i + 1])
        h = add(mul(h_new, step_mask), mul(h, Tensor(1.0 - mask[:, i : i + 1])))
    return h


class Approximator:
    """Parameters plus architecture config, with the blended forward pass."""

    def __init__(self, params, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg

    @property
    def item_emb(self) -> Tensor:
        return self.params.item_emb

    def forward(self, z_seq: Tensor, mask: np.ndarray, train_mode: bool,
                rng: RngStream | None = None) -> Tensor:
        if self.cfg.approximator == "gru":
            return gru_forward(z_seq, mask, self.params, self.cfg, train_mode, rng)
        return transformer_forward(z_seq, mask, self.params, self.cfg, train_mode, rng)

    def reconstruct(self, hist: np.ndarray, mask: np.ndarray, x, steps,
                    rng: RngStream, train_mode: bool) -> Tensor:
        """Full estimate: embed history, lambda-mix with (x + step encoding), encode."""
        e_seq = embedding_lookup(self.params.item_emb, hist)
        d = step_embedding_batch(steps, self.cfg.dim)
        z = mix(e_seq, x, d, self.cfg.delta, rng, mask, self.cfg.lambda_scalar)
        return self.forward(z, mask, train_mode, rng)

    def encode_history(self, hist: np.ndarray, mask: np.ndarray,
                       train_mode: bool, rng: RngStream | None = None,
                       item_table: Tensor | None = None) -> Tensor:
        """Plain next-item encoding (no mixing); used by the adversarial mode."""
        table = self.params.item_emb if item_table is None else item_table
        e_seq = embedding_lookup(table, hist)
        b, n, _ = e_seq.shape
        e_seq = mul(e_seq, Tensor(np.asarray(mask, dtype=float).reshape(b, n, 1)))
        return self.forward(e_seq, mask, train_mode, rng)
