"""Attention-based encoder-decoder network.

Bidirectional GRU encoder, additive attention with context feedback (the
previous context vector enters the attention energy), GRU decoder conditioned
on the previous target embedding and the fresh context, and a tanh readout
into a softmax over the target vocabulary. Everything is built from the
autodiff ops in `tensor`, so one code path serves training (with a tape) and
inference (without).
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


def _init(rng, shape, scale=0.08):
    return rng.uniform_array(shape, -scale, scale)


class GruParams:
    """Update/reset-gate GRU cell weights for one direction."""

    def __init__(self, prefix, input_dim, hidden_dim, rng):
        def mk(name, shape):
            return T.parameter(_init(rng, shape), name=f"{prefix}.{name}")

        self.wz = mk("wz", (input_dim, hidden_dim))
        self.uz = mk("uz", (hidden_dim, hidden_dim))
        self.bz = mk("bz", (hidden_dim,))
        self.wr = mk("wr", (input_dim, hidden_dim))
        self.ur = mk("ur", (hidden_dim, hidden_dim))
        self.br = mk("br", (hidden_dim,))
        self.wh = mk("wh", (input_dim, hidden_dim))
        self.uh = mk("uh", (hidden_dim, hidden_dim))
        self.bh = mk("bh", (hidden_dim,))

    def tensors(self):
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                self.wh, self.uh, self.bh]

    def step(self, x, h):
        z = T.sigmoid(T.add(T.affine(x, self.wz, self.bz), T.matmul(h, self.uz)))
        r = T.sigmoid(T.add(T.affine(x, self.wr, self.br), T.matmul(h, self.ur)))
        hbar = T.tanh(T.add(T.affine(x, self.wh, self.bh), T.matmul(T.mul(r, h), self.uh)))
        ones = T.constant(np.ones_like(z.data))
        return T.add(T.mul(T.sub(ones, z), h), T.mul(z, hbar))


class NmtParams:
    """All learned NMT tensors, addressable by name for checkpoints."""

    def __init__(self, src_vocab_size, tgt_vocab_size, embed_dim, hidden_dim,
                 attn_dim, readout_dim, rng):
        self.dims = {
            "src_vocab_size": src_vocab_size,
            "tgt_vocab_size": tgt_vocab_size,
            "embed_dim": embed_dim,
            "hidden_dim": hidden_dim,
            "attn_dim": attn_dim,
            "readout_dim": readout_dim,
        }
        e, d, a, m = embed_dim, hidden_dim, attn_dim, readout_dim

        def mk(name, shape):
            return T.parameter(_init(rng, shape), name=name)

        self.src_emb = mk("src_emb", (src_vocab_size, e))
        self.tgt_emb = mk("tgt_emb", (tgt_vocab_size, e))
        self.enc_fwd = GruParams("enc_fwd", e, d, rng)
        self.enc_bwd = GruParams("enc_bwd", e, d, rng)
        self.dec = GruParams("dec", e + 2 * d, d, rng)
        self.att_w = mk("att_w", (d, a))
        self.att_u = mk("att_u", (2 * d, a))
        self.att_c = mk("att_c", (2 * d, a))
        self.att_b = mk("att_b", (a,))
        self.att_v = mk("att_v", (a, 1))
        self.init_w = mk("init_w", (d, d))
        self.init_b = mk("init_b", (d,))
        self.out_ws = mk("out_ws", (d, m))
        self.out_wy = mk("out_wy", (e, m))
        self.out_wc = mk("out_wc", (2 * d, m))
        self.out_b1 = mk("out_b1", (m,))
        self.out_w = mk("out_w", (m, tgt_vocab_size))
        self.out_b2 = mk("out_b2", (tgt_vocab_size,))

    def tensors(self):
        out = {"src_emb": self.src_emb, "tgt_emb": self.tgt_emb}
        for prefix, gru in (("enc_fwd", self.enc_fwd), ("enc_bwd", self.enc_bwd),
                            ("dec", self.dec)):
            for t in gru.tensors():
                out[t.name] = t
        for name in ("att_w", "att_u", "att_c", "att_b", "att_v", "init_w",
                     "init_b", "out_ws", "out_wy", "out_wc", "out_b1",
                     "out_w", "out_b2"):
            out[name] = getattr(self, name)
        return out

    def load_arrays(self, arrays):
        own = self.tensors()
        for name, t in own.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name}")
            if arrays[name].shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {arrays[name].shape} "
                    f"vs model {t.data.shape}"
                )
            t.data[...] = arrays[name]
        return self


@dataclass
class EncoderOutput:
    """Per-position annotations h_j = [fwd_j ; bwd_j] plus precomputed
    attention projections and the first backward state (decoder init)."""

    annotations: list      # T_x tensors of shape [n, 2d]
    att_proj: list         # T_x tensors of shape [n, attn_dim] (U h_j)
    bwd_first: Tensor      # [n, d]
    src_mask: np.ndarray   # [n, T_x]

    def __len__(self):
        return len(self.annotations)


def encode(src_ids, src_mask, params):
    """Run both GRU sweeps; padded positions carry the previous state."""
    src_ids = np.asarray(src_ids, dtype=np.int64)
    n, ts = src_ids.shape
    if ts == 0:
        raise ValueError("empty source")
    d = params.dims["hidden_dim"]

    embs = [T.lookup_rows(params.src_emb, src_ids[:, j]) for j in range(ts)]
    masks = [T.constant(src_mask[:, j : j + 1]) for j in range(ts)]
    ones = np.ones((n, 1))

    def sweep(gru, order):
        states = {}
        h = T.constant(np.zeros((n, d)))
        for j in order:
            h_new = gru.step(embs[j], h)
            keep = T.constant(ones - src_mask[:, j : j + 1])
            h = T.add(T.mul(masks[j], h_new), T.mul(keep, h))
            states[j] = h
        return states

    fwd = sweep(params.enc_fwd, range(ts))
    bwd = sweep(params.enc_bwd, range(ts - 1, -1, -1))

    annotations = [T.concat_cols([fwd[j], bwd[j]]) for j in range(ts)]
    att_proj = [T.matmul(h, params.att_u) for h in annotations]
    return EncoderOutput(annotations, att_proj, bwd[0], np.asarray(src_mask, dtype=np.float64))


def init_state(enc, params):
    """s_0 = tanh(W_init . backward state of the first source word)."""
    return T.tanh(T.affine(enc.bwd_first, params.init_w, params.init_b))


def attend(s_prev, c_prev, enc, params):
    """Additive attention with context feedback.

    Returns (alpha [n, T_x], context [n, 2d]); padded positions get weight
    exactly 0 and the weights over real positions sum to 1.
    """
    base = T.add(T.affine(s_prev, params.att_w, params.att_b),
                 T.matmul(c_prev, params.att_c))
    energies = []
    for proj in enc.att_proj:
        e = T.matmul(T.tanh(T.add(base, proj)), params.att_v)
        energies.append(e)
    energy = T.concat_cols(energies)
    alpha = T.softmax_rows(energy, mask=enc.src_mask)
    ctx = None
    for j, h in enumerate(enc.annotations):
        term = T.mul(_col(alpha, j), h)
        ctx = term if ctx is None else T.add(ctx, term)
    return alpha, ctx


def _col(x, j):
    """Column j of a 2-d tensor as [n, 1] (differentiable)."""
    n, k = x.data.shape
    ids = np.full(n, j, dtype=np.int64)
    return T.pick_cols(x, ids)


@dataclass
class DecoderStep:
    state: Tensor      # s_t [n, d]
    context: Tensor    # c_t [n, 2d]
    alpha: Tensor      # attention weights [n, T_x]
    emb_prev: Tensor   # embedding of y_{t-1} [n, e]
    readout: Tensor    # [n, readout_dim]
    probs: Tensor      # p_nmt [n, |V_tgt|]


def decode_step(s_prev, y_prev_ids, c_prev, enc, params, dropout_mask=None):
    """One decoder step: attention, GRU state update, output distribution."""
    alpha, ctx = attend(s_prev, c_prev, enc, params)
    e_y = T.lookup_rows(params.tgt_emb, np.asarray(y_prev_ids, dtype=np.int64))
    x = T.concat_cols([e_y, ctx])
    s = params.dec.step(x, s_prev)
    pre = T.add(
        T.add(T.affine(s, params.out_ws, params.out_b1), T.matmul(e_y, params.out_wy)),
        T.matmul(ctx, params.out_wc),
    )
    readout = T.tanh(pre)
    if dropout_mask is not None:
        readout = T.mul(readout, T.constant(dropout_mask))
    logits = T.affine(readout, params.out_w, params.out_b2)
    probs = T.softmax_rows(logits)
    return DecoderStep(s, ctx, alpha, e_y, readout, probs)


def initial_context(n, hidden_dim):
    """c_0 = 0; the first attention step sees no feedback."""
    return T.constant(np.zeros((n, 2 * hidden_dim)))
