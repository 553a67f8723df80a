"""SMT-recommendation classifier, gate, and distribution fusion.

The classifier scores each step's recommendation words with a two-hidden-layer
feed-forward net over [decoder state; previous-word embedding; candidate
embedding; context]; a softmax over exactly those candidates gives p_smt.
Candidate embeddings are rows of the shared NMT target embedding matrix, with
out-of-vocabulary recommendation words mapped to the UNK row (their surface
forms are kept for UNK replacement). The gate is a sigmoid-ended net over
[state; previous-word embedding; context], and the fused prediction is
(1 - gate) * p_nmt + gate * p_smt scattered onto the NMT vocabulary.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nmt import _init


class AdvisorParams:
    """Classifier and gate weights; candidate embeddings are shared with NMT."""

    def __init__(self, embed_dim, hidden_dim, sizes, gate_sizes, rng):
        d, e = hidden_dim, embed_dim
        ctx = 2 * d
        h1, h2 = sizes
        g1, g2 = gate_sizes
        self.dims = {
            "embed_dim": e,
            "hidden_dim": d,
            "classifier_sizes": list(sizes),
            "gate_sizes": list(gate_sizes),
        }

        def mk(name, shape):
            return T.parameter(_init(rng, shape), name=name)

        self.cls_ws = mk("cls_ws", (d, h1))
        self.cls_wy = mk("cls_wy", (e, h1))
        self.cls_we = mk("cls_we", (e, h1))  # candidate embedding block
        self.cls_wc = mk("cls_wc", (ctx, h1))
        self.cls_b1 = mk("cls_b1", (h1,))
        self.cls_w2 = mk("cls_w2", (h1, h2))
        self.cls_b2 = mk("cls_b2", (h2,))
        self.cls_w3 = mk("cls_w3", (h2, 1))
        self.cls_b3 = mk("cls_b3", (1,))
        self.gate_ws = mk("gate_ws", (d, g1))
        self.gate_wy = mk("gate_wy", (e, g1))
        self.gate_wc = mk("gate_wc", (ctx, g1))
        self.gate_b1 = mk("gate_b1", (g1,))
        self.gate_w2 = mk("gate_w2", (g1, g2))
        self.gate_b2 = mk("gate_b2", (g2,))
        self.gate_w3 = mk("gate_w3", (g2, 1))
        self.gate_b3 = mk("gate_b3", (1,))

    def tensors(self):
        names = [
            "cls_ws", "cls_wy", "cls_we", "cls_wc", "cls_b1", "cls_w2", "cls_b2",
            "cls_w3", "cls_b3", "gate_ws", "gate_wy", "gate_wc", "gate_b1",
            "gate_w2", "gate_b2", "gate_w3", "gate_b3",
        ]
        return {n: getattr(self, n) for n in names}

    def load_arrays(self, arrays):
        for name, t in self.tensors().items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name}")
            t.data[...] = arrays[name]
        return self


@dataclass
class StepVocab:
    """The distinct recommendation words of one step for one sentence.

    `vocab_ids` are NMT target ids with out-of-vocabulary words as UNK;
    `words` keeps the true surfaces. Order is best-score-first.
    """

    words: list
    vocab_ids: list
    src_pos: list
    scores: list

    @classmethod
    def from_recommendations(cls, recs, tgt_vocab):
        words, ids, pos, scores = [], [], [], []
        seen = set()
        for rec in recs:  # sorted best-first, so first instance wins
            if rec.word in seen:
                continue
            seen.add(rec.word)
            words.append(rec.word)
            ids.append(tgt_vocab.encode_token(rec.word))
            pos.append(rec.src_pos)
            scores.append(rec.score)
        return cls(words, ids, pos, scores)

    def __len__(self):
        return len(self.words)


def pack_candidates(step_vocabs):
    """Pad per-sentence candidate ids into [n, K] plus masks.

    Returns (cand_ids int [n, K], cand_mask float [n, K], has_recs [n, 1]).
    K is the max candidate count in the batch (1 if all rows are empty, so
    downstream shapes stay valid; the all-zero mask voids the dummy column).
    """
    n = len(step_vocabs)
    k = max((len(sv) for sv in step_vocabs), default=0) or 1
    cand_ids = np.zeros((n, k), dtype=np.int64)
    cand_mask = np.zeros((n, k), dtype=np.float64)
    has = np.zeros((n, 1), dtype=np.float64)
    for i, sv in enumerate(step_vocabs):
        if len(sv):
            cand_ids[i, : len(sv)] = sv.vocab_ids
            cand_mask[i, : len(sv)] = 1.0
            has[i, 0] = 1.0
    return cand_ids, cand_mask, has


def score_recs(state, emb_prev, context, cand_ids, cand_mask, tgt_emb, params):
    """p_smt over the packed candidates; fully masked rows come out all-zero."""
    base = T.add(
        T.add(T.affine(state, params.cls_ws, params.cls_b1),
              T.matmul(emb_prev, params.cls_wy)),
        T.matmul(context, params.cls_wc),
    )
    scores = []
    for k in range(cand_ids.shape[1]):
        e_k = T.lookup_rows(tgt_emb, cand_ids[:, k])
        h1 = T.tanh(T.add(base, T.matmul(e_k, params.cls_we)))
        h2 = T.tanh(T.affine(h1, params.cls_w2, params.cls_b2))
        scores.append(T.affine(h2, params.cls_w3, params.cls_b3))
    logits = T.concat_cols(scores)
    return T.softmax_rows(logits, mask=cand_mask)


def gate(state, emb_prev, context, params):
    """Mixing weight in (0, 1), one scalar per row."""
    h1 = T.tanh(
        T.add(
            T.add(T.affine(state, params.gate_ws, params.gate_b1),
                  T.matmul(emb_prev, params.gate_wy)),
            T.matmul(context, params.gate_wc),
        )
    )
    h2 = T.tanh(T.affine(h1, params.gate_w2, params.gate_b2))
    return T.sigmoid(T.affine(h2, params.gate_w3, params.gate_b3))


def combine(p_nmt, p_smt, cand_ids, alpha, has_recs):
    """(1 - a) * p_nmt + a * scatter(p_smt) over the NMT vocabulary.

    Colliding candidate ids (several out-of-vocabulary words mapping to UNK)
    accumulate. Rows without recommendations bypass the gate: their effective
    alpha is 0 and the result is exactly p_nmt.
    """
    n, v = p_nmt.data.shape
    alpha_eff = T.mul(alpha, T.constant(has_recs))
    scattered = T.scatter_cols(p_smt, cand_ids, v)
    ones = T.constant(np.ones((n, 1)))
    return T.add(T.mul(T.sub(ones, alpha_eff), p_nmt), T.mul(alpha_eff, scattered))


def fixed_gate_tensor(n, value):
    """Constant gate column for the fixed-gate ablations."""
    return T.constant(np.full((n, 1), float(value)))
