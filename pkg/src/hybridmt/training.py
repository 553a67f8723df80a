"""Teacher-forced negative log-likelihood training with Adadelta.

Two phases: `pretrain` fits the pure NMT model; `train_hybrid` continues from
an NMT checkpoint with freshly initialized classifier/gate parameters and
trains everything jointly on the fused distribution. During the forced pass
the SMT coverage vector advances on the gold emitted token.
"""

import time
from dataclasses import dataclass, fields

import numpy as np

from . import fusion, nmt
from . import tensor as T
from .corpus import UNK_ID, make_batches
from .fusion import StepVocab, pack_candidates
from .rng import Rng
from .smt import CoverageVector, update_coverage
from .tensor import NumericError, Tape


@dataclass
class TrainConfig:
    """Flat training configuration; serializes as key=value lines."""

    batch_size: int = 16
    max_epochs: int = 30
    seed: int = 0
    phase: str = "pretrain"  # pretrain | hybrid
    checkpoint_every: int = 1
    n_tm: int = 5
    n_rec: int = 25
    fixed_gate: float = -1.0  # < 0 means learned gate
    pseudo_recs: bool = False
    embed_dim: int = 32
    hidden_dim: int = 64
    attn_dim: int = 32
    readout_dim: int = 32
    src_vocab_cap: int = 200
    tgt_vocab_cap: int = 200
    max_len: int = 50
    dev_fraction: float = 0.1
    cls_hidden: tuple = (32, 16)
    gate_hidden: tuple = (32, 16)
    dropout: float = 0.0

    def gate_override(self):
        return None if self.fixed_gate < 0 else float(self.fixed_gate)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for f in fields(self):
                val = getattr(self, f.name)
                if isinstance(val, tuple):
                    val = ",".join(str(v) for v in val)
                fh.write(f"{f.name}={val}\n")

    @classmethod
    def from_file(cls, path):
        raw = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, val = line.partition("=")
                raw[key.strip()] = val.strip()
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw):
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            val = raw[f.name]
            default = getattr(cls, f.name)
            if isinstance(default, bool):
                kwargs[f.name] = str(val).lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[f.name] = int(val)
            elif isinstance(default, float):
                kwargs[f.name] = float(val)
            elif isinstance(default, tuple):
                if isinstance(val, (list, tuple)):
                    kwargs[f.name] = tuple(int(v) for v in val)
                else:
                    kwargs[f.name] = tuple(int(v) for v in str(val).split(","))
            else:
                kwargs[f.name] = str(val)
        return cls(**kwargs)

    def to_dict(self):
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out


class Adadelta:
    """Per-parameter adaptive steps; decay rho=0.95, epsilon=1e-6."""

    def __init__(self, params, rho=0.95, eps=1e-6):
        self.params = params  # dict name -> Tensor
        self.rho = rho
        self.eps = eps
        self.avg_sq_grad = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.avg_sq_delta = {n: np.zeros_like(p.data) for n, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        for name, p in self.params.items():
            g = p.grad
            eg = self.avg_sq_grad[name]
            ed = self.avg_sq_delta[name]
            eg *= self.rho
            eg += (1.0 - self.rho) * g * g
            delta = -np.sqrt(ed + self.eps) / np.sqrt(eg + self.eps) * g
            ed *= self.rho
            ed += (1.0 - self.rho) * delta * delta
            p.data += delta


def nll_loss(batch, params, advisor=None, smt=None, tgt_vocab=None,
             fixed_gate=None, collect_gates=False):
    """Mean over sentences of the summed token NLL, teacher-forced.

    With `advisor`/`smt` given the per-step prediction is the gated fusion of
    p_nmt with the scored SMT recommendations, and each sentence's coverage
    vector advances on its gold emitted token. Raises NumericError (with
    context) if the loss goes non-finite.
    """
    hybrid = advisor is not None
    if hybrid and (smt is None or tgt_vocab is None):
        raise ValueError("hybrid loss needs both the SMT model and the target vocabulary")
    n = len(batch)
    try:
        enc = nmt.encode(batch.src, batch.src_mask, params)
        s = nmt.init_state(enc, params)
        ctx = nmt.initial_context(n, params.dims["hidden_dim"])
        alpha_prev = None

        if hybrid:
            sessions = [smt.session(src) for src, _ in batch.pairs]
            coverages = [CoverageVector(len(src)) for src, _ in batch.pairs]
            prefixes = [[] for _ in range(n)]

        total = None
        gates = []
        n_empty = 0
        n_steps = batch.tgt_in.shape[1]
        for t in range(n_steps):
            step = nmt.decode_step(s, batch.tgt_in[:, t], ctx, enc, params)
            probs = step.probs
            if hybrid:
                active = batch.gold_mask[:, t] > 0
                step_vocabs = []
                for i in range(n):
                    if active[i]:
                        # slice off padded positions (their weight is exactly 0)
                        a_prev = (
                            alpha_prev.data[i, : batch.src_len[i]]
                            if alpha_prev is not None else None
                        )
                        recs = sessions[i].recommend(prefixes[i], a_prev, coverages[i])
                    else:
                        recs = []
                    if not recs and active[i]:
                        n_empty += 1
                    step_vocabs.append(StepVocab.from_recommendations(recs, tgt_vocab))
                cand_ids, cand_mask, has = pack_candidates(step_vocabs)
                p_smt = fusion.score_recs(step.state, step.emb_prev, step.context,
                                          cand_ids, cand_mask, params.tgt_emb, advisor)
                if fixed_gate is None:
                    g = fusion.gate(step.state, step.emb_prev, step.context, advisor)
                else:
                    g = fusion.fixed_gate_tensor(n, fixed_gate)
                probs = fusion.combine(probs, p_smt, cand_ids, g, has)
                if collect_gates:
                    gates.extend(g.data[batch.gold_mask[:, t] > 0, 0].tolist())

                gold_ids = batch.tgt_gold[:, t]
                for i in range(n):
                    if active[i]:
                        word = tgt_vocab.id_to_token[gold_ids[i]]
                        update_coverage(coverages[i], word, gold_ids[i] == UNK_ID,
                                        _matchable(step_vocabs[i]))
                        prefixes[i].append(word)

            picked = T.pick_cols(probs, batch.tgt_gold[:, t])
            lp = T.log(picked)
            masked = T.mul(lp, T.constant(batch.gold_mask[:, t : t + 1]))
            term = T.sum_all(masked)
            total = term if total is None else T.add(total, term)
            s, ctx, alpha_prev = step.state, step.context, step.alpha

        loss = T.scale(total, -1.0 / n)
    except NumericError as err:
        raise NumericError(
            f"non-finite loss on batch of {n} sentences "
            f"(src len {batch.src.shape[1]}, tgt len {batch.tgt.shape[1]}): {err}"
        ) from err
    stats = {
        "n_sentences": n,
        "n_tokens": batch.n_gold_tokens,
        "total_nll": float(loss.data) * n,
        "empty_rec_steps": n_empty,
    }
    if collect_gates:
        stats["gates"] = gates
    return loss, stats


def _matchable(step_vocab):
    """Adapter: StepVocab rows as rec-like objects for update_coverage."""
    return [
        _RecView(w, p) for w, p in zip(step_vocab.words, step_vocab.src_pos)
    ]


class _RecView:
    __slots__ = ("word", "src_pos")

    def __init__(self, word, src_pos):
        self.word = word
        self.src_pos = src_pos


def corpus_nll(batches, params, advisor=None, smt=None, tgt_vocab=None,
               fixed_gate=None):
    """(mean sentence NLL, mean per-token NLL) over batches, forward only."""
    total, tokens, sents = 0.0, 0.0, 0
    for batch in batches:
        _, stats = nll_loss(batch, params, advisor, smt, tgt_vocab, fixed_gate)
        total += stats["total_nll"]
        tokens += stats["n_tokens"]
        sents += stats["n_sentences"]
    return total / sents, total / tokens


def split_dev(corpus, dev_fraction, seed):
    """Deterministic train/dev split (dev never length-filtered later)."""
    pairs = list(corpus)
    rng = Rng(seed).derive("devsplit")
    rng.shuffle(pairs)
    n_dev = max(1, int(len(pairs) * dev_fraction))
    return pairs[n_dev:], pairs[:n_dev]


def train_loop(train_pairs, dev_pairs, src_vocab, tgt_vocab, params,
               advisor, smt, config, log=None):
    """Epoch loop shared by both phases; returns (history, best_dev_nll).

    Parameters are left at the best-dev-NLL snapshot when done.
    """
    tensors = dict(params.tensors())
    if advisor is not None:
        tensors.update(advisor.tensors())
    opt = Adadelta(tensors)
    shuffle_rng = Rng(config.seed).derive("epoch-shuffle")
    dev_batches = make_batches(
        list(dev_pairs), src_vocab, tgt_vocab, config.batch_size, filter_long=False
    )
    history = []
    best = None
    best_snapshot = None
    gate_override = config.gate_override()
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        batches = make_batches(
            list(train_pairs), src_vocab, tgt_vocab, config.batch_size,
            max_len=config.max_len, rng=shuffle_rng
        )
        train_total, train_tokens = 0.0, 0.0
        for batch in batches:
            opt.zero_grad()
            with Tape() as tape:
                loss, stats = nll_loss(batch, params, advisor, smt, tgt_vocab,
                                       gate_override)
            tape.backward(loss)
            opt.step()
            train_total += stats["total_nll"]
            train_tokens += stats["n_tokens"]
        _, dev_nll = corpus_nll(dev_batches, params, advisor, smt, tgt_vocab,
                                gate_override)
        train_nll = train_total / train_tokens
        elapsed = time.perf_counter() - t0
        history.append({"epoch": epoch, "train_nll": train_nll,
                        "dev_nll": dev_nll, "seconds": elapsed})
        if log:
            log(f"epoch {epoch}, train_nll {train_nll:.4f}, dev_nll {dev_nll:.4f}, "
                f"wallclock {elapsed:.1f}s")
        if epoch % config.checkpoint_every == 0 or epoch == config.max_epochs:
            if best is None or dev_nll < best:
                best = dev_nll
                best_snapshot = {n: t.data.copy() for n, t in tensors.items()}
    if best_snapshot is not None:
        for name, arr in best_snapshot.items():
            tensors[name].data[...] = arr
    return history, best


def pretrain(train_pairs, dev_pairs, src_vocab, tgt_vocab, config, log=None):
    """Phase 1: train the pure attention NMT model."""
    rng = Rng(config.seed).derive("nmt-init")
    params = nmt.NmtParams(
        len(src_vocab), len(tgt_vocab), config.embed_dim, config.hidden_dim,
        config.attn_dim, config.readout_dim, rng,
    )
    history, best = train_loop(train_pairs, dev_pairs, src_vocab, tgt_vocab,
                               params, None, None, config, log)
    return params, history, best


def train_hybrid(train_pairs, dev_pairs, src_vocab, tgt_vocab, nmt_arrays,
                 smt, config, log=None):
    """Phase 2: load pre-trained NMT weights, add classifier/gate, train all."""
    rng = Rng(config.seed).derive("nmt-init")  # same stream then overwritten
    params = nmt.NmtParams(
        len(src_vocab), len(tgt_vocab), config.embed_dim, config.hidden_dim,
        config.attn_dim, config.readout_dim, rng,
    )
    params.load_arrays(nmt_arrays)
    adv_rng = Rng(config.seed).derive("advisor-init")
    advisor = fusion.AdvisorParams(
        config.embed_dim, config.hidden_dim, tuple(config.cls_hidden),
        tuple(config.gate_hidden), adv_rng,
    )
    history, best = train_loop(train_pairs, dev_pairs, src_vocab, tgt_vocab,
                               params, advisor, smt, config, log)
    return params, advisor, history, best
