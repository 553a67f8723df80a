"""Beam-search translation with gated SMT fusion, coverage tracking and
post-hoc UNK replacement.

Hypotheses within a beam advance together as one batched forward step. Each
hypothesis owns its coverage vector and prefix, so recommendations diverge per
hypothesis. Ablation switches: pin the gate to a fixed value, substitute
seeded pseudo recommendations, or disable UNK replacement.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import fusion, nmt
from . import tensor as T
from .corpus import BOS_ID, EOS_ID, UNK_ID
from .fusion import StepVocab, pack_candidates
from .rng import Rng
from .smt import CoverageVector, Recommendation, update_coverage

PSEUDO_POOL_SIZE = 50
NEG_INF = -1e30


@dataclass
class DecodeOptions:
    beam_size: int = 10
    max_len_slack: int = 5       # output length cap = 2 * source + slack
    fixed_gate: float = None     # None = learned gate
    pseudo_recs: bool = False
    unk_replace: bool = True
    trace: bool = False
    pseudo_seed: int = 0

    def max_output(self, src_len):
        return 2 * src_len + self.max_len_slack


@dataclass
class StepInfo:
    gate: float
    emitted_id: int
    coverage: str
    recs: list = field(default_factory=list)  # (word, src_pos, score) triples
    replacement: str = None                   # filled for UNK emissions
    forced_eos: bool = False


@dataclass
class Hypothesis:
    ids: list
    logprob: float
    state: np.ndarray
    context: np.ndarray
    alpha: np.ndarray            # None before the first step
    coverage: CoverageVector
    prefix: list                 # decoded surface tokens (UNK as <unk>)
    steps: list
    ended: bool = False

    def clone_for(self, word_id, word_logprob, state, context, alpha, info):
        return Hypothesis(
            ids=self.ids + [word_id],
            logprob=self.logprob + word_logprob,
            state=state,
            context=context,
            alpha=alpha,
            coverage=self.coverage.copy(),
            prefix=list(self.prefix),
            steps=self.steps + [info],
            ended=word_id == EOS_ID,
        )


class Stepper:
    """Batched fused forward steps for one source sentence."""

    def __init__(self, src_tokens, params, src_vocab, tgt_vocab,
                 advisor=None, smt=None, opts=None):
        self.params = params
        self.tgt_vocab = tgt_vocab
        self.advisor = advisor
        self.smt = smt
        self.opts = opts or DecodeOptions()
        self.src_tokens = list(src_tokens)
        src_ids = np.asarray([src_vocab.encode(self.src_tokens)], dtype=np.int64)
        mask = np.ones((1, len(self.src_tokens)))
        enc = nmt.encode(src_ids, mask, params)
        self._ann = [a.data for a in enc.annotations]
        self._proj = [p.data for p in enc.att_proj]
        self._s0 = nmt.init_state(enc, params).data[0]
        self.hidden_dim = params.dims["hidden_dim"]
        if self.hybrid:
            self.session = smt.session(self.src_tokens)
            if self.opts.pseudo_recs:
                self._pseudo_rng = Rng(self.opts.pseudo_seed).derive("pseudo-recs")
                pool = [w for w, _ in smt.target_frequency_ if w not in smt.stop_set_]
                self._pseudo_pool = pool[:PSEUDO_POOL_SIZE]

    @property
    def hybrid(self):
        return self.advisor is not None and self.smt is not None

    def initial_hypothesis(self):
        return Hypothesis(
            ids=[], logprob=0.0, state=self._s0,
            context=np.zeros(2 * self.hidden_dim), alpha=None,
            coverage=CoverageVector(len(self.src_tokens)), prefix=[], steps=[],
        )

    def _enc_view(self, k):
        ts = len(self._ann)
        return nmt.EncoderOutput(
            [T.constant(np.repeat(a, k, axis=0)) for a in self._ann],
            [T.constant(np.repeat(p, k, axis=0)) for p in self._proj],
            None,
            np.ones((k, ts)),
        )

    def recommendations(self, hyp):
        """Per-hypothesis recommendations (real or pseudo) for the next step."""
        if not self.hybrid:
            return []
        if self.opts.pseudo_recs:
            rng = self._pseudo_rng
            recs = []
            if self._pseudo_pool:
                for _ in range(self.smt.n_rec):
                    word = self._pseudo_pool[rng.randint(len(self._pseudo_pool))]
                    pos = rng.randint(len(self.src_tokens))
                    recs.append(Recommendation(word, pos, (0.0,) * 6, 0.0))
            recs.sort(key=lambda r: (-r.score, r.src_pos, r.word))
            return recs
        return self.session.recommend(hyp.prefix, hyp.alpha, hyp.coverage)

    def best_original_rec(self, hyp, recs):
        """Top recommendation rescored with the original-vocabulary LM."""
        if not self.hybrid:
            return None
        if self.opts.pseudo_recs:
            return recs[0] if recs else None
        rescored = self.session.recommend(
            hyp.prefix, hyp.alpha, hyp.coverage, lm=self.smt.lm_orig_
        )
        return rescored[0] if rescored else None

    def step(self, hyps):
        """One batched step over live hypotheses.

        Returns (probs [k, V], states, contexts, alphas, recs per hyp,
        gate values per hyp).
        """
        k = len(hyps)
        enc = self._enc_view(k)
        s_prev = T.constant(np.stack([h.state for h in hyps]))
        c_prev = T.constant(np.stack([h.context for h in hyps]))
        y_prev = np.array([h.ids[-1] if h.ids else BOS_ID for h in hyps], dtype=np.int64)
        step = nmt.decode_step(s_prev, y_prev, c_prev, enc, self.params)
        probs = step.probs
        recs_per_hyp = [self.recommendations(h) for h in hyps]
        gates = [0.0] * k
        if self.hybrid:
            step_vocabs = [
                StepVocab.from_recommendations(recs, self.tgt_vocab)
                for recs in recs_per_hyp
            ]
            cand_ids, cand_mask, has = pack_candidates(step_vocabs)
            p_smt = fusion.score_recs(step.state, step.emb_prev, step.context,
                                      cand_ids, cand_mask, self.params.tgt_emb,
                                      self.advisor)
            if self.opts.fixed_gate is None:
                g = fusion.gate(step.state, step.emb_prev, step.context, self.advisor)
            else:
                g = fusion.fixed_gate_tensor(k, self.opts.fixed_gate)
            probs = fusion.combine(probs, p_smt, cand_ids, g, has)
            gates = (g.data[:, 0] * has[:, 0]).tolist()
        return (
            probs.data,
            step.state.data,
            step.context.data,
            step.alpha.data,
            recs_per_hyp,
            gates,
        )

    def advance(self, hyp, word_id, word_logprob, state, context, alpha, recs,
                gate_value, forced=False):
        """Build the successor hypothesis, updating coverage and records."""
        word = self.tgt_vocab.id_to_token[word_id]
        info = StepInfo(
            gate=gate_value,
            emitted_id=int(word_id),
            coverage="",
            recs=[(r.word, r.src_pos, r.score) for r in recs[:5]],
            forced_eos=forced,
        )
        new = hyp.clone_for(int(word_id), float(word_logprob), state, context,
                            alpha, info)
        update_coverage(new.coverage, word, word_id == UNK_ID, recs)
        if word_id == UNK_ID and self.opts.unk_replace:
            best = self.best_original_rec(hyp, recs)
            if best is not None:
                info.replacement = best.word
        info.coverage = new.coverage.snapshot()
        new.prefix.append(word)
        return new


def beam_search(src_tokens, params, src_vocab, tgt_vocab, advisor=None,
                smt=None, opts=None):
    """Left-to-right beam search over the fused distribution.

    Ranking is by total log-probability without length normalization.
    Returns the best finished hypothesis.
    """
    opts = opts or DecodeOptions()
    if opts.beam_size < 1:
        raise ValueError("beam size must be >= 1")
    stepper = Stepper(src_tokens, params, src_vocab, tgt_vocab, advisor, smt, opts)
    live = [stepper.initial_hypothesis()]
    done = []
    max_out = opts.max_output(len(stepper.src_tokens))

    for step_idx in range(max_out):
        probs, states, contexts, alphas, recs_per_hyp, gates = stepper.step(live)
        with np.errstate(divide="ignore"):
            logp = np.where(probs > 0, np.log(np.maximum(probs, 1e-300)), NEG_INF)
        totals = np.array([h.logprob for h in live])[:, None] + logp
        forced = step_idx == max_out - 1
        if forced:
            flat_order = [(i, EOS_ID) for i in range(len(live))]
        else:
            flat = totals.reshape(-1)
            take = min(opts.beam_size, flat.size)
            top = np.argsort(-flat, kind="stable")[:take]
            flat_order = [divmod(int(ix), probs.shape[1]) for ix in top]
        next_live = []
        for i, w in flat_order:
            hyp = stepper.advance(
                live[i], w, logp[i, w], states[i], contexts[i], alphas[i],
                recs_per_hyp[i], gates[i], forced=forced,
            )
            if hyp.ended:
                done.append(hyp)
            else:
                next_live.append(hyp)
        live = next_live
        if not live:
            break
        # admissible stop: scores only decrease with length, so once the best
        # finished hypothesis beats every live one, no extension can win
        if done and max(h.logprob for h in live) <= max(h.logprob for h in done):
            break

    if not done:
        done = live  # unreachable with forced EOS, kept as a guard
    return max(done, key=lambda h: h.logprob)


def forced_score(src_tokens, out_ids, params, src_vocab, tgt_vocab,
                 advisor=None, smt=None, opts=None):
    """Teacher-force `out_ids` through the same machinery; total log-prob.

    Replays coverage and recommendation dynamics exactly as beam search does,
    so the returned value must match the hypothesis log-probability.
    """
    opts = opts or DecodeOptions()
    stepper = Stepper(src_tokens, params, src_vocab, tgt_vocab, advisor, smt, opts)
    hyp = stepper.initial_hypothesis()
    total = 0.0
    for word_id in out_ids:
        probs, states, contexts, alphas, recs_per_hyp, gates = stepper.step([hyp])
        p = probs[0, word_id]
        lp = np.log(p) if p > 0 else NEG_INF
        total += lp
        hyp = stepper.advance(hyp, word_id, lp, states[0], contexts[0],
                              alphas[0], recs_per_hyp[0], gates[0])
    return total


def surface_output(hyp, tgt_vocab, unk_replace=True):
    """Map hypothesis ids to surface tokens; returns (tokens, unreplaced)."""
    out = []
    unreplaced = 0
    for word_id, info in zip(hyp.ids, hyp.steps):
        if word_id == EOS_ID:
            break
        if word_id == UNK_ID and unk_replace:
            if info.replacement is not None:
                out.append(info.replacement)
            else:
                out.append(tgt_vocab.id_to_token[UNK_ID])
                unreplaced += 1
        else:
            out.append(tgt_vocab.id_to_token[word_id])
    return out, unreplaced


def trace_record(src_tokens, hyp, output_tokens):
    """JSON-able decode trace for one sentence."""
    return {
        "source": " ".join(src_tokens),
        "output": " ".join(output_tokens),
        "logprob": hyp.logprob,
        "steps": [
            {
                "t": t + 1,
                "gate": info.gate,
                "emitted_id": info.emitted_id,
                "coverage": info.coverage,
                "recommendations": [
                    {"word": w, "src_pos": p, "score": s} for w, p, s in info.recs
                ],
                "replacement": info.replacement,
                "forced_eos": info.forced_eos,
            }
            for t, info in enumerate(hyp.steps)
        ],
    }


def translate_corpus(sentences, params, src_vocab, tgt_vocab, advisor=None,
                     smt=None, opts=None, trace_path=None):
    """Translate each sentence; optionally write a JSON-lines trace file."""
    opts = opts or DecodeOptions()
    outputs = []
    trace_fh = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        for idx, src in enumerate(sentences):
            sent_opts = opts
            if opts.pseudo_recs:
                sent_opts = replace(opts, pseudo_seed=opts.pseudo_seed * 1_000_003 + idx)
            hyp = beam_search(src, params, src_vocab, tgt_vocab, advisor, smt,
                              sent_opts)
            tokens, _ = surface_output(hyp, tgt_vocab, unk_replace=opts.unk_replace)
            outputs.append(tokens)
            if trace_fh:
                trace_fh.write(json.dumps(trace_record(src, hyp, tokens)) + "\n")
    finally:
        if trace_fh:
            trace_fh.close()
    return outputs
