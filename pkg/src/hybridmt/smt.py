"""Word-level SMT advisor.

Training builds four bidirectional translation/lexical tables from IBM Model 1
alignments plus two interpolated n-gram language models (one with the NMT
target vocabulary's out-of-vocabulary words mapped to UNK, one over original
tokens). At each decoding step the advisor scores candidate target words for
the still-uncovered source positions with six weighted features: the four
table log-probabilities, the LM conditional of the candidate given the prefix,
and an attention-weighted distance reordering cost.
"""

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import DataError, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN
from .validation import as_token_sentences, check_parallel

NULL_TOKEN = "<null>"
MISSING_LOGPROB = math.log(1e-12)  # defensive floor for absent table entries


def default_stop_words():
    text = resources.files("hybridmt").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def load_stop_words(path):
    """Stop list file: one token per line."""
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh.read().splitlines() if line.strip()]


# --- IBM Model 1 -----------------------------------------------------------

def train_ibm1(pairs, iters):
    """EM for t(target word | source word) with a NULL source token.

    Returns (t_table, log-likelihood per iteration). The likelihood sequence
    is non-decreasing, which the tests assert.
    """
    if iters < 1:
        raise ValueError("need at least one EM iteration")
    pairs = list(pairs)
    if not pairs:
        raise DataError("cannot train IBM1 on an empty corpus")

    cooc = {}
    for src, tgt in pairs:
        srcs = set(src) | {NULL_TOKEN}
        for t in set(tgt):
            for s in srcs:
                cooc.setdefault(s, set()).add(t)
    t_table = {s: {t: 1.0 / len(ts) for t in ts} for s, ts in cooc.items()}

    loglik_history = []
    for _ in range(iters):
        counts = {s: dict.fromkeys(ts, 0.0) for s, ts in cooc.items()}
        totals = dict.fromkeys(cooc, 0.0)
        loglik = 0.0
        for src, tgt in pairs:
            srcs = list(src) + [NULL_TOKEN]
            for t in tgt:
                denom = sum(t_table[s][t] for s in srcs)
                loglik += math.log(denom / len(srcs))
                for s in srcs:
                    frac = t_table[s][t] / denom
                    counts[s][t] += frac
                    totals[s] += frac
        for s, row in counts.items():
            if totals[s] > 0:
                t_table[s] = {t: c / totals[s] for t, c in row.items()}
        loglik_history.append(loglik)
    return t_table, loglik_history


def viterbi_align(src, tgt, t_table):
    """Best source index per target word; None means NULL.

    Earliest position wins ties; NULL only on strictly higher probability.
    """
    alignment = []
    for t in tgt:
        best_pos, best_p = None, -1.0
        for i, s in enumerate(src):
            p = t_table.get(s, {}).get(t, 0.0)
            if p > best_p:
                best_pos, best_p = i, p
        p_null = t_table.get(NULL_TOKEN, {}).get(t, 0.0)
        if p_null > best_p:
            best_pos = None
        alignment.append(best_pos)
    return alignment


@dataclass
class LexTables:
    """p_fwd(t|s), p_bwd(s|t) from intersected alignments; lex_* from IBM1."""

    p_fwd: dict
    p_bwd: dict
    lex_fwd: dict
    lex_bwd: dict


def build_lex_tables(pairs, em_iters=10):
    """Train both IBM1 directions, intersect Viterbi alignments, count."""
    pairs = list(pairs)
    t_fwd, _ = train_ibm1(pairs, em_iters)  # t(tgt|src)
    t_bwd, _ = train_ibm1([(t, s) for s, t in pairs], em_iters)  # t(src|tgt)

    counts = {}
    for src, tgt in pairs:
        fwd = viterbi_align(src, tgt, t_fwd)  # per target j: source i
        bwd = viterbi_align(tgt, src, t_bwd)  # per source i: target j
        for j, i in enumerate(fwd):
            if i is not None and bwd[i] == j:
                key = (src[i], tgt[j])
                counts[key] = counts.get(key, 0) + 1

    p_fwd, p_bwd = {}, {}
    src_totals, tgt_totals = {}, {}
    for (s, t), c in counts.items():
        src_totals[s] = src_totals.get(s, 0) + c
        tgt_totals[t] = tgt_totals.get(t, 0) + c
    for (s, t), c in counts.items():
        p_fwd.setdefault(s, {})[t] = c / src_totals[s]
        p_bwd.setdefault(t, {})[s] = c / tgt_totals[t]

    lex_fwd = {s: dict(row) for s, row in t_fwd.items() if s != NULL_TOKEN}
    lex_bwd = {t: dict(row) for t, row in t_bwd.items() if t != NULL_TOKEN}
    return LexTables(p_fwd, p_bwd, lex_fwd, lex_bwd)


# --- interpolated n-gram language model ------------------------------------

class NGramLM:
    """Jelinek-Mercer interpolated n-gram model with an unknown-word floor.

    Per-level weights are fixed (highest order first) and renormalized over
    the levels whose history was observed, so every conditional sums to one
    over the model vocabulary. A small gamma of mass is spread uniformly over
    that vocabulary (which always includes <unk>), giving unseen words a
    positive floor while keeping exact normalization.
    """

    def __init__(self, order=4, weights=(0.5, 0.3, 0.15, 0.05), unk_mass=1e-4):
        if order < 1:
            raise ValueError("order must be >= 1")
        if len(weights) != order:
            raise ValueError(f"need {order} interpolation weights, got {len(weights)}")
        self.order = order
        self.weights = tuple(float(w) for w in weights)
        self.unk_mass = float(unk_mass)
        self.ngram_counts = [{} for _ in range(order)]  # level k: (k+1)-grams
        self.history_counts = [{} for _ in range(order)]
        self.vocab = {UNK_TOKEN}
        self.known = None  # token filter applied before counting, None = keep all

    def fit(self, sentences, vocab=None):
        """Count n-grams; with `vocab` given, OOV tokens become UNK first."""
        sentences = list(sentences)
        if not sentences:
            raise DataError("cannot train a language model on empty input")
        self.known = set(vocab.id_to_token) if vocab is not None else None
        for sent in sentences:
            toks = [self._map(t) for t in sent]
            padded = [BOS_TOKEN] * (self.order - 1) + toks + [EOS_TOKEN]
            self.vocab.update(toks)
            self.vocab.add(EOS_TOKEN)
            for pos in range(self.order - 1, len(padded)):
                for k in range(self.order):
                    gram = tuple(padded[pos - k : pos + 1])
                    self.ngram_counts[k][gram] = self.ngram_counts[k].get(gram, 0) + 1
                    hist = gram[:-1]
                    self.history_counts[k][hist] = self.history_counts[k].get(hist, 0) + 1
        return self

    def _map(self, token):
        if self.known is not None and token not in self.known:
            return UNK_TOKEN
        return token

    def _query(self, token):
        token = self._map(token)
        return token if token in self.vocab else UNK_TOKEN

    def prob(self, token, history):
        """p(token | history); history is the raw prefix token sequence."""
        w = self._query(token)
        need = self.order - 1
        hist = [self._map(t) for t in history]
        hist = ([BOS_TOKEN] * need + hist)[-need:] if need else []
        interp = 0.0
        weight_sum = 0.0
        for k in range(self.order):  # level k scores (k+1)-grams
            ctx = tuple(hist[-k:]) if k else ()
            h_count = self.history_counts[k].get(ctx, 0)
            if h_count > 0:
                lam = self.weights[self.order - 1 - k]
                weight_sum += lam
                interp += lam * self.ngram_counts[k].get(ctx + (w,), 0) / h_count
        if weight_sum > 0:
            interp /= weight_sum
        return (1.0 - self.unk_mass) * interp + self.unk_mass / len(self.vocab)

    def logprob(self, token, history):
        return math.log(self.prob(token, history))

    def sentence_logprob(self, tokens):
        """log p of the sentence including the end-of-sentence event."""
        total = 0.0
        seq = list(tokens) + [EOS_TOKEN]
        for i, tok in enumerate(seq):
            total += self.logprob(tok, seq[:i])
        return total

    def perplexity(self, sentences):
        total_lp, total_tokens = 0.0, 0
        for sent in sentences:
            total_lp += self.sentence_logprob(sent)
            total_tokens += len(sent) + 1
        return math.exp(-total_lp / total_tokens)

    def to_dict(self):
        return {
            "order": self.order,
            "weights": list(self.weights),
            "unk_mass": self.unk_mass,
            "vocab": sorted(self.vocab),
            "known": sorted(self.known) if self.known is not None else None,
            "ngram_counts": [
                [["\x1f".join(g), c] for g, c in sorted(level.items())]
                for level in self.ngram_counts
            ],
            "history_counts": [
                [["\x1f".join(g), c] for g, c in sorted(level.items())]
                for level in self.history_counts
            ],
        }

    @classmethod
    def from_dict(cls, d):
        lm = cls(order=d["order"], weights=tuple(d["weights"]), unk_mass=d["unk_mass"])
        lm.vocab = set(d["vocab"])
        lm.known = set(d["known"]) if d["known"] is not None else None
        lm.ngram_counts = [
            {tuple(g.split("\x1f")): c for g, c in level} for level in d["ngram_counts"]
        ]
        lm.history_counts = [
            {tuple(g.split("\x1f")) if g else (): c for g, c in level}
            for level in d["history_counts"]
        ]
        return lm


# --- reordering costs -------------------------------------------------------

def reorder_cost_hard(sp_t, sp_prev):
    """Distance cost -|sp_t - sp_prev - 1| between consecutive source positions."""
    return -abs(sp_t - sp_prev - 1)


def reorder_cost_soft(sp_t, alpha_prev):
    """Attention-expected distance cost -sum_j alpha[j] |sp_t - j - 1|.

    Source positions j are 1-based; alpha_prev[0] is the weight of j=1.
    """
    alpha = np.asarray(alpha_prev, dtype=np.float64)
    if abs(alpha.sum() - 1.0) > 1e-6:
        raise ValueError(f"attention weights sum to {alpha.sum():.8f}, expected 1")
    positions = np.arange(1, alpha.size + 1)
    return float(-(alpha * np.abs(sp_t - positions - 1)).sum())


# --- coverage ---------------------------------------------------------------

class CoverageVector:
    """One bit per source position; bits only ever flip 0 -> 1."""

    def __init__(self, length):
        self.bits = np.zeros(length, dtype=np.uint8)

    def __len__(self):
        return self.bits.size

    def covered(self, pos):
        return bool(self.bits[pos])

    def mark(self, pos):
        self.bits[pos] = 1

    @property
    def count(self):
        return int(self.bits.sum())

    def copy(self):
        cv = CoverageVector(len(self))
        cv.bits = self.bits.copy()
        return cv

    def snapshot(self):
        return "".join(str(int(b)) for b in self.bits)


@dataclass
class Recommendation:
    """One scored SMT candidate: target word, 0-based source position,
    the six feature values and the weighted total score."""

    word: str
    src_pos: int
    features: tuple
    score: float


def update_coverage(cv, emitted_word, emitted_is_unk, recs):
    """Mark the source position of the best recommendation matching the
    emitted word. UNK emissions never record coverage."""
    if emitted_is_unk:
        return cv
    for rec in recs:  # recs are sorted best-first
        if rec.word == emitted_word:
            cv.mark(rec.src_pos)
            break
    return cv


# --- the advisor estimator ---------------------------------------------------

class SmtRecommender(BaseEstimator):
    """Trains the word-level SMT model and produces per-step recommendations.

    Parameters mirror the usual advisor knobs: `n_tm` candidate translations
    kept per source word, `n_rec` recommendations returned per step, feature
    weights for (fwd-trans, bwd-trans, fwd-lex, bwd-lex, LM, reordering).
    """

    def __init__(self, n_tm=5, n_rec=25, em_iters=10, lm_order=4,
                 lm_weights=(0.5, 0.3, 0.15, 0.05), lm_unk_mass=1e-4,
                 feature_weights=(1.0, 1.0, 1.0, 1.0, 1.0, 10.0),
                 stop_words=None):
        self.n_tm = n_tm
        self.n_rec = n_rec
        self.em_iters = em_iters
        self.lm_order = lm_order
        self.lm_weights = lm_weights
        self.lm_unk_mass = lm_unk_mass
        self.feature_weights = feature_weights
        self.stop_words = stop_words

    def fit(self, X, y, target_vocab=None):
        """Fit tables and LMs on parallel sentences (X source, y target).

        `target_vocab` is the NMT target vocabulary used to build the
        UNK-mapped language model; without it both LMs are the original one.
        """
        if self.n_tm < 1 or self.n_rec < 1:
            raise ValueError("n_tm and n_rec must be >= 1")
        src = as_token_sentences(X)
        tgt = as_token_sentences(y)
        check_parallel(src, tgt)
        pairs = list(zip(src, tgt))

        self.tables_ = build_lex_tables(pairs, em_iters=self.em_iters)
        self.lm_orig_ = NGramLM(self.lm_order, self.lm_weights, self.lm_unk_mass).fit(tgt)
        if target_vocab is not None:
            self.lm_unk_ = NGramLM(self.lm_order, self.lm_weights, self.lm_unk_mass).fit(
                tgt, vocab=target_vocab
            )
        else:
            self.lm_unk_ = self.lm_orig_
        self.stop_set_ = frozenset(
            self.stop_words if self.stop_words is not None else default_stop_words()
        )
        self.candidates_ = self._build_candidate_table()

        freq = {}
        for sent in tgt:
            for tok in sent:
                freq[tok] = freq.get(tok, 0) + 1
        self.target_frequency_ = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
        return self

    def _build_candidate_table(self):
        """Per source word: top n_tm target words by weighted sum of the four
        translation probabilities, with their four log features."""
        lam = self.feature_weights
        table = {}
        for s, row in self.tables_.p_fwd.items():
            scored = []
            for t, pf in row.items():
                pb = self.tables_.p_bwd.get(t, {}).get(s)
                lf = self.tables_.lex_fwd.get(s, {}).get(t)
                lb = self.tables_.lex_bwd.get(t, {}).get(s)
                tm_score = (
                    lam[0] * pf
                    + lam[1] * (pb or 0.0)
                    + lam[2] * (lf or 0.0)
                    + lam[3] * (lb or 0.0)
                )
                feats = tuple(
                    math.log(p) if p else MISSING_LOGPROB for p in (pf, pb, lf, lb)
                )
                scored.append((t, feats, tm_score))
            scored.sort(key=lambda e: (-e[2], e[0]))
            table[s] = scored[: self.n_tm]
        return table

    def session(self, src_tokens):
        """Per-sentence recommendation context (caches static features)."""
        check_is_fitted(self, "candidates_")
        return RecommendSession(self, list(src_tokens))

    def recommend(self, src_tokens, prefix_tokens, alpha_prev, coverage):
        """Top n_rec scored recommendations for one decoding step."""
        return self.session(src_tokens).recommend(prefix_tokens, alpha_prev, coverage)

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "candidates_")
        extras = {
            "kind": "smt",
            "tables": {
                "p_fwd": _table_to_json(self.tables_.p_fwd),
                "p_bwd": _table_to_json(self.tables_.p_bwd),
                "lex_fwd": _table_to_json(self.tables_.lex_fwd),
                "lex_bwd": _table_to_json(self.tables_.lex_bwd),
            },
            "lm_orig": self.lm_orig_.to_dict(),
            "lm_unk": self.lm_unk_.to_dict(),
            "stop_words": sorted(self.stop_set_),
            "target_frequency": self.target_frequency_,
        }
        save_checkpoint(path, {}, config=self.get_params(), seed=0, extras=extras)

    @classmethod
    def load(cls, path):
        ckpt = load_checkpoint(path)
        if ckpt.extras.get("kind") != "smt":
            raise DataError(f"{path} is not an SMT model checkpoint")
        model = cls(**ckpt.config)
        tables = ckpt.extras["tables"]
        model.tables_ = LexTables(
            _table_from_json(tables["p_fwd"]),
            _table_from_json(tables["p_bwd"]),
            _table_from_json(tables["lex_fwd"]),
            _table_from_json(tables["lex_bwd"]),
        )
        model.lm_orig_ = NGramLM.from_dict(ckpt.extras["lm_orig"])
        model.lm_unk_ = NGramLM.from_dict(ckpt.extras["lm_unk"])
        model.stop_set_ = frozenset(ckpt.extras["stop_words"])
        model.target_frequency_ = [tuple(e) for e in ckpt.extras["target_frequency"]]
        model.candidates_ = model._build_candidate_table()
        return model

    def export_tables(self, path):
        """Sorted text dump 'src<TAB>tgt<TAB>p_fwd<TAB>p_bwd<TAB>lex_fwd<TAB>lex_bwd'."""
        check_is_fitted(self, "tables_")
        rows = []
        pair_set = set()
        for s, row in self.tables_.p_fwd.items():
            pair_set.update((s, t) for t in row)
        for s, t in sorted(pair_set):
            rows.append(
                "\t".join(
                    [
                        s,
                        t,
                        f"{self.tables_.p_fwd.get(s, {}).get(t, 0.0):.10g}",
                        f"{self.tables_.p_bwd.get(t, {}).get(s, 0.0):.10g}",
                        f"{self.tables_.lex_fwd.get(s, {}).get(t, 0.0):.10g}",
                        f"{self.tables_.lex_bwd.get(t, {}).get(s, 0.0):.10g}",
                    ]
                )
            )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + ("\n" if rows else ""))


def _table_to_json(table):
    return [[s, t, p] for s in sorted(table) for t, p in sorted(table[s].items())]


def _table_from_json(rows):
    table = {}
    for s, t, p in rows:
        table.setdefault(s, {})[t] = p
    return table


class RecommendSession:
    """Recommendation scoring for one source sentence.

    The four translation features per (position, candidate) are static for the
    sentence and cached at construction; per step only the LM conditional and
    the attention-weighted reordering cost change.
    """

    def __init__(self, model, src_tokens):
        self.model = model
        self.src_tokens = src_tokens
        lam = model.feature_weights
        self.static = []  # per position: list of (word, feats4, static_score)
        for tok in src_tokens:
            entries = []
            for word, feats, _ in model.candidates_.get(tok, ()):
                if word in model.stop_set_:
                    continue
                static_score = sum(l * f for l, f in zip(lam[:4], feats))
                entries.append((word, feats, static_score))
            self.static.append(entries)

    def recommend(self, prefix_tokens, alpha_prev, coverage, lm=None):
        """Score candidates from uncovered positions; top n_rec by total."""
        model = self.model
        lam = model.feature_weights
        lm = lm if lm is not None else model.lm_unk_
        if alpha_prev is not None:
            alpha = np.asarray(alpha_prev, dtype=np.float64)
            if alpha.size != len(self.src_tokens):
                raise ValueError("attention length does not match source length")
            if abs(alpha.sum() - 1.0) > 1e-6:
                raise ValueError("attention weights must sum to 1")
            positions = np.arange(1, alpha.size + 1)

        lm_cache = {}
        recs = []
        for pos, entries in enumerate(self.static):
            if coverage.covered(pos) or not entries:
                continue
            if alpha_prev is None:
                d = 0.0
            else:
                d = float(-(alpha * np.abs((pos + 1) - positions - 1)).sum())
            for word, feats, static_score in entries:
                if word not in lm_cache:
                    lm_cache[word] = lm.logprob(word, prefix_tokens)
                h_lm = lm_cache[word]
                score = static_score + lam[4] * h_lm + lam[5] * d
                recs.append(Recommendation(word, pos, feats + (h_lm, d), score))
        recs.sort(key=lambda r: (-r.score, r.src_pos, r.word))
        return recs[: model.n_rec]
