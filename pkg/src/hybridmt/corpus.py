"""Parallel-corpus ingestion, vocabularies, batching and synthetic tasks."""

import numpy as np

from .rng import Rng

UNK_ID, BOS_ID, EOS_ID = 0, 1, 2
UNK_TOKEN, BOS_TOKEN, EOS_TOKEN = "<unk>", "<s>", "</s>"
RESERVED = (UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)


class DataError(ValueError):
    """Corpus or vocabulary input is unusable."""


class Vocabulary:
    """Dense bidirectional token<->id map with reserved UNK/BOS/EOS at 0/1/2."""

    def __init__(self, tokens):
        self.id_to_token = list(RESERVED) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, sentences, cap):
        """Keep the cap-3 most frequent tokens; ties break by first occurrence."""
        if cap < 4:
            raise DataError("vocabulary cap must be at least 4")
        counts = {}
        first_seen = {}
        n_tokens = 0
        for sent in sentences:
            for tok in sent:
                n_tokens += 1
                counts[tok] = counts.get(tok, 0) + 1
                if tok not in first_seen:
                    first_seen[tok] = len(first_seen)
        if n_tokens == 0:
            raise DataError("cannot build a vocabulary from an empty corpus")
        ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
        return cls(ranked[: cap - 3])

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode_token(self, token):
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens):
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]

    def coverage(self, sentences):
        """Fraction of running tokens that are in-vocabulary."""
        total = known = 0
        for sent in sentences:
            for tok in sent:
                total += 1
                known += tok in self.token_to_id
        return known / total if total else 0.0

    def to_dict(self):
        return {"tokens": self.id_to_token[3:]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["tokens"])


class ParallelCorpus:
    """Aligned (source tokens, target tokens) pairs."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        for src, tgt in self.pairs:
            if not src or not tgt:
                raise DataError("empty sentence in parallel corpus")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def sources(self):
        return [src for src, _ in self.pairs]

    def targets(self):
        return [tgt for _, tgt in self.pairs]

    @classmethod
    def from_files(cls, src_path, tgt_path):
        with open(src_path, encoding="utf-8") as fh:
            src_lines = [line.split() for line in fh.read().splitlines()]
        with open(tgt_path, encoding="utf-8") as fh:
            tgt_lines = [line.split() for line in fh.read().splitlines()]
        if len(src_lines) != len(tgt_lines):
            raise DataError(
                f"side lengths differ: {len(src_lines)} source vs {len(tgt_lines)} target lines"
            )
        return cls(list(zip(src_lines, tgt_lines)))

    def to_files(self, src_path, tgt_path):
        with open(src_path, "w", encoding="utf-8") as fh:
            fh.write("".join(" ".join(s) + "\n" for s, _ in self.pairs))
        with open(tgt_path, "w", encoding="utf-8") as fh:
            fh.write("".join(" ".join(t) + "\n" for _, t in self.pairs))

    def concat(self, other):
        return ParallelCorpus(self.pairs + other.pairs)


class Batch:
    """Padded id matrices with lengths and 0/1 masks.

    Targets are wrapped BOS...EOS; `tgt_in` (all but last column) conditions
    the decoder and `tgt_gold` (all but first) is what the loss predicts.
    Masked positions contribute exactly zero to loss and attention.
    """

    def __init__(self, pairs, src_vocab, tgt_vocab):
        self.pairs = pairs  # surface forms kept for SMT lookups
        n = len(pairs)
        src_ids = [src_vocab.encode(s) for s, _ in pairs]
        tgt_ids = [[BOS_ID] + tgt_vocab.encode(t) + [EOS_ID] for _, t in pairs]
        self.src_len = np.array([len(s) for s in src_ids], dtype=np.int64)
        self.tgt_len = np.array([len(t) for t in tgt_ids], dtype=np.int64)
        ts, tt = self.src_len.max(), self.tgt_len.max()
        self.src = np.zeros((n, ts), dtype=np.int64)
        self.tgt = np.zeros((n, tt), dtype=np.int64)
        self.src_mask = np.zeros((n, ts), dtype=np.float64)
        self.tgt_mask = np.zeros((n, tt), dtype=np.float64)
        for i, (s, t) in enumerate(zip(src_ids, tgt_ids)):
            self.src[i, : len(s)] = s
            self.tgt[i, : len(t)] = t
            self.src_mask[i, : len(s)] = 1.0
            self.tgt_mask[i, : len(t)] = 1.0

    def __len__(self):
        return len(self.pairs)

    @property
    def tgt_in(self):
        return self.tgt[:, :-1]

    @property
    def tgt_gold(self):
        return self.tgt[:, 1:]

    @property
    def gold_mask(self):
        return self.tgt_mask[:, 1:]

    @property
    def n_gold_tokens(self):
        return float(self.gold_mask.sum())


def make_batches(corpus, src_vocab, tgt_vocab, batch_size, max_len=50, rng=None,
                 filter_long=True):
    """Batch a corpus; training pairs longer than max_len on either side drop.

    Pass filter_long=False for dev/test data, which is kept at original length.
    `rng` shuffles pair order; None keeps corpus order.
    """
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    pairs = [
        (s, t)
        for s, t in corpus
        if not filter_long or (len(s) <= max_len and len(t) <= max_len)
    ]
    if not pairs:
        raise DataError("no sentence pairs survive length filtering")
    if rng is not None:
        rng.shuffle(pairs)
    return [
        Batch(pairs[i : i + batch_size], src_vocab, tgt_vocab)
        for i in range(0, len(pairs), batch_size)
    ]


# --- synthetic tasks ------------------------------------------------------
#
# The dictionary D is fixed (seed-independent): source type s<i> always maps
# to target type t<i>, and the last 10% of type indices are the rare types.
# Seeds only drive sentence sampling, so corpora generated for different
# tasks or seeds stay mutually consistent.

SYNTH_TASKS = ("copy", "lexicon", "lexicon_rare", "swap", "lexicon_rare+swap")
DEFAULT_N_TYPES = 40
RARE_FRACTION = 0.1
RARE_WEIGHT_RATIO = 10  # common types are drawn ~10x more often than rare ones


def synth_types(n_types=DEFAULT_N_TYPES):
    src = [f"s{i:02d}" for i in range(n_types)]
    tgt = [f"t{i:02d}" for i in range(n_types)]
    return src, tgt


def synth_dictionary(n_types=DEFAULT_N_TYPES):
    src, tgt = synth_types(n_types)
    return dict(zip(src, tgt))


def synth_rare_types(n_types=DEFAULT_N_TYPES):
    """The fixed rare subset: the last round(10%) of source types."""
    n_rare = int(round(n_types * RARE_FRACTION))
    src, _ = synth_types(n_types)
    return src[n_types - n_rare :] if n_rare else []


def _swap_adjacent(tokens):
    out = list(tokens)
    for i in range(0, len(out) - 1, 2):
        out[i], out[i + 1] = out[i + 1], out[i]
    return out


def gen_synthetic(task, n, seed, n_types=DEFAULT_N_TYPES, min_len=3, max_len=10):
    """Deterministic synthetic parallel corpus for one of SYNTH_TASKS."""
    if task not in SYNTH_TASKS:
        raise DataError(f"unknown synthetic task {task!r}; pick one of {SYNTH_TASKS}")
    if n < 1:
        raise DataError("need n >= 1 sentences")
    rng = Rng(seed).derive(f"synth-{task}")
    src_types, _ = synth_types(n_types)
    dictionary = synth_dictionary(n_types)
    rare = set(synth_rare_types(n_types))
    use_rare = task in ("lexicon_rare", "lexicon_rare+swap")
    do_swap = task in ("swap", "lexicon_rare+swap")

    if use_rare:
        weighted = []
        for t in src_types:
            weighted.extend([t] * (1 if t in rare else RARE_WEIGHT_RATIO))
    else:
        weighted = [t for t in src_types if t not in rare]

    pairs = []
    for _ in range(n):
        length = min_len + rng.randint(max_len - min_len + 1)
        src = [weighted[rng.randint(len(weighted))] for _ in range(length)]
        if task == "copy":
            tgt = list(src)
        else:
            tgt = [dictionary[w] for w in src]
            if do_swap:
                tgt = _swap_adjacent(tgt)
        pairs.append((src, tgt))
    return ParallelCorpus(pairs)


def tokenize_line(line, fold_case=False):
    """Whitespace tokenization; case folding is only applied for BLEU."""
    line = line.lower() if fold_case else line
    return line.split()
