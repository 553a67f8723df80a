"""Case-insensitive corpus-level BLEU-4 and synthetic-task token accuracy."""

import json
import math
from collections import Counter
from dataclasses import dataclass

from .corpus import DataError

MAX_ORDER = 4


@dataclass
class BleuReport:
    bleu: float
    precisions: tuple
    brevity_penalty: float
    candidate_length: int
    reference_length: int

    def to_json(self):
        return json.dumps(
            {
                "bleu": self.bleu,
                "precisions": list(self.precisions),
                "brevity_penalty": self.brevity_penalty,
                "candidate_length": self.candidate_length,
                "reference_length": self.reference_length,
            }
        )

    def table(self):
        lines = [
            f"BLEU               {self.bleu:.4f}",
            f"brevity penalty    {self.brevity_penalty:.4f}",
            f"candidate length   {self.candidate_length}",
            f"reference length   {self.reference_length}",
        ]
        for n, p in enumerate(self.precisions, 1):
            lines.append(f"precision {n}-gram   {p:.4f}")
        return "\n".join(lines)


def _tokens(sentence):
    toks = sentence.split() if isinstance(sentence, str) else list(sentence)
    return [t.lower() for t in toks]


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, reference_sets):
    """Corpus-level BLEU-4 with multi-reference clipping and brevity penalty.

    `reference_sets[i]` is the list of references for candidate i, each
    reference a string (whitespace-tokenized) or a token list; a bare string
    is promoted to a one-reference list. Everything is case-folded before
    counting. Clipping uses per-reference count maxima, the brevity penalty
    uses per-sentence closest reference length (ties prefer the shorter), and
    a zero clipped count at any order makes BLEU exactly 0 (no smoothing).
    """
    if len(candidates) != len(reference_sets):
        raise DataError("candidate and reference counts differ")
    if not candidates:
        raise DataError("empty candidate set")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, reference_sets):
        if isinstance(refs, str):
            refs = [refs]
        ref_tokens = [_tokens(r) for r in refs]
        if not ref_tokens:
            raise DataError("candidate without references")
        cand_tokens = _tokens(cand)
        cand_len += len(cand_tokens)
        ref_len += min(
            (abs(len(r) - len(cand_tokens)), len(r)) for r in ref_tokens
        )[1]
        for n in range(1, MAX_ORDER + 1):
            cand_counts = _ngrams(cand_tokens, n)
            max_ref = Counter()
            for r in ref_tokens:
                for gram, c in _ngrams(r, n).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            totals[n - 1] += max(len(cand_tokens) - n + 1, 0)
            matches[n - 1] += sum(
                min(c, max_ref[gram]) for gram, c in cand_counts.items()
            )
    precisions = tuple((m / t) if t > 0 else 0.0 for m, t in zip(matches, totals))
    if cand_len == 0 or ref_len == 0:
        bp = 0.0
    elif cand_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / cand_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuReport(score, precisions, bp, cand_len, ref_len)


def bleu_single(candidates, references):
    """BLEU against exactly one reference per candidate (str or token list)."""
    return bleu(candidates, [[r] for r in references])


def token_accuracy(candidates, references):
    """Mean over sentences of position matches over the min-length prefix."""
    if len(candidates) != len(references):
        raise DataError("candidate and reference counts differ")
    if not candidates:
        raise DataError("empty input")
    fractions = []
    for cand, ref in zip(candidates, references):
        c = cand.split() if isinstance(cand, str) else list(cand)
        r = ref.split() if isinstance(ref, str) else list(ref)
        n = min(len(c), len(r))
        if n == 0:
            fractions.append(0.0)
            continue
        fractions.append(sum(a == b for a, b in zip(c[:n], r[:n])) / n)
    return sum(fractions) / len(fractions)
