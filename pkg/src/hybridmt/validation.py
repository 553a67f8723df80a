"""Input validation helpers shared by the estimators."""

from .corpus import DataError


def as_token_sentences(X):
    """Normalize input sentences to lists of string tokens.

    Accepts an iterable of strings (whitespace-tokenized) or of token lists.
    Rejects empty corpora and empty sentences.
    """
    sentences = []
    for item in X:
        toks = item.split() if isinstance(item, str) else list(item)
        if not toks:
            raise DataError("empty sentence in input")
        if not all(isinstance(t, str) for t in toks):
            raise DataError("sentence tokens must be strings")
        sentences.append(toks)
    if not sentences:
        raise DataError("empty corpus")
    return sentences


def check_parallel(src_sentences, tgt_sentences):
    if len(src_sentences) != len(tgt_sentences):
        raise DataError(
            f"parallel sides differ: {len(src_sentences)} source vs "
            f"{len(tgt_sentences)} target sentences"
        )
