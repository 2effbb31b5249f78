"""
Corpus-level BLEU compatible with sacreBLEU's default settings

13a tokenization, case-sensitive, single reference, BLEU-4 with
exponential smoothing of zero n-gram precisions.
"""
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Tuple

from emomt.errors import ValidationError

NGRAM_ORDER = 4

_13A_RULES = (
    # punctuation and symbols in the ASCII range
    (re.compile(r'([\{-\~\[-\` -\&\(-\+\:-\@\/])'), r' \1 '),
    # period and comma unless preceded by a digit
    (re.compile(r'([^0-9])([\.,])'), r'\1 \2 '),
    # period and comma unless followed by a digit
    (re.compile(r'([\.,])([^0-9])'), r' \1 \2'),
    # dash when preceded by a digit
    (re.compile(r'([0-9])(-)'), r'\1 \2 '),
)


def tokenize_13a(line):
    """
    Tokenize a segment the way mteval-v13a does

    Args:
        line: Detokenized segment

    Returns:
        str: Space-separated tokens
    """
    line = line.replace('<skipped>', '')
    line = line.replace('-\n', '')
    line = line.replace('\n', ' ')
    if '&' in line:
        line = line.replace('&quot;', '"')
        line = line.replace('&amp;', '&')
        line = line.replace('&lt;', '<')
        line = line.replace('&gt;', '>')

    line = f' {line} '
    for pattern, replacement in _13A_RULES:
        line = pattern.sub(replacement, line)
    return ' '.join(line.split())


def extract_ngrams(tokens, max_order=NGRAM_ORDER):
    """Count all n-grams of order 1..max_order in a token list"""
    ngrams = Counter()
    for n in range(1, max_order + 1):
        for start in range(len(tokens) - n + 1):
            ngrams[tuple(tokens[start:start + n])] += 1
    return ngrams


def _log(value):
    # sacreBLEU floors log(0) instead of raising
    if value == 0.0:
        return -9999999999
    return math.log(value)


@dataclass(frozen=True)
class EvalPair:
    hypothesis: str
    reference: str

    def __post_init__(self):
        if not isinstance(self.reference, str) or not self.reference.strip():
            raise ValidationError("reference must be a non-empty string")
        if not isinstance(self.hypothesis, str):
            raise ValidationError("hypothesis must be a string")


@dataclass(frozen=True)
class BleuScore:
    score: float
    ngram_precisions: Tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    counts: Tuple[int, ...] = ()
    totals: Tuple[int, ...] = ()

    def format(self, width=1):
        precisions = "/".join(f"{100 * p:.1f}" for p in self.ngram_precisions)
        ratio = self.hyp_len / self.ref_len if self.ref_len else 0.0
        return (f"BLEU = {self.score:.{width}f} {precisions} "
                f"(BP = {self.brevity_penalty:.3f} ratio = {ratio:.3f} "
                f"hyp_len = {self.hyp_len:d} ref_len = {self.ref_len:d})")

    def __str__(self):
        return self.format()

    def to_dict(self):
        return {
            "score": self.score,
            "ngram_precisions": list(self.ngram_precisions),
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "counts": list(self.counts),
            "totals": list(self.totals),
        }


def compute_bleu(correct, total, hyp_len, ref_len):
    """
    BLEU from sufficient statistics, with exponential smoothing

    Args:
        correct: Clipped matches per n-gram order
        total: Hypothesis n-grams per order
        hyp_len: Corpus hypothesis length in tokens
        ref_len: Corpus reference length in tokens

    Returns:
        BleuScore: Score on a 0-100 scale
    """
    if hyp_len < ref_len:
        brevity_penalty = math.exp(1 - ref_len / hyp_len) if hyp_len > 0 else 0.0
    else:
        brevity_penalty = 1.0

    precisions = [0.0] * NGRAM_ORDER

    # no unigram matches at all: score is zero, nothing to smooth
    if correct[0] == 0:
        return BleuScore(0.0, tuple(precisions), brevity_penalty, hyp_len, ref_len, tuple(correct), tuple(total))

    smooth = 1.0
    for n in range(1, NGRAM_ORDER + 1):
        if total[n - 1] == 0:
            break
        if correct[n - 1] == 0:
            smooth *= 2
            precisions[n - 1] = 1.0 / (smooth * total[n - 1])
        else:
            precisions[n - 1] = correct[n - 1] / total[n - 1]

    # fractions rather than percentages keep a perfect corpus at exactly 100.0
    score = 100.0 * brevity_penalty * math.exp(sum(_log(p) for p in precisions) / NGRAM_ORDER)
    return BleuScore(
        score=score,
        ngram_precisions=tuple(precisions),
        brevity_penalty=brevity_penalty,
        hyp_len=hyp_len,
        ref_len=ref_len,
        counts=tuple(correct),
        totals=tuple(total),
    )


def corpus_bleu(pairs):
    """
    Corpus BLEU-4 over (hypothesis, reference) pairs

    Args:
        pairs: Non-empty sequence of EvalPair (or (hypothesis, reference) tuples)

    Returns:
        BleuScore
    """
    pairs = [p if isinstance(p, EvalPair) else EvalPair(*p) for p in pairs]
    if not pairs:
        raise ValidationError("corpus_bleu needs at least one pair")

    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for pair in pairs:
        hyp_tokens = tokenize_13a(pair.hypothesis.rstrip()).split()
        ref_tokens = tokenize_13a(pair.reference.rstrip()).split()
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)

        hyp_ngrams = extract_ngrams(hyp_tokens)
        ref_ngrams = extract_ngrams(ref_tokens)
        for ngram, count in hyp_ngrams.items():
            n = len(ngram)
            correct[n - 1] += min(count, ref_ngrams.get(ngram, 0))
            total[n - 1] += count

    return compute_bleu(correct, total, hyp_len, ref_len)
