"""
Desk-scale synthetic corpora

The "French" side is a letter-shift cipher of the English side, so a model
can learn the mapping in a few CPU epochs and the task stays reversible.
"""
import logging

import numpy as np

from emomt.corpus import Corpus, Split, Utterance
from emomt.emotion import AnnotationSet, EmotionScores

logger = logging.getLogger(__name__)

ALPHABET = "abcdefgh"


def cipher(text, shift=3, alphabet=ALPHABET):
    """Shift every alphabet letter by a fixed offset; other characters pass through"""
    table = str.maketrans(alphabet, alphabet[shift:] + alphabet[:shift])
    return text.translate(table)


def decipher(text, shift=3, alphabet=ALPHABET):
    return cipher(text, -shift % len(alphabet), alphabet)


def random_sentence(rng, alphabet=ALPHABET, max_words=4, max_word_len=4):
    words = []
    for _ in range(int(rng.integers(1, max_words + 1))):
        length = int(rng.integers(1, max_word_len + 1))
        words.append("".join(rng.choice(list(alphabet), size=length)))
    return " ".join(words)


def cipher_corpus(size=500, seed=0, dev_fraction=0.1, test_fraction=0.1, shift=3, identity=False):
    """
    Build a synthetic translation corpus

    Args:
        size: Number of utterances
        seed: RNG seed
        dev_fraction, test_fraction: Share of utterances in dev and test
        shift: Cipher offset
        identity: Use the source as target (copy task)

    Returns:
        Corpus
    """
    rng = np.random.default_rng(seed)
    n_dev = max(1, int(round(size * dev_fraction)))
    n_test = max(1, int(round(size * test_fraction)))
    n_train = size - n_dev - n_test
    if n_train < 1:
        raise ValueError(f"corpus of {size} leaves no training utterances")

    utterances = []
    for index in range(size):
        split = Split.TRAIN if index < n_train else Split.DEV if index < n_train + n_dev else Split.TEST
        src = random_sentence(rng)
        tgt = src if identity else cipher(src, shift)
        utterances.append(Utterance(
            id=f"syn{index:05d}",
            src_text=src,
            tgt_text=tgt,
            split=split,
            audio_ref=f"audio/syn{index:05d}.wav",
        ))
    logger.debug(f"Generated {size} synthetic utterances ({n_train}/{n_dev}/{n_test})")
    return Corpus.from_utterances(utterances)


def random_annotations(corpus, seed=0):
    """Uniform random emotion scores for every utterance, rounded to three decimals"""
    rng = np.random.default_rng(seed)
    scores = {
        u.id: EmotionScores(*(round(float(v), 3) for v in rng.random(3)))
        for u in corpus.utterances
    }
    return AnnotationSet(scores=scores, provenance=f"synthetic:seed{seed}")
