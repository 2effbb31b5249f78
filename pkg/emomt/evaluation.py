"""
Scoring of hypothesis sets with corpus BLEU and COMET
"""
import logging
import math
import os
from dataclasses import dataclass

from emomt import config
from emomt.bleu import BleuScore, EvalPair, corpus_bleu, tokenize_13a
from emomt.corpus import select_split
from emomt.emotion import parse_dimension
from emomt.errors import UsageError, ValidationError
from emomt.prompting import assert_no_emotion_markup, build_training_set, parse_template
from emomt.training import translate
from emomt.utils import write_json, write_jsonl

logger = logging.getLogger(__name__)

__all__ = [
    "BleuScore", "CometScore", "EvalPair",
    "comet_score", "corpus_bleu", "evaluate_run", "tokenize_13a",
]


@dataclass(frozen=True)
class CometScore:
    score: float
    scorer_id: str

    def __post_init__(self):
        if math.isnan(self.score) or not 0.0 <= self.score <= 100.0:
            raise ValidationError(f"COMET score {self.score} outside [0, 100]")

    def format(self, width=1):
        return f"COMET = {self.score:.{width}f} ({self.scorer_id})"

    def to_dict(self):
        return {"score": self.score, "scorer_id": self.scorer_id}


def comet_score(sources, pairs, client):
    """
    Corpus-level COMET on the 0-100 scale

    Args:
        sources: Source sentences, aligned with pairs
        pairs: EvalPairs (or (hypothesis, reference) tuples)
        client: CometClient

    Returns:
        CometScore: Mean segment score times 100
    """
    sources = list(sources)
    pairs = [p if isinstance(p, EvalPair) else EvalPair(*p) for p in pairs]
    if len(sources) != len(pairs):
        raise UsageError(f"{len(sources)} sources but {len(pairs)} hypothesis/reference pairs")
    if not pairs:
        raise UsageError("comet_score needs at least one segment")

    data = [{"src": s, "mt": p.hypothesis, "ref": p.reference} for s, p in zip(sources, pairs)]
    segment_scores = client.predict(data)
    if len(segment_scores) != len(data):
        raise UsageError(f"scorer returned {len(segment_scores)} scores for {len(data)} segments")
    # fsum keeps the mean independent of segment order
    mean = math.fsum(segment_scores) / len(segment_scores)
    # some COMET models drift slightly outside [0, 1]
    score = min(max(100.0 * mean, 0.0), 100.0)
    return CometScore(score=score, scorer_id=client.scorer_id)


def evaluate_run(model, corpus, split, kind=None, dimension=None, annotations=None,
                 comet_client=None, backend=None, threshold=config.EMOTION_THRESHOLD, run_dir=None):
    """
    Translate one split with a trained model and score it

    Args:
        model: ModelHandle
        corpus: Corpus
        split: Split label to evaluate on
        kind: TemplateKind, defaults to the one the model was trained on
        dimension: EmotionDimension for emotion templates, defaults to the model's
        annotations: AnnotationSet, needed by emotion templates
        comet_client: CometClient; COMET is skipped when None
        backend: TranslationBackend able to load the model's checkpoint
        threshold: Binarization threshold
        run_dir: When set, hypotheses.<split>.jsonl and scores.<split>.json are written there

    Returns:
        dict: {"bleu", "comet", "n_pairs", "template", "dimension"}
    """
    kind = parse_template(kind) if kind is not None else model.template
    dimension = parse_dimension(dimension) if dimension is not None else model.dimension

    prompts = build_training_set(
        corpus, split, kind, dimension=dimension, annotations=annotations,
        threshold=threshold, inference=True,
    )
    if not kind.uses_emotion:
        assert_no_emotion_markup(prompts)
    utterances = select_split(corpus, split)
    if not utterances:
        raise UsageError(f"split {split} is empty")

    hypotheses = translate(model, prompts, backend=backend)
    pairs = [EvalPair(h, u.tgt_text) for h, u in zip(hypotheses, utterances)]
    bleu = corpus_bleu(pairs)
    comet = None
    if comet_client is not None:
        comet = comet_score([u.src_text for u in utterances], pairs, comet_client)
    logger.info(f"{split}: {bleu}" + (f", {comet.format()}" if comet else ""))

    result = {
        "bleu": bleu,
        "comet": comet,
        "n_pairs": len(pairs),
        "template": kind.value,
        "dimension": dimension.value if dimension else None,
    }
    if run_dir is not None:
        write_jsonl(
            os.path.join(run_dir, f"hypotheses.{split}.jsonl"),
            (
                {"id": u.id, "prompt_text": p.prompt_text, "hypothesis": h, "reference": u.tgt_text}
                for u, p, h in zip(utterances, prompts, hypotheses)
            ),
        )
        write_json(os.path.join(run_dir, f"scores.{split}.json"), scores_to_dict(result))
    return result


def scores_to_dict(result):
    """JSON form of an evaluate_run result (the scores.json schema)"""
    return {
        "bleu": result["bleu"].to_dict(),
        "comet": result["comet"].to_dict() if result["comet"] else None,
        "n_pairs": result["n_pairs"],
        "template": result["template"],
        "dimension": result["dimension"],
    }
