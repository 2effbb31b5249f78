"""
Dimensional emotion scores: annotation, binarization and summary statistics

Scores come from an external speech emotion recognition model, either read
from a precomputed JSONL file or requested from an HTTP endpoint. They are
kept at full precision; binarization happens when prompts are built.
"""
import logging
import math
import os
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Mapping

import numpy as np
import requests

from emomt import config
from emomt.errors import CoverageError, RecordError, TransportError, ValidationError
from emomt.utils import chunked, read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

STATUS_WITH = "with"
STATUS_WITHOUT = "without"
POLARITY_POSITIVE = "positive"
POLARITY_NEGATIVE = "negative"


class EmotionDimension(str, Enum):
    AROUSAL = "arousal"
    DOMINANCE = "dominance"
    VALENCE = "valence"

    def __str__(self):
        return self.value


def parse_dimension(name):
    """Convert a dimension name (or None) into an EmotionDimension (or None)"""
    if name is None or isinstance(name, EmotionDimension):
        return name
    try:
        return EmotionDimension(str(name).lower())
    except ValueError:
        raise ValidationError(
            f"unknown emotion dimension {name!r}, expected one of {[d.value for d in EmotionDimension]}"
        ) from None


def _check_unit(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{what} must be a number, got {value!r}")
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ValidationError(f"{what} = {value} is outside [0, 1]")


@dataclass(frozen=True)
class EmotionScores:
    arousal: float
    dominance: float
    valence: float

    def __post_init__(self):
        for dimension in EmotionDimension:
            _check_unit(getattr(self, dimension.value), dimension.value)

    def value(self, dimension):
        return getattr(self, parse_dimension(dimension).value)

    def to_dict(self):
        return {d.value: getattr(self, d.value) for d in EmotionDimension}


@dataclass(frozen=True)
class EmotionTag:
    """A binarized label for one dimension of one utterance"""
    dimension: EmotionDimension
    status: str
    polarity: str

    def __post_init__(self):
        object.__setattr__(self, "dimension", parse_dimension(self.dimension))
        pairs = {(STATUS_WITH, POLARITY_POSITIVE), (STATUS_WITHOUT, POLARITY_NEGATIVE)}
        if (self.status, self.polarity) not in pairs:
            raise ValidationError(
                f"inconsistent tag: status {self.status!r} with polarity {self.polarity!r}"
            )


def binarize(scores, dimension, threshold=config.EMOTION_THRESHOLD):
    """
    Turn one score into a (dimension, status, polarity) tag

    A value equal to the threshold counts as high.

    Args:
        scores: EmotionScores of the utterance
        dimension: Dimension to binarize
        threshold: Cut-off in [0, 1]

    Returns:
        EmotionTag: (with, positive) when value >= threshold, else (without, negative)
    """
    _check_unit(threshold, "threshold")
    dimension = parse_dimension(dimension)
    if scores.value(dimension) >= threshold:
        return EmotionTag(dimension, STATUS_WITH, POLARITY_POSITIVE)
    return EmotionTag(dimension, STATUS_WITHOUT, POLARITY_NEGATIVE)


@dataclass(frozen=True)
class AnnotationSet:
    """Emotion scores keyed by utterance id, with the annotator that produced them"""
    scores: Mapping[str, EmotionScores]
    provenance: str

    def __post_init__(self):
        if not isinstance(self.scores, MappingProxyType):
            object.__setattr__(self, "scores", MappingProxyType(dict(self.scores)))

    def __len__(self):
        return len(self.scores)

    def __contains__(self, utterance_id):
        return utterance_id in self.scores

    def __getitem__(self, utterance_id):
        return self.scores[utterance_id]

    def missing(self, ids):
        """Ids from the given collection that have no scores"""
        return [i for i in ids if i not in self.scores]


def _scores_from_record(record, where):
    missing = [d.value for d in EmotionDimension if d.value not in record]
    if missing:
        raise RecordError(f"missing field(s): {', '.join(missing)}", line=where)
    utterance_id = str(record["id"])
    for dimension in EmotionDimension:
        try:
            _check_unit(record[dimension.value], dimension.value)
        except ValidationError as e:
            raise ValidationError(f"utterance {utterance_id!r}: {e}") from None
    return EmotionScores(*(float(record[d.value]) for d in EmotionDimension))


class EmotionAnnotator(ABC):
    """Source of emotion scores for utterances"""

    @property
    @abstractmethod
    def annotator_id(self):
        """Identifier recorded as provenance"""

    @abstractmethod
    def score(self, utterances):
        """
        Resolve scores for the given utterances

        Returns:
            dict: utterance id -> EmotionScores (may omit ids it cannot resolve)
        """


class FileAnnotator(EmotionAnnotator):
    """Reads precomputed scores from a JSONL file of {id, arousal, dominance, valence}"""

    def __init__(self, path):
        self.path = path
        self._cache = None

    @property
    def annotator_id(self):
        return f"file:{os.path.basename(self.path)}"

    def _load(self):
        if self._cache is None:
            scores = {}
            for line_number, record in read_jsonl(self.path):
                if "id" not in record:
                    raise RecordError("missing field: id", path=self.path, line=line_number)
                utterance_id = str(record["id"])
                if utterance_id in scores:
                    raise ValidationError(f"{self.path}:{line_number}: duplicate id {utterance_id!r}")
                try:
                    scores[utterance_id] = _scores_from_record(record, line_number)
                except RecordError as e:
                    raise RecordError(str(e), path=self.path, line=line_number) from e
            self._cache = scores
        return self._cache

    def score(self, utterances):
        available = self._load()
        return {u.id: available[u.id] for u in utterances if u.id in available}


class EndpointAnnotator(EmotionAnnotator):
    """
    Client for a remote SER service

    POSTs {"items": [{"id", "audio_ref"}, ...]} and expects
    {"scores": [{"id", "arousal", "dominance", "valence"}, ...]}.
    Batches are sent concurrently; results are merged by id.
    """

    def __init__(self, url, batch_size=None, max_workers=None, timeout=None, audio_root=None, session=None):
        self.url = url
        self.batch_size = batch_size or config.REQUEST_BATCH_SIZE
        self.max_workers = max_workers or config.MAX_WORKERS
        self.timeout = timeout or config.REQUEST_TIMEOUT
        self.audio_root = audio_root
        self.session = session or requests.Session()

    @property
    def annotator_id(self):
        return f"endpoint:{self.url}"

    def _audio_path(self, utterance):
        if utterance.audio_ref is None or self.audio_root is None:
            return utterance.audio_ref
        return os.path.join(self.audio_root, utterance.audio_ref)

    def _post_batch(self, batch):
        payload = {"items": [{"id": u.id, "audio_ref": self._audio_path(u)} for u in batch]}
        try:
            response = self.session.post(self.url, json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise TransportError(f"SER endpoint {self.url} unreachable: {e}") from e
        if response.status_code != 200:
            raise TransportError(f"SER endpoint {self.url} returned {response.status_code}: {response.text[:200]}")
        try:
            rows = response.json()["scores"]
        except (ValueError, KeyError, TypeError) as e:
            raise TransportError(f"SER endpoint {self.url} sent an unexpected body: {e}") from e
        result = {}
        for row in rows:
            if "id" not in row:
                raise ValidationError("SER endpoint returned a score without an id")
            result[str(row["id"])] = _scores_from_record(row, None)
        return result

    def score(self, utterances):
        batches = chunked(list(utterances), self.batch_size)
        logger.info(f"Requesting emotion scores for {len(utterances)} utterances in {len(batches)} batches")
        merged = {}
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            for partial in pool.map(self._post_batch, batches):
                merged.update(partial)
        return merged


def annotate(corpus, annotator):
    """
    Attach emotion scores to every utterance of a corpus

    Args:
        corpus: Corpus to annotate
        annotator: EmotionAnnotator implementation

    Returns:
        AnnotationSet: Scores for exactly the corpus ids

    Raises:
        CoverageError: the annotator could not resolve some ids
        ValidationError: a score falls outside [0, 1]
    """
    resolved = annotator.score(corpus.utterances)
    missing = [u.id for u in corpus.utterances if u.id not in resolved]
    if missing:
        raise CoverageError(missing, context=annotator.annotator_id)
    corpus_ids = set(corpus.ids)
    extra = [i for i in resolved if i not in corpus_ids]
    if extra:
        logger.warning(f"Ignoring {len(extra)} annotated id(s) not present in the corpus")
    scores = {u.id: resolved[u.id] for u in corpus.utterances}
    logger.info(f"Annotated {len(scores)} utterances using {annotator.annotator_id}")
    return AnnotationSet(scores=scores, provenance=annotator.annotator_id)


def save_annotations(annotations, path):
    """Write an AnnotationSet in the JSONL annotation format"""
    return write_jsonl(
        path,
        ({"id": utterance_id, **scores.to_dict()} for utterance_id, scores in annotations.scores.items()),
    )


def load_annotations(path, corpus=None):
    """
    Read an annotation file

    With a corpus, coverage is checked and the set is restricted to corpus ids.
    """
    annotator = FileAnnotator(path)
    if corpus is not None:
        return annotate(corpus, annotator)
    return AnnotationSet(scores=annotator._load(), provenance=annotator.annotator_id)


@dataclass(frozen=True)
class DimensionStats:
    minimum: float
    maximum: float
    median: float
    positive_fraction: float

    def to_dict(self):
        return {
            "min": self.minimum,
            "max": self.maximum,
            "median": self.median,
            "positive_fraction": self.positive_fraction,
        }


def annotation_stats(annotations, threshold=config.EMOTION_THRESHOLD):
    """
    Summarize each dimension of an AnnotationSet

    Args:
        annotations: Non-empty AnnotationSet
        threshold: Threshold used for the positive fraction

    Returns:
        dict: EmotionDimension -> DimensionStats
    """
    if len(annotations) == 0:
        raise ValidationError("cannot summarize an empty annotation set")
    summary = {}
    for dimension in EmotionDimension:
        values = np.array([s.value(dimension) for s in annotations.scores.values()], dtype=float)
        positives = sum(
            binarize(s, dimension, threshold).polarity == POLARITY_POSITIVE
            for s in annotations.scores.values()
        )
        summary[dimension] = DimensionStats(
            minimum=float(values.min()),
            maximum=float(values.max()),
            median=float(np.median(values)),
            positive_fraction=positives / len(values),
        )
    return summary
