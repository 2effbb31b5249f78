"""
Prompt templates for English-to-French fine-tuning

Every template renders to a prompt (what the model conditions on) and a
completion (what it must produce). The leading space of a completion belongs
to the completion so that the prompt is a stable inference prefix.
"""
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from emomt import config
from emomt.corpus import select_split
from emomt.emotion import EmotionDimension, EmotionTag, binarize, parse_dimension
from emomt.errors import CoverageError, LeakageError, UsageError, ValidationError

logger = logging.getLogger(__name__)


class TemplateKind(str, Enum):
    BASE_PLAIN = "base_plain"
    BASE_INSTRUCT = "base_instruct"
    EMOTION_SOURCE = "emotion_source"
    EMOTION_TARGET = "emotion_target"
    EMOTION_TOKEN = "emotion_token"

    def __str__(self):
        return self.value

    @property
    def uses_emotion(self):
        return self.value.startswith("emotion_")


EMOTION_KINDS = tuple(k for k in TemplateKind if k.uses_emotion)
BASE_KINDS = tuple(k for k in TemplateKind if not k.uses_emotion)

_DIMENSION_WORDS = "|".join(d.value for d in EmotionDimension)
EMOTION_MARKUP = re.compile(
    rf"\b(?:with|without) (?:{_DIMENSION_WORDS})\b|\[(?:{_DIMENSION_WORDS}) (?:positive|negative)\]"
)


def parse_template(name):
    if isinstance(name, TemplateKind):
        return name
    try:
        return TemplateKind(name)
    except ValueError:
        raise ValidationError(
            f"unknown template {name!r}, expected one of {[k.value for k in TemplateKind]}"
        ) from None


@dataclass(frozen=True)
class PromptExample:
    utterance_id: str
    prompt_text: str
    completion_text: str
    template: TemplateKind
    dimension: Optional[EmotionDimension] = None

    @property
    def is_inference(self):
        return self.completion_text == ""

    @property
    def full_text(self):
        return self.prompt_text + self.completion_text

    @property
    def reference(self):
        """Target sentence recovered from the completion"""
        return self.completion_text.strip()

    def to_dict(self):
        return {
            "utterance_id": self.utterance_id,
            "prompt_text": self.prompt_text,
            "completion_text": self.completion_text,
            "template": self.template.value,
            "dimension": self.dimension.value if self.dimension else None,
        }

    @classmethod
    def from_dict(cls, record):
        return cls(
            utterance_id=str(record["utterance_id"]),
            prompt_text=record["prompt_text"],
            completion_text=record.get("completion_text", ""),
            template=parse_template(record["template"]),
            dimension=parse_dimension(record.get("dimension")),
        )


def render(kind, src, tgt=None, tag=None, utterance_id=""):
    """
    Render one template

    Args:
        kind: TemplateKind
        src: English source sentence
        tgt: French target sentence, or None for an inference prompt
        tag: EmotionTag, required by emotion_* kinds and forbidden otherwise
        utterance_id: Id carried on the example

    Returns:
        PromptExample: prompt and completion (empty in inference mode)
    """
    kind = parse_template(kind)
    if kind.uses_emotion and tag is None:
        raise UsageError(f"template {kind} needs an emotion tag")
    if not kind.uses_emotion and tag is not None:
        raise UsageError(f"template {kind} does not take an emotion tag")
    for name, text in (("src", src), ("tgt", tgt)):
        if text is not None and ("\n" in text or "\r" in text):
            raise UsageError(f"{name} text must not contain a newline")

    if kind is TemplateKind.BASE_PLAIN:
        prompt = f"English: {src}\nFrench:"
    elif kind is TemplateKind.BASE_INSTRUCT:
        prompt = f"[INST] Translate from English to French: {src} [/INST]\n"
    elif kind is TemplateKind.EMOTION_SOURCE:
        prompt = f"English {tag.status} {tag.dimension.value}: {src}\nFrench:"
    elif kind is TemplateKind.EMOTION_TARGET:
        prompt = f"English: {src}\nFrench {tag.status} {tag.dimension.value}:"
    else:
        prompt = f"English: [{tag.dimension.value} {tag.polarity}] {src}\nFrench:"

    if tgt is None:
        completion = ""
    elif kind is TemplateKind.BASE_INSTRUCT:
        completion = tgt
    else:
        completion = f" {tgt}"

    return PromptExample(
        utterance_id=utterance_id,
        prompt_text=prompt,
        completion_text=completion,
        template=kind,
        dimension=tag.dimension if tag else None,
    )


def build_training_set(corpus, split, kind, dimension=None, annotations=None,
                       threshold=config.EMOTION_THRESHOLD, inference=False):
    """
    Render every utterance of a split with one template

    Args:
        corpus: Corpus
        split: Split label
        kind: TemplateKind
        dimension: EmotionDimension for emotion_* kinds
        annotations: AnnotationSet covering the split for emotion_* kinds
        threshold: Binarization threshold
        inference: Render prompts without completions

    Returns:
        list: PromptExample per utterance, in corpus order
    """
    kind = parse_template(kind)
    dimension = parse_dimension(dimension)
    utterances = select_split(corpus, split)

    if kind.uses_emotion:
        if dimension is None or annotations is None:
            raise UsageError(f"template {kind} needs a dimension and annotations")
        missing = annotations.missing(u.id for u in utterances)
        if missing:
            raise CoverageError(missing, context=f"annotations for split {split}")
    elif dimension is not None:
        raise UsageError(f"template {kind} does not take a dimension")

    examples = []
    for utterance in utterances:
        tag = binarize(annotations[utterance.id], dimension, threshold) if kind.uses_emotion else None
        examples.append(render(
            kind,
            utterance.src_text,
            None if inference else utterance.tgt_text,
            tag,
            utterance_id=utterance.id,
        ))

    if not kind.uses_emotion:
        assert_no_emotion_markup(examples)
    logger.debug(f"Rendered {len(examples)} {split} examples with template {kind}")
    return examples


def assert_no_emotion_markup(examples):
    """
    Check that no example carries emotion labels

    Raises:
        LeakageError: naming the first offending utterance
    """
    for example in examples:
        match = EMOTION_MARKUP.search(example.full_text)
        if match:
            raise LeakageError(
                f"utterance {example.utterance_id!r} contains emotion markup {match.group(0)!r}"
            )


def parse_hypothesis(kind, generated_text):
    """
    Cut a raw generation down to the translation

    Everything from the first newline on is dropped, then surrounding
    whitespace is stripped. The same rule applies to every template.
    """
    parse_template(kind)
    return generated_text.split("\n", 1)[0].strip()
