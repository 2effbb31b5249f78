"""
Parallel corpus loading, validation and splitting

A manifest is a JSON Lines file, one utterance per line, with the keys
id, src_text, tgt_text, split and an optional audio_ref.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Optional, Tuple

from emomt.errors import RecordError, ValidationError
from emomt.utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "src_text", "tgt_text", "split")


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"

    def __str__(self):
        return self.value


def parse_split(label):
    """
    Convert a split label into a Split

    Raises:
        ValidationError: if the label is not train, dev or test
    """
    try:
        return Split(label)
    except ValueError:
        raise ValidationError(
            f"unknown split label {label!r}, expected one of {[s.value for s in Split]}"
        ) from None


@dataclass(frozen=True)
class Utterance:
    """One corpus triplet: audio reference, English source, French target"""
    id: str
    src_text: str
    tgt_text: str
    split: Split
    audio_ref: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("utterance id must be a non-empty string")
        for name in ("src_text", "tgt_text"):
            text = getattr(self, name)
            if not isinstance(text, str) or not text.strip():
                raise ValidationError(f"{self.id}: {name} must be a non-empty string")
            if "\n" in text or "\r" in text:
                raise ValidationError(f"{self.id}: {name} contains a newline")
        if not isinstance(self.split, Split):
            object.__setattr__(self, "split", parse_split(self.split))
        if self.audio_ref is not None and not isinstance(self.audio_ref, str):
            raise ValidationError(f"{self.id}: audio_ref must be a string or null")

    def to_dict(self):
        return {
            "id": self.id,
            "audio_ref": self.audio_ref,
            "src_text": self.src_text,
            "tgt_text": self.tgt_text,
            "split": self.split.value,
        }


@dataclass(frozen=True)
class Corpus:
    """Ordered, validated collection of utterances"""
    utterances: Tuple[Utterance, ...]
    split_counts: Mapping[str, int]

    @classmethod
    def from_utterances(cls, utterances):
        """
        Build a Corpus, checking id uniqueness

        Args:
            utterances: Iterable of Utterance

        Returns:
            Corpus: Validated corpus with per-split counts
        """
        utterances = tuple(utterances)
        seen = set()
        for utterance in utterances:
            if utterance.id in seen:
                raise ValidationError(f"duplicate utterance id {utterance.id!r}")
            seen.add(utterance.id)
        return cls(utterances=utterances, split_counts=_count_splits(utterances))

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def ids(self):
        return [u.id for u in self.utterances]


def _count_splits(utterances):
    counts = {split.value: 0 for split in Split}
    for utterance in utterances:
        counts[utterance.split.value] += 1
    return MappingProxyType(counts)


def _utterance_from_record(record, path, line_number):
    missing = [field for field in REQUIRED_FIELDS if field not in record or record[field] is None]
    if missing:
        raise RecordError(f"missing required field(s): {', '.join(missing)}", path=path, line=line_number)
    for field in ("src_text", "tgt_text"):
        value = record[field]
        if not isinstance(value, str) or not value.strip():
            raise RecordError(f"{field} must be a non-empty string", path=path, line=line_number)
        if "\n" in value or "\r" in value:
            raise RecordError(f"{field} contains a newline (newlines delimit templates)", path=path, line=line_number)
    split = parse_split(record["split"])
    try:
        return Utterance(
            id=str(record["id"]),
            src_text=record["src_text"],
            tgt_text=record["tgt_text"],
            split=split,
            audio_ref=record.get("audio_ref"),
        )
    except ValidationError as e:
        raise RecordError(str(e), path=path, line=line_number) from e


def load_corpus(manifest_path):
    """
    Load and validate a JSONL manifest

    Args:
        manifest_path: Path to the manifest file

    Returns:
        Corpus: Utterances in file order

    Raises:
        RecordError: malformed record or missing required field (with line number)
        ValidationError: duplicate id or unknown split label
    """
    utterances = []
    first_line = {}
    for line_number, record in read_jsonl(manifest_path):
        try:
            utterance = _utterance_from_record(record, manifest_path, line_number)
        except ValidationError as e:
            raise ValidationError(f"{manifest_path}:{line_number}: {e}") from e
        if utterance.id in first_line:
            raise ValidationError(
                f"duplicate utterance id {utterance.id!r} on lines "
                f"{first_line[utterance.id]} and {line_number}"
            )
        first_line[utterance.id] = line_number
        utterances.append(utterance)

    corpus = Corpus.from_utterances(utterances)
    logger.info(
        f"Loaded {len(corpus)} utterances from {manifest_path} "
        f"(train={corpus.split_counts['train']}, dev={corpus.split_counts['dev']}, "
        f"test={corpus.split_counts['test']})"
    )
    return corpus


def write_manifest(corpus, path):
    """
    Serialize a corpus back to manifest format

    Args:
        corpus: Corpus to write
        path: Destination path

    Returns:
        int: Number of records written
    """
    return write_jsonl(path, (u.to_dict() for u in corpus.utterances))


def select_split(corpus, split):
    """
    Return the utterances of one split in corpus order

    Args:
        corpus: Corpus to select from
        split: Split or split label

    Returns:
        list: Matching utterances (possibly empty)
    """
    split = split if isinstance(split, Split) else parse_split(split)
    return [u for u in corpus.utterances if u.split is split]
