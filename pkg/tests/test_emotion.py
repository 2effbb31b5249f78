import json
import os
import random

import pytest
import requests

from emomt.corpus import Corpus, Utterance, load_corpus
from emomt.emotion import (POLARITY_NEGATIVE, POLARITY_POSITIVE, STATUS_WITH, STATUS_WITHOUT,
                           EmotionDimension, EmotionScores, EmotionTag, EndpointAnnotator,
                           FileAnnotator, annotate, annotation_stats, binarize, load_annotations,
                           save_annotations)
from emomt.errors import CoverageError, RecordError, TransportError, ValidationError
from tests.conftest import FakeResponse


def _scores(value):
    return EmotionScores(arousal=value, dominance=value, valence=value)


class TestBinarize:
    @pytest.mark.parametrize("value,expected", [
        (0.7, (STATUS_WITH, POLARITY_POSITIVE)),
        (0.5, (STATUS_WITH, POLARITY_POSITIVE)),
        (0.49, (STATUS_WITHOUT, POLARITY_NEGATIVE)),
        (0.0, (STATUS_WITHOUT, POLARITY_NEGATIVE)),
        (1.0, (STATUS_WITH, POLARITY_POSITIVE)),
    ])
    def test_threshold_half(self, value, expected):
        tag = binarize(_scores(value), EmotionDimension.AROUSAL, 0.5)
        assert (tag.status, tag.polarity) == expected
        assert tag.dimension is EmotionDimension.AROUSAL

    def test_threshold_zero_always_positive(self):
        assert binarize(_scores(0.0), "valence", 0.0).polarity == POLARITY_POSITIVE

    def test_threshold_one_only_at_one(self):
        assert binarize(_scores(0.999), "dominance", 1.0).polarity == POLARITY_NEGATIVE
        assert binarize(_scores(1.0), "dominance", 1.0).polarity == POLARITY_POSITIVE

    def test_threshold_out_of_range(self):
        with pytest.raises(ValidationError):
            binarize(_scores(0.3), "arousal", 1.5)

    def test_property_suite(self):
        rng = random.Random(1234)
        edges = [0.0, 0.5, 1.0]
        for _ in range(10000):
            value = rng.choice(edges) if rng.random() < 0.1 else rng.random()
            threshold = rng.choice(edges + [value]) if rng.random() < 0.1 else rng.random()
            dimension = rng.choice(list(EmotionDimension))
            tag = binarize(_scores(value), dimension, threshold)
            # status and polarity are coupled
            assert (tag.status == STATUS_WITH) == (tag.polarity == POLARITY_POSITIVE)
            # tie rule: value == threshold is positive
            assert (tag.polarity == POLARITY_POSITIVE) == (value >= threshold)
            # monotone in the value
            higher = min(1.0, value + rng.random() * (1.0 - value))
            if tag.polarity == POLARITY_POSITIVE:
                assert binarize(_scores(higher), dimension, threshold).polarity == POLARITY_POSITIVE


class TestEmotionTypes:
    def test_scores_reject_out_of_range(self):
        with pytest.raises(ValidationError):
            EmotionScores(arousal=1.2, dominance=0.1, valence=0.1)

    def test_scores_reject_nan(self):
        with pytest.raises(ValidationError):
            EmotionScores(arousal=float("nan"), dominance=0.1, valence=0.1)

    def test_tag_coupling(self):
        with pytest.raises(ValidationError):
            EmotionTag(EmotionDimension.VALENCE, STATUS_WITH, POLARITY_NEGATIVE)

    def test_unknown_dimension(self):
        with pytest.raises(ValidationError):
            binarize(_scores(0.5), "happiness")


class TestFileAnnotation:
    def test_full_coverage(self, small_corpus, annotations_path):
        annotations = annotate(small_corpus, FileAnnotator(annotations_path))
        assert len(annotations) == len(small_corpus)
        assert annotations["u1"].arousal == pytest.approx(0.9)
        assert annotations.provenance == "file:annotations.jsonl"

    def test_missing_ids_listed(self, tmp_path, small_corpus):
        path = tmp_path / "partial.jsonl"
        with open(path, "w") as handle:
            for utterance in small_corpus.utterances[:6]:
                handle.write(json.dumps({"id": utterance.id, "arousal": 0.5, "dominance": 0.5, "valence": 0.5}) + "\n")
        with pytest.raises(CoverageError) as excinfo:
            annotate(small_corpus, FileAnnotator(str(path)))
        assert excinfo.value.missing_ids == ["u7", "u8"]
        assert "u7" in str(excinfo.value)

    def test_out_of_range_names_utterance(self, tmp_path, small_corpus):
        path = tmp_path / "bad.jsonl"
        with open(path, "w") as handle:
            for utterance in small_corpus.utterances:
                value = 1.2 if utterance.id == "u3" else 0.5
                handle.write(json.dumps({"id": utterance.id, "arousal": value, "dominance": 0.5, "valence": 0.5}) + "\n")
        with pytest.raises(ValidationError, match="u3"):
            annotate(small_corpus, FileAnnotator(str(path)))

    def test_missing_dimension_field(self, tmp_path, small_corpus):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"id": "u1", "arousal": 0.5, "dominance": 0.5}) + "\n")
        with pytest.raises(RecordError):
            annotate(small_corpus, FileAnnotator(str(path)))

    def test_extra_ids_are_dropped(self, tmp_path, small_corpus, small_annotations):
        path = str(tmp_path / "a.jsonl")
        save_annotations(small_annotations, path)
        with open(path, "a") as handle:
            handle.write(json.dumps({"id": "stranger", "arousal": 0.1, "dominance": 0.1, "valence": 0.1}) + "\n")
        annotations = annotate(small_corpus, FileAnnotator(path))
        assert "stranger" not in annotations

    def test_save_load_keeps_full_precision(self, tmp_path, small_corpus):
        scores = {u.id: EmotionScores(0.123456789, 0.5, 0.987654321) for u in small_corpus}
        from emomt.emotion import AnnotationSet
        path = str(tmp_path / "a.jsonl")
        save_annotations(AnnotationSet(scores, "test"), path)
        loaded = load_annotations(path, small_corpus)
        assert loaded["u1"].arousal == 0.123456789
        assert loaded["u8"].valence == 0.987654321


class TestEndpointAnnotation:
    def _corpus(self, size):
        return Corpus.from_utterances([
            Utterance(f"e{i}", f"src {i}", f"tgt {i}", "train", audio_ref=f"{i}.wav") for i in range(size)
        ])

    def test_batches_are_merged(self, fake_session):
        def handler(url, payload):
            return FakeResponse(body={"scores": [
                {"id": item["id"], "arousal": 0.25, "dominance": 0.5, "valence": 0.75}
                for item in payload["items"]
            ]})
        session = fake_session(handler)
        corpus = self._corpus(10)
        annotator = EndpointAnnotator("http://ser.local/predict", batch_size=3, max_workers=2,
                                      audio_root="/data", session=session)
        annotations = annotate(corpus, annotator)
        assert len(annotations) == 10
        assert len(session.calls) == 4
        assert session.calls[0][1]["items"][0]["audio_ref"] == "/data/0.wav"
        assert annotations.provenance == "endpoint:http://ser.local/predict"

    def test_unreachable_endpoint(self, fake_session):
        def handler(url, payload):
            raise requests.ConnectionError("connection refused")
        annotator = EndpointAnnotator("http://ser.local/predict", session=fake_session(handler))
        with pytest.raises(TransportError):
            annotate(self._corpus(2), annotator)

    def test_error_status(self, fake_session):
        annotator = EndpointAnnotator(
            "http://ser.local/predict", session=fake_session(lambda u, p: FakeResponse(503, text="busy"))
        )
        with pytest.raises(TransportError, match="503"):
            annotate(self._corpus(2), annotator)

    def test_partial_answer_is_a_coverage_error(self, fake_session):
        def handler(url, payload):
            first = payload["items"][0]
            return FakeResponse(body={"scores": [{"id": first["id"], "arousal": 0.1, "dominance": 0.1, "valence": 0.1}]})
        annotator = EndpointAnnotator("http://ser.local/predict", batch_size=10, session=fake_session(handler))
        with pytest.raises(CoverageError):
            annotate(self._corpus(3), annotator)


class TestAnnotationStats:
    def test_summary(self, small_annotations):
        stats = annotation_stats(small_annotations, 0.5)
        arousal = stats[EmotionDimension.AROUSAL]
        assert arousal.minimum == pytest.approx(0.1)
        assert arousal.maximum == pytest.approx(0.9)
        # 0.9, 0.5, 0.7, 0.55 are at or above the threshold
        assert arousal.positive_fraction == pytest.approx(4 / 8)
        assert stats[EmotionDimension.VALENCE].positive_fraction == 1.0
        assert set(arousal.to_dict()) == {"min", "max", "median", "positive_fraction"}

    def test_empty_set(self):
        from emomt.emotion import AnnotationSet
        with pytest.raises(ValidationError):
            annotation_stats(AnnotationSet({}, "empty"))


@pytest.mark.skipif(
    not (os.environ.get("EMOMT_SER_ENDPOINT") and os.environ.get("EMOMT_SER_MANIFEST")),
    reason="no SER endpoint and speech manifest configured",
)
class TestRealAnnotator:
    def test_medians_near_middle(self):
        corpus = load_corpus(os.environ["EMOMT_SER_MANIFEST"])
        annotator = EndpointAnnotator(os.environ["EMOMT_SER_ENDPOINT"], audio_root=os.environ.get("EMOMT_AUDIO_ROOT"))
        stats = annotation_stats(annotate(corpus, annotator))
        assert set(stats) == set(EmotionDimension)
        for dimension, summary in stats.items():
            assert 0.4 <= summary.median <= 0.6, dimension
