import json
import os

import pytest

from emomt.comet_client import CometClient, StubCometClient
from emomt.errors import CoverageError, UsageError, ValidationError
from emomt.evaluation import CometScore, EvalPair, comet_score, evaluate_run, scores_to_dict
from emomt.prompting import EMOTION_MARKUP, build_training_set
from emomt.training import TrainingConfig, train


class FixedClient(CometClient):
    scorer_id = "fixed"

    def __init__(self, values):
        self.values = values

    def predict(self, data):
        return self.values[:len(data)]


def _trained(backend, corpus, kind="base_plain", dimension=None, annotations=None):
    train_set = build_training_set(corpus, "train", kind, dimension, annotations)
    dev_set = build_training_set(corpus, "dev", kind, dimension, annotations)
    return train(backend, train_set, dev_set, TrainingConfig(max_epochs=3))


class TestCometScore:
    def test_stub_is_deterministic(self):
        sources = ["Hello.", "Good night."]
        pairs = [EvalPair("Bonjour.", "Bonjour."), EvalPair("Bonne nuit", "Bonne nuit.")]
        first = comet_score(sources, pairs, StubCometClient())
        second = comet_score(sources, pairs, StubCometClient())
        assert first == second
        assert 0.0 <= first.score <= 100.0
        assert first.scorer_id == "stub-sha256"

    def test_mean_scaled_to_100(self):
        result = comet_score(["a", "b"], [("x", "y"), ("z", "w")], FixedClient([0.5, 0.7]))
        assert result.score == pytest.approx(60.0)

    def test_order_independent(self):
        client = StubCometClient()
        sources = ["one", "two", "three"]
        pairs = [("un", "un"), ("deux", "deux"), ("trois", "troi")]
        forward = comet_score(sources, pairs, client).score
        backward = comet_score(sources[::-1], pairs[::-1], client).score
        assert forward == pytest.approx(backward, abs=1e-12)

    def test_misaligned_lengths(self):
        with pytest.raises(UsageError):
            comet_score(["a", "b", "c"], [("x", "y"), ("z", "w")], StubCometClient())

    def test_empty_input(self):
        with pytest.raises(UsageError):
            comet_score([], [], StubCometClient())

    def test_score_out_of_range(self):
        with pytest.raises(ValidationError):
            CometScore(101.0, "x")


class TestEvaluateRun:
    def test_identity_model_scores_100(self, echo_backend, identity_corpus):
        handle = _trained(echo_backend, identity_corpus)
        result = evaluate_run(handle, identity_corpus, "dev", comet_client=StubCometClient(), backend=echo_backend)
        assert result["bleu"].score == 100.0
        assert result["comet"] is not None
        assert result["n_pairs"] == 2
        assert result["template"] == "base_plain"
        assert result["dimension"] is None

    def test_artifacts_are_written(self, tmp_path, echo_backend, identity_corpus):
        handle = _trained(echo_backend, identity_corpus)
        run_dir = str(tmp_path / "run")
        evaluate_run(handle, identity_corpus, "test", comet_client=StubCometClient(),
                     backend=echo_backend, run_dir=run_dir)
        with open(os.path.join(run_dir, "scores.test.json")) as handle_file:
            scores = json.load(handle_file)
        assert set(scores) == {"bleu", "comet", "n_pairs", "template", "dimension"}
        assert scores["bleu"]["score"] == 100.0
        with open(os.path.join(run_dir, "hypotheses.test.jsonl"), encoding="utf-8") as hyp_file:
            rows = [json.loads(line) for line in hyp_file]
        assert [r["id"] for r in rows] == ["u7", "u8"]
        # baseline prompts carry no emotion markup
        assert not any(EMOTION_MARKUP.search(r["prompt_text"]) for r in rows)

    def test_emotion_template(self, echo_backend, small_corpus, small_annotations):
        handle = _trained(echo_backend, small_corpus, "emotion_token", "arousal", small_annotations)
        result = evaluate_run(handle, small_corpus, "test", annotations=small_annotations,
                              comet_client=StubCometClient(), backend=echo_backend)
        assert result["template"] == "emotion_token"
        assert result["dimension"] == "arousal"
        # the echo model copies English, so French references are barely matched
        assert result["bleu"].score < 50.0

    def test_emotion_template_needs_annotations(self, echo_backend, small_corpus, small_annotations):
        handle = _trained(echo_backend, small_corpus, "emotion_source", "valence", small_annotations)
        partial = type(small_annotations)(
            {k: v for k, v in small_annotations.scores.items() if k != "u8"}, "partial"
        )
        with pytest.raises(CoverageError):
            evaluate_run(handle, small_corpus, "test", annotations=partial, backend=echo_backend)

    def test_template_mismatch(self, echo_backend, identity_corpus):
        handle = _trained(echo_backend, identity_corpus, "base_plain")
        with pytest.raises(UsageError):
            evaluate_run(handle, identity_corpus, "dev", kind="base_instruct", backend=echo_backend)

    def test_without_comet_client(self, echo_backend, identity_corpus):
        handle = _trained(echo_backend, identity_corpus)
        result = evaluate_run(handle, identity_corpus, "dev", backend=echo_backend)
        assert result["comet"] is None
        assert scores_to_dict(result)["comet"] is None
