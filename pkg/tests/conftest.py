"""
Shared fixtures for the emomt test suite
"""
import hashlib
import os

import pytest

from emomt.corpus import Corpus, Utterance, write_manifest
from emomt.emotion import AnnotationSet, EmotionScores, save_annotations
from emomt.training import EpochRecord, FitResult, TranslationBackend

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", default=False, help="run tests that train the toy backend")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class EchoBackend(TranslationBackend):
    """
    Backend that "translates" by copying the source sentence out of the prompt

    Training only records a fake loss curve. Good enough to drive the
    orchestration code on an identity corpus without torch.
    """

    backend_id = "toy"

    def __init__(self, work_dir=".", **options):
        self.work_dir = work_dir
        self.options = options
        self.fit_calls = []

    def initial_checksum(self, seed):
        return hashlib.sha256(f"echo-{seed}".encode()).hexdigest()

    def initial_checkpoint(self, seed):
        return os.path.join(self.work_dir, f"echo-init-{seed}.ckpt")

    def fit(self, train_set, dev_set, training_config):
        self.fit_calls.append((len(train_set), len(dev_set), training_config))
        history = [
            EpochRecord(epoch=e, train_loss=1.0 / e, dev_loss=abs(e - 2) + 0.5)
            for e in range(1, training_config.max_epochs + 1)
        ]
        checkpoint = os.path.join(self.work_dir, f"echo-{len(self.fit_calls)}-{id(self)}.ckpt")
        best = min(history, key=lambda r: (r.dev_loss, r.epoch))
        return FitResult(
            checkpoint_ref=checkpoint,
            history=history,
            best_epoch=best.epoch,
            init_checksum=self.initial_checksum(training_config.seed),
        )

    def generate(self, checkpoint_ref, prompt_texts):
        outputs = []
        for prompt in prompt_texts:
            if prompt.startswith("[INST]"):
                source = prompt[len("[INST] Translate from English to French: "):-len(" [/INST]\n")]
                outputs.append(f"{source}\nextra")
                continue
            first_line = prompt.split("\n", 1)[0]
            source = first_line.split(": ", 1)[1]
            if source.startswith("["):
                source = source.split("] ", 1)[1]
            outputs.append(f" {source}\nEnglish: next")
        return outputs


def _utterances():
    rows = [
        ("u1", "Hello world.", "Bonjour le monde.", "train"),
        ("u2", "I am happy!", "Je suis heureux !", "train"),
        ("u3", "Where is the station?", "Où est la gare ?", "train"),
        ("u4", "It is raining.", "Il pleut.", "train"),
        ("u5", "See you tomorrow.", "À demain.", "dev"),
        ("u6", "Thank you very much.", "Merci beaucoup.", "dev"),
        ("u7", "Good night.", "Bonne nuit.", "test"),
        ("u8", "The cat sleeps.", "Le chat dort.", "test"),
    ]
    return [
        Utterance(id=i, src_text=s, tgt_text=t, split=sp, audio_ref=f"clips/{i}.wav")
        for i, s, t, sp in rows
    ]


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def small_corpus():
    return Corpus.from_utterances(_utterances())


@pytest.fixture
def identity_corpus():
    """Target equals source, so an echoing model is perfect"""
    return Corpus.from_utterances([
        Utterance(id=u.id, src_text=u.src_text, tgt_text=u.src_text, split=u.split)
        for u in _utterances()
    ])


@pytest.fixture
def small_annotations(small_corpus):
    values = [0.9, 0.1, 0.5, 0.49, 0.7, 0.2, 0.55, 0.3]
    scores = {
        u.id: EmotionScores(arousal=v, dominance=1.0 - v, valence=0.5)
        for u, v in zip(small_corpus.utterances, values)
    }
    return AnnotationSet(scores=scores, provenance="test")


@pytest.fixture
def manifest_path(tmp_path, small_corpus):
    path = str(tmp_path / "manifest.jsonl")
    write_manifest(small_corpus, path)
    return path


@pytest.fixture
def identity_manifest(tmp_path, identity_corpus):
    path = str(tmp_path / "identity.jsonl")
    write_manifest(identity_corpus, path)
    return path


@pytest.fixture
def annotations_path(tmp_path, small_annotations):
    path = str(tmp_path / "annotations.jsonl")
    save_annotations(small_annotations, path)
    return path


@pytest.fixture
def echo_backend(tmp_path):
    return EchoBackend(work_dir=str(tmp_path))


class FakeResponse:
    def __init__(self, status_code=200, body=None, text=""):
        self.status_code = status_code
        self._body = body
        self.text = text

    def json(self):
        if self._body is None:
            raise ValueError("no JSON body")
        return self._body


class FakeSession:
    """Stands in for requests.Session; answers every POST through a handler"""

    def __init__(self, handler):
        self.handler = handler
        self.calls = []

    def post(self, url, json=None, timeout=None):
        self.calls.append((url, json))
        return self.handler(url, json)


@pytest.fixture
def fake_session():
    return FakeSession
