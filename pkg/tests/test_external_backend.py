import shlex
import sys
import textwrap

import pytest

from emomt.backends import backend_for_handle, make_backend
from emomt.errors import BackendError, UsageError
from emomt.prompting import build_training_set
from emomt.training import TrainingConfig, train, translate

FAKE_TRAINER = textwrap.dedent('''
    import json
    import sys

    mode = sys.argv[1]
    if mode == "train":
        train_path, dev_path, out_dir, max_epochs = sys.argv[2:6]
        with open(train_path) as handle:
            assert all(json.loads(line)["completion_text"] for line in handle)
        epochs = [
            {"epoch": e, "train_loss": 2.0 / e, "dev_loss": 1.0 / e, "checkpoint_ref": out_dir + "/ckpt-%d" % e}
            for e in range(1, int(max_epochs) + 1)
        ]
        print("loading base model")
        print(json.dumps({"checkpoint_ref": out_dir + "/last", "epochs": epochs, "init_checksum": "base-v1"}))
    elif mode == "generate":
        checkpoint, prompts_path, out_path = sys.argv[2:5]
        with open(prompts_path) as prompts, open(out_path, "w") as out:
            for line in prompts:
                prompt = json.loads(line)["prompt_text"]
                source = prompt.split("\\n")[0].split(": ", 1)[1]
                out.write(json.dumps({"generated_text": " " + source + "\\nEnglish: more"}) + "\\n")
    elif mode == "garbage":
        print("no summary here")
    else:
        sys.stderr.write("CUDA out of memory\\n")
        sys.exit(3)
''')


@pytest.fixture
def trainer_script(tmp_path):
    path = tmp_path / "fake_trainer.py"
    path.write_text(FAKE_TRAINER)
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(path))}"


def _backend(tmp_path, script, train_mode="train"):
    return make_backend(
        "external",
        work_dir=str(tmp_path / "work dir"),
        train_command=f"{script} {train_mode} {{train}} {{dev}} {{out_dir}} {{max_epochs}}",
        generate_command=f"{script} generate {{checkpoint}} {{prompts}} {{out}}",
    )


def _sets(corpus):
    return (build_training_set(corpus, "train", "base_plain"), build_training_set(corpus, "dev", "base_plain"))


class TestExternalBackend:
    def test_fit_selects_epoch_from_summary(self, tmp_path, trainer_script, small_corpus):
        backend = _backend(tmp_path, trainer_script)
        handle = train(backend, *_sets(small_corpus), TrainingConfig(max_epochs=3))
        assert handle.backend_id == "external"
        assert handle.epochs_ran == 3
        assert handle.best_epoch == 3
        assert handle.checkpoint_ref.endswith("ckpt-3")
        assert handle.init_checksum == "base-v1"

    def test_generate_round_trip(self, tmp_path, trainer_script, small_corpus):
        backend = _backend(tmp_path, trainer_script)
        handle = train(backend, *_sets(small_corpus), TrainingConfig(max_epochs=2))
        prompts = build_training_set(small_corpus, "test", "base_plain", inference=True)
        assert translate(handle, prompts, backend=backend) == ["Good night.", "The cat sleeps."]

    def test_failure_carries_diagnostics(self, tmp_path, trainer_script, small_corpus):
        backend = _backend(tmp_path, trainer_script, train_mode="crash")
        with pytest.raises(BackendError) as excinfo:
            train(backend, *_sets(small_corpus), TrainingConfig(max_epochs=1))
        assert excinfo.value.returncode == 3
        assert "CUDA out of memory" in excinfo.value.stderr

    def test_missing_summary(self, tmp_path, trainer_script, small_corpus):
        backend = _backend(tmp_path, trainer_script, train_mode="garbage")
        with pytest.raises(BackendError, match="JSON summary"):
            train(backend, *_sets(small_corpus), TrainingConfig(max_epochs=1))

    def test_unconfigured_command(self, tmp_path, small_corpus, monkeypatch):
        from emomt.backends import external
        monkeypatch.setattr(external.config, "EXTERNAL_TRAIN_COMMAND", None)
        backend = make_backend("external", work_dir=str(tmp_path))
        with pytest.raises(BackendError, match="EMOMT_EXTERNAL_TRAIN_COMMAND"):
            train(backend, *_sets(small_corpus), TrainingConfig(max_epochs=1))

    def test_unknown_backend_type(self):
        with pytest.raises(UsageError):
            make_backend("mystery")

    def test_backend_for_handle(self, tmp_path, trainer_script, small_corpus):
        handle = train(_backend(tmp_path, trainer_script), *_sets(small_corpus), TrainingConfig(max_epochs=1))
        assert backend_for_handle(handle).backend_id == "external"
