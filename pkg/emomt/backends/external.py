"""
Driver for user-supplied fine-tuning commands (QLoRA on a 7B model, etc.)

Training contract: the driver writes train.jsonl and dev.jsonl of
PromptExample records into a fresh directory and runs the train command.
The command's last stdout line must be a JSON object:

    {"checkpoint_ref": "...",
     "epochs": [{"epoch": 1, "dev_loss": 1.23, "dev_bleu": 20.1, "checkpoint_ref": "..."}, ...],
     "init_checksum": "..."}

Per-epoch checkpoint_ref and init_checksum are optional. When per-epoch refs
are present the driver selects the epoch itself.

Generation contract: the driver writes prompts.jsonl of {"prompt_text"} and
runs the generate command, which must write one {"generated_text"} line per
prompt, in order, to {out}.
"""
import json
import logging
import os
import shlex
import subprocess
import uuid

from emomt import config
from emomt.errors import BackendError
from emomt.training import EpochRecord, FitResult, TranslationBackend, select_epoch
from emomt.utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

STDERR_TAIL = 2000


class ExternalTrainer(TranslationBackend):
    """
    Args:
        work_dir: Directory for exchange files
        train_command: Command template with {train} {dev} {out_dir} {max_epochs} {seed} {metric}
        generate_command: Command template with {checkpoint} {prompts} {out}
        timeout: Seconds before a command is killed (None = no limit)
    """

    backend_id = "external"

    def __init__(self, work_dir=".", train_command=None, generate_command=None, timeout=None):
        self.work_dir = work_dir
        self.train_command = train_command or config.EXTERNAL_TRAIN_COMMAND
        self.generate_command = generate_command or config.EXTERNAL_GENERATE_COMMAND
        self.timeout = timeout

    def _run(self, template, what, **values):
        if not template:
            raise BackendError(
                f"no external {what} command configured "
                f"(set EMOMT_EXTERNAL_{what.upper()}_COMMAND or the backend options)"
            )
        command = shlex.split(template.format(**{k: shlex.quote(str(v)) for k, v in values.items()}))
        logger.info(f"Running external {what} command: {' '.join(command)}")
        try:
            completed = subprocess.run(command, capture_output=True, text=True, timeout=self.timeout)
        except FileNotFoundError as e:
            raise BackendError(f"external {what} command not found: {command[0]}") from e
        except subprocess.TimeoutExpired as e:
            raise BackendError(f"external {what} command timed out after {self.timeout}s") from e
        if completed.returncode != 0:
            raise BackendError(
                f"external {what} command failed",
                returncode=completed.returncode,
                stderr=(completed.stderr or "")[-STDERR_TAIL:],
            )
        return completed

    def fit(self, train_set, dev_set, training_config):
        run_dir = os.path.join(self.work_dir, f"external-{uuid.uuid4().hex[:12]}")
        train_path = os.path.join(run_dir, "train.jsonl")
        dev_path = os.path.join(run_dir, "dev.jsonl")
        write_jsonl(train_path, (e.to_dict() for e in train_set))
        write_jsonl(dev_path, (e.to_dict() for e in dev_set))

        completed = self._run(
            self.train_command, "train",
            train=train_path, dev=dev_path, out_dir=run_dir,
            max_epochs=training_config.max_epochs, seed=training_config.seed,
            metric=training_config.early_stopping_metric,
        )
        lines = [line for line in completed.stdout.splitlines() if line.strip()]
        try:
            summary = json.loads(lines[-1])
            history = [EpochRecord(**epoch) for epoch in summary["epochs"]]
        except (IndexError, ValueError, KeyError, TypeError) as e:
            raise BackendError(
                f"external train command did not end with the JSON summary: {e}",
                stderr=(completed.stderr or "")[-STDERR_TAIL:],
            ) from e

        best = select_epoch(history, training_config.early_stopping_metric)
        checkpoint_ref = best.checkpoint_ref or summary.get("checkpoint_ref")
        if not checkpoint_ref:
            raise BackendError("external train command reported no checkpoint_ref")
        return FitResult(
            checkpoint_ref=checkpoint_ref,
            history=history,
            best_epoch=best.epoch,
            init_checksum=summary.get("init_checksum"),
        )

    def generate(self, checkpoint_ref, prompt_texts):
        run_dir = os.path.join(self.work_dir, f"generate-{uuid.uuid4().hex[:12]}")
        prompts_path = os.path.join(run_dir, "prompts.jsonl")
        out_path = os.path.join(run_dir, "generations.jsonl")
        write_jsonl(prompts_path, ({"prompt_text": p} for p in prompt_texts))

        self._run(self.generate_command, "generate", checkpoint=checkpoint_ref, prompts=prompts_path, out=out_path)
        if not os.path.exists(out_path):
            raise BackendError(f"external generate command wrote no output to {out_path}")
        try:
            return [record["generated_text"] for _, record in read_jsonl(out_path)]
        except KeyError as e:
            raise BackendError("generation record without generated_text") from e
