"""
Fine-tuning orchestration over pluggable translation backends

A backend always starts from its initial state; train() has no way of
passing it a previous checkpoint.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

from emomt import config
from emomt.emotion import parse_dimension
from emomt.errors import BackendError, UsageError, ValidationError
from emomt.prompting import parse_hypothesis, parse_template
from emomt.utils import read_json, write_json

logger = logging.getLogger(__name__)

EARLY_STOPPING_METRICS = ("dev_loss", "dev_bleu")


@dataclass(frozen=True)
class TrainingConfig:
    max_epochs: int = config.DEFAULT_MAX_EPOCHS
    early_stopping_metric: str = config.DEFAULT_EARLY_STOPPING_METRIC
    seed: int = config.DEFAULT_SEED
    adapter_note: str = ""
    patience: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.max_epochs, bool) or not isinstance(self.max_epochs, int) or self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be a positive integer, got {self.max_epochs!r}")
        if self.early_stopping_metric not in EARLY_STOPPING_METRICS:
            raise ValidationError(
                f"early_stopping_metric must be one of {EARLY_STOPPING_METRICS}, got {self.early_stopping_metric!r}"
            )
        if self.patience is not None and self.patience < 1:
            raise ValidationError("patience must be at least 1 when set")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def load_training_config(path):
    """
    Read a JSON training configuration file

    The file holds the TrainingConfig fields and an optional "backend"
    object of backend options.

    Returns:
        tuple: (TrainingConfig, backend options dict)
    """
    data = dict(read_json(path))
    backend_options = data.pop("backend", {}) or {}
    return TrainingConfig.from_dict(data), backend_options


@dataclass
class EpochRecord:
    epoch: int
    train_loss: Optional[float] = None
    dev_loss: Optional[float] = None
    dev_bleu: Optional[float] = None
    checkpoint_ref: Optional[str] = None

    def to_dict(self):
        return asdict(self)


@dataclass
class FitResult:
    """What a backend reports back after one training run"""
    checkpoint_ref: str
    history: List[EpochRecord]
    best_epoch: int
    init_checksum: Optional[str] = None


def select_epoch(history, metric):
    """
    Pick the best epoch from a training history

    Lowest dev loss or highest dev BLEU; the earliest epoch wins ties.

    Returns:
        EpochRecord
    """
    scored = [record for record in history if getattr(record, metric) is not None]
    if not scored:
        raise BackendError(f"training history has no {metric} values to select an epoch from")
    if metric == "dev_loss":
        return min(scored, key=lambda r: (r.dev_loss, r.epoch))
    return min(scored, key=lambda r: (-r.dev_bleu, r.epoch))


class TranslationBackend(ABC):
    """A model that can be fine-tuned from its initial state and then generate"""

    backend_id = None

    @abstractmethod
    def fit(self, train_set, dev_set, training_config):
        """
        Train from the initial state

        Returns:
            FitResult
        """

    @abstractmethod
    def generate(self, checkpoint_ref, prompt_texts):
        """
        Continue each prompt

        Returns:
            list: Raw generated continuations, one per prompt, same order
        """

    def initial_checksum(self, seed):
        """Checksum of the parameters a fresh run would start from, if known"""
        return None

    def initial_checkpoint(self, seed):
        """Save the untrained state and return its checkpoint ref"""
        raise NotImplementedError(f"{self.backend_id} cannot export an untrained checkpoint")


@dataclass
class ModelHandle:
    backend_id: str
    checkpoint_ref: str
    template: object
    dimension: object
    epochs_ran: int
    max_epochs: int
    best_epoch: int
    seed: int
    init_checksum: Optional[str] = None
    history: List[EpochRecord] = field(default_factory=list)

    def __post_init__(self):
        self.template = parse_template(self.template)
        self.dimension = parse_dimension(self.dimension)
        if self.epochs_ran > self.max_epochs:
            raise ValidationError(
                f"run used {self.epochs_ran} epochs, more than the budget of {self.max_epochs}"
            )

    @property
    def trained_on(self):
        return self.template, self.dimension

    def to_dict(self):
        return {
            "backend_id": self.backend_id,
            "checkpoint_ref": self.checkpoint_ref,
            "template": self.template.value,
            "dimension": self.dimension.value if self.dimension else None,
            "epochs_ran": self.epochs_ran,
            "max_epochs": self.max_epochs,
            "best_epoch": self.best_epoch,
            "seed": self.seed,
            "init_checksum": self.init_checksum,
            "history": [r.to_dict() for r in self.history],
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["history"] = [EpochRecord(**r) for r in data.get("history", [])]
        return cls(**data)

    def save(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))


def _template_of(examples, what):
    kinds = {(e.template, e.dimension) for e in examples}
    if len(kinds) > 1:
        raise UsageError(f"{what} mixes templates: {sorted((str(k), str(d)) for k, d in kinds)}")
    return kinds.pop() if kinds else None


def train(backend, train_set, dev_set, training_config):
    """
    Fine-tune a backend on a rendered training set

    Args:
        backend: TranslationBackend, started from its initial state
        train_set: PromptExamples with completions
        dev_set: PromptExamples with completions, same template and dimension
        training_config: TrainingConfig

    Returns:
        ModelHandle: points at the best epoch's checkpoint
    """
    if not train_set:
        raise UsageError("training set is empty")
    if not dev_set:
        raise UsageError("dev set is empty")
    train_kind = _template_of(train_set, "training set")
    dev_kind = _template_of(dev_set, "dev set")
    if train_kind != dev_kind:
        raise UsageError(
            f"training set rendered with {train_kind[0]}/{train_kind[1]} "
            f"but dev set with {dev_kind[0]}/{dev_kind[1]}"
        )
    if any(e.is_inference for e in list(train_set) + list(dev_set)):
        raise UsageError("training and dev examples need completions")

    template, dimension = train_kind
    logger.info(
        f"Training {backend.backend_id} on {len(train_set)} examples "
        f"(template={template}, dimension={dimension}, max_epochs={training_config.max_epochs}, "
        f"seed={training_config.seed})"
    )
    result = backend.fit(list(train_set), list(dev_set), training_config)

    epochs_ran = len(result.history)
    if epochs_ran > training_config.max_epochs:
        raise BackendError(
            f"backend {backend.backend_id} ran {epochs_ran} epochs, budget is {training_config.max_epochs}"
        )
    handle = ModelHandle(
        backend_id=backend.backend_id,
        checkpoint_ref=result.checkpoint_ref,
        template=template,
        dimension=dimension,
        epochs_ran=epochs_ran,
        max_epochs=training_config.max_epochs,
        best_epoch=result.best_epoch,
        seed=training_config.seed,
        init_checksum=result.init_checksum,
        history=result.history,
    )
    logger.info(f"Selected epoch {handle.best_epoch} of {epochs_ran} ({training_config.early_stopping_metric})")
    return handle


def translate(model, prompts, backend=None):
    """
    Generate hypotheses for inference prompts

    Args:
        model: ModelHandle
        prompts: Inference PromptExamples rendered with the model's template
        backend: TranslationBackend able to load the checkpoint; resolved from
            model.backend_id with default options when omitted

    Returns:
        list: Hypothesis strings, one per prompt, in order
    """
    prompts = list(prompts)
    if not prompts:
        return []
    for prompt in prompts:
        if (prompt.template, prompt.dimension) != model.trained_on:
            raise UsageError(
                f"prompt {prompt.utterance_id!r} uses {prompt.template}/{prompt.dimension} "
                f"but the model was trained on {model.template}/{model.dimension}"
            )
        if not prompt.is_inference:
            raise UsageError(f"prompt {prompt.utterance_id!r} is not an inference prompt")
    if backend is None:
        from emomt.backends import backend_for_handle
        backend = backend_for_handle(model)
    if backend.backend_id != model.backend_id:
        raise UsageError(f"model was trained with {model.backend_id}, not {backend.backend_id}")

    generated = backend.generate(model.checkpoint_ref, [p.prompt_text for p in prompts])
    if len(generated) != len(prompts):
        raise BackendError(f"backend returned {len(generated)} generations for {len(prompts)} prompts")
    return [parse_hypothesis(model.template, text) for text in generated]


def untrained_handle(backend, template, dimension=None, seed=config.DEFAULT_SEED):
    """
    Handle for a backend's initial, untrained state

    Used as the reference point when checking that training helped.
    """
    return ModelHandle(
        backend_id=backend.backend_id,
        checkpoint_ref=backend.initial_checkpoint(seed),
        template=template,
        dimension=dimension,
        epochs_ran=0,
        max_epochs=0,
        best_epoch=0,
        seed=seed,
        init_checksum=backend.initial_checksum(seed),
    )
