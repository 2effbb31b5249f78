"""
Reference toy trainer: a small byte-level encoder-decoder trained from scratch

The model reads the prompt and writes the completion one UTF-8 byte at a
time. End of sequence is emitted as a newline in the raw continuation, the
way a causal LM fine-tuned on line-terminated templates stops.
"""
import copy
import hashlib
import logging
import os
import threading
import uuid

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from emomt import config
from emomt.bleu import corpus_bleu
from emomt.errors import BackendError
from emomt.prompting import parse_hypothesis
from emomt.training import EpochRecord, FitResult, TranslationBackend, select_epoch

logger = logging.getLogger(__name__)

PAD, BOS, EOS = 0, 1, 2
BYTE_OFFSET = 3
VOCAB_SIZE = 256 + BYTE_OFFSET

# seeding and construction share the global torch RNG
_INIT_LOCK = threading.Lock()


def encode_text(text, max_len):
    return [b + BYTE_OFFSET for b in text.encode("utf-8")[:max_len]]


def encode_prompt(text, max_len):
    """
    Encode a prompt, cutting bytes from the middle when it is too long

    Emotion templates put their label at the start (source-side, token) or
    at the end (target-side) of the prompt, so both ends are kept.

    Returns:
        tuple: (ids, truncated)
    """
    data = text.encode("utf-8")
    if len(data) <= max_len:
        return [b + BYTE_OFFSET for b in data], False
    head = max_len // 2
    data = data[:head] + data[len(data) - (max_len - head):]
    return [b + BYTE_OFFSET for b in data], True


def _encode_prompts(texts, max_len):
    encoded = [encode_prompt(t, max_len) for t in texts]
    cut = sum(truncated for _, truncated in encoded)
    if cut:
        logger.warning(f"{cut} prompt(s) longer than {max_len} bytes lost the middle of their source sentence")
    return [ids or [BOS] for ids, _ in encoded]


def decode_ids(ids):
    return bytes(i - BYTE_OFFSET for i in ids if i >= BYTE_OFFSET).decode("utf-8", errors="replace")


def parameter_checksum(model):
    """SHA-256 over every parameter tensor, in state_dict order"""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class ByteSeq2Seq(nn.Module):
    """Bidirectional GRU encoder, GRU decoder with dot-product attention"""

    def __init__(self, embedding_size, hidden_size, max_positions):
        super().__init__()
        self.embedding = nn.Embedding(VOCAB_SIZE, embedding_size, padding_idx=PAD)
        self.positions = nn.Embedding(max_positions, embedding_size)
        self.encoder = nn.GRU(embedding_size, hidden_size, batch_first=True, bidirectional=True)
        self.bridge = nn.Linear(2 * hidden_size, hidden_size)
        self.keys = nn.Linear(2 * hidden_size, hidden_size, bias=False)
        self.decoder = nn.GRU(embedding_size, hidden_size, batch_first=True)
        self.output = nn.Linear(2 * hidden_size, VOCAB_SIZE)

    def _embed(self, ids, offset=0):
        positions = torch.arange(offset, offset + ids.size(1), device=ids.device)
        positions = positions.clamp(max=self.positions.num_embeddings - 1)
        return self.embedding(ids) + self.positions(positions).unsqueeze(0)

    def encode(self, src, src_mask):
        lengths = src_mask.sum(dim=1).cpu()
        packed = pack_padded_sequence(self._embed(src), lengths, batch_first=True, enforce_sorted=False)
        outputs, final = self.encoder(packed)
        outputs, _ = pad_packed_sequence(outputs, batch_first=True, total_length=src.size(1))
        hidden = torch.tanh(self.bridge(torch.cat([final[0], final[1]], dim=-1))).unsqueeze(0)
        return self.keys(outputs), hidden

    def decode(self, tgt_in, hidden, keys, src_mask, offset=0):
        out, hidden = self.decoder(self._embed(tgt_in, offset), hidden)
        scores = torch.bmm(out, keys.transpose(1, 2))
        scores = scores.masked_fill(~src_mask.unsqueeze(1), float("-inf"))
        context = torch.bmm(torch.softmax(scores, dim=-1), keys)
        return self.output(torch.cat([out, context], dim=-1)), hidden

    def forward(self, src, src_mask, tgt_in):
        keys, hidden = self.encode(src, src_mask)
        logits, _ = self.decode(tgt_in, hidden, keys, src_mask)
        return logits

    @torch.no_grad()
    def greedy(self, src, src_mask, max_len):
        keys, hidden = self.encode(src, src_mask)
        batch = src.size(0)
        token = torch.full((batch, 1), BOS, dtype=torch.long, device=src.device)
        finished = torch.zeros(batch, dtype=torch.bool, device=src.device)
        outputs = []
        for step in range(max_len):
            logits, hidden = self.decode(token, hidden, keys, src_mask, offset=step)
            token = logits[:, -1].argmax(dim=-1, keepdim=True)
            outputs.append(token)
            finished |= token.squeeze(1) == EOS
            if bool(finished.all()):
                break
        return torch.cat(outputs, dim=1).tolist()


def _pad(sequences):
    width = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), width), PAD, dtype=torch.long)
    for row, sequence in enumerate(sequences):
        ids[row, :len(sequence)] = torch.tensor(sequence, dtype=torch.long)
    return ids, ids != PAD


class ToyTrainer(TranslationBackend):
    """
    CPU-scale stand-in for QLoRA fine-tuning of a 7B model

    Args:
        work_dir: Directory where checkpoints are written
        embedding_size, hidden_size, learning_rate, batch_size,
        max_source_len, max_target_len, grad_clip: see config.TOY_DEFAULTS
    """

    backend_id = "toy"

    def __init__(self, work_dir=".", **options):
        unknown = set(options) - set(config.TOY_DEFAULTS)
        if unknown:
            raise BackendError(f"unknown toy backend option(s): {', '.join(sorted(unknown))}")
        self.work_dir = work_dir
        self.options = {**config.TOY_DEFAULTS, **options}

    def _build_model(self, seed):
        with _INIT_LOCK:
            torch.manual_seed(seed)
            return ByteSeq2Seq(
                embedding_size=self.options["embedding_size"],
                hidden_size=self.options["hidden_size"],
                max_positions=max(self.options["max_source_len"], self.options["max_target_len"] + 1),
            )

    def initial_checksum(self, seed):
        return parameter_checksum(self._build_model(seed))

    def initial_checkpoint(self, seed):
        model = self._build_model(seed)
        return self._save(model.state_dict(), f"toy-init-seed{seed}")

    def _save(self, state_dict, prefix):
        os.makedirs(self.work_dir, exist_ok=True)
        path = os.path.join(self.work_dir, f"{prefix}-{uuid.uuid4().hex[:12]}.pt")
        torch.save({"state_dict": state_dict, "options": self.options}, path)
        return path

    def _load(self, checkpoint_ref):
        if not os.path.exists(checkpoint_ref):
            raise BackendError(f"toy checkpoint not found: {checkpoint_ref}")
        payload = torch.load(checkpoint_ref, map_location="cpu", weights_only=True)
        options = {**config.TOY_DEFAULTS, **payload["options"]}
        model = ByteSeq2Seq(
            embedding_size=options["embedding_size"],
            hidden_size=options["hidden_size"],
            max_positions=max(options["max_source_len"], options["max_target_len"] + 1),
        )
        model.load_state_dict(payload["state_dict"])
        model.eval()
        return model, options

    def _tensorize(self, examples):
        sources = _encode_prompts([e.prompt_text for e in examples], self.options["max_source_len"])
        limit = self.options["max_target_len"]
        targets = [encode_text(e.completion_text, limit) for e in examples]
        cut = sum(len(e.completion_text.encode("utf-8")) > limit for e in examples)
        if cut:
            logger.warning(f"{cut} completion(s) longer than {limit} bytes were cut for training")
        return sources, targets

    def _batch_loss(self, model, sources, targets, reduction):
        src, src_mask = _pad(sources)
        tgt_in, _ = _pad([[BOS] + t for t in targets])
        tgt_out, _ = _pad([t + [EOS] for t in targets])
        logits = model(src, src_mask, tgt_in)
        return F.cross_entropy(
            logits.reshape(-1, VOCAB_SIZE), tgt_out.reshape(-1), ignore_index=PAD, reduction=reduction
        )

    def _dev_loss(self, model, sources, targets):
        model.eval()
        total, tokens = 0.0, 0
        size = self.options["batch_size"]
        with torch.no_grad():
            for start in range(0, len(sources), size):
                batch_targets = targets[start:start + size]
                total += float(self._batch_loss(model, sources[start:start + size], batch_targets, "sum"))
                tokens += sum(len(t) + 1 for t in batch_targets)
        return total / max(tokens, 1)

    def _generate_with(self, model, prompt_texts, options):
        outputs = []
        unfinished = 0
        size = max(options["batch_size"], 32)
        for start in range(0, len(prompt_texts), size):
            chunk = prompt_texts[start:start + size]
            src, src_mask = _pad(_encode_prompts(chunk, options["max_source_len"]))
            for ids in model.greedy(src, src_mask, options["max_target_len"]):
                if EOS in ids:
                    outputs.append(decode_ids(ids[:ids.index(EOS)]) + "\n")
                else:
                    unfinished += 1
                    outputs.append(decode_ids(ids))
        if unfinished:
            logger.warning(f"{unfinished} generation(s) hit max_target_len={options['max_target_len']} before ending")
        return outputs

    def _dev_bleu(self, model, dev_set):
        model.eval()
        generated = self._generate_with(model, [e.prompt_text for e in dev_set], self.options)
        pairs = [(parse_hypothesis(e.template, g), e.reference) for e, g in zip(dev_set, generated)]
        return corpus_bleu(pairs).score

    def fit(self, train_set, dev_set, training_config):
        model = self._build_model(training_config.seed)
        init_checksum = parameter_checksum(model)
        optimizer = torch.optim.Adam(model.parameters(), lr=self.options["learning_rate"])
        generator = torch.Generator().manual_seed(training_config.seed)

        train_sources, train_targets = self._tensorize(train_set)
        dev_sources, dev_targets = self._tensorize(dev_set)
        size = self.options["batch_size"]
        metric = training_config.early_stopping_metric

        history, states = [], {}
        best = None
        stale = 0
        for epoch in range(1, training_config.max_epochs + 1):
            model.train()
            order = torch.randperm(len(train_sources), generator=generator).tolist()
            epoch_loss, batches = 0.0, 0
            for start in range(0, len(order), size):
                index = order[start:start + size]
                loss = self._batch_loss(
                    model, [train_sources[i] for i in index], [train_targets[i] for i in index], "mean"
                )
                optimizer.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(model.parameters(), self.options["grad_clip"])
                optimizer.step()
                epoch_loss += float(loss)
                batches += 1

            record = EpochRecord(
                epoch=epoch,
                train_loss=epoch_loss / max(batches, 1),
                dev_loss=self._dev_loss(model, dev_sources, dev_targets),
                dev_bleu=self._dev_bleu(model, dev_set) if metric == "dev_bleu" else None,
            )
            history.append(record)
            bleu_note = f", dev BLEU {record.dev_bleu:.2f}" if record.dev_bleu is not None else ""
            logger.info(
                f"epoch {epoch}/{training_config.max_epochs}: train loss {record.train_loss:.4f}, "
                f"dev loss {record.dev_loss:.4f}{bleu_note}"
            )

            if select_epoch(history, metric) is record:
                best = record
                states = {epoch: copy.deepcopy(model.state_dict())}
                stale = 0
            else:
                stale += 1
            if training_config.patience is not None and stale >= training_config.patience:
                logger.info(f"No improvement for {stale} epoch(s), stopping early")
                break

        checkpoint_ref = self._save(states[best.epoch], f"toy-seed{training_config.seed}-epoch{best.epoch}")
        best.checkpoint_ref = checkpoint_ref
        return FitResult(
            checkpoint_ref=checkpoint_ref,
            history=history,
            best_epoch=best.epoch,
            init_checksum=init_checksum,
        )

    def generate(self, checkpoint_ref, prompt_texts):
        model, options = self._load(checkpoint_ref)
        return self._generate_with(model, list(prompt_texts), options)
