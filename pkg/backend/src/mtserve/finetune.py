"""LoRA fine-tuning over prompt/completion JSONL files.

The trainer consumes the assembled training-set format directly: one JSON
object per line with "prompt" and "completion" strings. Loss is computed
on completion tokens only; prompt and BOS positions are masked out.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import BadTrainingFile, OutOfMemory
from .lora import apply_lora, save_adapters, trainable_parameters
from .model import BOS_ID, EOS_ID, PAD_ID, ProxyConfig, ProxyLM, encode_text, new_model

IGNORE_INDEX = -100


@dataclass(frozen=True)
class TrainingRecord:
    prompt: str
    completion: str
    record_id: str = ""


@dataclass(frozen=True)
class TrainerConfig:
    """Trainer-relevant subset of the run config, with matching defaults."""

    learning_rate: float = 2e-5
    warmup_steps: int = 500
    weight_decay: float = 0.01
    dropout: float = 0.1
    grad_clip: float = 1.0
    batch_size: int = 128
    per_device_batch: int = 4
    epochs_min: int = 5
    lora_rank: int = 8
    lora_alpha: float = 16.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive")
        if self.batch_size < 1 or self.per_device_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.batch_size % self.per_device_batch != 0:
            raise ValueError("batch_size must be a multiple of per_device_batch")
        if self.epochs_min < 1:
            raise ValueError("epochs_min must be >= 1")
        if self.lora_rank < 1:
            raise ValueError("lora_rank must be >= 1")
        if self.lora_alpha <= 0:
            raise ValueError("lora_alpha must be positive")

    @property
    def accumulation_steps(self) -> int:
        return self.batch_size // self.per_device_batch


def load_trainer_config(path: str) -> TrainerConfig:
    """Pull the trainer fields out of a run-config JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ValueError(f"run config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError("run config must be a JSON object")
    kwargs = {}
    for key in (
        "learning_rate",
        "warmup_steps",
        "weight_decay",
        "dropout",
        "grad_clip",
        "batch_size",
        "per_device_batch",
        "lora_rank",
        "lora_alpha",
    ):
        if key in raw:
            kwargs[key] = raw[key]
    epochs = raw.get("epochs")
    if isinstance(epochs, dict) and "min" in epochs:
        kwargs["epochs_min"] = epochs["min"]
    try:
        return TrainerConfig(**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad trainer field: {exc}") from exc


def load_training_records(path: str) -> list[TrainingRecord]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise BadTrainingFile(f"cannot read training file: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BadTrainingFile(f"line {lineno} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise BadTrainingFile(f"line {lineno} is not a JSON object")
        for key in ("prompt", "completion"):
            if key not in obj:
                raise BadTrainingFile(f"line {lineno} is missing the {key} key")
            if not isinstance(obj[key], str):
                raise BadTrainingFile(f"line {lineno} has a non-string {key}")
        records.append(
            TrainingRecord(
                prompt=obj["prompt"],
                completion=obj["completion"],
                record_id=str(obj.get("id", "")),
            )
        )
    if not records:
        raise BadTrainingFile(f"training file has no records: {path}")
    return records


def encode_example(record: TrainingRecord, max_len: int) -> tuple[list[int], list[int]]:
    """Token ids plus labels with prompt and BOS positions masked."""
    prompt_ids = encode_text(record.prompt)
    completion_ids = encode_text(record.completion)
    ids = [BOS_ID] + prompt_ids + completion_ids + [EOS_ID]
    labels = (
        [IGNORE_INDEX] * (1 + len(prompt_ids)) + completion_ids + [EOS_ID]
    )
    return ids[:max_len], labels[:max_len]


def _batches(
    examples: list[tuple[list[int], list[int]]], size: int
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    out = []
    for start in range(0, len(examples), size):
        chunk = examples[start : start + size]
        width = max(len(ids) for ids, _ in chunk)
        ids = torch.full((len(chunk), width), PAD_ID, dtype=torch.long)
        labels = torch.full((len(chunk), width), IGNORE_INDEX, dtype=torch.long)
        for row, (seq, lab) in enumerate(chunk):
            ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
            labels[row, : len(lab)] = torch.tensor(lab, dtype=torch.long)
        out.append((ids, labels))
    return out


@dataclass(frozen=True)
class FinetuneResult:
    epoch_losses: list[float]
    updates: int
    adapter_dir: str
    log_path: str
    wrapped_layers: list[str] = field(default_factory=list)


def finetune(
    train_file: str,
    out_dir: str,
    config: TrainerConfig | None = None,
    model: ProxyLM | None = None,
    epochs: int | None = None,
    seed: int = 13,
) -> FinetuneResult:
    """Train LoRA adapters on a prompt/completion file and save them.

    The base weights stay frozen; only the injected A/B matrices move.
    Gradients are accumulated over batch_size // per_device_batch
    micro-batches so the effective batch matches the config.
    """
    cfg = config or TrainerConfig()
    records = load_training_records(train_file)
    if model is None:
        model = new_model(seed, ProxyConfig(dropout=cfg.dropout))
    if model.parameter_count() > 100_000_000:
        raise ValueError("proxy model must stay at or under 100M parameters")
    n_epochs = epochs if epochs is not None else cfg.epochs_min
    if n_epochs < 1:
        raise ValueError("epochs must be >= 1")

    wrapped = apply_lora(model, cfg.lora_rank, cfg.lora_alpha)
    params = trainable_parameters(model)
    optimizer = torch.optim.AdamW(
        params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE_INDEX, reduction="sum")
    examples = [encode_example(r, model.config.max_len) for r in records]
    batches = _batches(examples, cfg.per_device_batch)
    accum = cfg.accumulation_steps

    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, "training_log.jsonl")
    adapter_dir = os.path.join(out_dir, "adapter")
    epoch_losses: list[float] = []
    updates = 0

    def step() -> None:
        nonlocal updates
        updates += 1
        scale = (
            min(1.0, updates / cfg.warmup_steps) if cfg.warmup_steps > 0 else 1.0
        )
        for group in optimizer.param_groups:
            group["lr"] = cfg.learning_rate * scale
        torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
        optimizer.step()
        optimizer.zero_grad()

    model.train()
    torch.manual_seed(seed)
    try:
        with open(log_path, "w", encoding="utf-8") as log:
            for epoch in range(1, n_epochs + 1):
                token_loss = 0.0
                token_count = 0
                pending = 0
                for ids, labels in batches:
                    logits = model(ids)
                    loss_sum = loss_fn(
                        logits[:, :-1, :].reshape(-1, logits.shape[-1]),
                        labels[:, 1:].reshape(-1),
                    )
                    n_tokens = int((labels[:, 1:] != IGNORE_INDEX).sum().item())
                    if n_tokens == 0:
                        continue
                    token_loss += float(loss_sum.item())
                    token_count += n_tokens
                    (loss_sum / n_tokens / accum).backward()
                    pending += 1
                    if pending == accum:
                        step()
                        pending = 0
                if pending:
                    step()
                if token_count == 0:
                    raise BadTrainingFile(
                        "no completion tokens survive truncation"
                    )
                epoch_loss = token_loss / token_count
                epoch_losses.append(epoch_loss)
                row = {
                    "epoch": epoch,
                    "loss": epoch_loss,
                    "lr": cfg.learning_rate,
                    "warmup_steps": cfg.warmup_steps,
                    "lora_rank": cfg.lora_rank,
                    "lora_alpha": cfg.lora_alpha,
                    "updates": updates,
                }
                log.write(json.dumps(row, sort_keys=True) + "\n")
                print(
                    f"epoch={epoch} loss={epoch_loss:.6f} "
                    f"lr={cfg.learning_rate} warmup={cfg.warmup_steps} "
                    f"lora_rank={cfg.lora_rank} lora_alpha={cfg.lora_alpha}"
                )
    except torch.cuda.OutOfMemoryError as exc:
        raise OutOfMemory(str(exc)) from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise OutOfMemory(str(exc)) from exc
        raise

    save_adapters(model, cfg.lora_rank, cfg.lora_alpha, adapter_dir)
    return FinetuneResult(
        epoch_losses=epoch_losses,
        updates=updates,
        adapter_dir=adapter_dir,
        log_path=log_path,
        wrapped_layers=wrapped,
    )
