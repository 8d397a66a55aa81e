"""Training-set assembly: mixing, shuffling, and prompt rendering.

The mix step merges seed pairs (optionally upsampled) with a capped prefix
of the filtered synthetic pairs, then shuffles with the pinned PRNG so the
same inputs and seed give the same order on every platform. The render
step turns pairs into prompt/completion records for a decoder-only
trainer; the exported JSONL file is the handoff contract consumed by the
training component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .corpus import ParallelCorpus, Provenance, ProvenanceKind, SentencePair
from .errors import EmptyInput, EmptySeed, ProvenanceViolation, TemplateInvalid
from .rng import fisher_yates

__all__ = [
    "MixPolicy",
    "PromptTemplate",
    "TrainingRecord",
    "DEFAULT_TEMPLATE",
    "mix",
    "render_training_records",
    "export_training_file",
    "load_training_file",
]


@dataclass(frozen=True)
class MixPolicy:
    max_synthetic_ratio: float = 2.0  # synthetic <= ratio x (seed x upsample)
    seed_upsample: int = 1
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.max_synthetic_ratio <= 0:
            raise ValueError("max_synthetic_ratio must be positive")
        if self.seed_upsample < 1:
            raise ValueError("seed_upsample must be >= 1")
        if not 0 <= self.shuffle_seed < 2 ** 64:
            raise ValueError("shuffle_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class PromptTemplate:
    """Text template with "{src}" and "{tgt}" placeholders, source first.

    Templates are config data, not code; the default puts the target last
    so a causal model's loss falls naturally on the completion.
    """

    template: str
    direction_label: str = "ja-en"

    def __post_init__(self):
        for placeholder in ("{src}", "{tgt}"):
            count = self.template.count(placeholder)
            if count != 1:
                raise TemplateInvalid(
                    f"template must contain {placeholder} exactly once, found {count}"
                )
        if self.template.index("{src}") > self.template.index("{tgt}"):
            raise TemplateInvalid("{src} must occur before {tgt}")


DEFAULT_TEMPLATE = PromptTemplate(
    template="Translate Japanese to English.\nJapanese: {src}\nEnglish: {tgt}",
    direction_label="ja-en",
)


@dataclass(frozen=True)
class TrainingRecord:
    prompt: str
    completion: str
    pair_id: str
    provenance: Provenance

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "completion": self.completion,
            "id": self.pair_id,
            "provenance": self.provenance.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingRecord":
        return cls(
            prompt=obj["prompt"],
            completion=obj["completion"],
            pair_id=obj["id"],
            provenance=Provenance.from_json(obj["provenance"]),
        )


def mix(
    seed: ParallelCorpus,
    synthetic: ParallelCorpus,
    policy: MixPolicy = MixPolicy(),
) -> ParallelCorpus:
    """Merge seed (upsampled) with a capped prefix of synthetic, shuffled.

    The synthetic cap is floor(max_synthetic_ratio x |seed| x upsample).
    Synthetic selection is prefix-order: deterministic without a second
    PRNG stream; callers wanting random selection shuffle upstream.
    Upsampled seed copies get an id suffix "#k" for k >= 2 so ids stay
    unique.
    """
    if len(seed) == 0:
        raise EmptySeed("seed corpus is empty")
    for pair in synthetic.pairs:
        if pair.provenance.kind is not ProvenanceKind.SYNTHETIC:
            raise ProvenanceViolation(
                f"pair {pair.id} in the synthetic argument has provenance "
                f"{pair.provenance.kind.value}"
            )

    merged: list[SentencePair] = []
    for k in range(1, policy.seed_upsample + 1):
        for pair in seed.pairs:
            if k == 1:
                merged.append(pair)
            else:
                merged.append(replace(pair, id=f"{pair.id}#{k}"))

    # exact arithmetic so e.g. ratio 2.0 of 100 seeds is exactly 200
    cap = int(
        Fraction(str(policy.max_synthetic_ratio))
        * len(seed)
        * policy.seed_upsample
    )
    merged.extend(synthetic.pairs[:cap])

    shuffled = fisher_yates(merged, policy.shuffle_seed)
    return ParallelCorpus(pairs=tuple(shuffled), name=f"{seed.name}:mixed")


def render_training_records(
    corpus: ParallelCorpus,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> list[TrainingRecord]:
    """One prompt/completion record per pair, order preserved.

    The prompt is everything before the "{tgt}" insertion point (with
    "{src}" substituted); the completion is the target text plus whatever
    the template places after "{tgt}", so prompt + completion always equals
    the fully rendered template.
    """
    head, tail = template.template.split("{tgt}")
    records = []
    for pair in corpus.pairs:
        prompt = head.replace("{src}", pair.source_text)
        completion = pair.target_text + tail
        records.append(
            TrainingRecord(
                prompt=prompt,
                completion=completion,
                pair_id=pair.id,
                provenance=pair.provenance,
            )
        )
    return records


def export_training_file(records: Sequence[TrainingRecord], path: str | Path) -> None:
    """Write records as JSONL; byte-stable for fixed input."""
    if not records:
        raise EmptyInput("no training records to export")
    path = Path(path)
    lines = [
        json.dumps(record.to_json(), ensure_ascii=False, separators=(",", ":"))
        for record in records
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_training_file(path: str | Path) -> list[TrainingRecord]:
    """Inverse of export_training_file."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(TrainingRecord.from_json(json.loads(line)))
    return records
