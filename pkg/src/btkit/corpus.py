"""Corpus data model: parallel/monolingual ingestion, serialization, splits.

All text is NFC-normalized and trimmed on ingest so that downstream
filtering and metrics see canonical Japanese width/composition variants.
Corpus values are immutable after construction and safe to share across
threads.

File formats:

* TSV: UTF-8, LF line endings, exactly one tab per record
  (``source<TAB>target``, Japanese first), no header row.
* JSONL: one object per line with keys ``id`` (optional on input), ``src``,
  ``tgt`` and optional ``provenance``
  (``{"kind": "seed"|"synthetic", "backend_id": str?, "round": int?}``).
  JSONL is the only format that persists provenance.
* Monolingual: UTF-8 plain text, one sentence per line; blank lines are
  skipped but original line numbers are kept so provenance can point back
  into the source file.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .errors import (
    CorpusTooSmall,
    EmptyCorpus,
    EncodingError,
    MalformedRecord,
    UnrepresentableInTsv,
)
from .rng import fisher_yates


class Language(Enum):
    JAPANESE = "ja"
    ENGLISH = "en"
    UNKNOWN = "unknown"


class ProvenanceKind(Enum):
    SEED = "seed"
    SYNTHETIC = "synthetic"


class CorpusFormat(Enum):
    TSV = "tsv"
    JSONL = "jsonl"


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def nfc_trim(text: str) -> str:
    return nfc(text).strip()


@dataclass(frozen=True)
class Provenance:
    """Origin of a sentence pair: seed data or a backtranslation product."""

    kind: ProvenanceKind = ProvenanceKind.SEED
    backend_id: str | None = None
    round: int | None = None

    def __post_init__(self):
        if self.kind is ProvenanceKind.SYNTHETIC:
            if not self.backend_id:
                raise ValueError("synthetic provenance requires backend_id")
            if self.round is not None and self.round < 0:
                raise ValueError("round must be non-negative")
        else:
            if self.backend_id is not None or self.round is not None:
                raise ValueError("seed provenance carries no backend_id or round")

    def to_json(self) -> dict:
        obj: dict = {"kind": self.kind.value}
        if self.backend_id is not None:
            obj["backend_id"] = self.backend_id
        if self.round is not None:
            obj["round"] = self.round
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Provenance":
        try:
            kind = ProvenanceKind(obj["kind"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad provenance object: {obj!r}") from exc
        return cls(kind=kind, backend_id=obj.get("backend_id"), round=obj.get("round"))


SEED = Provenance(ProvenanceKind.SEED)


@dataclass(frozen=True)
class SentencePair:
    """One aligned (Japanese, English) unit; the atom of every corpus."""

    id: str
    source_text: str
    target_text: str
    provenance: Provenance = SEED

    def __post_init__(self):
        if "\n" in self.source_text or "\n" in self.target_text:
            raise ValueError(f"pair {self.id}: interior newline in text")
        if self.provenance.kind is ProvenanceKind.SEED:
            if not self.source_text or not self.target_text:
                raise ValueError(f"pair {self.id}: seed pair with empty side")


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[SentencePair, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        seen: set[str] = set()
        for pair in self.pairs:
            if pair.id in seen:
                raise ValueError(f"duplicate pair id {pair.id!r} in corpus {self.name!r}")
            seen.add(pair.id)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class MonolingualCorpus:
    """One sentence per line, keyed by 1-based position in the source file."""

    lines: tuple[tuple[int, str], ...]
    language_hint: Language = Language.UNKNOWN

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        prev = 0
        for number, text in self.lines:
            if number <= prev:
                raise ValueError("line numbers must be strictly increasing")
            if not text.strip():
                raise ValueError(f"line {number}: empty text entry")
            prev = number

    def __len__(self) -> int:
        return len(self.lines)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    shuffle_seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be strictly between 0 and 1")


def _read_utf8(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path}: not valid UTF-8 ({exc})") from exc


def _pair_from_jsonl(path, line_number: int, line: str, fallback_id: str) -> SentencePair:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(path, line_number, f"invalid JSON: {exc.msg}")
    if not isinstance(obj, dict):
        raise MalformedRecord(path, line_number, "record is not a JSON object")
    for key in ("src", "tgt"):
        if key not in obj or not isinstance(obj[key], str):
            raise MalformedRecord(path, line_number, f"missing string field {key!r}")
    provenance = SEED
    if obj.get("provenance") is not None:
        try:
            provenance = Provenance.from_json(obj["provenance"])
        except ValueError as exc:
            raise MalformedRecord(path, line_number, str(exc))
    pair_id = obj.get("id") or fallback_id
    if not isinstance(pair_id, str):
        raise MalformedRecord(path, line_number, "id must be a string")
    try:
        return SentencePair(
            id=pair_id,
            source_text=nfc_trim(obj["src"]),
            target_text=nfc_trim(obj["tgt"]),
            provenance=provenance,
        )
    except ValueError as exc:
        raise MalformedRecord(path, line_number, str(exc))


def load_parallel(path, format: CorpusFormat, name: str | None = None) -> ParallelCorpus:
    """Load a parallel corpus from ``path``.

    Records with no id field get ``<name>:<1-based-record-index>``; ``name``
    defaults to the file stem. Provenance defaults to seed.
    """
    path = Path(path)
    if name is None:
        name = path.stem
    text = _read_utf8(path)

    pairs: list[SentencePair] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        record_id = f"{name}:{len(pairs) + 1}"
        if format is CorpusFormat.TSV:
            fields = line.split("\t")
            if len(fields) != 2:
                raise MalformedRecord(
                    path, line_number,
                    f"expected 2 tab-separated fields, got {len(fields)}",
                )
            try:
                pair = SentencePair(
                    id=record_id,
                    source_text=nfc_trim(fields[0]),
                    target_text=nfc_trim(fields[1]),
                )
            except ValueError as exc:
                raise MalformedRecord(path, line_number, str(exc))
        else:
            pair = _pair_from_jsonl(path, line_number, line, record_id)
        pairs.append(pair)

    if not pairs:
        raise EmptyCorpus(f"{path}: no records")
    try:
        return ParallelCorpus(pairs=tuple(pairs), name=name)
    except ValueError as exc:
        raise MalformedRecord(path, 0, str(exc))


def save_parallel(corpus: ParallelCorpus, path, format: CorpusFormat) -> None:
    """Write ``corpus`` to ``path``; loading the result reproduces the pair
    sequence exactly (TSV drops ids and provenance by design)."""
    path = Path(path)
    lines = []
    for pair in corpus.pairs:
        if format is CorpusFormat.TSV:
            if "\t" in pair.source_text or "\t" in pair.target_text:
                raise UnrepresentableInTsv(f"pair {pair.id}: text contains a tab")
            lines.append(f"{pair.source_text}\t{pair.target_text}")
        else:
            lines.append(pair_to_jsonl(pair))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def pair_to_jsonl(pair: SentencePair) -> str:
    obj = {
        "id": pair.id,
        "src": pair.source_text,
        "tgt": pair.target_text,
        "provenance": pair.provenance.to_json(),
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def load_monolingual(path, language_hint: Language = Language.UNKNOWN) -> MonolingualCorpus:
    """Load one-sentence-per-line text, skipping blank lines but keeping
    1-based physical line numbers."""
    path = Path(path)
    text = _read_utf8(path)
    entries = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        cleaned = nfc_trim(line)
        if cleaned:
            entries.append((line_number, cleaned))
    if not entries:
        raise EmptyCorpus(f"{path}: no non-blank lines")
    return MonolingualCorpus(lines=tuple(entries), language_hint=language_hint)


def split(corpus: ParallelCorpus, spec: SplitSpec) -> tuple[ParallelCorpus, ParallelCorpus]:
    """Deterministically partition ``corpus`` into (train, valid).

    Train size is floor(train_fraction * N), clamped so both sides keep at
    least one pair. Outputs are in shuffled order; the shuffle stream is
    pinned in :mod:`btkit.rng`.
    """
    n = len(corpus.pairs)
    if n < 2:
        raise CorpusTooSmall(f"corpus {corpus.name!r} has {n} pair(s); need at least 2")
    # Fraction-of-string keeps 0.9 * 1500 exactly 1350 regardless of float noise.
    train_n = int(Fraction(str(spec.train_fraction)) * n)
    train_n = max(1, min(n - 1, train_n))
    shuffled = fisher_yates(corpus.pairs, spec.shuffle_seed)
    train = ParallelCorpus(pairs=tuple(shuffled[:train_n]), name=f"{corpus.name}:train")
    valid = ParallelCorpus(pairs=tuple(shuffled[train_n:]), name=f"{corpus.name}:valid")
    return train, valid
