"""Backtranslation orchestration.

Streams monolingual Japanese lines through a translator backend in batches,
mints synthetic sentence pairs from the translations, and keeps going when
individual batches fail: per-line failures are recorded as data, and only a
run where no batch ever succeeded raises.

The backend is anything that speaks the wire protocol (HTTP POST
/translate); the built-in mock backend translates t -> "MT:" + t with no
network at all, which keeps tests hermetic and makes synthetic output
visibly synthetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import requests

from .corpus import MonolingualCorpus, Provenance, ProvenanceKind, SentencePair, nfc_trim
from .errors import BackendUnreachable, EmptyInput, LengthMismatch, ProtocolError

__all__ = [
    "BackendKind",
    "DecodeParams",
    "TranslatorBackend",
    "BtJob",
    "BtStats",
    "BtResult",
    "MOCK_PREFIX",
    "translate_batch",
    "run_backtranslation",
    "mint_pairs",
]

MOCK_PREFIX = "MT:"


class BackendKind(Enum):
    MOCK = "mock"
    REMOTE = "remote"


@dataclass(frozen=True)
class DecodeParams:
    beam_size: int = 3
    max_new_tokens: int = 256
    length_penalty: float = 1.0
    sampling: bool = False

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class TranslatorBackend:
    kind: BackendKind
    backend_id: str
    endpoint: str | None = None
    decode_params: DecodeParams = DecodeParams()
    timeout: float = 30.0

    def __post_init__(self):
        if self.kind is BackendKind.REMOTE and not self.endpoint:
            raise ValueError("remote backend requires an endpoint")
        if not self.backend_id:
            raise ValueError("backend_id must be non-empty")


MOCK_BACKEND = TranslatorBackend(kind=BackendKind.MOCK, backend_id="mock")


@dataclass(frozen=True)
class BtJob:
    input: MonolingualCorpus
    backend: TranslatorBackend
    batch_size: int = 16
    max_retries: int = 1
    round: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.round < 1:
            raise ValueError("round must be >= 1")


@dataclass(frozen=True)
class BtStats:
    requested: int
    translated: int
    failed: int

    def __post_init__(self):
        if self.requested != self.translated + self.failed:
            raise ValueError("requested must equal translated + failed")


@dataclass(frozen=True)
class BtResult:
    pairs: tuple[SentencePair, ...]
    failures: tuple[tuple[int, str], ...]  # (line_number, error string)
    stats: BtStats


def translate_batch(
    texts: Sequence[str],
    backend: TranslatorBackend,
    direction: tuple[str, str] = ("ja", "en"),
) -> list[str]:
    """One translation per input text, order preserved. Single attempt;
    retrying is the orchestrator's job."""
    if not texts:
        raise EmptyInput("nothing to translate")
    if any(not t for t in texts):
        raise ValueError("texts must be non-empty strings")
    if backend.kind is BackendKind.MOCK:
        return [MOCK_PREFIX + t for t in texts]

    src_lang, tgt_lang = direction
    params = backend.decode_params
    body = {
        "texts": list(texts),
        "src_lang": src_lang,
        "tgt_lang": tgt_lang,
        "beam_size": params.beam_size,
        "max_new_tokens": params.max_new_tokens,
        "length_penalty": params.length_penalty,
        "sampling": params.sampling,
    }
    url = backend.endpoint.rstrip("/") + "/translate"
    try:
        response = requests.post(url, json=body, timeout=backend.timeout)
    except (requests.ConnectionError, requests.Timeout) as exc:
        raise BackendUnreachable(f"backend at {backend.endpoint} unreachable: {exc}") from exc
    if response.status_code != 200:
        raise ProtocolError(f"backend returned HTTP {response.status_code}")
    try:
        payload = response.json()
    except ValueError as exc:
        raise ProtocolError("backend response is not JSON") from exc
    if not isinstance(payload, dict) or "translations" not in payload:
        raise ProtocolError("backend response missing 'translations'")
    translations = payload["translations"]
    if not isinstance(translations, list) or len(translations) != len(texts):
        raise ProtocolError(
            f"backend returned {len(translations) if isinstance(translations, list) else '?'} "
            f"translations for {len(texts)} texts"
        )
    return [str(t) for t in translations]


def mint_pairs(
    sources: Sequence[tuple[int, str]],
    translations: Sequence[str],
    backend_id: str,
    round: int,
) -> list[SentencePair]:
    """Zip monolingual lines with their translations into synthetic pairs.

    No filtering happens here; quality gates are a separate stage. The
    translation text is normalized the same way corpus loading normalizes
    (NFC + trim), with interior newlines collapsed to spaces so the pair
    stays representable in line-oriented files.
    """
    if len(sources) != len(translations):
        raise LengthMismatch(f"{len(sources)} sources vs {len(translations)} translations")
    provenance = Provenance(
        kind=ProvenanceKind.SYNTHETIC, backend_id=backend_id, round=round
    )
    pairs = []
    for (line_number, text), translation in zip(sources, translations):
        target = nfc_trim(" ".join(translation.splitlines()))
        pairs.append(
            SentencePair(
                id=f"{backend_id}:bt:{round}:{line_number}",
                source_text=text,
                target_text=target,
                provenance=provenance,
            )
        )
    return pairs


def run_backtranslation(job: BtJob) -> BtResult:
    """Translate the whole corpus in input order, batch by batch.

    Each batch gets 1 + max_retries attempts. A batch that exhausts its
    attempts contributes one failure per line and processing continues;
    only a run where every batch failed raises BackendUnreachable.
    """
    lines = job.input.lines
    if not lines:
        raise EmptyInput("monolingual corpus is empty")

    pairs: list[SentencePair] = []
    failures: list[tuple[int, str]] = []
    any_batch_succeeded = False

    for start in range(0, len(lines), job.batch_size):
        batch = lines[start:start + job.batch_size]
        texts = [text for _, text in batch]
        last_error: Exception | None = None
        translations: list[str] | None = None
        for _attempt in range(1 + job.max_retries):
            try:
                translations = translate_batch(texts, job.backend)
                break
            except (BackendUnreachable, ProtocolError) as exc:
                last_error = exc
        if translations is None:
            failures.extend((line_number, str(last_error)) for line_number, _ in batch)
            continue
        any_batch_succeeded = True
        pairs.extend(
            mint_pairs(batch, translations, job.backend.backend_id, job.round)
        )

    if not any_batch_succeeded:
        raise BackendUnreachable(
            f"no batch succeeded against backend {job.backend.backend_id!r}: {failures[0][1]}"
        )

    stats = BtStats(
        requested=len(lines), translated=len(pairs), failed=len(failures)
    )
    return BtResult(pairs=tuple(pairs), failures=tuple(failures), stats=stats)
