"""Quality gates for synthetic sentence pairs.

Synthetic pairs minted from backtranslation are noisy: empty outputs,
runaway repetition, wrong-language output, and exact duplicates all occur
in practice. Each gate here is cheap and deterministic (character-level
heuristics only, no models), because the gates sit inside the data
pipeline and must give identical verdicts on every run.

Gates run in the configured order and short-circuit: a pair is rejected by
the first gate that fails, and later gates never see it. Every pair gets a
decision, pass or reject, so gate-level reject counts are auditable.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import Language, SentencePair, nfc
from .errors import EmptySource
from .segmenter import ScriptClass, script_class

__all__ = [
    "FilterKind",
    "Verdict",
    "FilterConfig",
    "FilterDecision",
    "ScriptHistogram",
    "length_ratio",
    "classify_script",
    "lang_confidence",
    "apply_filters",
]


class FilterKind(Enum):
    EMPTY = "Empty"
    LENGTH_RATIO = "LengthRatio"
    LANG_ID_SOURCE = "LangIdSource"
    LANG_ID_TARGET = "LangIdTarget"
    DUPLICATE = "Duplicate"


class Verdict(Enum):
    PASS = "pass"
    REJECT = "reject"


_DEFAULT_ORDER = (
    FilterKind.EMPTY,
    FilterKind.LENGTH_RATIO,
    FilterKind.LANG_ID_SOURCE,
    FilterKind.LANG_ID_TARGET,
    FilterKind.DUPLICATE,
)


@dataclass(frozen=True)
class FilterConfig:
    min_len_ratio: float = 0.5
    max_len_ratio: float = 6.0
    min_script_confidence: float = 0.5
    min_chars: int = 1
    enabled_filters: tuple[FilterKind, ...] = _DEFAULT_ORDER

    def __post_init__(self):
        if self.min_len_ratio <= 0:
            raise ValueError("min_len_ratio must be positive")
        if self.max_len_ratio <= self.min_len_ratio:
            raise ValueError("max_len_ratio must exceed min_len_ratio")
        if not 0 < self.min_script_confidence <= 1:
            raise ValueError("min_script_confidence must be in (0, 1]")
        if self.min_chars < 1:
            raise ValueError("min_chars must be >= 1")
        if len(set(self.enabled_filters)) != len(self.enabled_filters):
            raise ValueError("enabled_filters must not repeat gates")


@dataclass(frozen=True)
class FilterDecision:
    pair_id: str
    verdict: Verdict
    reason: FilterKind | None = None  # first failing gate
    detail: str = ""

    def __post_init__(self):
        if (self.verdict is Verdict.REJECT) != (self.reason is not None):
            raise ValueError("reason is present exactly when verdict is reject")

    def to_json(self) -> dict:
        obj: dict = {"id": self.pair_id, "verdict": self.verdict.value}
        if self.reason is not None:
            obj["reason"] = self.reason.value
        obj["detail"] = self.detail
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FilterDecision":
        reason = obj.get("reason")
        return cls(
            pair_id=obj["id"],
            verdict=Verdict(obj["verdict"]),
            reason=FilterKind(reason) if reason is not None else None,
            detail=obj.get("detail", ""),
        )


@dataclass(frozen=True)
class ScriptHistogram:
    hiragana: int = 0
    katakana: int = 0
    han: int = 0
    latin: int = 0
    digit: int = 0
    other: int = 0

    @property
    def total_classified(self) -> int:
        return (
            self.hiragana + self.katakana + self.han
            + self.latin + self.digit + self.other
        )


def _char_count(text: str) -> int:
    """Characters after NFC normalization with whitespace removed."""
    return sum(1 for ch in nfc(text) if not ch.isspace())


def length_ratio(pair: SentencePair) -> float:
    """Target/source character-count ratio (whitespace excluded).

    Character counts, not token counts: Japanese tokenization is itself
    uncertain, so the gate sticks to what is unambiguous. An empty target
    gives 0.0; an empty source is undefined and raises.
    """
    source_len = _char_count(pair.source_text)
    if source_len == 0:
        raise EmptySource(f"pair {pair.id}: source has no non-whitespace characters")
    return _char_count(pair.target_text) / source_len


def classify_script(text: str) -> ScriptHistogram:
    """Count characters per script class, skipping whitespace and punctuation."""
    counts = {cls: 0 for cls in ScriptClass}
    for ch in text:
        if ch.isspace():
            continue
        if unicodedata.category(ch).startswith("P"):
            continue
        counts[script_class(ch)] += 1
    return ScriptHistogram(
        hiragana=counts[ScriptClass.HIRAGANA],
        katakana=counts[ScriptClass.KATAKANA],
        han=counts[ScriptClass.HAN],
        latin=counts[ScriptClass.LATIN],
        digit=counts[ScriptClass.DIGIT],
        other=counts[ScriptClass.OTHER],
    )


def lang_confidence(histogram: ScriptHistogram, language: Language) -> float:
    """Fraction of classified characters in the scripts of ``language``.

    Japanese counts hiragana+katakana+han; English counts latin. A histogram
    with nothing classified has confidence 0 for every language.
    """
    total = histogram.total_classified
    if total == 0:
        return 0.0
    if language is Language.JAPANESE:
        return (histogram.hiragana + histogram.katakana + histogram.han) / total
    if language is Language.ENGLISH:
        return histogram.latin / total
    return 0.0


def _reject(pair: SentencePair, gate: FilterKind, detail: str) -> FilterDecision:
    return FilterDecision(
        pair_id=pair.id, verdict=Verdict.REJECT, reason=gate, detail=detail
    )


def _run_gate(
    gate: FilterKind,
    pair: SentencePair,
    config: FilterConfig,
    seen: dict[tuple[str, str], str],
) -> FilterDecision | None:
    """A rejection decision if the gate fails, else None."""
    if gate is FilterKind.EMPTY:
        source_chars = _char_count(pair.source_text)
        target_chars = _char_count(pair.target_text)
        if source_chars < config.min_chars or target_chars < config.min_chars:
            return _reject(pair, gate, f"src={source_chars} tgt={target_chars}")
        return None
    if gate is FilterKind.LENGTH_RATIO:
        if _char_count(pair.source_text) == 0:
            # ratio undefined; reachable only when Empty is disabled or
            # ordered after this gate
            return _reject(pair, gate, "inf")
        ratio = length_ratio(pair)
        if not config.min_len_ratio <= ratio <= config.max_len_ratio:
            return _reject(pair, gate, f"{ratio:.2f}")
        return None
    if gate is FilterKind.LANG_ID_SOURCE:
        confidence = lang_confidence(classify_script(pair.source_text), Language.JAPANESE)
        if confidence < config.min_script_confidence:
            return _reject(pair, gate, f"{confidence:.2f}")
        return None
    if gate is FilterKind.LANG_ID_TARGET:
        confidence = lang_confidence(classify_script(pair.target_text), Language.ENGLISH)
        if confidence < config.min_script_confidence:
            return _reject(pair, gate, f"{confidence:.2f}")
        return None
    if gate is FilterKind.DUPLICATE:
        key = (nfc(pair.source_text), nfc(pair.target_text))
        first_id = seen.get(key)
        if first_id is not None:
            return _reject(pair, gate, first_id)
        seen[key] = pair.id
        return None
    raise AssertionError(f"unhandled gate {gate}")


def apply_filters(
    pairs: Sequence[SentencePair],
    config: FilterConfig = FilterConfig(),
) -> tuple[tuple[SentencePair, ...], tuple[FilterDecision, ...]]:
    """Run every enabled gate over the pairs, in order.

    Returns the kept pairs (original order) and one decision per input pair.
    A rejection names the first failing gate; the duplicate gate keeps the
    first occurrence of each (source, target) key and points later copies
    back at it. Pathological pairs become rejections, never exceptions.
    """
    kept: list[SentencePair] = []
    decisions: list[FilterDecision] = []
    seen: dict[tuple[str, str], str] = {}
    for pair in pairs:
        decision: FilterDecision | None = None
        for gate in config.enabled_filters:
            decision = _run_gate(gate, pair, config, seen)
            if decision is not None:
                break
        if decision is None:
            decision = FilterDecision(pair_id=pair.id, verdict=Verdict.PASS)
            kept.append(pair)
        decisions.append(decision)
    return tuple(kept), tuple(decisions)
