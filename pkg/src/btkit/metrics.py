"""Corpus-level translation metrics and report handling.

BLEU and chrF/chrF++ are implemented here directly from their standard
definitions rather than imported, because the exact tokenization and
smoothing behavior is part of this toolkit's external contract and must
stay pinned. COMET is the opposite case: a large learned model that is
only ever consulted over a small HTTP protocol and never reimplemented.

Scoring conventions:

* BLEU: geometric mean of modified n-gram precisions (uniform weights,
  orders 1..max_order) times the brevity penalty, scaled to 0-100.
  Without smoothing any zero precision gives a score of exactly 0; add-k
  smoothing adds k to clipped matches and totals for orders >= 2 only.
* chrF: per-order F-scores (recall weighted by beta) from corpus-level
  aggregate counts, arithmetically averaged over all orders where
  hypothesis+reference totals are non-zero, scaled to 0-100. chrF++ is the
  same computation with word n-grams (pinned English tokenizer) added.
* Single reference per segment throughout; multi-reference clipping is a
  documented non-goal.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import requests

from .corpus import Language
from .errors import (
    EmptyInput,
    LengthMismatch,
    MissingMetric,
    ScorerProtocolError,
    ScorerUnreachable,
)
from .segmenter import NGramProfile, TokenSequence, char_ngrams, tokenize_english

__all__ = [
    "NGramProfile",
    "BleuConfig",
    "ChrfConfig",
    "CometClientConfig",
    "CometResult",
    "EvaluationReport",
    "SelectionMetric",
    "TableFormat",
    "Tokenization",
    "modified_precision",
    "brevity_penalty",
    "corpus_bleu",
    "chrf_score",
    "comet_score",
    "select_best_checkpoint",
    "render_report_table",
]


class Tokenization(Enum):
    ENGLISH = "english"          # pinned whitespace+punctuation scheme
    PRETOKENIZED = "pretokenized"  # trust caller's spaces


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    add_k: float | None = None  # None = no smoothing
    tokenization: Tokenization = Tokenization.ENGLISH

    def __post_init__(self):
        if not 1 <= self.max_order <= 9:
            raise ValueError(f"max_order must be in 1..9, got {self.max_order}")
        if self.add_k is not None and self.add_k <= 0:
            raise ValueError("add_k must be positive")


@dataclass(frozen=True)
class ChrfConfig:
    char_order: int = 6
    word_order: int = 0  # 2 gives chrF++
    beta: float = 2.0
    strip_whitespace: bool = True

    def __post_init__(self):
        if self.char_order < 1:
            raise ValueError("char_order must be >= 1")
        if self.word_order < 0:
            raise ValueError("word_order must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class CometClientConfig:
    endpoint: str
    timeout: float = 30.0
    batch_size: int = 8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class CometResult:
    segment_scores: tuple[float, ...]
    system_score: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvaluationReport:
    """Per-system metric scores plus corpus statistics.

    Metrics are optional so that partially scored systems (for example,
    published rows with missing cells) can still be tabulated.
    """

    system_name: str
    bleu: float | None = None
    chrf: float | None = None
    chrf_pp: float | None = None
    comet: float | None = None
    segment_count: int = 1

    def __post_init__(self):
        for name in ("bleu", "chrf", "chrf_pp"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 100:
                raise ValueError(f"{name} must be in [0, 100], got {value}")
        if self.segment_count < 1:
            raise ValueError("segment_count must be positive")

    def to_json(self) -> dict:
        obj: dict = {"system_name": self.system_name, "segment_count": self.segment_count}
        for name in ("bleu", "chrf", "chrf_pp", "comet"):
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "EvaluationReport":
        return cls(
            system_name=obj["system_name"],
            bleu=obj.get("bleu"),
            chrf=obj.get("chrf"),
            chrf_pp=obj.get("chrf_pp"),
            comet=obj.get("comet"),
            segment_count=obj.get("segment_count", 1),
        )


class SelectionMetric(Enum):
    COMET = "comet"
    CHRF = "chrf"
    BLEU = "bleu"


class TableFormat(Enum):
    MARKDOWN = "markdown"
    TSV = "tsv"


def _token_ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(
    hypotheses: Sequence[TokenSequence],
    references: Sequence[TokenSequence],
    n: int,
) -> tuple[int, int]:
    """Corpus-level clipped matches and hypothesis totals for order ``n``.

    Each hypothesis n-gram count is clipped to the count of the same n-gram
    in its reference, then summed over segments.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    clipped = 0
    total = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_counts = _token_ngram_counts(hyp.tokens, n)
        ref_counts = _token_ngram_counts(ref.tokens, n)
        for ngram, count in hyp_counts.items():
            clipped += min(count, ref_counts.get(ngram, 0))
            total += count
    return clipped, total


def brevity_penalty(hyp_length: int, ref_length: int) -> float:
    """exp(1 - r/c) for short hypotheses, 1 otherwise; exactly 0 for an
    empty hypothesis."""
    if ref_length < 1:
        raise ValueError("ref_length must be >= 1")
    if hyp_length == 0:
        return 0.0
    if hyp_length >= ref_length:
        return 1.0
    return math.exp(1.0 - ref_length / hyp_length)


def _tokenize_for_bleu(text: str, tokenization: Tokenization) -> TokenSequence:
    if tokenization is Tokenization.PRETOKENIZED:
        return TokenSequence(tokens=tuple(text.split()), language=Language.ENGLISH)
    return tokenize_english(text)


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    config: BleuConfig = BleuConfig(),
) -> float:
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyInput("cannot score an empty corpus")

    hyp_tokens = [_tokenize_for_bleu(h, config.tokenization) for h in hypotheses]
    ref_tokens = [_tokenize_for_bleu(r, config.tokenization) for r in references]

    hyp_length = sum(len(t) for t in hyp_tokens)
    ref_length = sum(len(t) for t in ref_tokens)

    log_precision_sum = 0.0
    for n in range(1, config.max_order + 1):
        clipped, total = modified_precision(hyp_tokens, ref_tokens, n)
        if config.add_k is not None and n >= 2:
            precision = (clipped + config.add_k) / (total + config.add_k)
        else:
            precision = clipped / total if total > 0 else 0.0
        if precision == 0.0:
            return 0.0
        log_precision_sum += math.log(precision)

    bp = brevity_penalty(hyp_length, ref_length)
    return 100.0 * bp * math.exp(log_precision_sum / config.max_order)


def _profile_pair_stats(hyp: NGramProfile, ref: NGramProfile) -> tuple[int, int, int]:
    matches = sum((hyp.counts & ref.counts).values())
    return matches, hyp.total(), ref.total()


def chrf_score(
    hypotheses: Sequence[str],
    references: Sequence[str],
    config: ChrfConfig = ChrfConfig(),
) -> float:
    """chrF (and chrF++ when ``word_order`` > 0) on the 0-100 scale."""
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyInput("cannot score an empty corpus")

    # One (matches, hyp_total, ref_total) accumulator per scored order:
    # char orders first, then word orders.
    order_count = config.char_order + config.word_order
    stats = [[0, 0, 0] for _ in range(order_count)]

    word_cache: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
    if config.word_order > 0:
        word_cache = [
            (tokenize_english(h).tokens, tokenize_english(r).tokens)
            for h, r in zip(hypotheses, references)
        ]

    for index, (hyp, ref) in enumerate(zip(hypotheses, references)):
        for n in range(1, config.char_order + 1):
            h_prof = char_ngrams(hyp, n, config.strip_whitespace)
            r_prof = char_ngrams(ref, n, config.strip_whitespace)
            matches, h_total, r_total = _profile_pair_stats(h_prof, r_prof)
            row = stats[n - 1]
            row[0] += matches
            row[1] += h_total
            row[2] += r_total
        for n in range(1, config.word_order + 1):
            h_tokens, r_tokens = word_cache[index]
            h_counts = _token_ngram_counts(h_tokens, n)
            r_counts = _token_ngram_counts(r_tokens, n)
            row = stats[config.char_order + n - 1]
            row[0] += sum((h_counts & r_counts).values())
            row[1] += sum(h_counts.values())
            row[2] += sum(r_counts.values())

    beta_sq = config.beta * config.beta
    f_scores = []
    for matches, h_total, r_total in stats:
        if h_total + r_total == 0:
            continue  # order unobservable on both sides; excluded from the mean
        precision = matches / h_total if h_total > 0 else 0.0
        recall = matches / r_total if r_total > 0 else 0.0
        denominator = beta_sq * precision + recall
        if denominator > 0:
            f_scores.append((1 + beta_sq) * precision * recall / denominator)
        else:
            f_scores.append(0.0)
    if not f_scores:
        return 0.0
    return 100.0 * sum(f_scores) / len(f_scores)


def _post_score_batch(
    client: CometClientConfig,
    sources: Sequence[str],
    hypotheses: Sequence[str],
    references: Sequence[str],
) -> tuple[list[float], float]:
    url = client.endpoint.rstrip("/") + "/score"
    body = {
        "sources": list(sources),
        "hypotheses": list(hypotheses),
        "references": list(references),
    }
    try:
        response = requests.post(url, json=body, timeout=client.timeout)
    except (requests.ConnectionError, requests.Timeout) as exc:
        raise ScorerUnreachable(f"scorer at {client.endpoint} unreachable: {exc}") from exc
    if response.status_code != 200:
        raise ScorerProtocolError(f"scorer returned HTTP {response.status_code}")
    try:
        payload = response.json()
    except ValueError as exc:
        raise ScorerProtocolError("scorer response is not JSON") from exc
    if not isinstance(payload, dict) or "scores" not in payload or "system_score" not in payload:
        raise ScorerProtocolError("scorer response missing 'scores'/'system_score'")
    scores = payload["scores"]
    if not isinstance(scores, list) or len(scores) != len(hypotheses):
        raise ScorerProtocolError(
            f"scorer returned {len(scores) if isinstance(scores, list) else '?'} scores "
            f"for {len(hypotheses)} segments"
        )
    return [float(s) for s in scores], float(payload["system_score"])


def comet_score(
    sources: Sequence[str],
    hypotheses: Sequence[str],
    references: Sequence[str],
    client: CometClientConfig,
) -> CometResult:
    """Score (source, hypothesis, reference) triples via the external scorer.

    Batches of at most ``batch_size`` are posted; a failed batch is retried
    once before the error propagates. The system score is the scorer's own
    value (size-weighted across batches) and is checked against the mean of
    the segment scores; disagreement beyond 1e-6 attaches a warning rather
    than failing the run.
    """
    if not (len(sources) == len(hypotheses) == len(references)):
        raise LengthMismatch(
            f"sources/hypotheses/references lengths differ: "
            f"{len(sources)}/{len(hypotheses)}/{len(references)}"
        )
    if not hypotheses:
        raise EmptyInput("cannot score an empty corpus")

    segment_scores: list[float] = []
    weighted_system = 0.0
    warnings: list[str] = []
    for start in range(0, len(hypotheses), client.batch_size):
        end = start + client.batch_size
        batch = (sources[start:end], hypotheses[start:end], references[start:end])
        try:
            scores, system = _post_score_batch(client, *batch)
        except (ScorerUnreachable, ScorerProtocolError):
            scores, system = _post_score_batch(client, *batch)  # one retry
        segment_scores.extend(scores)
        weighted_system += system * len(scores)

    system_score = weighted_system / len(segment_scores)
    mean_score = sum(segment_scores) / len(segment_scores)
    if abs(system_score - mean_score) > 1e-6:
        warnings.append(
            f"scorer system score {system_score:.6f} differs from "
            f"segment mean {mean_score:.6f}"
        )
    return CometResult(
        segment_scores=tuple(segment_scores),
        system_score=system_score,
        warnings=tuple(warnings),
    )


def _criterion_value(report: EvaluationReport, criterion: SelectionMetric) -> float | None:
    return {
        SelectionMetric.COMET: report.comet,
        SelectionMetric.CHRF: report.chrf,
        SelectionMetric.BLEU: report.bleu,
    }[criterion]


def select_best_checkpoint(
    reports: Sequence[tuple[str, EvaluationReport]],
    criterion: SelectionMetric = SelectionMetric.COMET,
) -> str:
    """Return the checkpoint id with the maximal criterion value; ties go to
    the earliest entry."""
    if not reports:
        raise EmptyInput("no reports to select from")
    best_id = None
    best_value = None
    for checkpoint_id, report in reports:
        value = _criterion_value(report, criterion)
        if value is None:
            raise MissingMetric(
                f"report {checkpoint_id!r} has no {criterion.value} score"
            )
        if best_value is None or value > best_value:
            best_id = checkpoint_id
            best_value = value
    return best_id


def _format_cell(value: float | None, places: int) -> str:
    return "--" if value is None else f"{value:.{places}f}"


def render_report_table(
    reports: Sequence[tuple[str, EvaluationReport]],
    format: TableFormat = TableFormat.MARKDOWN,
) -> str:
    """Render one row per system (System | BLEU | chrF | COMET); output is
    byte-stable for fixed input."""
    if not reports:
        raise EmptyInput("no reports to render")
    rows = [
        (
            name,
            _format_cell(report.bleu, 2),
            _format_cell(report.chrf, 2),
            _format_cell(report.comet, 3),
        )
        for name, report in reports
    ]
    header = ("System", "BLEU", "chrF", "COMET")
    if format is TableFormat.TSV:
        lines = ["\t".join(header)]
        lines.extend("\t".join(row) for row in rows)
    else:
        lines = ["| " + " | ".join(header) + " |"]
        lines.append("| " + " | ".join(["---"] * len(header)) + " |")
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def evaluation_report_to_json_str(report: EvaluationReport) -> str:
    return json.dumps(report.to_json(), ensure_ascii=False, separators=(",", ":"), sort_keys=True)
