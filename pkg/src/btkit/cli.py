"""Command-line pipeline driver.

One executable, one subcommand per pipeline stage (ingest, backtranslate,
filter, assemble, evaluate, report) plus a run-all convenience that chains
them. Stages communicate only through files, so any stage can be re-run
alone; every stage records what it wrote in ``manifest.json`` (content
digests, written atomically) so two runs can be compared byte for byte.

Exit codes are a stable contract: 0 success, 1 input or config error,
2 backend or network error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .assemble import (
    DEFAULT_TEMPLATE,
    MixPolicy,
    PromptTemplate,
    export_training_file,
    mix,
    render_training_records,
)
from .backtranslate import (
    BackendKind,
    BtJob,
    DecodeParams,
    TranslatorBackend,
    run_backtranslation,
)
from .corpus import (
    CorpusFormat,
    Language,
    ParallelCorpus,
    SplitSpec,
    load_monolingual,
    load_parallel,
    nfc_trim,
    pair_to_jsonl,
    split,
)
from .errors import (
    BackendUnreachable,
    ConfigError,
    PipelineError,
    ProtocolError,
    ScorerProtocolError,
    ScorerUnreachable,
)
from .figures import render_report_figure
from .filters import FilterConfig, FilterKind, apply_filters
from .metrics import (
    BleuConfig,
    ChrfConfig,
    CometClientConfig,
    EvaluationReport,
    SelectionMetric,
    TableFormat,
    chrf_score,
    comet_score,
    corpus_bleu,
    render_report_table,
    select_best_checkpoint,
)

__all__ = ["RunConfig", "load_run_config", "main"]


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class EpochRange:
    min: int = 5
    max: int = 8

    def __post_init__(self):
        if not 1 <= self.min <= self.max:
            raise ConfigError(f"epoch range {self.min}..{self.max} is invalid")


@dataclass(frozen=True)
class RunConfig:
    """Declarative description of a full fine-tuning run.

    Trainer-only fields (learning rates, warmup, precision, update budget)
    are validated here and forwarded untouched to the training component:
    one config, one digest, full-run reproducibility.
    """

    model_name: str = "mistral-7b"
    epochs: EpochRange = EpochRange()
    batch_size: int = 128
    per_device_batch: int = 4
    learning_rate: float = 2e-5
    max_learning_rate: float = 3e-5
    warmup_steps: int = 500
    optimizer: str = "adamw"
    weight_decay: float = 0.01
    dropout: float = 0.1
    grad_clip: float = 1.0
    precision: str = "float16"
    num_updates: int = 10000
    decode: DecodeParams = DecodeParams()
    selection_metric: SelectionMetric = SelectionMetric.COMET
    filter: FilterConfig = FilterConfig()
    mix: MixPolicy = MixPolicy()
    template: PromptTemplate = DEFAULT_TEMPLATE

    def __post_init__(self):
        positives = (
            ("batch_size", self.batch_size),
            ("per_device_batch", self.per_device_batch),
            ("learning_rate", self.learning_rate),
            ("max_learning_rate", self.max_learning_rate),
            ("grad_clip", self.grad_clip),
            ("num_updates", self.num_updates),
        )
        for name, value in positives:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        if self.learning_rate > self.max_learning_rate:
            raise ConfigError(
                f"learning_rate {self.learning_rate} exceeds "
                f"max_learning_rate {self.max_learning_rate}"
            )

    def to_json(self) -> dict:
        return {
            "model_name": self.model_name,
            "epochs": {"min": self.epochs.min, "max": self.epochs.max},
            "batch_size": self.batch_size,
            "per_device_batch": self.per_device_batch,
            "learning_rate": self.learning_rate,
            "max_learning_rate": self.max_learning_rate,
            "warmup_steps": self.warmup_steps,
            "optimizer": self.optimizer,
            "weight_decay": self.weight_decay,
            "dropout": self.dropout,
            "grad_clip": self.grad_clip,
            "precision": self.precision,
            "num_updates": self.num_updates,
            "decode": {
                "beam_size": self.decode.beam_size,
                "max_new_tokens": self.decode.max_new_tokens,
                "length_penalty": self.decode.length_penalty,
                "sampling": self.decode.sampling,
            },
            "selection_metric": self.selection_metric.value,
            "filter": {
                "min_len_ratio": self.filter.min_len_ratio,
                "max_len_ratio": self.filter.max_len_ratio,
                "min_script_confidence": self.filter.min_script_confidence,
                "min_chars": self.filter.min_chars,
                "enabled_filters": [k.value for k in self.filter.enabled_filters],
            },
            "mix": {
                "max_synthetic_ratio": self.mix.max_synthetic_ratio,
                "seed_upsample": self.mix.seed_upsample,
                "shuffle_seed": self.mix.shuffle_seed,
            },
            "template": {
                "template": self.template.template,
                "direction_label": self.template.direction_label,
            },
        }


def _require_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def run_config_from_json(obj: dict) -> RunConfig:
    defaults = RunConfig()
    _require_keys(obj, set(defaults.to_json()), "config")
    try:
        epochs_obj = obj.get("epochs", {})
        _require_keys(epochs_obj, {"min", "max"}, "epochs")
        decode_obj = obj.get("decode", {})
        _require_keys(
            decode_obj,
            {"beam_size", "max_new_tokens", "length_penalty", "sampling"},
            "decode",
        )
        filter_obj = obj.get("filter", {})
        _require_keys(
            filter_obj,
            {"min_len_ratio", "max_len_ratio", "min_script_confidence",
             "min_chars", "enabled_filters"},
            "filter",
        )
        mix_obj = obj.get("mix", {})
        _require_keys(
            mix_obj, {"max_synthetic_ratio", "seed_upsample", "shuffle_seed"}, "mix"
        )
        template_obj = obj.get("template", {})
        _require_keys(template_obj, {"template", "direction_label"}, "template")

        enabled = filter_obj.get(
            "enabled_filters", [k.value for k in defaults.filter.enabled_filters]
        )
        return RunConfig(
            model_name=obj.get("model_name", defaults.model_name),
            epochs=EpochRange(
                min=epochs_obj.get("min", defaults.epochs.min),
                max=epochs_obj.get("max", defaults.epochs.max),
            ),
            batch_size=obj.get("batch_size", defaults.batch_size),
            per_device_batch=obj.get("per_device_batch", defaults.per_device_batch),
            learning_rate=obj.get("learning_rate", defaults.learning_rate),
            max_learning_rate=obj.get("max_learning_rate", defaults.max_learning_rate),
            warmup_steps=obj.get("warmup_steps", defaults.warmup_steps),
            optimizer=obj.get("optimizer", defaults.optimizer),
            weight_decay=obj.get("weight_decay", defaults.weight_decay),
            dropout=obj.get("dropout", defaults.dropout),
            grad_clip=obj.get("grad_clip", defaults.grad_clip),
            precision=obj.get("precision", defaults.precision),
            num_updates=obj.get("num_updates", defaults.num_updates),
            decode=DecodeParams(
                beam_size=decode_obj.get("beam_size", defaults.decode.beam_size),
                max_new_tokens=decode_obj.get(
                    "max_new_tokens", defaults.decode.max_new_tokens
                ),
                length_penalty=decode_obj.get(
                    "length_penalty", defaults.decode.length_penalty
                ),
                sampling=decode_obj.get("sampling", defaults.decode.sampling),
            ),
            selection_metric=SelectionMetric(
                obj.get("selection_metric", defaults.selection_metric.value)
            ),
            filter=FilterConfig(
                min_len_ratio=filter_obj.get(
                    "min_len_ratio", defaults.filter.min_len_ratio
                ),
                max_len_ratio=filter_obj.get(
                    "max_len_ratio", defaults.filter.max_len_ratio
                ),
                min_script_confidence=filter_obj.get(
                    "min_script_confidence", defaults.filter.min_script_confidence
                ),
                min_chars=filter_obj.get("min_chars", defaults.filter.min_chars),
                enabled_filters=tuple(FilterKind(k) for k in enabled),
            ),
            mix=MixPolicy(
                max_synthetic_ratio=mix_obj.get(
                    "max_synthetic_ratio", defaults.mix.max_synthetic_ratio
                ),
                seed_upsample=mix_obj.get("seed_upsample", defaults.mix.seed_upsample),
                shuffle_seed=mix_obj.get("shuffle_seed", defaults.mix.shuffle_seed),
            ),
            template=PromptTemplate(
                template=template_obj.get("template", defaults.template.template),
                direction_label=template_obj.get(
                    "direction_label", defaults.template.direction_label
                ),
            ),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: str | Path) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return run_config_from_json(obj)


# ---------------------------------------------------------------------------
# Manifest


def _canonical_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=True)


def _digest_obj(obj) -> str:
    return hashlib.sha256(_canonical_json(obj).encode("utf-8")).hexdigest()


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def update_manifest(
    out_dir: Path, stage: str, outputs: dict[str, Path], stage_config: dict
) -> None:
    """Record a stage's output digests and effective config in the run
    manifest. Write-temp-then-rename keeps concurrent readers consistent."""
    manifest_path = out_dir / "manifest.json"
    data: dict = {"stages": {}}
    if manifest_path.exists():
        try:
            data = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            data = {"stages": {}}
    stages = data.setdefault("stages", {})
    stages[stage] = {
        "outputs": {name: _sha256_file(path) for name, path in sorted(outputs.items())},
        "config_digest": _digest_obj(stage_config),
    }
    data["config_digest"] = _digest_obj(
        {name: entry["config_digest"] for name, entry in sorted(stages.items())}
    )
    tmp_path = manifest_path.with_name("manifest.json.tmp")
    tmp_path.write_text(_canonical_json(data) + "\n", encoding="utf-8")
    os.replace(tmp_path, manifest_path)


# ---------------------------------------------------------------------------
# Stage helpers (shared between subcommands and run-all)


def _write_jsonl(path: Path, lines: Sequence[str]) -> None:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _save_pairs(path: Path, corpus: ParallelCorpus) -> None:
    _write_jsonl(path, [pair_to_jsonl(pair) for pair in corpus.pairs])


def _prepare_out_dir(raw: str) -> Path:
    out_dir = Path(raw)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def stage_ingest(
    parallel: Path,
    format: CorpusFormat,
    name: str | None,
    mono: Path | None,
    split_fraction: float | None,
    split_seed: int,
    out_dir: Path,
) -> str:
    corpus = load_parallel(parallel, format, name=name)
    outputs: dict[str, Path] = {}

    seed_path = out_dir / "seed.jsonl"
    _save_pairs(seed_path, corpus)
    outputs["seed.jsonl"] = seed_path

    train_n = valid_n = 0
    if split_fraction is not None:
        train, valid = split(corpus, SplitSpec(split_fraction, split_seed))
        train_path = out_dir / "train.jsonl"
        valid_path = out_dir / "valid.jsonl"
        _save_pairs(train_path, train)
        _save_pairs(valid_path, valid)
        outputs["train.jsonl"] = train_path
        outputs["valid.jsonl"] = valid_path
        train_n, valid_n = len(train), len(valid)

    mono_n = 0
    if mono is not None:
        mono_corpus = load_monolingual(mono, language_hint=Language.JAPANESE)
        # rewrite normalized, preserving physical line numbers (blanks stay)
        raw = mono.read_text(encoding="utf-8")
        normalized = [nfc_trim(line) for line in raw.splitlines()]
        mono_path = out_dir / "mono.txt"
        mono_path.write_text("".join(line + "\n" for line in normalized), encoding="utf-8")
        outputs["mono.txt"] = mono_path
        mono_n = len(mono_corpus)

    update_manifest(
        out_dir,
        "ingest",
        outputs,
        {
            "parallel": str(parallel),
            "format": format.value,
            "name": name,
            "mono": str(mono) if mono else None,
            "split": split_fraction,
            "seed": split_seed,
        },
    )
    return f"pairs={len(corpus)} train={train_n} valid={valid_n} mono={mono_n}"


def _make_backend(raw: str, backend_id: str | None, decode: DecodeParams, timeout: float) -> TranslatorBackend:
    if raw == "mock":
        return TranslatorBackend(
            kind=BackendKind.MOCK,
            backend_id=backend_id or "mock",
            decode_params=decode,
        )
    if not raw.startswith(("http://", "https://")):
        raise ConfigError(f"--backend must be 'mock' or an http(s) URL, got {raw!r}")
    return TranslatorBackend(
        kind=BackendKind.REMOTE,
        backend_id=backend_id or "remote",
        endpoint=raw,
        decode_params=decode,
        timeout=timeout,
    )


def stage_backtranslate(
    mono: Path,
    backend: TranslatorBackend,
    batch_size: int,
    max_retries: int,
    round: int,
    out_dir: Path,
) -> str:
    corpus = load_monolingual(mono, language_hint=Language.JAPANESE)
    job = BtJob(
        input=corpus,
        backend=backend,
        batch_size=batch_size,
        max_retries=max_retries,
        round=round,
    )
    result = run_backtranslation(job)

    synthetic_path = out_dir / "synthetic.jsonl"
    _save_pairs(synthetic_path, ParallelCorpus(pairs=result.pairs, name="synthetic"))
    failures_path = out_dir / "failures.jsonl"
    _write_jsonl(
        failures_path,
        [
            json.dumps({"line": number, "error": message}, ensure_ascii=False)
            for number, message in result.failures
        ],
    )
    update_manifest(
        out_dir,
        "backtranslate",
        {"synthetic.jsonl": synthetic_path, "failures.jsonl": failures_path},
        {
            "mono": str(mono),
            "backend": backend.kind.value,
            "backend_id": backend.backend_id,
            "endpoint": backend.endpoint,
            "batch_size": batch_size,
            "max_retries": max_retries,
            "round": round,
            "decode": {
                "beam_size": backend.decode_params.beam_size,
                "max_new_tokens": backend.decode_params.max_new_tokens,
                "length_penalty": backend.decode_params.length_penalty,
                "sampling": backend.decode_params.sampling,
            },
        },
    )
    stats = result.stats
    return f"requested={stats.requested} translated={stats.translated} failed={stats.failed}"


def stage_filter(pairs_path: Path, config: FilterConfig, out_dir: Path) -> str:
    corpus = load_parallel(pairs_path, CorpusFormat.JSONL)
    kept, decisions = apply_filters(corpus.pairs, config)

    kept_path = out_dir / "kept.jsonl"
    _save_pairs(kept_path, ParallelCorpus(pairs=kept, name=f"{corpus.name}:kept"))
    decisions_path = out_dir / "decisions.jsonl"
    _write_jsonl(
        decisions_path,
        [
            json.dumps(d.to_json(), ensure_ascii=False, separators=(",", ":"))
            for d in decisions
        ],
    )
    update_manifest(
        out_dir,
        "filter",
        {"kept.jsonl": kept_path, "decisions.jsonl": decisions_path},
        {
            "pairs": str(pairs_path),
            "min_len_ratio": config.min_len_ratio,
            "max_len_ratio": config.max_len_ratio,
            "min_script_confidence": config.min_script_confidence,
            "min_chars": config.min_chars,
            "enabled_filters": [k.value for k in config.enabled_filters],
        },
    )
    reject_counts = {kind: 0 for kind in config.enabled_filters}
    for decision in decisions:
        if decision.reason is not None:
            reject_counts[decision.reason] += 1
    parts = [f"kept={len(kept)}"]
    parts.extend(
        f"reject.{kind.value}={count}"
        for kind, count in reject_counts.items()
        if count
    )
    return " ".join(parts)


def stage_assemble(
    seed_path: Path,
    synthetic_path: Path | None,
    policy: MixPolicy,
    template: PromptTemplate,
    out_dir: Path,
) -> str:
    seed = load_parallel(seed_path, CorpusFormat.JSONL)
    if synthetic_path is not None:
        synthetic = load_parallel(synthetic_path, CorpusFormat.JSONL)
    else:
        synthetic = ParallelCorpus(pairs=(), name="synthetic:empty")

    mixed = mix(seed, synthetic, policy)
    records = render_training_records(mixed, template)
    records_path = out_dir / "train_records.jsonl"
    export_training_file(records, records_path)

    update_manifest(
        out_dir,
        "assemble",
        {"train_records.jsonl": records_path},
        {
            "seed": str(seed_path),
            "synthetic": str(synthetic_path) if synthetic_path else None,
            "max_synthetic_ratio": policy.max_synthetic_ratio,
            "seed_upsample": policy.seed_upsample,
            "shuffle_seed": policy.shuffle_seed,
            "template": template.template,
            "direction_label": template.direction_label,
        },
    )
    synthetic_used = len(mixed) - len(seed) * policy.seed_upsample
    return f"records={len(records)} seed={len(seed)} synthetic={synthetic_used}"


def _read_segments(path: Path) -> list[str]:
    return [nfc_trim(line) for line in path.read_text(encoding="utf-8").splitlines()]


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "system"


def stage_evaluate(
    hyp_path: Path,
    ref_path: Path,
    src_path: Path | None,
    comet_endpoint: str | None,
    comet_batch_size: int,
    comet_timeout: float,
    system_name: str,
    out_dir: Path,
) -> str:
    hypotheses = _read_segments(hyp_path)
    references = _read_segments(ref_path)

    bleu = corpus_bleu(hypotheses, references, BleuConfig())
    chrf = chrf_score(hypotheses, references, ChrfConfig())
    chrf_pp = chrf_score(hypotheses, references, ChrfConfig(word_order=2))

    comet = None
    if comet_endpoint:
        if src_path is None:
            raise ConfigError("--src is required when --comet-endpoint is given")
        sources = _read_segments(src_path)
        result = comet_score(
            sources,
            hypotheses,
            references,
            CometClientConfig(
                endpoint=comet_endpoint,
                timeout=comet_timeout,
                batch_size=comet_batch_size,
            ),
        )
        comet = result.system_score
        for warning in result.warnings:
            print(f"warning: {warning}", file=sys.stderr)

    report = EvaluationReport(
        system_name=system_name,
        bleu=bleu,
        chrf=chrf,
        chrf_pp=chrf_pp,
        comet=comet,
        segment_count=len(hypotheses),
    )
    report_path = out_dir / f"report_{_slug(system_name)}.json"
    report_path.write_text(
        _canonical_json(report.to_json()) + "\n", encoding="utf-8"
    )
    update_manifest(
        out_dir,
        "evaluate",
        {report_path.name: report_path},
        {
            "hyp": str(hyp_path),
            "ref": str(ref_path),
            "src": str(src_path) if src_path else None,
            "comet_endpoint": comet_endpoint,
            "system_name": system_name,
        },
    )
    parts = [f"bleu={bleu:.2f}", f"chrf={chrf:.2f}", f"chrf_pp={chrf_pp:.2f}"]
    if comet is not None:
        parts.append(f"comet={comet:.3f}")
    parts.append(f"segments={len(hypotheses)}")
    return " ".join(parts)


def _checkpoint_id(path: Path) -> str:
    stem = path.stem
    return stem[len("report_"):] if stem.startswith("report_") else stem


def stage_report(
    report_paths: Sequence[Path],
    criterion: SelectionMetric,
    format: TableFormat,
    out_dir: Path,
) -> str:
    entries: list[tuple[str, EvaluationReport]] = []
    rows: list[tuple[str, EvaluationReport]] = []
    for path in report_paths:
        obj = json.loads(path.read_text(encoding="utf-8"))
        report = EvaluationReport.from_json(obj)
        entries.append((_checkpoint_id(path), report))
        rows.append((report.system_name, report))

    best = select_best_checkpoint(entries, criterion)
    table = render_report_table(rows, format)

    table_name = "report.md" if format is TableFormat.MARKDOWN else "report.tsv"
    table_path = out_dir / table_name
    table_path.write_text(table, encoding="utf-8")
    figure_path = render_report_figure(rows, out_dir / "report.png")

    update_manifest(
        out_dir,
        "report",
        {table_name: table_path, "report.png": figure_path},
        {
            "reports": [str(p) for p in report_paths],
            "criterion": criterion.value,
            "format": format.value,
        },
    )
    return table + f"best={best}"


# ---------------------------------------------------------------------------
# Subcommands


def _filter_config_from_args(args) -> FilterConfig:
    base = load_run_config(args.config).filter if args.config else FilterConfig()
    overrides = {}
    if args.min_len_ratio is not None:
        overrides["min_len_ratio"] = args.min_len_ratio
    if args.max_len_ratio is not None:
        overrides["max_len_ratio"] = args.max_len_ratio
    if args.min_script_confidence is not None:
        overrides["min_script_confidence"] = args.min_script_confidence
    if args.min_chars is not None:
        overrides["min_chars"] = args.min_chars
    if not overrides:
        return base
    try:
        return FilterConfig(
            min_len_ratio=overrides.get("min_len_ratio", base.min_len_ratio),
            max_len_ratio=overrides.get("max_len_ratio", base.max_len_ratio),
            min_script_confidence=overrides.get(
                "min_script_confidence", base.min_script_confidence
            ),
            min_chars=overrides.get("min_chars", base.min_chars),
            enabled_filters=base.enabled_filters,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _template_from_args(args) -> PromptTemplate:
    if args.template_file:
        text = Path(args.template_file).read_text(encoding="utf-8")
        if text.endswith("\n"):
            text = text[:-1]  # editors append one; placeholders decide validity
        return PromptTemplate(template=text, direction_label=args.direction_label)
    if args.config:
        return load_run_config(args.config).template
    return DEFAULT_TEMPLATE


def cmd_ingest(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    summary = stage_ingest(
        parallel=Path(args.parallel),
        format=CorpusFormat(args.format),
        name=args.name,
        mono=Path(args.mono) if args.mono else None,
        split_fraction=args.split,
        split_seed=args.seed,
        out_dir=out_dir,
    )
    print(summary)
    return 0


def cmd_backtranslate(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    decode = DecodeParams(
        beam_size=args.beam_size,
        max_new_tokens=args.max_new_tokens,
        length_penalty=args.length_penalty,
        sampling=args.sampling,
    )
    backend = _make_backend(args.backend, args.backend_id, decode, args.timeout)
    summary = stage_backtranslate(
        mono=Path(args.mono),
        backend=backend,
        batch_size=args.batch_size,
        max_retries=args.max_retries,
        round=args.round,
        out_dir=out_dir,
    )
    print(summary)
    return 0


def cmd_filter(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    config = _filter_config_from_args(args)
    summary = stage_filter(Path(args.pairs), config, out_dir)
    print(summary)
    return 0


def cmd_assemble(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    if args.config:
        base = load_run_config(args.config).mix
    else:
        base = MixPolicy()
    try:
        policy = MixPolicy(
            max_synthetic_ratio=(
                args.ratio if args.ratio is not None else base.max_synthetic_ratio
            ),
            seed_upsample=(
                args.upsample if args.upsample is not None else base.seed_upsample
            ),
            shuffle_seed=(
                args.shuffle_seed if args.shuffle_seed is not None else base.shuffle_seed
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    template = _template_from_args(args)
    summary = stage_assemble(
        seed_path=Path(args.seed),
        synthetic_path=Path(args.synthetic) if args.synthetic else None,
        policy=policy,
        template=template,
        out_dir=out_dir,
    )
    print(summary)
    return 0


def cmd_evaluate(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    summary = stage_evaluate(
        hyp_path=Path(args.hyp),
        ref_path=Path(args.ref),
        src_path=Path(args.src) if args.src else None,
        comet_endpoint=args.comet_endpoint,
        comet_batch_size=args.comet_batch_size,
        comet_timeout=args.comet_timeout,
        system_name=args.system_name,
        out_dir=out_dir,
    )
    print(summary)
    return 0


def cmd_report(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    criterion = SelectionMetric(args.criterion)
    format = TableFormat(args.format)
    summary = stage_report(
        [Path(p) for p in args.reports], criterion, format, out_dir
    )
    print(summary)
    return 0


def cmd_run_all(args) -> int:
    out_dir = _prepare_out_dir(args.out_dir)
    config = load_run_config(args.config) if args.config else RunConfig()

    print(
        stage_ingest(
            parallel=Path(args.parallel),
            format=CorpusFormat(args.format),
            name=args.name,
            mono=Path(args.mono),
            split_fraction=args.split,
            split_seed=args.seed,
            out_dir=out_dir,
        )
    )
    backend = _make_backend(args.backend, args.backend_id, config.decode, args.timeout)
    print(
        stage_backtranslate(
            mono=out_dir / "mono.txt",
            backend=backend,
            batch_size=args.batch_size,
            max_retries=args.max_retries,
            round=1,
            out_dir=out_dir,
        )
    )
    print(stage_filter(out_dir / "synthetic.jsonl", config.filter, out_dir))
    seed_file = out_dir / ("train.jsonl" if args.split is not None else "seed.jsonl")
    print(
        stage_assemble(
            seed_path=seed_file,
            synthetic_path=out_dir / "kept.jsonl",
            policy=config.mix,
            template=config.template,
            out_dir=out_dir,
        )
    )
    if args.hyp and args.ref:
        print(
            stage_evaluate(
                hyp_path=Path(args.hyp),
                ref_path=Path(args.ref),
                src_path=Path(args.src) if args.src else None,
                comet_endpoint=args.comet_endpoint,
                comet_batch_size=8,
                comet_timeout=30.0,
                system_name=args.system_name,
                out_dir=out_dir,
            )
        )
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="btkit",
        description="Backtranslation training-set pipeline for Japanese-English MT.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load parallel/monolingual corpora, split, write canonical JSONL")
    p.add_argument("--parallel", required=True, help="parallel corpus file")
    p.add_argument("--format", choices=["tsv", "jsonl"], default="tsv")
    p.add_argument("--name", default=None, help="corpus name (default: file stem)")
    p.add_argument("--mono", default=None, help="monolingual Japanese file")
    p.add_argument("--split", type=float, default=None, help="train fraction, e.g. 0.9")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed for the split")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("backtranslate", help="translate monolingual Japanese into synthetic pairs")
    p.add_argument("--mono", required=True)
    p.add_argument("--backend", default="mock", help="'mock' or translator base URL")
    p.add_argument("--backend-id", default=None)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-retries", type=int, default=1)
    p.add_argument("--round", type=int, default=1)
    p.add_argument("--beam-size", type=int, default=3)
    p.add_argument("--max-new-tokens", type=int, default=256)
    p.add_argument("--length-penalty", type=float, default=1.0)
    p.add_argument("--sampling", action="store_true")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_backtranslate)

    p = sub.add_parser("filter", help="apply quality gates to synthetic pairs")
    p.add_argument("--pairs", required=True, help="JSONL pairs file")
    p.add_argument("--config", default=None, help="run config JSON")
    p.add_argument("--min-len-ratio", type=float, default=None)
    p.add_argument("--max-len-ratio", type=float, default=None)
    p.add_argument("--min-script-confidence", type=float, default=None)
    p.add_argument("--min-chars", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("assemble", help="mix seed with synthetic and render training records")
    p.add_argument("--seed", required=True, help="seed pairs JSONL")
    p.add_argument("--synthetic", default=None, help="filtered synthetic pairs JSONL")
    p.add_argument("--ratio", type=float, default=None, help="max synthetic:seed ratio")
    p.add_argument("--upsample", type=int, default=None, help="seed upsample factor")
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--template-file", default=None)
    p.add_argument("--direction-label", default="ja-en")
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--hyp", required=True, help="hypotheses, one per line")
    p.add_argument("--ref", required=True, help="references, one per line")
    p.add_argument("--src", default=None, help="sources, required for COMET")
    p.add_argument("--comet-endpoint", default=None, help="external scorer base URL")
    p.add_argument("--comet-batch-size", type=int, default=8)
    p.add_argument("--comet-timeout", type=float, default=30.0)
    p.add_argument("--system-name", default="system")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="tabulate reports, render figures, pick the best system")
    p.add_argument("--reports", nargs="+", required=True, help="report JSON files")
    p.add_argument("--criterion", choices=[m.value for m in SelectionMetric], default="comet")
    p.add_argument("--format", choices=[f.value for f in TableFormat], default="markdown")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run-all", help="chain ingest, backtranslate, filter, assemble")
    p.add_argument("--parallel", required=True)
    p.add_argument("--format", choices=["tsv", "jsonl"], default="tsv")
    p.add_argument("--name", default=None)
    p.add_argument("--mono", required=True)
    p.add_argument("--split", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default="mock")
    p.add_argument("--backend-id", default=None)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-retries", type=int, default=1)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--config", default=None)
    p.add_argument("--hyp", default=None, help="optional hypotheses to evaluate")
    p.add_argument("--ref", default=None)
    p.add_argument("--src", default=None)
    p.add_argument("--comet-endpoint", default=None)
    p.add_argument("--system-name", default="system")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BackendUnreachable, ScorerUnreachable, ProtocolError, ScorerProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        missing = exc.filename if exc.filename else exc
        print(f"error: file not found: {missing}", file=sys.stderr)
        return 1
    except (PipelineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
