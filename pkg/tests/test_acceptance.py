"""Acceptance gate: one test per top-level deliverable criterion, each at
its stated tolerance. These deliberately overlap the per-module suites;
this file is the single place to look for a pass/fail per criterion.
"""

import json
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import oracle_bleu, oracle_chrf

from btkit.corpus import Provenance, ProvenanceKind, SentencePair
from btkit.filters import FilterConfig, Verdict, apply_filters
from btkit.metrics import (
    BleuConfig,
    ChrfConfig,
    EvaluationReport,
    SelectionMetric,
    TableFormat,
    brevity_penalty,
    chrf_score,
    corpus_bleu,
    modified_precision,
    render_report_table,
    select_best_checkpoint,
)
from btkit.segmenter import (
    Document,
    Paragraph,
    check_parity,
    merge_document,
    split_paragraphs,
    tokenize_english,
)

BTKIT = [sys.executable, "-m", "btkit"]


def run_cli(*args):
    return subprocess.run(
        [*BTKIT, *map(str, args)], capture_output=True, text=True
    )


# ---------------------------------------------------------------------------
# Metric identity: BLEU(h,h) = chrF(h,h) = 100.00 on 20 segments, < 1 s.


def test_metric_identity_twenty_segments():
    segments = [
        f"segment number {i} contains exactly seven plain words" for i in range(20)
    ]
    started = time.perf_counter()
    bleu = corpus_bleu(segments, segments)
    chrf = chrf_score(segments, segments)
    elapsed = time.perf_counter() - started
    assert bleu == 100.0
    assert chrf == 100.0
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# Oracle equivalence: 50 seeded random segment pairs within 1e-9 of the
# brute-force enumerator (written first, from the metric definitions).

WORDS = ["the", "cat", "sat", "on", "mat", "dog", "ran", "fast", "a", "big"]


def _random_pairs(rng, n):
    pairs = []
    for _ in range(n):
        ref = [rng.choice(WORDS) for _ in range(rng.randint(1, 12))]
        hyp = list(ref) if rng.random() < 0.3 else [
            rng.choice(WORDS) for _ in range(rng.randint(0, 12))
        ]
        pairs.append((" ".join(hyp), " ".join(ref)))
    return pairs


def test_metric_oracle_equivalence_fifty_pairs():
    rng = random.Random(20250819)
    pairs = _random_pairs(rng, 50)
    tok = lambda text: list(tokenize_english(text).tokens)

    for hyp, ref in pairs:  # per-segment scores
        assert corpus_bleu([hyp], [ref]) == pytest.approx(
            oracle_bleu([tok(hyp)], [tok(ref)]), abs=1e-9
        )
        assert chrf_score([hyp], [ref]) == pytest.approx(
            oracle_chrf([hyp], [ref]), abs=1e-9
        )

    hyps = [h for h, _ in pairs]  # corpus-level aggregation
    refs = [r for _, r in pairs]
    assert corpus_bleu(hyps, refs) == pytest.approx(
        oracle_bleu([tok(h) for h in hyps], [tok(r) for r in refs]), abs=1e-9
    )
    assert corpus_bleu(hyps, refs, BleuConfig(add_k=1.0)) == pytest.approx(
        oracle_bleu([tok(h) for h in hyps], [tok(r) for r in refs], add_k=1.0),
        abs=1e-9,
    )
    assert chrf_score(hyps, refs) == pytest.approx(oracle_chrf(hyps, refs), abs=1e-9)
    assert chrf_score(hyps, refs, ChrfConfig(word_order=2)) == pytest.approx(
        oracle_chrf(hyps, refs, word_order=2, word_tokenizer=tok), abs=1e-9
    )


# ---------------------------------------------------------------------------
# Hand-derived fixtures at stated tolerances.


def test_hand_derived_fixtures():
    clipped, total = modified_precision(
        [tokenize_english("the the the the the the the")],
        [tokenize_english("the cat is on the mat")],
        1,
    )
    assert (clipped, total) == (2, 7)

    assert brevity_penalty(6, 7) == pytest.approx(0.84648, abs=1e-5)

    assert chrf_score(["cat"], ["cap"], ChrfConfig(char_order=3)) == pytest.approx(
        38.889, abs=0.001
    )


# ---------------------------------------------------------------------------
# Published result table as fixture: byte-stable 4-row render, FT+BT wins.

TABLE2_REPORTS = [
    ("base", EvaluationReport(system_name="Mistral 7B Base", bleu=0.63, comet=0.460)),
    ("bt", EvaluationReport(system_name="Mistral 7B Base + BT", bleu=0.18, comet=0.468)),
    ("ft", EvaluationReport(system_name="Mistral 7B FT", bleu=1.97, comet=0.589)),
    (
        "ftbt",
        EvaluationReport(
            system_name="Mistral 7B FT + BT", bleu=1.41, chrf=15.87, comet=0.597
        ),
    ),
]


def test_result_table_fixture_and_selection():
    rows = [(report.system_name, report) for _, report in TABLE2_REPORTS]
    first = render_report_table(rows, TableFormat.MARKDOWN)
    second = render_report_table(rows, TableFormat.MARKDOWN)
    assert first == second
    assert first.encode("utf-8") == second.encode("utf-8")

    lines = first.splitlines()
    assert len(lines) == 6  # header + rule + 4 data rows
    assert "| Mistral 7B FT + BT | 1.41 | 15.87 | 0.597 |" in lines
    assert "| Mistral 7B Base | 0.63 | -- | 0.460 |" in lines

    assert select_best_checkpoint(TABLE2_REPORTS, SelectionMetric.COMET) == "ftbt"


# ---------------------------------------------------------------------------
# End-to-end mock pipeline: 100-pair seed + 200-line monolingual file, all
# stages exit 0, stable manifest digests across two runs, assembled record
# count = seed + min(kept, cap), < 10 s, no network (mock backend).

JA_CHARS = list("猫犬鳥山川雨空火水木金土日月語あいうかきくさしすカキクネコ")


def _mono_lines():
    singles = JA_CHARS[:20]
    doubles = [a + b for a in JA_CHARS[:8] for b in JA_CHARS[8:16]][:60]
    shorts = singles + doubles  # 80 unique; "MT:"+s stays latin-heavy enough
    longs = [(a + b) * 2 for a in JA_CHARS[:10] for b in JA_CHARS[10:16]]
    duplicates = shorts[:60]
    lines = shorts + longs + duplicates
    assert len(lines) == 200
    assert len(set(shorts)) == 80 and len(set(longs)) == 60
    return lines


def _run_pipeline(seed_tsv, mono_txt, eval_txt, out_dir):
    steps = [
        ["ingest", "--parallel", seed_tsv, "--mono", mono_txt, "--out-dir", out_dir],
        [
            "backtranslate",
            "--mono", Path(out_dir) / "mono.txt",
            "--backend", "mock",
            "--out-dir", out_dir,
        ],
        [
            "filter",
            "--pairs", Path(out_dir) / "synthetic.jsonl",
            "--min-script-confidence", "0.4",
            "--out-dir", out_dir,
        ],
        [
            "assemble",
            "--seed", Path(out_dir) / "seed.jsonl",
            "--synthetic", Path(out_dir) / "kept.jsonl",
            "--ratio", "2.0",
            "--shuffle-seed", "42",
            "--out-dir", out_dir,
        ],
        [
            "evaluate",
            "--hyp", eval_txt,
            "--ref", eval_txt,
            "--system-name", "identity",
            "--out-dir", out_dir,
        ],
    ]
    for step in steps:
        proc = run_cli(*step)
        assert proc.returncode == 0, f"{step[0]} failed: {proc.stderr}"


def test_end_to_end_mock_pipeline(tmp_path):
    seed_tsv = tmp_path / "seed.tsv"
    seed_tsv.write_text(
        "".join(
            f"これは文{i}です\tThis is training sentence number {i}\n" for i in range(100)
        ),
        encoding="utf-8",
    )
    mono_txt = tmp_path / "mono.txt"
    mono_txt.write_text("".join(line + "\n" for line in _mono_lines()), encoding="utf-8")
    eval_txt = tmp_path / "eval.txt"
    eval_txt.write_text(
        "".join(f"evaluation segment number {i} reads fine\n" for i in range(20)),
        encoding="utf-8",
    )
    out_dir = tmp_path / "out"

    started = time.perf_counter()
    _run_pipeline(seed_tsv, mono_txt, eval_txt, out_dir)
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0

    kept = len((out_dir / "kept.jsonl").read_text(encoding="utf-8").splitlines())
    assert kept == 80  # 60 wrong-language targets + 60 duplicates rejected

    records = (out_dir / "train_records.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(records) == 100 + min(kept, 200)

    report = json.loads((out_dir / "report_identity.json").read_text(encoding="utf-8"))
    assert report["bleu"] == 100.0
    assert report["chrf"] == 100.0

    # second run, same inputs: manifest must come out byte-identical
    first_manifest = (out_dir / "manifest.json").read_bytes()
    _run_pipeline(seed_tsv, mono_txt, eval_txt, out_dir)
    assert (out_dir / "manifest.json").read_bytes() == first_manifest

    # and a fresh directory reproduces every output digest
    out_b = tmp_path / "out_b"
    _run_pipeline(seed_tsv, mono_txt, eval_txt, out_b)
    digests_a = json.loads(first_manifest)["stages"]
    digests_b = json.loads((out_b / "manifest.json").read_text(encoding="utf-8"))["stages"]
    assert {s: e["outputs"] for s, e in digests_a.items()} == {
        s: e["outputs"] for s, e in digests_b.items()
    }


# ---------------------------------------------------------------------------
# Filter properties, >= 1000 generated cases each.

SYN = Provenance(kind=ProvenanceKind.SYNTHETIC, backend_id="mock", round=1)
EN_WORDS = ["cat", "dog", "hello", "there", "big", "now"]


@st.composite
def filter_inputs(draw):
    n = draw(st.integers(min_value=0, max_value=10))
    pairs = []
    for i in range(n):
        src = "".join(
            draw(st.sampled_from(JA_CHARS)) for _ in range(draw(st.integers(0, 8)))
        )
        if draw(st.booleans()):
            tgt = " ".join(
                draw(st.sampled_from(EN_WORDS)) for _ in range(draw(st.integers(0, 5)))
            )
        else:
            tgt = src
        pairs.append(
            SentencePair(id=f"g{i}", source_text=src, target_text=tgt, provenance=SYN)
        )
    return pairs


PROPERTY_SETTINGS = settings(
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)


@PROPERTY_SETTINGS
@given(filter_inputs())
def test_filter_conservation_property(pairs):
    kept, decisions = apply_filters(pairs)
    assert len(decisions) == len(pairs)
    assert [d.pair_id for d in decisions] == [p.id for p in pairs]
    assert [p.id for p in kept] == [
        d.pair_id for d in decisions if d.verdict is Verdict.PASS
    ]


@PROPERTY_SETTINGS
@given(filter_inputs())
def test_filter_idempotence_property(pairs):
    kept, _ = apply_filters(pairs)
    kept_again, decisions = apply_filters(kept)
    assert kept_again == kept
    assert all(d.verdict is Verdict.PASS for d in decisions)


@PROPERTY_SETTINGS
@given(
    filter_inputs(),
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=1.5, max_value=8.0),
)
def test_filter_ratio_monotonicity_property(pairs, min_ratio, max_ratio):
    narrow = FilterConfig(min_len_ratio=min_ratio, max_len_ratio=max_ratio)
    wide = FilterConfig(min_len_ratio=min_ratio / 2, max_len_ratio=max_ratio * 2)
    kept_narrow, _ = apply_filters(pairs, narrow)
    kept_wide, _ = apply_filters(pairs, wide)
    assert {p.id for p in kept_narrow} <= {p.id for p in kept_wide}


# ---------------------------------------------------------------------------
# Paragraph parity: 500-document split/merge round trip; verdicts correct
# on constructed mismatches.

LINE_CHARS = "abcdefgh猫犬山川ネコ.,!"


def _random_document(rng, doc_id):
    paragraphs = []
    for index in range(rng.randint(1, 8)):
        lines = [
            "".join(rng.choice(LINE_CHARS) for _ in range(rng.randint(1, 12)))
            for _ in range(rng.randint(1, 5))
        ]
        paragraphs.append(Paragraph(text="\n".join(lines), index=index))
    return Document(paragraphs=tuple(paragraphs), doc_id=doc_id)


def test_paragraph_round_trip_500_documents():
    rng = random.Random(4117)
    for i in range(500):
        document = _random_document(rng, f"doc{i}")
        rebuilt = split_paragraphs(merge_document(document), document.doc_id)
        assert [p.text for p in rebuilt.paragraphs] == [
            p.text for p in document.paragraphs
        ]
        assert len(rebuilt.paragraphs) == len(document.paragraphs)


def test_parity_verdicts_on_constructed_mismatches():
    rng = random.Random(913)
    three = _random_document(rng, "src")
    matching = split_paragraphs(merge_document(three), "hyp")
    verdict = check_parity(three, matching)
    assert verdict.passed
    assert verdict.source_count == verdict.translated_count

    source = split_paragraphs("A\n\nB\n\nC", "src")
    translated = split_paragraphs("A\n\nB", "hyp")
    verdict = check_parity(source, translated)
    assert not verdict.passed
    assert (verdict.source_count, verdict.translated_count) == (3, 2)
    assert verdict.doc_id == "src"
    reverse = check_parity(translated, source)
    assert not reverse.passed
    assert (reverse.source_count, reverse.translated_count) == (2, 3)


# ---------------------------------------------------------------------------
# Determinism across process invocations: split, mix, and mock
# backtranslation produce bit-identical outputs for fixed seeds.


def _two_runs(tmp_path, label, args_for):
    payload = {}
    for run in ("first", "second"):
        out = tmp_path / f"{label}_{run}"
        proc = run_cli(*args_for(out))
        assert proc.returncode == 0, proc.stderr
        payload[run] = out
    return payload["first"], payload["second"]


def test_determinism_across_processes(tmp_path):
    seed_tsv = tmp_path / "seed.tsv"
    seed_tsv.write_text(
        "".join(f"文{i}です\tsentence number {i}\n" for i in range(10)), encoding="utf-8"
    )
    mono_txt = tmp_path / "mono.txt"
    mono_txt.write_text("猫だ\n犬だ\n鳥だ\n山だ\n川だ\n", encoding="utf-8")

    a, b = _two_runs(
        tmp_path,
        "split",
        lambda out: ["ingest", "--parallel", seed_tsv, "--split", "0.8", "--seed", "42", "--out-dir", out],
    )
    for name in ("seed.jsonl", "train.jsonl", "valid.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    a, b = _two_runs(
        tmp_path,
        "bt",
        lambda out: ["backtranslate", "--mono", mono_txt, "--backend", "mock", "--out-dir", out],
    )
    assert (a / "synthetic.jsonl").read_bytes() == (b / "synthetic.jsonl").read_bytes()

    seed_jsonl = tmp_path / "split_first" / "seed.jsonl"
    synthetic_jsonl = tmp_path / "bt_first" / "synthetic.jsonl"
    a, b = _two_runs(
        tmp_path,
        "mix",
        lambda out: [
            "assemble",
            "--seed", seed_jsonl,
            "--synthetic", synthetic_jsonl,
            "--ratio", "2.0",
            "--shuffle-seed", "42",
            "--out-dir", out,
        ],
    )
    assert (a / "train_records.jsonl").read_bytes() == (b / "train_records.jsonl").read_bytes()


# ---------------------------------------------------------------------------
# Secondary component conformance (skips until that package exists; all
# criteria above must pass without it).

BACKEND_DIR = Path(__file__).resolve().parent.parent / "backend"


def test_secondary_echo_server_conformance(tmp_path):
    if not (BACKEND_DIR / "pyproject.toml").exists():
        pytest.skip("model-backend package not present")

    import os
    import socket
    import urllib.request

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]

    env = dict(os.environ)
    env["PYTHONPATH"] = str(BACKEND_DIR / "src")
    server = subprocess.Popen(
        [
            sys.executable, "-m", "mtserve", "serve",
            "--echo", "--host", "127.0.0.1", "--port", str(port),
        ],
        env=env,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        url = f"http://127.0.0.1:{port}"
        body = json.dumps(
            {
                "texts": ["猫がいる", "犬もいる"],
                "src_lang": "ja",
                "tgt_lang": "en",
                "beam_size": 3,
                "max_new_tokens": 256,
                "length_penalty": 1.0,
                "sampling": False,
            }
        ).encode("utf-8")
        deadline = time.monotonic() + 30
        response = None
        while time.monotonic() < deadline:
            try:
                request = urllib.request.Request(
                    url + "/translate", data=body,
                    headers={"Content-Type": "application/json"},
                )
                with urllib.request.urlopen(request, timeout=5) as answer:
                    response = json.loads(answer.read().decode("utf-8"))
                break
            except OSError:
                time.sleep(0.25)
        assert response is not None, "echo server never came up"
        assert response["translations"] == ["ECHO:猫がいる", "ECHO:犬もいる"]
        assert response["decode"]["beam_size"] == 3
        assert response["decode"]["max_new_tokens"] == 256

        # the toolkit's own client interoperates with the echo server
        from btkit.backtranslate import BackendKind as BtBackendKind
        from btkit.backtranslate import TranslatorBackend, translate_batch

        backend = TranslatorBackend(
            kind=BtBackendKind.REMOTE, backend_id="echo", endpoint=url
        )
        assert translate_batch(["火", "水"], backend) == ["ECHO:火", "ECHO:水"]
    finally:
        server.terminate()
        server.wait(timeout=10)
