"""CLI integration: each subcommand through main(argv) in-process, exit
codes, stdout summaries, output files, and manifest bookkeeping."""

import json

import pytest

from httpmock import MockService, constant_scorer

from btkit.cli import RunConfig, load_run_config, main, run_config_from_json
from btkit.errors import ConfigError

SYN_PROV = {"kind": "synthetic", "backend_id": "mock", "round": 1}


def write_seed_tsv(path, n):
    lines = [f"これは文{i}です\tThis is sentence number {i} here" for i in range(n)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_mono(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_pairs_jsonl(path, rows):
    path.write_text(
        "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows),
        encoding="utf-8",
    )
    return path


def read_jsonl(path):
    return [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line
    ]


def manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))


# --- ingest ---


def test_ingest_basic(tmp_path, capsys):
    tsv = write_seed_tsv(tmp_path / "seed.tsv", 5)
    out = tmp_path / "out"
    assert main(["ingest", "--parallel", str(tsv), "--out-dir", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "pairs=5 train=0 valid=0 mono=0"
    rows = read_jsonl(out / "seed.jsonl")
    assert len(rows) == 5
    assert rows[0]["id"] == "seed:1"
    assert rows[0]["provenance"] == {"kind": "seed"}
    data = manifest(out)
    assert "seed.jsonl" in data["stages"]["ingest"]["outputs"]
    assert "config_digest" in data


def test_ingest_split_and_mono(tmp_path, capsys):
    tsv = write_seed_tsv(tmp_path / "seed.tsv", 10)
    mono = write_mono(tmp_path / "mono.txt", ["猫がいる", "", "犬もいる"])
    out = tmp_path / "out"
    code = main(
        [
            "ingest",
            "--parallel", str(tsv),
            "--mono", str(mono),
            "--split", "0.8",
            "--seed", "7",
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "pairs=10 train=8 valid=2 mono=2"
    assert len(read_jsonl(out / "train.jsonl")) == 8
    assert len(read_jsonl(out / "valid.jsonl")) == 2
    # blank line kept so downstream line numbers match the original file
    assert (out / "mono.txt").read_text(encoding="utf-8") == "猫がいる\n\n犬もいる\n"


def test_ingest_split_partitions(tmp_path, capsys):
    tsv = write_seed_tsv(tmp_path / "seed.tsv", 10)
    out = tmp_path / "out"
    main(["ingest", "--parallel", str(tsv), "--split", "0.8", "--out-dir", str(out)])
    capsys.readouterr()
    train_ids = {r["id"] for r in read_jsonl(out / "train.jsonl")}
    valid_ids = {r["id"] for r in read_jsonl(out / "valid.jsonl")}
    seed_ids = {r["id"] for r in read_jsonl(out / "seed.jsonl")}
    assert train_ids | valid_ids == seed_ids
    assert not train_ids & valid_ids


def test_ingest_deterministic(tmp_path, capsys):
    tsv = write_seed_tsv(tmp_path / "seed.tsv", 12)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert (
            main(
                [
                    "ingest",
                    "--parallel", str(tsv),
                    "--split", "0.75",
                    "--seed", "42",
                    "--out-dir", str(out),
                ]
            )
            == 0
        )
    capsys.readouterr()
    for name in ("seed.jsonl", "train.jsonl", "valid.jsonl", "manifest.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_ingest_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.tsv"
    code = main(["ingest", "--parallel", str(missing), "--out-dir", str(tmp_path / "o")])
    assert code == 1
    assert str(missing) in capsys.readouterr().err


# --- backtranslate ---


def test_backtranslate_mock(tmp_path, capsys):
    mono = write_mono(tmp_path / "mono.txt", [f"文{i}" for i in range(10)])
    out = tmp_path / "out"
    code = main(["backtranslate", "--mono", str(mono), "--out-dir", str(out)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "requested=10 translated=10 failed=0"
    rows = read_jsonl(out / "synthetic.jsonl")
    assert len(rows) == 10
    assert rows[0]["id"] == "mock:bt:1:1"
    assert rows[0]["tgt"] == "MT:文0"
    assert rows[0]["provenance"]["kind"] == "synthetic"
    assert (out / "failures.jsonl").read_text(encoding="utf-8") == ""


def test_backtranslate_deterministic(tmp_path, capsys):
    mono = write_mono(tmp_path / "mono.txt", ["猫がいる", "犬もいる"])
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert main(["backtranslate", "--mono", str(mono), "--out-dir", str(out)]) == 0
    capsys.readouterr()
    assert (out_a / "synthetic.jsonl").read_bytes() == (out_b / "synthetic.jsonl").read_bytes()
    assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()


def test_backtranslate_unreachable_is_exit_2(tmp_path, capsys):
    mono = write_mono(tmp_path / "mono.txt", ["猫"])
    code = main(
        [
            "backtranslate",
            "--mono", str(mono),
            "--backend", "http://127.0.0.1:1",
            "--timeout", "0.5",
            "--max-retries", "0",
            "--out-dir", str(tmp_path / "out"),
        ]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_backtranslate_rejects_bad_backend(tmp_path, capsys):
    mono = write_mono(tmp_path / "mono.txt", ["猫"])
    code = main(
        ["backtranslate", "--mono", str(mono), "--backend", "ftp://x", "--out-dir", str(tmp_path / "o")]
    )
    assert code == 1
    capsys.readouterr()


# --- filter ---


def test_filter_stats_and_outputs(tmp_path, capsys):
    rows = [
        {"id": "mock:bt:1:1", "src": "こんにちは", "tgt": "Hello there now", "provenance": SYN_PROV},
        {"id": "mock:bt:1:2", "src": "こんにちは", "tgt": "", "provenance": SYN_PROV},
        {"id": "mock:bt:1:3", "src": "こんにちは", "tgt": "Hello there now", "provenance": SYN_PROV},
        {"id": "mock:bt:1:4", "src": "ありがとう", "tgt": "Thank you kindly", "provenance": SYN_PROV},
    ]
    pairs = write_pairs_jsonl(tmp_path / "synthetic.jsonl", rows)
    out = tmp_path / "out"
    assert main(["filter", "--pairs", str(pairs), "--out-dir", str(out)]) == 0
    line = capsys.readouterr().out.strip()
    assert "kept=2" in line
    assert "reject.Empty=1" in line
    assert "reject.Duplicate=1" in line
    kept = read_jsonl(out / "kept.jsonl")
    assert [r["id"] for r in kept] == ["mock:bt:1:1", "mock:bt:1:4"]
    decisions = read_jsonl(out / "decisions.jsonl")
    assert len(decisions) == 4
    assert decisions[1]["reason"] == "Empty"
    assert decisions[2]["reason"] == "Duplicate"
    assert decisions[2]["detail"] == "mock:bt:1:1"


def test_filter_all_pass(tmp_path, capsys):
    rows = [
        {"id": f"mock:bt:1:{i}", "src": "こんにちは", "tgt": f"Hello there number {i}", "provenance": SYN_PROV}
        for i in range(1, 6)
    ]
    pairs = write_pairs_jsonl(tmp_path / "p.jsonl", rows)
    assert main(["filter", "--pairs", str(pairs), "--out-dir", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.strip() == "kept=5"


def test_filter_flag_overrides(tmp_path, capsys):
    rows = [
        {"id": "mock:bt:1:1", "src": "こんにちは", "tgt": "Hi", "provenance": SYN_PROV},
    ]
    pairs = write_pairs_jsonl(tmp_path / "p.jsonl", rows)
    # ratio 2/5 = 0.40: rejected at default min 0.5, kept once lowered
    assert main(["filter", "--pairs", str(pairs), "--out-dir", str(tmp_path / "a")]) == 0
    assert "reject.LengthRatio=1" in capsys.readouterr().out
    assert (
        main(
            [
                "filter",
                "--pairs", str(pairs),
                "--min-len-ratio", "0.3",
                "--out-dir", str(tmp_path / "b"),
            ]
        )
        == 0
    )
    assert capsys.readouterr().out.strip() == "kept=1"


def test_filter_invalid_bounds(tmp_path, capsys):
    rows = [{"id": "mock:bt:1:1", "src": "猫", "tgt": "cat", "provenance": SYN_PROV}]
    pairs = write_pairs_jsonl(tmp_path / "p.jsonl", rows)
    code = main(
        [
            "filter",
            "--pairs", str(pairs),
            "--min-len-ratio", "3.0",
            "--max-len-ratio", "2.0",
            "--out-dir", str(tmp_path / "o"),
        ]
    )
    assert code == 1
    capsys.readouterr()


# --- assemble ---


def seed_jsonl(tmp_path, n):
    rows = [
        {"id": f"seed:{i + 1}", "src": f"これは文{i}です", "tgt": f"This is sentence {i}", "provenance": {"kind": "seed"}}
        for i in range(n)
    ]
    return write_pairs_jsonl(tmp_path / "seed.jsonl", rows)


def synthetic_jsonl(tmp_path, n):
    rows = [
        {"id": f"mock:bt:1:{i + 1}", "src": f"文{i}", "tgt": f"MT:sentence {i}", "provenance": SYN_PROV}
        for i in range(n)
    ]
    return write_pairs_jsonl(tmp_path / "synthetic_kept.jsonl", rows)


def test_assemble_basic(tmp_path, capsys):
    seed = seed_jsonl(tmp_path, 10)
    synthetic = synthetic_jsonl(tmp_path, 30)
    out = tmp_path / "out"
    code = main(
        [
            "assemble",
            "--seed", str(seed),
            "--synthetic", str(synthetic),
            "--ratio", "2.0",
            "--shuffle-seed", "42",
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "records=30 seed=10 synthetic=20"
    records = read_jsonl(out / "train_records.jsonl")
    assert len(records) == 30
    assert set(records[0]) == {"prompt", "completion", "id", "provenance"}
    assert any(r["prompt"].startswith("Translate Japanese to English.") for r in records)


def test_assemble_without_synthetic(tmp_path, capsys):
    seed = seed_jsonl(tmp_path, 4)
    out = tmp_path / "out"
    assert main(["assemble", "--seed", str(seed), "--out-dir", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "records=4 seed=4 synthetic=0"


def test_assemble_deterministic(tmp_path, capsys):
    seed = seed_jsonl(tmp_path, 8)
    synthetic = synthetic_jsonl(tmp_path, 8)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert (
            main(
                [
                    "assemble",
                    "--seed", str(seed),
                    "--synthetic", str(synthetic),
                    "--shuffle-seed", "9",
                    "--out-dir", str(out),
                ]
            )
            == 0
        )
    capsys.readouterr()
    assert (out_a / "train_records.jsonl").read_bytes() == (out_b / "train_records.jsonl").read_bytes()


def test_assemble_template_file(tmp_path, capsys):
    seed = seed_jsonl(tmp_path, 2)
    template = tmp_path / "template.txt"
    template.write_text("JA: {src}\nEN: {tgt}\n", encoding="utf-8")
    out = tmp_path / "out"
    code = main(
        ["assemble", "--seed", str(seed), "--template-file", str(template), "--out-dir", str(out)]
    )
    assert code == 0
    capsys.readouterr()
    records = read_jsonl(out / "train_records.jsonl")
    assert all(r["prompt"].startswith("JA: ") for r in records)


def test_assemble_invalid_template_file(tmp_path, capsys):
    seed = seed_jsonl(tmp_path, 2)
    template = tmp_path / "template.txt"
    template.write_text("JA: {src}\nEN:", encoding="utf-8")
    code = main(
        ["assemble", "--seed", str(seed), "--template-file", str(template), "--out-dir", str(tmp_path / "o")]
    )
    assert code == 1
    capsys.readouterr()


# --- evaluate ---

SEGMENTS = [
    "the cat sat on the mat",
    "a dog barked at the moon",
    "birds fly south in winter",
    "rain fell through the night",
]


def test_evaluate_identity(tmp_path, capsys):
    hyp = write_mono(tmp_path / "hyp.txt", SEGMENTS)
    ref = write_mono(tmp_path / "ref.txt", SEGMENTS)
    out = tmp_path / "out"
    code = main(
        ["evaluate", "--hyp", str(hyp), "--ref", str(ref), "--system-name", "ft", "--out-dir", str(out)]
    )
    assert code == 0
    line = capsys.readouterr().out.strip()
    assert "bleu=100.00" in line
    assert "chrf=100.00" in line
    assert "chrf_pp=100.00" in line
    assert "comet=" not in line
    assert f"segments={len(SEGMENTS)}" in line
    report = json.loads((out / "report_ft.json").read_text(encoding="utf-8"))
    assert report["bleu"] == 100.0
    assert "comet" not in report


def test_evaluate_length_mismatch(tmp_path, capsys):
    hyp = write_mono(tmp_path / "hyp.txt", SEGMENTS)
    ref = write_mono(tmp_path / "ref.txt", SEGMENTS[:2])
    code = main(["evaluate", "--hyp", str(hyp), "--ref", str(ref), "--out-dir", str(tmp_path / "o")])
    assert code == 1
    capsys.readouterr()


def test_evaluate_with_comet(tmp_path, capsys):
    hyp = write_mono(tmp_path / "hyp.txt", SEGMENTS)
    ref = write_mono(tmp_path / "ref.txt", SEGMENTS)
    src = write_mono(tmp_path / "src.txt", ["猫が敷物に座った"] * len(SEGMENTS))
    out = tmp_path / "out"
    with MockService(constant_scorer(0.597)) as service:
        code = main(
            [
                "evaluate",
                "--hyp", str(hyp),
                "--ref", str(ref),
                "--src", str(src),
                "--comet-endpoint", service.url,
                "--system-name", "ft bt",
                "--out-dir", str(out),
            ]
        )
    assert code == 0
    assert "comet=0.597" in capsys.readouterr().out
    report = json.loads((out / "report_ft_bt.json").read_text(encoding="utf-8"))
    assert report["comet"] == pytest.approx(0.597)


def test_evaluate_comet_requires_src(tmp_path, capsys):
    hyp = write_mono(tmp_path / "hyp.txt", SEGMENTS)
    ref = write_mono(tmp_path / "ref.txt", SEGMENTS)
    code = main(
        [
            "evaluate",
            "--hyp", str(hyp),
            "--ref", str(ref),
            "--comet-endpoint", "http://127.0.0.1:1",
            "--out-dir", str(tmp_path / "o"),
        ]
    )
    assert code == 1
    capsys.readouterr()


def test_evaluate_comet_unreachable_is_exit_2(tmp_path, capsys):
    hyp = write_mono(tmp_path / "hyp.txt", SEGMENTS)
    ref = write_mono(tmp_path / "ref.txt", SEGMENTS)
    src = write_mono(tmp_path / "src.txt", SEGMENTS)
    code = main(
        [
            "evaluate",
            "--hyp", str(hyp),
            "--ref", str(ref),
            "--src", str(src),
            "--comet-endpoint", "http://127.0.0.1:1",
            "--comet-timeout", "0.5",
            "--out-dir", str(tmp_path / "o"),
        ]
    )
    assert code == 2
    capsys.readouterr()


# --- report ---

TABLE2 = {
    "base": {"system_name": "Mistral 7B Base", "bleu": 0.63, "comet": 0.460},
    "bt": {"system_name": "Mistral 7B Base + BT", "bleu": 0.18, "comet": 0.468},
    "ft": {"system_name": "Mistral 7B FT", "bleu": 1.97, "comet": 0.589},
    "ftbt": {
        "system_name": "Mistral 7B FT + BT",
        "bleu": 1.41,
        "chrf": 15.87,
        "comet": 0.597,
    },
}


def write_reports(tmp_path):
    paths = []
    for checkpoint_id, fields in TABLE2.items():
        obj = dict(fields)
        obj["segment_count"] = 100
        path = tmp_path / f"{checkpoint_id}.json"
        path.write_text(json.dumps(obj), encoding="utf-8")
        paths.append(str(path))
    return paths


def test_report_selects_best(tmp_path, capsys):
    paths = write_reports(tmp_path)
    out = tmp_path / "out"
    code = main(["report", "--reports", *paths, "--criterion", "comet", "--out-dir", str(out)])
    assert code == 0
    output = capsys.readouterr().out
    assert "best=ftbt" in output
    assert "| Mistral 7B FT + BT | 1.41 | 15.87 | 0.597 |" in output
    assert "| Mistral 7B Base | 0.63 | -- | 0.460 |" in output
    table = (out / "report.md").read_text(encoding="utf-8")
    assert table.count("\n") == 6
    assert (out / "report.png").read_bytes().startswith(b"\x89PNG")


def test_report_tsv_format(tmp_path, capsys):
    paths = write_reports(tmp_path)
    out = tmp_path / "out"
    code = main(["report", "--reports", *paths, "--format", "tsv", "--out-dir", str(out)])
    assert code == 0
    capsys.readouterr()
    lines = (out / "report.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "System\tBLEU\tchrF\tCOMET"
    assert lines[4] == "Mistral 7B FT + BT\t1.41\t15.87\t0.597"


def test_report_byte_stable(tmp_path, capsys):
    paths = write_reports(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert main(["report", "--reports", *paths, "--out-dir", str(out)]) == 0
    capsys.readouterr()
    assert (out_a / "report.md").read_bytes() == (out_b / "report.md").read_bytes()
    assert (out_a / "report.png").read_bytes() == (out_b / "report.png").read_bytes()


def test_report_missing_metric_is_exit_1(tmp_path, capsys):
    paths = write_reports(tmp_path)
    code = main(
        ["report", "--reports", *paths, "--criterion", "chrf", "--out-dir", str(tmp_path / "o")]
    )
    assert code == 1
    capsys.readouterr()


# --- config files ---


def test_run_config_round_trip():
    assert run_config_from_json(RunConfig().to_json()) == RunConfig()


def test_run_config_unknown_key(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"learning_rat": 1e-5}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(config)


def test_run_config_lr_exceeds_max(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps({"learning_rate": 5e-5, "max_learning_rate": 3e-5}), encoding="utf-8"
    )
    with pytest.raises(ConfigError):
        load_run_config(config)


def test_run_config_nested_unknown_key(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"mix": {"ratio": 2.0}}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(config)


def test_config_drives_filter_stage(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps({"filter": {"min_len_ratio": 0.1, "max_len_ratio": 9.0}}),
        encoding="utf-8",
    )
    rows = [{"id": "mock:bt:1:1", "src": "こんにちは", "tgt": "Hi", "provenance": SYN_PROV}]
    pairs = write_pairs_jsonl(tmp_path / "p.jsonl", rows)
    code = main(
        ["filter", "--pairs", str(pairs), "--config", str(config), "--out-dir", str(tmp_path / "o")]
    )
    assert code == 0
    assert capsys.readouterr().out.strip() == "kept=1"


def test_bad_config_is_exit_1(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"batch_size": -1}), encoding="utf-8")
    rows = [{"id": "mock:bt:1:1", "src": "猫", "tgt": "cat", "provenance": SYN_PROV}]
    pairs = write_pairs_jsonl(tmp_path / "p.jsonl", rows)
    code = main(
        ["filter", "--pairs", str(pairs), "--config", str(config), "--out-dir", str(tmp_path / "o")]
    )
    assert code == 1
    capsys.readouterr()


# --- run-all and manifest ---


def test_run_all_chains_stages(tmp_path, capsys):
    tsv = write_seed_tsv(tmp_path / "seed.tsv", 20)
    mono = write_mono(tmp_path / "mono.txt", [f"文{i}" for i in range(30)])
    out = tmp_path / "out"
    code = main(
        [
            "run-all",
            "--parallel", str(tsv),
            "--mono", str(mono),
            "--out-dir", str(out),
        ]
    )
    assert code == 0
    output = capsys.readouterr().out
    assert "pairs=20" in output
    assert "requested=30 translated=30 failed=0" in output
    assert (out / "train_records.jsonl").exists()
    data = manifest(out)
    assert set(data["stages"]) == {"ingest", "backtranslate", "filter", "assemble"}


def test_manifest_accumulates_and_no_tmp(tmp_path, capsys):
    mono = write_mono(tmp_path / "mono.txt", ["猫がいる"])
    tsv = write_seed_tsv(tmp_path / "seed.tsv", 3)
    out = tmp_path / "out"
    assert main(["ingest", "--parallel", str(tsv), "--out-dir", str(out)]) == 0
    assert main(["backtranslate", "--mono", str(mono), "--out-dir", str(out)]) == 0
    capsys.readouterr()
    data = manifest(out)
    assert set(data["stages"]) == {"ingest", "backtranslate"}
    for stage in data["stages"].values():
        assert set(stage) == {"outputs", "config_digest"}
        for digest in stage["outputs"].values():
            assert len(digest) == 64
    assert not (out / "manifest.json.tmp").exists()
