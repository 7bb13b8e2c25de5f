import json

import pytest

from aucner.cli import build_parser, main
from aucner.corpus import read_conll
from aucner.sampling import read_manifest


def test_prepare_writes_corpus_and_vocab(tmp_path, capsys):
    assert main(["prepare", "--out", str(tmp_path)]) == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert set(stats) == {"train", "dev", "test"}
    train = read_conll(tmp_path / "train.conll")
    assert len(train) == stats["train"]["sentences"]
    vocab = json.loads((tmp_path / "vocab.json").read_text())
    assert len(vocab["words"]) == len(set(vocab["words"])) > 100
    assert vocab["min_count"] == 1 and vocab["digest"]
    assert "vocab size" in capsys.readouterr().out


def test_prepare_reads_a_directory(tmp_path):
    main(["prepare", "--out", str(tmp_path / "gen")])
    assert main(["prepare", "--corpus", str(tmp_path / "gen"), "--out", str(tmp_path / "again")]) == 0
    a = json.loads((tmp_path / "gen" / "stats.json").read_text())
    b = json.loads((tmp_path / "again" / "stats.json").read_text())
    assert a == b


def test_sample_manifest(tmp_path):
    out = tmp_path / "m.jsonl"
    assert main(["sample", "--size", "100", "--entity-pct", "5", "--unit", "sentences", "--partitions", "3", "--out", str(out)]) == 0
    parts = read_manifest(out)
    assert len(parts) == 3
    assert all(abs(p.entity_pct - 5) <= 0.5 for p in parts)


def test_train_from_manifest(tmp_path, capsys):
    man = tmp_path / "m.jsonl"
    main(["sample", "--size", "20", "--partitions", "1", "--out", str(man)])
    out = tmp_path / "runs.jsonl"
    ckpt = tmp_path / "model.json"
    assert main(["train", "--manifest", str(man), "--method", "CE", "--epochs", "2",
                 "--out", str(out), "--checkpoint", str(ckpt)]) == 0
    rec = json.loads(out.read_text().splitlines()[0])
    assert rec["config"]["loss_kind"] == "CE" and rec["checkpoint"] == str(ckpt)
    assert ckpt.is_file()
    assert "F1=" in capsys.readouterr().out


def test_sweep_and_report(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"name": "s", "methods": ["CE"], "sizes": [20], "partitions": 3}))
    assert main(["sweep", "--config", str(spec), "--epochs", "2", "--size", "20", "50", "--out", str(tmp_path)]) == 0
    agg = tmp_path / "aggregates" / "s.json"
    doc = json.loads(agg.read_text())
    assert doc["spec"]["epochs"] == 2 and doc["spec"]["partitions"] == 3
    assert [c["size"] for c in doc["cells"]] == [20, 50]
    assert main(["report", "--aggregates", str(agg), "--format", "curve", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "s_curve_size.csv").is_file()


def test_sweep_reports_total_failure(tmp_path, capsys):
    rc = main(["sweep", "--method", "CE", "--size", "100", "--entity-pct", "95", "--unit", "sentences",
               "--partitions", "1", "--epochs", "1", "--out", str(tmp_path)])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_unknown_method_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "--method", "SVM"])


def test_subcommand_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
