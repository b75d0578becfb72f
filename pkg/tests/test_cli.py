import json
import shutil

import numpy as np
import pytest
import yaml

from patient_embed.cli import main, resolve_settings, build_parser
from patient_embed.data import Cohort

TINY = ["--hidden-dim", "3", "--projection-dim", "3", "--head-hidden-dim", "3", "--max-epochs", "1"]


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.yaml"
    spec.write_text(yaml.safe_dump({"size": 50, "seed": 4, "mortality_base_rate": 0.4}))
    assert main(["generate", "--spec", str(spec), "--out", str(root / "raw")]) == 0
    assert main(["preprocess", "--admissions", str(root / "raw/admissions.jsonl"), "--schema",
                 str(root / "raw/schema.json"), "--out", str(root / "prep")]) == 0
    assert main(["train", "--cohort", str(root / "prep/cohort.npz"), "--schema", str(root / "prep/schema.json"),
                 "--out", str(root / "runs"), *TINY]) == 0
    return root


def test_generate_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["generate", "--out", str(tmp_path / d), "--size", "30", "--seed", "9"]) == 0
    for name in ("admissions.jsonl", "schema.json", "spec.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert json.loads((tmp_path / "a/manifest.json").read_text())["seed"] == 9


def test_generate_rejects_empty_cohort(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--size", "0"]) == 1
    assert "size" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", str(tmp_path)])
    assert exc.value.code == 1
    bad = tmp_path / "c.yaml"
    bad.write_text("not_a_key: 3\n")
    assert main(["train", "--cohort", "x.npz", "--out", str(tmp_path), "--config", str(bad)]) == 1


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("hidden_dim: 5\nmax_epochs: 7\n")
    args = build_parser().parse_args(["train", "--cohort", "x", "--out", "y", "--config", str(cfg),
                                      "--max-epochs", "2"])
    s = resolve_settings(args)
    assert (s["hidden_dim"], s["max_epochs"], s["batch_size"]) == (5, 2, 64)


def test_preprocess_outputs(prepared):
    excl = (prepared / "prep/exclusions.tsv").read_text().splitlines()
    assert excl[0] == "admission_id\ttask\treason"
    cohort = Cohort.load(prepared / "prep/cohort.npz")
    assert len(cohort) == 50
    assert len(excl) - 1 == int(np.sum(cohort.stage < 0) + np.sum(cohort.mortality < 0))
    assert (prepared / "prep/manifest.json").is_file()


def test_schema_mismatch_exit_2(prepared, tmp_path):
    main(["generate", "--out", str(tmp_path / "other"), "--size", "5"])
    schema = json.loads((tmp_path / "other/schema.json").read_text())
    schema["dynamic"] = schema["dynamic"][:-1]
    (tmp_path / "s.json").write_text(json.dumps(schema))
    assert main(["train", "--cohort", str(prepared / "prep/cohort.npz"), "--schema", str(tmp_path / "s.json"),
                 "--out", str(tmp_path / "r")]) == 2


def test_train_all_runs_with_manifests(prepared):
    manifests = sorted((prepared / "runs").glob("*/*/fold*/manifest.json"))
    assert len(manifests) == 3 * 2 * 5
    run = prepared / "runs/tlstm/mortality/fold2"
    for name in ("config.json", "metrics.jsonl", "history.json", "checkpoint.npz", "embeddings_train.tsv",
                 "embeddings_test.tsv", "predictions_test.tsv"):
        assert (run / name).is_file()
    m = json.loads((run / "manifest.json").read_text())
    assert {"command", "config_hash", "seed", "inputs", "outputs", "tool_version", "wall_clock_seconds"} <= set(m)


def test_resume_skips_complete_runs(prepared):
    ckpt = prepared / "runs/lstm/stage/fold0/checkpoint.npz"
    before = ckpt.stat().st_mtime_ns
    incomplete = prepared / "runs/attn/stage/fold1"
    (incomplete / "manifest.json").unlink()
    assert main(["train", "--cohort", str(prepared / "prep/cohort.npz"), "--out", str(prepared / "runs"), *TINY]) == 0
    assert ckpt.stat().st_mtime_ns == before
    assert (incomplete / "manifest.json").is_file()


def test_embed_reproduces_run_outputs(prepared, tmp_path):
    run = prepared / "runs/attn/stage/fold3"
    assert main(["embed", "--run", str(run), "--cohort", str(prepared / "prep/cohort.npz"),
                 "--out", str(tmp_path)]) == 0
    for name in ("embeddings_train.tsv", "embeddings_test.tsv"):
        assert (tmp_path / name).read_bytes() == (run / name).read_bytes()


def test_evaluate_and_report(prepared):
    out = prepared / "eval"
    assert main(["eval-intrinsic", "--runs", str(prepared / "runs"), "--out", str(out / "intr"),
                 "--iterations", "260"]) == 0
    assert main(["eval-extrinsic", "--runs", str(prepared / "runs"), "--out", str(out / "extr")]) == 0
    assert main(["report", "--intrinsic", str(out / "intr/intrinsic.json"), "--extrinsic",
                 str(out / "extr/extrinsic.json"), "--out", str(out / "rep")]) == 0
    text = (out / "rep/report.txt").read_text()
    assert "DownstreamLR" in text and "Davies-Bouldin" in text
    assert len(list((out / "intr/projections").glob("*.tsv"))) == 15


def test_missing_fold_exit_3(prepared, tmp_path):
    runs = tmp_path / "runs"
    shutil.copytree(prepared / "runs", runs)
    (runs / "lstm/mortality/fold4/manifest.json").unlink()
    assert main(["eval-extrinsic", "--runs", str(runs), "--out", str(tmp_path / "e")]) == 3
    assert main(["report", "--intrinsic", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r")]) == 3
