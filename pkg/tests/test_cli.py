import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from vntpp.cli import main
from vntpp.data import load_dataset
from vntpp.hawkes import load_spec

SMALL = {"model": {"encoder": {"D": 8, "H": 2, "d_k": 4, "d_v": 4, "n_layers": 1, "d_ff": 16}},
         "train": {"batch_size": 8, "mc_samples": 5, "latent_dim": 4}}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--spec", "synthetic2", "--n", "40", "--seed", "3", "--name", "s2", "--horizon", "12",
                 "--out", str(root / "gen"), "-q"]) == 0
    (root / "small.json").write_text(json.dumps(SMALL))
    assert main(["train", "--config", str(root / "small.json"), "--data", str(root / "gen" / "s2.jsonl"),
                 "--epochs", "2", "--out", str(root / "train"), "-q"]) == 0
    return root


def _sha(p):
    return hashlib.sha256(p.read_bytes()).hexdigest()


def test_generate_is_deterministic(tmp_path):
    for tag in ("a", "b"):
        assert main(["generate", "--spec", "synthetic1", "--n", "25", "--seed", "11", "--name", "d",
                     "--out", str(tmp_path / tag), "-q"]) == 0
    assert (tmp_path / "a" / "d.jsonl").read_bytes() == (tmp_path / "b" / "d.jsonl").read_bytes()
    main(["generate", "--spec", "synthetic1", "--n", "25", "--seed", "12", "--name", "d", "--out", str(tmp_path / "c"),
          "-q"])
    assert (tmp_path / "c" / "d.jsonl").read_bytes() != (tmp_path / "a" / "d.jsonl").read_bytes()


def test_generate_summary_and_manifest(workspace):
    gen = workspace / "gen"
    ds = load_dataset(gen / "s2.jsonl")
    summary = json.loads((gen / "summary.json").read_text())
    assert summary["sequences"] == len(ds) == 40
    assert summary["mean_length"] == pytest.approx(ds.mean_length())
    assert all(s.horizon == 12.0 for s in ds)
    manifest = json.loads((gen / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    for entry in manifest["artifacts"]:
        p = gen / entry["path"]
        assert entry["sha256"] == _sha(p) and entry["bytes"] == p.stat().st_size
    resolved = json.loads((gen / "resolved_config.json").read_text())
    assert resolved["seed"] == 3 and resolved["n_sequences"] == 40


def test_generate_config_file_and_flag_override(tmp_path):
    (tmp_path / "g.json").write_text(json.dumps({"spec": "synthetic1", "n_sequences": 5, "seed": 1, "horizon": 4.0}))
    assert main(["generate", "--config", str(tmp_path / "g.json"), "--n", "7", "--out", str(tmp_path), "-q"]) == 0
    ds = load_dataset(tmp_path / "synthetic1.jsonl")
    assert len(ds) == 7 and ds[0].horizon == 4.0


@pytest.mark.parametrize("argv", [
    ["generate", "--spec", "synthetic1", "--n", "0"],
    ["generate", "--n", "3"],
    ["generate", "--spec", "nowhere.json", "--n", "3"],
    ["train", "--data", "missing.jsonl"],
    ["train", "--variant", "rnn", "--data", "x.jsonl"],
    ["predict", "--checkpoint", "missing.npz", "--data", "x.jsonl"],
    ["evaluate", "--config", "missing.json"],
    ["bogus"],
])
def test_usage_errors_exit_one(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "bogus" else argv) == 1


def test_train_outputs(workspace):
    out = workspace / "train"
    for name in ("model.npz", "last.npz", "train_log.jsonl", "resolved_config.json", "manifest.json"):
        assert (out / name).exists()
    log = [json.loads(x) for x in (out / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in log] == [1, 2]
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["model"]["encoder"]["D"] == 8 and resolved["train"]["epochs"] == 2


def test_train_resume_matches_uninterrupted(workspace, tmp_path):
    cfg, data = str(workspace / "small.json"), str(workspace / "gen" / "s2.jsonl")
    main(["train", "--config", cfg, "--data", data, "--epochs", "3", "--out", str(tmp_path / "full"), "-q"])
    main(["train", "--config", cfg, "--data", data, "--epochs", "3", "--out", str(tmp_path / "part"), "-q",
          "--resume", str(workspace / "train" / "last.npz")])
    a = json.loads((tmp_path / "full" / "train_log.jsonl").read_text().splitlines()[-1])
    b = json.loads((tmp_path / "part" / "train_log.jsonl").read_text().splitlines()[-1])
    assert a["epoch"] == b["epoch"] == 3
    assert abs(a["train"]["total"] - b["train"]["total"]) <= 1e-9


@pytest.mark.parametrize("variant,kernel", [("hp-ek", "exponential"), ("hp-gk", "gaussian")])
def test_baseline_variants(workspace, tmp_path, variant, kernel):
    assert main(["train", "--variant", variant, "--data", str(workspace / "gen" / "s2.jsonl"), "--epochs", "20",
                 "--out", str(tmp_path), "-q"]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["kernel"]["type"] == kernel
    assert {"mean_gap", "val_loglik", "fit_meta"} <= set(fit)


def test_predict_jsonl(workspace, tmp_path):
    assert main(["predict", "--checkpoint", str(workspace / "train" / "model.npz"),
                 "--data", str(workspace / "gen" / "s2.jsonl"), "--out", str(tmp_path), "-q"]) == 0
    rows = [json.loads(x) for x in (tmp_path / "predictions.jsonl").read_text().splitlines()]
    ds = load_dataset(workspace / "gen" / "s2.jsonl")
    assert len(rows) == ds.n_events - len(ds)
    keys = {"seq_id", "pos", "t_true", "t_hat", "k_true", "k_hat", "type_probs", "pdf_mass"}
    assert all(set(r) == keys for r in rows)
    r = rows[0]
    assert r["k_hat"] == int(np.argmax(r["type_probs"])) and len(r["type_probs"]) == 3


def test_evaluate_metrics_deterministic(workspace, tmp_path):
    argv = ["evaluate", "--checkpoint", str(workspace / "train" / "model.npz"),
            "--data", str(workspace / "gen" / "s2.jsonl"), "--truth-spec", "synthetic2", "--resolution", "50", "-q"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    m = json.loads((tmp_path / "a" / "metrics.json").read_text())
    assert {"f1", "time_rmse", "time_mae", "intensity_rmse", "intensity_mae", "diversity", "n_events"} <= set(m)
    assert m == json.loads((tmp_path / "b" / "metrics.json").read_text())


def test_evaluate_with_spec_checkpoint(workspace, tmp_path):
    assert main(["evaluate", "--checkpoint", "synthetic2", "--data", str(workspace / "gen" / "s2.jsonl"),
                 "--out", str(tmp_path), "-q"]) == 1  # checkpoints must be files, not bundled names
    spec_path = tmp_path / "truth.json"
    spec_path.write_text(json.dumps(load_spec("synthetic2").to_json()))
    assert main(["evaluate", "--checkpoint", str(spec_path), "--data", str(workspace / "gen" / "s2.jsonl"),
                 "--out", str(tmp_path), "-q"]) == 0
    assert json.loads((tmp_path / "metrics.json").read_text())["n_events"] > 0


def test_type_count_mismatch_exits_one(workspace, tmp_path):
    main(["generate", "--spec", "synthetic1", "--n", "5", "--name", "k2", "--out", str(tmp_path), "-q"])
    assert main(["evaluate", "--checkpoint", str(workspace / "train" / "model.npz"), "--data",
                 str(tmp_path / "k2.jsonl"), "--truth-spec", "synthetic1", "--out", str(tmp_path), "-q"]) == 1


def test_analyze_modes(workspace, tmp_path):
    ck, data = str(workspace / "train" / "model.npz"), str(workspace / "gen" / "s2.jsonl")
    assert main(["analyze", "--mode", "svd", "--checkpoint", ck, "--data", data, "--out", str(tmp_path), "-q"]) == 0
    assert (tmp_path / "svd_projections.csv").read_text().splitlines()[0] == "x,y,z,label"
    svd = json.loads((tmp_path / "svd.json").read_text())
    assert svd["singular_values"] == sorted(svd["singular_values"], reverse=True)
    assert main(["analyze", "--mode", "trace", "--checkpoint", ck, "--data", data, "--seq-index", "2",
                 "--truth-spec", "synthetic2", "--resolution", "30", "--out", str(tmp_path), "-q"]) == 0
    header = (tmp_path / "trace_2.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "t" and len(header) == 7
    assert main(["analyze", "--mode", "gof", "--checkpoint", ck, "--data", data, "--out", str(tmp_path), "-q"]) == 0
    gof = json.loads((tmp_path / "gof.json").read_text())
    assert set(gof) == {"ks", "p", "n"} and 0 <= gof["ks"] <= 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "analyze"


def test_console_script_exit_codes(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "vntpp.cli", "generate", "--spec", "synthetic1", "--n", "2",
                         "--out", str(tmp_path), "-q"], capture_output=True, text=True)
    assert ok.returncode == 0, ok.stderr
    bad = subprocess.run([sys.executable, "-m", "vntpp.cli", "generate", "--spec", "synthetic1", "--n", "0",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert bad.returncode == 1 and "error" in bad.stderr.lower()
