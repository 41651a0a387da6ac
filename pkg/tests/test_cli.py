import json

import numpy as np
import pytest

from dgae import cli
from dgae.graph import write_edge_file
from dgae.models import load_checkpoint
from dgae.synthetic import planted_partition


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    g = planted_partition(n=90, m=40, p_in=0.12, seed=5)
    write_edge_file(root / "toy.edges.tsv", g.edges)
    np.savetxt(root / "toy.feat.tsv", g.features, delimiter="\t", fmt="%g")
    return g, root / "toy.edges.tsv", root / "toy.feat.tsv"


@pytest.fixture(autouse=True)
def _no_output_env(monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)


def _args(dataset, out, *extra):
    _, edges, feats = dataset
    return ["run", "--edges", str(edges), "--features", str(feats), "--epochs", "6", "--n-runs", "2",
            "--out", str(out), *extra]


def test_run_writes_results(dataset, tmp_path):
    code = cli.main(_args(dataset, tmp_path / "r", "--variant", "DGAE", "--k", "3", "--workers", "1"))
    assert code == 0
    runs = (tmp_path / "r" / "runs.csv").read_text().splitlines()
    assert runs[0] == ",".join(cli.RUN_COLUMNS) and len(runs) == 3
    summary = (tmp_path / "r" / "summary.csv").read_text().splitlines()
    assert summary[0] == ",".join(cli.SUMMARY_COLUMNS)
    row = dict(zip(cli.SUMMARY_COLUMNS, summary[1].split(",")))
    assert row["dataset"] == "toy" and row["k"] == "3" and row["complete"] == "True"
    # the summary recomputes from the per-run rows
    aucs = np.array([float(line.split(",")[2]) for line in runs[1:]])
    assert abs(float(row["auc_mean"]) - aucs.mean()) < 1e-12
    assert abs(float(row["auc_std"]) - aucs.std(ddof=1)) < 1e-12


def test_parallel_and_serial_outputs_are_identical(dataset, tmp_path):
    assert cli.main(_args(dataset, tmp_path / "a", "--workers", "1")) == 0
    assert cli.main(_args(dataset, tmp_path / "b", "--workers", "2")) == 0
    for name in ("runs.csv", "summary.csv", "history_run0.csv", "history_run1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_file_and_flag_precedence(dataset, tmp_path):
    _, edges, feats = dataset
    cfg = {"edges": str(edges), "features": str(feats), "epochs": 4, "n_runs": 1, "variant": "VGAE",
           "output_dir": str(tmp_path / "from_file"), "workers": 1}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["run", "--config", str(path), "--variant", "GAE"]) == 0
    resolved = json.loads((tmp_path / "from_file" / "config.json").read_text())
    assert resolved["variant"] == "GAE" and resolved["epochs"] == 4


def test_output_env_override(dataset, tmp_path, monkeypatch):
    _, edges, feats = dataset
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    code = cli.main(["run", "--edges", str(edges), "--epochs", "2", "--n-runs", "1", "--workers", "1"])
    assert code == 0 and (tmp_path / "env" / "summary.csv").exists()


def test_sweep_long_format(dataset, tmp_path):
    _, edges, feats = dataset
    code = cli.main(["sweep", "--edges", str(edges), "--features", str(feats), "--k-list", "1,2",
                     "--epochs", "3", "--n-runs", "2", "--workers", "1", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "dataset,variant,k,run,auc,ap"
    assert [line.split(",")[2:4] for line in lines[1:]] == [["1", "0"], ["1", "1"], ["2", "0"], ["2", "1"]]
    assert (tmp_path / "k2" / "summary.csv").exists()


def test_export_embeddings(dataset, tmp_path):
    g, edges, feats = dataset
    assert cli.main(_args(dataset, tmp_path, "--save-checkpoints", "--workers", "1", "--variant", "VGAE")) == 0
    ckpt = tmp_path / "model_run1.npz"
    _, meta = load_checkpoint(ckpt)
    assert meta["split_seed"] == 1
    out = tmp_path / "emb.tsv"
    assert cli.main(["export-embeddings", "--edges", str(edges), "--features", str(feats),
                     "--checkpoint", str(ckpt), "--output", str(out)]) == 0
    emb = np.loadtxt(out, delimiter="\t")
    assert emb.shape == (g.n, 16)


def test_split_and_info(dataset, tmp_path, capsys):
    _, edges, feats = dataset
    assert cli.main(["split", "--edges", str(edges), "--out", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / "test_neg.tsv").exists()
    assert cli.main(["info", "--edges", str(edges), "--features", str(feats)]) == 0
    out = capsys.readouterr().out
    assert "nodes            90" in out and "features         40" in out


def test_verify_theory(tmp_path):
    assert cli.main(["verify-theory", "--out", str(tmp_path), "--graphs", "2", "--k-max", "4",
                     "--walk-k-max", "5"]) == 0
    assert (tmp_path / "expansion.csv").read_text().splitlines()[0] == "k,max_abs_err,pass"
    walk = (tmp_path / "walk_P3.csv").read_text().splitlines()
    assert walk[0] == "k,dispersion" and walk[1] == "1,0.5"


def test_verify_theory_failure_exit_code(tmp_path):
    # a negative tolerance can never be met
    assert cli.main(["verify-theory", "--out", str(tmp_path), "--graphs", "1", "--k-max", "2",
                     "--tol", "-1", "--walk-k-max", "2"]) == cli.EXIT_THEORY


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["run"],
    ["run", "--edges", "/does/not/exist"],
    ["sweep", "--edges", "{edges}"],
    ["run", "--edges", "{edges}", "--variant", "NOPE"],
    ["run", "--edges", "{edges}", "--variant", "DGAE", "--k", "1"],
    ["run", "--edges", "{edges}", "--epochs", "zero"],
])
def test_usage_errors_exit_one(argv, dataset):
    _, edges, _ = dataset
    assert cli.main([a.format(edges=edges) for a in argv]) == cli.EXIT_USAGE


def test_unknown_config_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"learning_rate": 0.1}))
    assert cli.main(["run", "--config", str(path)]) == cli.EXIT_USAGE


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failed_run_is_recorded(dataset, tmp_path):
    # divergent learning rate: the run fails, the summary is marked incomplete
    code = cli.main(_args(dataset, tmp_path, "--lr", "1e300", "--workers", "1", "--n-runs", "1"))
    assert code == cli.EXIT_RUNTIME
    assert "failed" in (tmp_path / "runs.csv").read_text()
    assert (tmp_path / "summary.csv").read_text().splitlines()[1].endswith("False")
