import json

import numpy as np
import pytest

from delkmeans.cli import main
from delkmeans.dataset import DataMatrix, save_csv


@pytest.fixture
def blob_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(0.2, 0.03, (2000, 2)), rng.normal(0.8, 0.03, (2000, 2))])
    p = tmp_path / "data.csv"
    save_csv(p, DataMatrix(X), np.repeat([0, 1], 2000))
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("sub", ["gen", "train", "delete", "bench", "metrics"])
def test_help_exits_zero(sub, capsys):
    with pytest.raises(SystemExit) as e:
        main([sub, "--help"])
    assert e.value.code == 0
    assert "--" in capsys.readouterr().out


def test_train_heuristic_prints_epsilon(tmp_path, blob_csv, capsys):
    code, out, _ = run(
        ["train", "--algo", "qkmeans", "--csv", blob_csv, "--label-column", "-1", "--k", 2, "--heuristic", "--seed", 7, "--out", tmp_path / "m.json"],
        capsys,
    )
    assert code == 0
    assert "heuristic: epsilon=" in out and "seed=7" in out and "loss=" in out
    assert json.loads((tmp_path / "m.json").read_text())["kind"] == "qkmeans"


def test_missing_k_is_usage_error(tmp_path, blob_csv):
    with pytest.raises(SystemExit) as e:
        main(["train", "--algo", "qkmeans", "--csv", str(blob_csv), "--out", str(tmp_path / "m.json")])
    assert e.value.code == 1


def test_two_sources_is_usage_error(tmp_path, blob_csv, capsys):
    code, _, err = run(["train", "--algo", "lloyd", "--csv", blob_csv, "--synthetic", "gaussian", "--k", 2, "--out", tmp_path / "m"], capsys)
    assert code == 1 and "exactly one" in err


def test_dckmeans_heuristic_width_at_1e5(tmp_path, capsys):
    code, out, _ = run(
        ["train", "--algo", "dckmeans", "--synthetic", "gaussian", "--n-per-cluster", 20000, "--k", 5, "--heuristic", "--out", tmp_path / "m.json"],
        capsys,
    )
    assert code == 0 and "w=32" in out


def test_delete_stable_and_seed(tmp_path, blob_csv, capsys):
    model = tmp_path / "m.json"
    src = ["--csv", blob_csv, "--label-column", "-1"]
    run(["train", "--algo", "qkmeans", *src, "--k", 2, "--epsilon", 2**-5, "--seed", 3, "--out", model], capsys)
    seeds = json.loads(model.read_text())["model"]["init_row_ids"]
    stable = next(r for r in range(5, 100) if r not in seeds)
    code, out, _ = run(["delete", *src, "--model", model, "--row-id", stable], capsys)
    assert code == 0 and "retrained=false" in out and "seconds=" in out
    code, out, _ = run(["delete", *src, "--model", model, "--row-id", seeds[0]], capsys)
    assert code == 0 and "retrained=true" in out
    assert json.loads(model.read_text())["deleted_row_ids"] == [stable, seeds[0]]


def test_stale_model_is_data_error(tmp_path, blob_csv, capsys):
    model = tmp_path / "m.json"
    run(["train", "--algo", "dckmeans", "--csv", blob_csv, "--k", 2, "--width", 4, "--out", model], capsys)
    blob_csv.write_text(blob_csv.read_text() + "0.5,0.5,0\n")
    code, _, err = run(["delete", "--csv", blob_csv, "--model", model, "--row-id", 1], capsys)
    assert code == 2 and "fingerprint" in err


def test_unknown_row_is_data_error(tmp_path, blob_csv, capsys):
    model = tmp_path / "m.json"
    run(["train", "--algo", "lloyd", "--csv", blob_csv, "--k", 2, "--out", model], capsys)
    code, _, _ = run(["delete", "--csv", blob_csv, "--model", model, "--row-id", 99999], capsys)
    assert code == 2


def test_seeded_outputs_byte_identical(tmp_path, blob_csv, capsys, monkeypatch):
    monkeypatch.setenv("DELKMEANS_SEED", "5")
    for name in ("a", "b"):
        run(["train", "--algo", "qkmeans", "--csv", blob_csv, "--k", 2, "--epsilon", 0.05, "--out", tmp_path / f"{name}.json"], capsys)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text())["model"]["seed"] == 5


def test_gen_and_metrics(tmp_path, capsys):
    data = tmp_path / "g.csv"
    code, _, _ = run(
        ["gen", "--synthetic", "gaussian", "--n-per-cluster", 50, "--dim", 2, "--components", 3, "--out", data, "--deletions", 5, "--deletions-out", tmp_path / "s.txt"],
        capsys,
    )
    assert code == 0 and len((tmp_path / "s.txt").read_text().split()) == 5
    model = tmp_path / "m.json"
    run(["train", "--algo", "lloyd", "--csv", data, "--label-column", "-1", "--k", 3, "--out", model, "--centroids-out", tmp_path / "c.csv"], capsys)
    code, out, _ = run(["metrics", "--csv", data, "--label-column", "-1", "--centroids", tmp_path / "c.csv", "--json-out", tmp_path / "q.json"], capsys)
    assert code == 0 and "silhouette=" in out and "nmi=" in out
    assert set(json.loads((tmp_path / "q.json").read_text())) == {"loss", "silhouette", "nmi"}


def test_bench_all_and_speedups(tmp_path, blob_csv, capsys):
    code, out, _ = run(
        ["bench", "--algo", "all", "--csv", blob_csv, "--label-column", "-1", "--k", 2, "--heuristic", "--m", 5, "--replicates", 1, "--checkpoints", "1,5", "--out-dir", tmp_path],
        capsys,
    )
    assert code == 0
    assert "speedup qkmeans" in out and "speedup dckmeans" in out
    for algo in ("baseline", "qkmeans", "dckmeans"):
        rep = json.loads((tmp_path / f"{algo}.json").read_text())
        assert set(rep["runs"][0]["quality"]) == {"1", "5"}


def test_bench_bad_checkpoint_is_usage_error(tmp_path, blob_csv, capsys):
    code, _, _ = run(["bench", "--algo", "baseline", "--csv", blob_csv, "--k", 2, "--m", 5, "--checkpoints", "1,10", "--out-dir", tmp_path], capsys)
    assert code == 1


def test_bench_equality_mode(tmp_path, capsys):
    rng = np.random.default_rng(1)
    p = tmp_path / "tiny.csv"
    save_csv(p, DataMatrix(rng.random((12, 2))))
    code, out, _ = run(["bench", "--algo", "baseline", "--csv", p, "--k", 2, "--equality-test", 0, "--trials", 1000], capsys)
    assert code == 0 and "baseline: pass" in out
