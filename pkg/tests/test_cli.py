import csv
import json

import numpy as np
import pytest

from imvcc.cli import main
from imvcc.data import load_dataset, load_mask

TINY = {"epochs_pretrain": 5, "epochs_joint": 5, "D": 8, "d0": 4, "encoder_hidden": [16], "eval_every": 0,
        "kmeans_restarts": 2}


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps(TINY))
    assert main(["synth", "--n", "60", "--k", "3", "--out", str(tmp_path / "data")]) == 0
    return tmp_path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_files_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--n", "30", "--out", str(tmp_path / name), "--seed", "4"]) == 0
    for suffix in ("view0.csv", "view1.csv", "labels.csv"):
        assert (tmp_path / "a" / f"synth.{suffix}").read_bytes() == (tmp_path / "b" / f"synth.{suffix}").read_bytes()
    ds = load_dataset(tmp_path / "a" / "synth")
    assert ds.n == 30 and ds.k == 3


def test_synth_single_cluster_and_packed(tmp_path):
    assert main(["synth", "--n", "10", "--k", "1", "--format", "packed", "--out", str(tmp_path)]) == 0
    ds = load_dataset(tmp_path / "synth.mvc", "packed")
    assert not ds.labels.any()


def test_synth_rejects_bad_args(tmp_path):
    assert main(["synth", "--n", "3", "--k", "2", "--out", str(tmp_path)]) == 2


def test_mask_command(workdir):
    assert main(["mask", "--data", str(workdir / "data" / "synth"), "--eta", "0.5", "--out", str(workdir / "m")]) == 0
    m = load_mask(workdir / "m" / "mask.csv")
    assert m.mask.shape == (60, 2) and int(m.mask.all(axis=1).sum()) == 30
    assert main(["mask", "--n", "10", "--eta", "1.0", "--out", str(workdir / "m2")]) == 2


def test_run_table(workdir):
    out = workdir / "run"
    code = main(["--config", str(workdir / "cfg.json"), "run", "--data", str(workdir / "data" / "synth"),
                 "--eta", "0.1,0.5", "--seeds", "0,1", "--out", str(out)])
    assert code == 0
    table = rows(out / "results.csv")
    assert table[0] == ["eta", "acc", "nmi", "ari", "n_ok", "status"]
    assert [r[0] for r in table[1:]] == ["0.1", "0.5"]
    for r in table[1:]:
        assert all(len(v.split(".")[1]) == 2 for v in r[1:4])
        assert r[4:] == ["2", "ok"]
    res = json.loads((out / "eta0.5" / "seed1" / "result.json").read_text())
    assert {"config_hash", "dataset_hash", "acc", "seed"} <= set(res)


def test_run_is_reproducible(workdir):
    args = ["--config", str(workdir / "cfg.json"), "run", "--data", str(workdir / "data" / "synth"), "--eta", "0.5"]
    assert main(args + ["--out", str(workdir / "r1")]) == 0
    assert main(args + ["--out", str(workdir / "r2")]) == 0
    assert (workdir / "r1" / "results.csv").read_text() == (workdir / "r2" / "results.csv").read_text()
    a = (workdir / "r1" / "eta0.5" / "seed0" / "embeddings" / "latents.csv").read_bytes()
    assert a == (workdir / "r2" / "eta0.5" / "seed0" / "embeddings" / "latents.csv").read_bytes()


def test_run_spec_errors(workdir):
    data = str(workdir / "data" / "synth")
    assert main(["run", "--data", data, "--eta", "1.0", "--out", str(workdir / "x")]) == 2
    assert not (workdir / "x").exists()
    assert main(["run", "--data", str(workdir / "missing"), "--out", str(workdir / "x")]) == 2
    (workdir / "bad.json").write_text(json.dumps({"nope": 1}))
    assert main(["--config", str(workdir / "bad.json"), "run", "--data", data, "--out", str(workdir / "x")]) == 2
    assert main(["run", "--data", data, "--grid-lambda1", "1", "--out", str(workdir / "x")]) == 2


def test_training_failure_is_marked(workdir):
    (workdir / "hot.json").write_text(json.dumps({**TINY, "lr": 1e250, "epochs_pretrain": 0}))
    out = workdir / "hot"
    with np.errstate(all="ignore"):
        code = main(["--config", str(workdir / "hot.json"), "run", "--data", str(workdir / "data" / "synth"),
                     "--eta", "0.5", "--out", str(out)])
    assert code == 3
    table = rows(out / "results.csv")
    assert len(table) == 2 and table[1][5] == "seed0:failed:training"


def test_grid(workdir):
    out = workdir / "grid"
    assert main(["--config", str(workdir / "cfg.json"), "run", "--data", str(workdir / "data" / "synth"),
                 "--eta", "0.5", "--grid-lambda1", "0,1", "--grid-lambda2", "0.5,1", "--out", str(out)]) == 0
    table = rows(out / "grid.csv")
    assert [r[:2] for r in table[1:]] == [["0", "0.5"], ["0", "1"], ["1", "0.5"], ["1", "1"]]


def test_ablate_tables(workdir):
    out = workdir / "abl"
    assert main(["--config", str(workdir / "cfg.json"), "ablate", "--data", str(workdir / "data" / "synth"),
                 "--out", str(out)]) == 0
    loss = rows(out / "ablation_loss.csv")
    contrast = rows(out / "ablation_contrast.csv")
    assert len(loss) == 8 and len(contrast) == 4
    assert loss[-1][0] == "Lr+Lc+Lz" and [r[0] for r in contrast[1:]] == ["X-Z", "X-Z,X-Z*", "X-Z*"]
    # the full-loss row equals a plain run with the same seed and eta
    main(["--config", str(workdir / "cfg.json"), "run", "--data", str(workdir / "data" / "synth"),
          "--eta", "0.5", "--out", str(workdir / "plain")])
    assert loss[-1][1:4] == rows(workdir / "plain" / "results.csv")[1][1:4]
    assert contrast[3][1:4] == loss[-1][1:4]


def test_diagnose_and_export(workdir):
    data = str(workdir / "data" / "synth")
    cfg = str(workdir / "cfg.json")
    main(["--config", cfg, "run", "--data", data, "--eta", "0.5", "--out", str(workdir / "r")])
    main(["--config", cfg, "run", "--data", data, "--eta", "0.5", "--grid-lambda1", "0", "--grid-lambda2", "1",
          "--out", str(workdir / "g")])
    run = workdir / "r" / "eta0.5" / "seed0"
    out = workdir / "diag"
    assert main(["diagnose", "--run", str(run), "--compare", str(workdir / "g" / "grid" / "l1_0_l2_1" / "seed0"),
                 "--out", str(out)]) == 0
    for v in (0, 1):
        assert (out / f"spectrum_Z_view{v}.csv").exists() and (out / f"spectrum_Zsub_view{v}.csv").exists()
    summary = json.loads((out / "diagnose.json").read_text())
    assert set(summary["trace"]["total"]) == {"min", "max", "final"}
    assert isinstance(summary["compare"]["pass"], bool)
    assert main(["diagnose", "--run", str(workdir / "nothing"), "--out", str(out)]) == 2

    ex = workdir / "ex"
    assert main(["export-embeddings", "--run", str(run), "--decode", "--out", str(ex)]) == 0
    prov = np.loadtxt(ex / "provenance.csv", delimiter=",")
    dec = np.loadtxt(ex / "decoded_view1.csv", delimiter=",", ndmin=2)
    assert dec.shape[0] == int((prov[:, 1] == 1).sum())
