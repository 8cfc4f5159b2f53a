import json

import numpy as np
import pytest

from genet import cli
from genet.config import PipelineConfig
from genet.facemodel import dataset as ds

TINY = {
    "image_size": 32,
    "generator": {"epochs": 1, "batch_size": 8},
    "extractor": {"epochs": 1, "batch_size": 8},
    "subspace_samples": 50,
    "iterations": 3,
}


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    PipelineConfig.from_dict(TINY).save(config)
    data, models = root / "data", root / "models"
    assert run("gen-dataset", "--config", config, "--count", 12, "--out", data) == 0
    for what in ("extractor", "generator", "subspace"):
        assert run("train", what, "--config", config, "--data", data, "--out", models) == 0
    return root, config, data, models


def test_gen_dataset_layout(workspace):
    _, _, data, _ = workspace
    manifest = json.loads((data / "dataset.json").read_text())
    assert manifest["count"] == 12 and manifest["image_size"] == 32
    assert (data / "000011.png").exists() and (data / "000011.seg.png").exists()
    rec = json.loads((data / "000000.json").read_text())
    assert len(rec["exp"]) == 12 and len(rec["landmarks"]) == 5


def test_expression_fixture_dataset(tmp_path):
    assert run("gen-dataset", "--expressions", "--size", 32, "--out", tmp_path / "fx") == 0
    dset, manifest = ds.load(tmp_path / "fx")
    assert len(dset) == 10 and manifest["names"][0] == "neutral"


def test_trained_artifacts(workspace):
    _, _, _, models = workspace
    for name in ("extractor.gew", "extractor.json", "generator.gew", "generator.json", "subspace.json",
                 "config.json", "generator.history.json"):
        assert (models / name).exists(), name
    meta = json.loads((models / "generator.json").read_text())
    assert meta["config"]["image_size"] == 32


def test_fit_single_with_render(workspace):
    root, config, data, models = workspace
    out, img = root / "fit.json", root / "fit.png"
    code = run("fit", "--config", config, "--input", data / "000003.png", "--landmarks", data / "000003.json",
               "--models", models, "--out", out, "--render", img)
    assert code == 0
    rep = json.loads(out.read_text())
    assert len(rep["losses"]) == 3 and rep["config"]["iterations"] == 3
    assert ds.load_png(img).shape == (32, 32, 3)
    assert (models / "lr_table.json").exists()


def test_fit_batch_and_recover_report(workspace):
    root, config, data, models = workspace
    preds = root / "preds"
    assert run("fit", "--config", config, "--input", data, "--models", models, "--out", preds, "--iters", 1) == 0
    assert len(list(preds.glob("*.report.json"))) == 12
    report = root / "recover.json"
    assert run("eval", "recover", "--config", config, "--testset", data, "--predictions", preds,
               "--report", report) == 0
    d = json.loads(report.read_text())
    assert len(d["mae"]) == 12 and d["mae_avg"] >= 0
    assert d["config"]["image_size"] == 32


def test_transfer(workspace):
    root, config, data, models = workspace
    out = root / "transfer.png"
    assert run("transfer", "--config", config, "--identity", data / "000001.json",
               "--expression", data / "000002.json", "--models", models, "--out", out) == 0
    params = json.loads(out.with_suffix(".json").read_text())
    a = json.loads((data / "000001.json").read_text())
    b = json.loads((data / "000002.json").read_text())
    assert params["id_cont"] == a["id_cont"] and params["exp"] == b["exp"] and params["pose"] == b["pose"]


def test_eval_stability(tmp_path):
    seq = np.random.default_rng(0).random((20, 12))
    path = tmp_path / "seq.json"
    path.write_text(json.dumps({"frames": seq.tolist()}))
    report = tmp_path / "stab.json"
    assert run("eval", "stability", "--sequence", path, "--windows", 3, 5, "--report", report) == 0
    d = json.loads(report.read_text())
    assert set(d["stability"]) == {"3", "5"} and len(d["stability"]["3"]) == 12


def test_eval_simmatrix(workspace, tmp_path):
    _, config, _, models = workspace
    fx = tmp_path / "fx"
    assert run("gen-dataset", "--config", config, "--expressions", "--out", fx) == 0
    report = tmp_path / "sim.json"
    assert run("eval", "simmatrix", "--config", config, "--expressions", fx, "--models", models,
               "--report", report) == 0
    d = json.loads(report.read_text())
    m = np.array(d["similarity"])
    assert m.shape == (10, 10) and m.min() == 0 and m.max() == 1
    assert 0 <= d["diagonal_minima"] <= 10
    assert report.with_suffix(".png").exists()


def test_exit_code_config_errors(workspace, tmp_path, capsys):
    _, _, data, models = workspace
    # default config is 64px; the models and data are 32px
    assert run("fit", "--input", data / "000000.png", "--models", models, "--out", tmp_path / "x.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"image_size": 48}))
    assert run("gen-dataset", "--config", bad, "--out", tmp_path / "d") == 2
    bad.write_text(json.dumps({"no_such_key": 1}))
    assert run("gen-dataset", "--config", bad, "--out", tmp_path / "d") == 2
    assert run("eval", "simmatrix", "--report", tmp_path / "r.json") == 2
    assert "config error" in capsys.readouterr().err


def test_exit_code_data_errors(workspace, tmp_path):
    _, config, _, models = workspace
    assert run("fit", "--config", config, "--input", tmp_path / "missing.png", "--models", models,
               "--out", tmp_path / "x.json") == 3
    assert run("train", "extractor", "--config", config, "--data", tmp_path / "nothing", "--out", tmp_path) == 3
    assert run("fit", "--config", config, "--input", tmp_path, "--models", models, "--out", tmp_path / "o") == 3
    seq = tmp_path / "short.json"
    seq.write_text(json.dumps([[0.1], [0.2]]))
    assert run("eval", "stability", "--sequence", seq, "--windows", 5, "--report", tmp_path / "r.json") == 3


def test_exit_code_numeric_failure(workspace, tmp_path):
    _, config, _, models = workspace
    from PIL import Image

    # an all-NaN input cannot come from a PNG, so patch the loader for this one call
    Image.new("RGB", (32, 32)).save(tmp_path / "x.png")
    original = ds.load_png
    ds.load_png = lambda path: np.full((32, 32, 3), np.nan, dtype=np.float32)
    try:
        code = run("fit", "--config", config, "--input", tmp_path / "x.png", "--models", models,
                   "--out", tmp_path / "x.json")
    finally:
        ds.load_png = original
    assert code == 4
