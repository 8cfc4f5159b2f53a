import numpy as np
import pytest

from genet import diffcore as dc
from genet.errors import ConfigError, ContractError, DataError, DimensionError
from genet.extractor import ExtractorModel
from genet.generator import (GeneratorModel, PerceptualNet, TrainConfig, content_loss, evaluate, layer_specs,
                             moving_average_violations, perceptual_loss, target_features, train)

SMALL = (32, 16, 8, 8, 3)


def test_layer_specs_and_output_size():
    specs = layer_specs(34)
    assert [s["out"] for s in specs] == [256, 128, 64, 32, 16, 3]
    assert specs[0]["in"] == 34 and specs[-1]["activation"] == "sigmoid" and not specs[-1]["norm"]
    g = GeneratorModel(34, seed=0)
    assert g.image_size == 64
    out = g.forward(np.full(34, 0.5))
    assert out.shape == (1, 3, 64, 64) and out.dtype == np.float32
    assert 0 < out.data.min() and out.data.max() < 1


def test_weights_are_float32_and_named():
    g = GeneratorModel(7, widths=SMALL)
    assert {w.dtype for w in g.parameters()} == {np.dtype(np.float32)}
    assert "deconv5.b" in g.weights and "norm1.w" in g.weights and "deconv1.b" not in g.weights
    assert len(g.conv_weights()) == 5


def test_forward_contract():
    g = GeneratorModel(7, widths=SMALL)
    with pytest.raises(ContractError):
        g.forward(np.zeros(6))
    with pytest.raises(ConfigError):
        GeneratorModel(7, widths=(8, 4))


def test_seeded_init_and_render_layout():
    a, b = GeneratorModel(7, widths=SMALL, seed=3), GeneratorModel(7, widths=SMALL, seed=3)
    p = np.random.default_rng(0).random((2, 7))
    assert np.array_equal(a.render(p), b.render(p))
    assert a.render(p).shape == (2, 32, 32, 3)
    std = np.std(a.weights["deconv1.w"].data)
    assert std == pytest.approx(0.02, rel=0.1)


def test_save_load(tmp_path):
    g = GeneratorModel(7, widths=SMALL, seed=1)
    g.save(tmp_path / "g.gew", {"tag": "x"})
    back, meta = GeneratorModel.load(tmp_path / "g.gew")
    assert meta["tag"] == "x" and back.widths == SMALL
    p = np.random.default_rng(0).random((1, 7))
    assert np.array_equal(g.render(p), back.render(p))
    ExtractorModel(32).save(tmp_path / "e.gew")
    with pytest.raises(DataError):
        GeneratorModel.load(tmp_path / "e.gew")


def test_parameter_gradients_reach_the_input():
    g = GeneratorModel(7, widths=SMALL, seed=0).freeze()
    p = dc.Tensor(np.full((1, 7), 0.5), requires_grad=True, dtype=np.float32)
    dc.mean(g.forward(p)).backward()
    assert p.grad.shape == (1, 7) and np.any(p.grad != 0)


def test_content_loss():
    a = np.zeros((2, 4, 4, 3))
    b = np.full((2, 4, 4, 3), 0.25)
    assert content_loss(a, b).item() == pytest.approx(0.25)
    with pytest.raises(DimensionError):
        content_loss(a, b[:, :2])


def test_perceptual_loss_requires_frozen_net_and_matches_cache():
    ext = ExtractorModel(32, seed=0)
    rng = np.random.default_rng(1)
    a, b = rng.random((3, 32, 32, 3)), rng.random((3, 32, 32, 3))
    net = PerceptualNet(ext)
    assert not any(p.requires_grad for p in ext.parameters())
    assert perceptual_loss(a, a, net).item() == 0
    full = perceptual_loss(a, b, net).item()
    cache = target_features(net, b)
    cached = perceptual_loss(a, b, net, [dc.Tensor(c.astype(np.float32)) for c in cache]).item()
    assert cached == pytest.approx(full, rel=1e-3)
    ext.weights["conv1.w"].requires_grad = True
    with pytest.raises(ContractError):
        perceptual_loss(a, b, net)


def test_train_config():
    cfg = TrainConfig()
    assert cfg.lr_at(0) == cfg.lr_at(2) == 1e-3
    assert cfg.lr_at(3) == pytest.approx(0.99e-3)
    assert cfg.lr_at(59) == pytest.approx(1e-3 * 0.99 ** 19)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    for bad in ({"optimizer": "lbfgs"}, {"lr": 0}, {"momentum": 1.0}, {"val_fraction": 1.0}, {"ema": 1.0}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad).validate()


def test_moving_average_violations():
    assert moving_average_violations(np.linspace(1, 0, 20)) == 0
    assert moving_average_violations([1, 2, 3]) == 0
    v = list(np.linspace(1, 0.5, 10)) + [5.0] + list(np.linspace(0.5, 0.4, 10))
    assert moving_average_violations(v) == 1


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_short_training_run(optimizer):
    rng = np.random.default_rng(0)
    params = rng.random((40, 7)).astype(np.float32)
    images = np.repeat(params[:, None, None, :3], 32, axis=1).repeat(32, axis=2)
    cfg = TrainConfig(epochs=4, batch_size=8, lr=3e-3 if optimizer == "adam" else 0.5, momentum=0.5,
                      optimizer=optimizer, perceptual_weight=0.0, val_fraction=0.2, decay_every=1, lr_decay=0.9)
    g = GeneratorModel(7, widths=SMALL, seed=0)
    hist = train(g, params, images, cfg)
    assert len(hist["val_app"]) == 4
    assert hist["train_loss"][-1] < hist["train_loss"][0]
    assert hist["val_app"][-1] < hist["val_app"][0]
    assert hist["lr"] == [cfg.lr_at(e) for e in range(4)]


def test_weight_averaging_matches_recurrence():
    # one full batch per epoch, so a k-epoch raw run gives the weights after k steps
    rng = np.random.default_rng(1)
    params = rng.random((10, 7)).astype(np.float32)
    images = rng.random((10, 32, 32, 3)).astype(np.float32)
    base = dict(batch_size=10, lr=1e-2, perceptual_weight=0.0, val_fraction=0.0)
    raw = [[w.data.copy() for w in GeneratorModel(7, widths=SMALL, seed=0).parameters()]]
    for k in range(1, 4):
        g = GeneratorModel(7, widths=SMALL, seed=0)
        train(g, params, images, TrainConfig(epochs=k, ema=0.0, **base))
        raw.append([w.data.copy() for w in g.parameters()])
    expect = [a.astype(np.float64) for a in raw[0]]
    for t in range(1, 4):
        d = min(0.9, (1 + t) / (10 + t))
        expect = [d * e + (1 - d) * w for e, w in zip(expect, raw[t])]
    g = GeneratorModel(7, widths=SMALL, seed=0)
    train(g, params, images, TrainConfig(epochs=3, ema=0.9, **base))
    for e, w in zip(expect, g.parameters()):
        np.testing.assert_allclose(w.data, e, rtol=1e-5, atol=1e-7)
    assert not np.array_equal(g.parameters()[0].data, raw[3][0])


def test_training_with_perceptual_term_is_deterministic():
    rng = np.random.default_rng(0)
    params = rng.random((12, 7)).astype(np.float32)
    images = rng.random((12, 32, 32, 3)).astype(np.float32)
    cfg = TrainConfig(epochs=2, batch_size=6, val_fraction=0.25)
    runs = []
    for _ in range(2):
        g = GeneratorModel(7, widths=SMALL, seed=0)
        hist = train(g, params, images, cfg, featnet=PerceptualNet(ExtractorModel(32, seed=0)))
        runs.append((hist, g.weights["deconv1.w"].data.copy()))
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][1], runs[1][1])
    va, vp = evaluate(g, params, images, PerceptualNet(ExtractorModel(32, seed=0)))
    assert va > 0 and vp > 0


def test_training_input_errors():
    g = GeneratorModel(7, widths=SMALL)
    with pytest.raises(DataError):
        train(g, np.zeros((0, 7)), np.zeros((0, 32, 32, 3)))
    with pytest.raises(DimensionError):
        train(g, np.zeros((3, 7)), np.zeros((2, 32, 32, 3)))
    with pytest.raises(DimensionError):
        train(g, np.zeros((3, 7)), np.zeros((3, 64, 64, 3)))
    with pytest.raises(ConfigError):
        train(g, np.zeros((3, 7)), np.zeros((3, 32, 32, 3)), TrainConfig(perceptual_weight=1.0))
