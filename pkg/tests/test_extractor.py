import numpy as np
import pytest

from genet import diffcore as dc
from genet.errors import ContractError, DataError, DimensionError, ValidationError
from genet.extractor import (AttentionConfig, ExtractorModel, SegTrainConfig, attention_masks, augment, evaluate,
                             extract, feature_distance, iou, pixel_accuracy, segment, split_indices, train_seg)
from genet.facemodel import dataset as ds
from genet.facemodel.align import align_to_base
from genet.facemodel.params import BROW, EYE, LIP, NUM_CLASSES, SKIN


@pytest.fixture(scope="module")
def tiny_data():
    d = ds.synthesize(24, seed=3, size=32)
    images, segs = align_to_base(d.images, d.landmarks, d.segs)
    return images, segs


def test_shapes():
    m = ExtractorModel(32)
    x = np.random.default_rng(0).random((2, 32, 32, 3))
    feats = m.features(x)
    assert [f.shape for f in feats] == [(2, 16, 16, 16), (2, 32, 16, 16), (2, 64, 16, 16), (2, 64, 16, 16)]
    assert m.logits(x).shape == (2, NUM_CLASSES, 32, 32)
    labels, probs = segment(m, x)
    assert labels.shape == (2, 32, 32) and labels.dtype == np.uint8
    np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-5)


def test_wrong_input_size():
    with pytest.raises(DimensionError):
        ExtractorModel(32).features(np.zeros((1, 64, 64, 3)))
    with pytest.raises(DimensionError):
        ExtractorModel(32).features(np.zeros((1, 32, 32, 4)))


def test_save_load_round_trip(tmp_path):
    m = ExtractorModel(32, seed=4, attention=AttentionConfig.uniform(0.5))
    path = tmp_path / "e.gew"
    m.save(path, {"note": 1})
    back, meta = ExtractorModel.load(path)
    assert meta["note"] == 1 and meta["kind"] == "extractor"
    for k in m.weights:
        assert np.array_equal(m.weights[k].data, back.weights[k].data)
    assert back.attention.masks == (None,) * 4
    x = np.random.default_rng(1).random((1, 32, 32, 3))
    assert np.array_equal(m.logits(x).data, back.logits(x).data)


def test_load_rejects_other_models(tmp_path):
    from genet.generator import GeneratorModel

    GeneratorModel(5, widths=(8, 8, 8, 8, 3)).save(tmp_path / "g.gew")
    with pytest.raises(DataError):
        ExtractorModel.load(tmp_path / "g.gew")
    with pytest.raises(DataError):
        ExtractorModel.load(tmp_path / "missing.gew")


def test_attention_config():
    a = AttentionConfig()
    assert a.masks[0] == (EYE,) and a.masks[3] == (SKIN,)
    back = AttentionConfig.from_dict(a.to_dict())
    assert back == a
    assert AttentionConfig(masks=("brow", "eye", ["lip", 6], None)).masks[0] == (BROW,)
    with pytest.raises(ValidationError):
        AttentionConfig(masks=("teeth", None, None, None))
    with pytest.raises(ContractError):
        AttentionConfig(masks=(None,), betas=(1.0,)).validate()
    with pytest.raises(ContractError):
        AttentionConfig(betas=(1, 1, -1, 1)).validate()


def test_attention_masks_area_average():
    probs = np.zeros((1, NUM_CLASSES, 4, 4))
    probs[0, LIP, :2, :2] = 1.0
    probs[0, SKIN] = 1 - probs[0, LIP]
    m = attention_masks(probs, [(LIP,), None], [2, 4])
    np.testing.assert_allclose(m[0][0, 0], [[1, 0], [0, 0]])
    assert np.all(m[1] == 1)


def test_extract_masks_are_constants():
    m = ExtractorModel(32, seed=0).freeze()
    x = dc.Tensor(np.random.default_rng(0).random((1, 3, 32, 32)), requires_grad=True)
    y = np.random.default_rng(1).random((1, 32, 32, 3))
    with dc.no_grad():
        target = extract(m, y)
    loss = feature_distance(extract(m, x), target)
    loss.backward()
    assert x.grad.shape == x.shape and np.all(np.isfinite(x.grad))
    # with every beta at 0 the distance and its gradient vanish
    zero = AttentionConfig(betas=(0, 0, 0, 0))
    assert feature_distance(extract(m, y, zero), extract(m, y[::-1], zero)).item() == 0


def test_feature_distance_properties():
    m = ExtractorModel(32, seed=0).freeze()
    rng = np.random.default_rng(2)
    a, b = rng.random((3, 32, 32, 3)), rng.random((3, 32, 32, 3))
    fa, fb = extract(m, a), extract(m, b)
    assert feature_distance(fa, fa).item() == 0
    per = feature_distance(fa, fb, per_sample=True)
    assert per.shape == (3,)
    assert feature_distance(fa, fb).item() == pytest.approx(per.data.mean(), rel=1e-5)


def test_metrics_helpers():
    p = np.array([[0, 1], [1, 1]])
    t = np.array([[0, 1], [0, 1]])
    assert pixel_accuracy(p, t) == 0.75
    assert iou(p, t, 1) == pytest.approx(2 / 3)
    assert iou(p, t, 5) == 1.0


def test_split_indices():
    tr, va = split_indices(100, 0.1, 0)
    assert len(va) == 10 and len(tr) == 90
    assert sorted(np.concatenate([tr, va])) == list(range(100))
    tr2, va2 = split_indices(100, 0.1, 0)
    assert np.array_equal(va, va2)
    assert len(split_indices(5, 0.01, 0)[1]) == 1
    assert len(split_indices(5, 0.0, 0)[1]) == 0


def test_augment_keeps_range_and_is_seeded():
    x = np.random.default_rng(0).random((6, 8, 8, 3)).astype(np.float32)
    a = augment(x, np.random.default_rng(5))
    b = augment(x, np.random.default_rng(5))
    assert np.array_equal(a, b) and a.dtype == np.float32
    assert a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, x)


def test_training_reduces_loss_and_is_deterministic(tiny_data):
    images, segs = tiny_data
    cfg = SegTrainConfig(epochs=3, batch_size=8, lr=3e-3, val_fraction=0.25, seed=1)
    m1, m2 = ExtractorModel(32, seed=1), ExtractorModel(32, seed=1)
    h1 = train_seg(m1, images, segs, cfg)
    h2 = train_seg(m2, images, segs, cfg)
    assert h1 == h2
    assert h1["train_loss"][-1] < h1["train_loss"][0]
    rep = evaluate(m1, images, segs)
    assert 0 <= rep["pixel_accuracy"] <= 1 and set(rep["iou"]) >= {"eye", "lip", "brow"}


def test_training_input_errors(tiny_data):
    images, segs = tiny_data
    with pytest.raises(DataError):
        train_seg(ExtractorModel(32), images[:0], segs[:0])
    with pytest.raises(DimensionError):
        train_seg(ExtractorModel(32), images, segs[:, :16])
